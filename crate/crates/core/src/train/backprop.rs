//! Reverse-mode gradients of a [`StackModel`] through time.
//!
//! Gradients with respect to complex quantities use the convention
//! `G_z = ∂L/∂Re z + i ∂L/∂Im z`, under which `w = a·b` back-propagates as
//! `G_a = conj(b) G_w`.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::Result;
use crate::ssm::{
    dot, sigmoid, softplus, DiagonalLayer, InputEncoding, InputSequence, LayerKind, Phase,
    StackModel, Transition,
};

/// Calls `f` on every trainable scalar in a fixed order. Rational phases are
/// turned into continuous ones, since their value is about to be exposed for
/// mutation.
pub fn visit_params(model: &mut StackModel, f: &mut dyn FnMut(&mut f64)) {
    if let InputEncoding::Embedding(table) = &mut model.encoding {
        table.as_mut_slice().iter_mut().for_each(&mut *f);
    }
    for layer in &mut model.layers {
        visit_layer(layer, f);
    }
    model.head.weight.as_mut_slice().iter_mut().for_each(&mut *f);
    model.head.bias.iter_mut().for_each(&mut *f);
}

fn visit_complex(z: &mut Complex64, real_only: bool, f: &mut dyn FnMut(&mut f64)) {
    f(&mut z.re);
    if !real_only {
        f(&mut z.im);
    }
}

fn visit_layer(layer: &mut DiagonalLayer, f: &mut dyn FnMut(&mut f64)) {
    let real_only = layer.kind() != LayerKind::TimeInvariantComplex;
    match &mut layer.transition {
        Transition::TimeInvariant { modes, input } => {
            for mode in modes.iter_mut() {
                f(&mut mode.magnitude);
                let mut turns = mode.phase.turns();
                f(&mut turns);
                mode.phase = Phase::Turns(turns);
            }
            for z in input.as_mut_slice() {
                visit_complex(z, false, f);
            }
        }
        Transition::NonNegative {
            dt_weight,
            dt_bias,
            log_alpha,
            input,
        } => {
            dt_weight.as_mut_slice().iter_mut().for_each(&mut *f);
            dt_bias.iter_mut().for_each(&mut *f);
            log_alpha.iter_mut().for_each(&mut *f);
            input.as_mut_slice().iter_mut().for_each(&mut *f);
        }
        Transition::Signed {
            weight,
            bias,
            input,
            input_bias,
        } => {
            weight.as_mut_slice().iter_mut().for_each(&mut *f);
            bias.iter_mut().for_each(&mut *f);
            input.as_mut_slice().iter_mut().for_each(&mut *f);
            input_bias.iter_mut().for_each(&mut *f);
        }
    }
    for z in layer.readout.as_mut_slice() {
        visit_complex(z, real_only, f);
    }
    layer.feedthrough.as_mut_slice().iter_mut().for_each(&mut *f);
    for z in &mut layer.initial_state {
        visit_complex(z, real_only, f);
    }
    if let Some(gate) = &mut layer.gate {
        gate.value.as_mut_slice().iter_mut().for_each(&mut *f);
        gate.value_bias.iter_mut().for_each(&mut *f);
        gate.gate.as_mut_slice().iter_mut().for_each(&mut *f);
        gate.gate_bias.iter_mut().for_each(&mut *f);
    }
}

pub fn flat_params(model: &StackModel) -> Vec<f64> {
    let mut copy = model.clone();
    let mut out = Vec::new();
    visit_params(&mut copy, &mut |v| out.push(*v));
    out
}

pub fn set_flat_params(model: &mut StackModel, params: &[f64]) {
    let mut it = params.iter();
    visit_params(model, &mut |v| *v = *it.next().expect("parameter count mismatch"));
    debug_assert!(it.next().is_none(), "parameter count mismatch");
}

/// Same structure as `model`, every trainable value zero.
pub fn zeros_like(model: &StackModel) -> StackModel {
    let mut z = model.clone();
    visit_params(&mut z, &mut |v| *v = 0.0);
    z
}

/// Keeps time-invariant magnitudes inside `[0, 1]` after an update.
pub fn project(model: &mut StackModel) {
    for layer in &mut model.layers {
        if let Transition::TimeInvariant { modes, .. } = &mut layer.transition {
            for m in modes {
                m.magnitude = m.magnitude.clamp(0.0, 1.0);
            }
        }
    }
}

#[derive(Clone, Debug, Default)]
struct LayerCache {
    inputs: Vec<Vec<f64>>,
    /// `states[t]` is `h_t`, starting with `h_0`.
    states: Vec<Vec<Complex64>>,
    /// `σ(Re(C h) + D u)` before any gate.
    readouts: Vec<Vec<f64>>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Clone, Debug)]
pub struct StackCache {
    tokens: Vec<usize>,
    layers: Vec<LayerCache>,
    top: Vec<Vec<f64>>,
}

/// Forward pass that records intermediates; returns the head outputs per step.
pub fn forward_cached(model: &StackModel, xs: &InputSequence) -> Result<(StackCache, Vec<Vec<f64>>)> {
    let t_len = xs.len();
    let mut tokens = Vec::with_capacity(t_len);
    let mut current: Vec<Vec<f64>> = Vec::with_capacity(t_len);
    for &x in xs.tokens() {
        let mut u = vec![0.0; model.encoding.width()];
        model.encoding.encode_into(x, &mut u)?;
        tokens.push(if x == 1.0 { 1 } else { 0 });
        current.push(u);
    }
    let mut layers = Vec::with_capacity(model.layers.len());
    for layer in &model.layers {
        let n = layer.state_dim();
        let eig = layer.fixed_eigenvalues();
        let (mut a, mut b) = (vec![Complex64::default(); n], vec![Complex64::default(); n]);
        let mut cache = LayerCache {
            inputs: current,
            states: Vec::with_capacity(t_len + 1),
            readouts: Vec::with_capacity(t_len),
        };
        cache.states.push(layer.initial_state.clone());
        let mut next = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let u = &cache.inputs[t];
            layer.coefficients_into(&eig, u, &mut a, &mut b);
            let h: Vec<Complex64> = (0..n).map(|j| a[j] * cache.states[t][j] + b[j]).collect();
            let mut y = vec![0.0; layer.readout.rows()];
            layer.activation_into(&h, u, &mut y);
            let mut out = match &layer.gate {
                None => y.clone(),
                Some(gate) => {
                    let mut g = vec![0.0; gate.width()];
                    gate.apply_into(&y, u, &mut g);
                    g
                }
            };
            if layer.skip {
                out.extend_from_slice(u);
            }
            cache.states.push(h);
            cache.readouts.push(y);
            next.push(out);
        }
        current = next;
        layers.push(cache);
    }
    let logits = current.iter().map(|y| model.head.apply(y)).collect();
    Ok((
        StackCache {
            tokens,
            layers,
            top: current,
        },
        logits,
    ))
}

/// Accumulates into `grad` the gradient for upstream head gradients
/// `dlogits[t]`; an empty entry means zero.
pub fn backward(model: &StackModel, cache: &StackCache, dlogits: &[Vec<f64>], grad: &mut StackModel) {
    let t_len = cache.top.len();
    let width = model.output_width();
    let mut upstream: Vec<Vec<f64>> = vec![vec![0.0; width]; t_len];
    for t in 0..t_len {
        let dl = &dlogits[t];
        if dl.is_empty() {
            continue;
        }
        for (k, &g) in dl.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.head.bias[k] += g;
            let wrow = model.head.weight.row(k);
            let grow = grad.head.weight.row_mut(k);
            for i in 0..width {
                grow[i] += g * cache.top[t][i];
                upstream[t][i] += g * wrow[i];
            }
        }
    }

    for (l, layer) in model.layers.iter().enumerate().rev() {
        upstream = layer_backward(layer, &cache.layers[l], &upstream, &mut grad.layers[l]);
    }

    if let (InputEncoding::Embedding(_), InputEncoding::Embedding(gtable)) =
        (&model.encoding, &mut grad.encoding)
    {
        for (t, &tok) in cache.tokens.iter().enumerate() {
            for (g, d) in gtable.row_mut(tok).iter_mut().zip(&upstream[t]) {
                *g += d;
            }
        }
    }
}

/// Back-propagates through one layer; returns the gradient with respect to
/// its inputs.
fn layer_backward(
    layer: &DiagonalLayer,
    cache: &LayerCache,
    upstream: &[Vec<f64>],
    grad: &mut DiagonalLayer,
) -> Vec<Vec<f64>> {
    let t_len = cache.readouts.len();
    let n = layer.state_dim();
    let d_in = layer.input_width();
    let d_y = layer.readout.rows();
    let d_e = layer.readout_width();
    let real = layer.kind() != LayerKind::TimeInvariantComplex;
    let eig = layer.fixed_eigenvalues();
    let mut du: Vec<Vec<f64>> = vec![vec![0.0; d_in]; t_len];
    let mut gh = vec![Complex64::default(); n];
    let mut g_eig = vec![Complex64::default(); eig.len()];
    let (mut a, mut b) = (vec![Complex64::default(); n], vec![Complex64::default(); n]);
    let mut dz = vec![0.0; d_y];
    let mut dy = vec![0.0; d_y];

    for t in (0..t_len).rev() {
        let u = &cache.inputs[t];
        let h = &cache.states[t + 1];
        let h_prev = &cache.states[t];
        let y = &cache.readouts[t];
        let up = &upstream[t];
        if layer.skip {
            for (d, g) in du[t].iter_mut().zip(&up[d_e..]) {
                *d += g;
            }
        }
        match (&layer.gate, &mut grad.gate) {
            (Some(gate), Some(g_gate)) => {
                dy.iter_mut().for_each(|v| *v = 0.0);
                for k in 0..d_e {
                    let g_out = up[k];
                    if g_out == 0.0 {
                        continue;
                    }
                    if gate.residual {
                        du[t][k] += g_out;
                    }
                    let v = dot(gate.value.row(k), y) + gate.value_bias[k];
                    let s = sigmoid(dot(gate.gate.row(k), y) + gate.gate_bias[k]);
                    let g_v = g_out * s;
                    let g_pre = g_out * v * s * (1.0 - s);
                    g_gate.value_bias[k] += g_v;
                    g_gate.gate_bias[k] += g_pre;
                    let (vrow, grow) = (gate.value.row(k), gate.gate.row(k));
                    for i in 0..d_y {
                        dy[i] += g_v * vrow[i] + g_pre * grow[i];
                    }
                    let gv = g_gate.value.row_mut(k);
                    for i in 0..d_y {
                        gv[i] += g_v * y[i];
                    }
                    let gg = g_gate.gate.row_mut(k);
                    for i in 0..d_y {
                        gg[i] += g_pre * y[i];
                    }
                }
            }
            _ => dy.copy_from_slice(&up[..d_y]),
        }
        for k in 0..d_y {
            dz[k] = dy[k] * layer.activation.derivative_from_output(y[k]);
        }
        for k in 0..d_y {
            let g = dz[k];
            if g == 0.0 {
                continue;
            }
            let crow = layer.readout.row(k);
            let gcrow = grad.readout.row_mut(k);
            for j in 0..n {
                gh[j] += crow[j].conj() * g;
                gcrow[j] += h[j].conj() * g;
            }
            let drow = layer.feedthrough.row(k);
            let gdrow = grad.feedthrough.row_mut(k);
            for m in 0..d_in {
                gdrow[m] += g * u[m];
                du[t][m] += g * drow[m];
            }
        }
        if real {
            gh.iter_mut().for_each(|g| g.im = 0.0);
        }

        layer.coefficients_into(&eig, u, &mut a, &mut b);
        let g_a: Vec<Complex64> = (0..n).map(|j| h_prev[j].conj() * gh[j]).collect();
        let g_b = gh.clone();
        for j in 0..n {
            gh[j] = a[j].conj() * gh[j];
        }

        match (&layer.transition, &mut grad.transition) {
            (
                Transition::TimeInvariant { input, .. },
                Transition::TimeInvariant { input: g_input, .. },
            ) => {
                for j in 0..n {
                    g_eig[j] += g_a[j];
                    let brow = input.row(j);
                    let gbrow = g_input.row_mut(j);
                    for m in 0..d_in {
                        gbrow[m] += g_b[j] * u[m];
                        du[t][m] += g_b[j].re * brow[m].re + g_b[j].im * brow[m].im;
                    }
                }
            }
            (
                Transition::NonNegative {
                    dt_weight,
                    dt_bias,
                    log_alpha,
                    input,
                },
                Transition::NonNegative {
                    dt_weight: g_dtw,
                    dt_bias: g_dtb,
                    log_alpha: g_la,
                    input: g_input,
                },
            ) => {
                for j in 0..n {
                    let pre = dot(dt_weight.row(j), u) + dt_bias[j];
                    let delta = softplus(pre);
                    let alpha = log_alpha[j].exp();
                    let aj = a[j].re;
                    let s = dot(input.row(j), u);
                    let (ga, gb) = (g_a[j].re, g_b[j].re);
                    let g_delta = ga * (-alpha * aj) + gb * s;
                    g_la[j] += ga * (-delta * aj) * alpha;
                    let g_s = gb * delta;
                    let g_pre = g_delta * sigmoid(pre);
                    g_dtb[j] += g_pre;
                    let (wrow, brow) = (dt_weight.row(j), input.row(j));
                    let gwrow = g_dtw.row_mut(j);
                    for m in 0..d_in {
                        gwrow[m] += g_pre * u[m];
                        du[t][m] += g_pre * wrow[m] + g_s * brow[m];
                    }
                    let gbrow = g_input.row_mut(j);
                    for m in 0..d_in {
                        gbrow[m] += g_s * u[m];
                    }
                }
            }
            (
                Transition::Signed {
                    weight,
                    bias,
                    input,
                    ..
                },
                Transition::Signed {
                    weight: g_w,
                    bias: g_bias,
                    input: g_input,
                    input_bias: g_ib,
                },
            ) => {
                for j in 0..n {
                    let pre = dot(weight.row(j), u) + bias[j];
                    let g_pre = if pre > -1.0 && pre < 1.0 { g_a[j].re } else { 0.0 };
                    let gb = g_b[j].re;
                    g_bias[j] += g_pre;
                    g_ib[j] += gb;
                    let (wrow, brow) = (weight.row(j), input.row(j));
                    for m in 0..d_in {
                        du[t][m] += g_pre * wrow[m] + gb * brow[m];
                    }
                    let gwrow = g_w.row_mut(j);
                    for m in 0..d_in {
                        gwrow[m] += g_pre * u[m];
                    }
                    let gbrow = g_input.row_mut(j);
                    for m in 0..d_in {
                        gbrow[m] += gb * u[m];
                    }
                }
            }
            _ => unreachable!("gradient container has the model's structure"),
        }
    }

    for (g, d) in grad.initial_state.iter_mut().zip(&gh) {
        g.re += d.re;
        if !real {
            g.im += d.im;
        }
    }

    if let (Transition::TimeInvariant { modes, .. }, Transition::TimeInvariant { modes: g_modes, .. }) =
        (&layer.transition, &mut grad.transition)
    {
        for (j, (mode, gm)) in modes.iter().zip(g_modes.iter_mut()).enumerate() {
            let rot = mode.phase.rotation();
            // λ = r·rot: ∂L/∂r = Re(conj(G) rot), ∂L/∂q = Re(conj(G) 2πi λ)
            gm.magnitude += (g_eig[j].conj() * rot).re;
            let dq = -TAU * (g_eig[j].conj() * eig[j]).im;
            gm.phase = Phase::Turns(gm.phase.turns() + dq);
        }
    }
    du
}

/// Flattened gradient in [`visit_params`] order.
pub fn flat_grad(grad: &StackModel) -> Vec<f64> {
    flat_params(grad)
}
