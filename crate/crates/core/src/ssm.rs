//! Exact forward dynamics of diagonal linear recurrent layers and stacks.
//!
//! Every layer follows `h_t = a(u_t) ⊙ h_{t-1} + b(u_t)` with a diagonal
//! transition `a`, and emits `y_t = σ(Re(C h_t) + D u_t)`. States are stored as
//! complex vectors for all layer kinds; the real kinds keep a zero imaginary part.

use std::f64::consts::TAU;
use std::fmt;

use num_complex::Complex64;

use crate::error::{check_dim, Error, Result};

/// Complex scalar used for eigenvalues and hidden states.
pub type ComplexScalar = Complex64;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy + Default> Dense<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::default(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from rows; every row must have the same length.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        for row in &rows {
            check_dim("matrix row", cols, row.len())?;
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }
}

/// A phase fraction `q = numerator / denominator` in `[0, 1)`, kept in lowest terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RationalPhase {
    numerator: u64,
    denominator: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `None` on overflow.
pub(crate) fn lcm(a: u64, b: u64) -> Option<u64> {
    (a / gcd(a, b)).checked_mul(b)
}

impl RationalPhase {
    /// Numerators at or above the denominator wrap around the unit circle.
    pub fn new(numerator: u64, denominator: u64) -> Result<Self> {
        if denominator == 0 {
            return Err(Error::InvalidParameter(
                "phase denominator must be at least 1".into(),
            ));
        }
        let numerator = numerator % denominator;
        let g = gcd(numerator, denominator).max(1);
        Ok(Self {
            numerator: numerator / g,
            denominator: denominator / g,
        })
    }

    pub fn zero() -> Self {
        Self {
            numerator: 0,
            denominator: 1,
        }
    }

    pub fn numerator(&self) -> u64 {
        self.numerator
    }

    pub fn denominator(&self) -> u64 {
        self.denominator
    }

    pub fn value(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }

    /// `exp(2πi q)`. Quarter turns are returned exactly.
    pub fn rotation(&self) -> Complex64 {
        if (4 * self.numerator) % self.denominator == 0 {
            return match 4 * self.numerator / self.denominator {
                0 => Complex64::new(1.0, 0.0),
                1 => Complex64::new(0.0, 1.0),
                2 => Complex64::new(-1.0, 0.0),
                _ => Complex64::new(0.0, -1.0),
            };
        }
        Complex64::from_polar(1.0, TAU * self.value())
    }

    /// Closest fraction with denominator at most `max_denominator`.
    pub fn snap(turns: f64, max_denominator: u64) -> Self {
        let q = turns.rem_euclid(1.0);
        let mut best = (f64::INFINITY, Self::zero());
        for den in 1..=max_denominator.max(1) {
            let num = (q * den as f64).round() as u64;
            let err = (q - num as f64 / den as f64).abs();
            if err < best.0 - 1e-15 {
                // new() reduces num == den to 0/1
                best = (err, Self::new(num, den).expect("den >= 1"));
            }
        }
        best.1
    }
}

impl fmt::Display for RationalPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

/// Phase of a complex eigenvalue, as a fraction of a full turn.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Phase {
    Rational(RationalPhase),
    /// Unconstrained real phase, used while training.
    Turns(f64),
}

impl Phase {
    pub fn turns(&self) -> f64 {
        match self {
            Phase::Rational(q) => q.value(),
            Phase::Turns(t) => *t,
        }
    }

    pub fn rotation(&self) -> Complex64 {
        match self {
            Phase::Rational(q) => q.rotation(),
            Phase::Turns(t) => Complex64::from_polar(1.0, TAU * t),
        }
    }
}

/// One diagonal entry `r · exp(2πi q)` of a time-invariant transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mode {
    pub magnitude: f64,
    pub phase: Phase,
}

impl Mode {
    pub fn new(magnitude: f64, phase: Phase) -> Self {
        Self { magnitude, phase }
    }

    pub fn rational(magnitude: f64, numerator: u64, denominator: u64) -> Result<Self> {
        Ok(Self::new(
            magnitude,
            Phase::Rational(RationalPhase::new(numerator, denominator)?),
        ))
    }

    pub fn eigenvalue(&self) -> Complex64 {
        self.phase.rotation() * self.magnitude
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerKind {
    TimeInvariantComplex,
    InputDependentNonNegative,
    InputDependentSigned,
}

/// Parameters that produce the diagonal transition `a(u)` and drive `b(u)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Transition {
    /// S4D-style: `a = r_j exp(2πi q_j)`, `b = B u` with complex `B` (N × d_in).
    TimeInvariant { modes: Vec<Mode>, input: Dense<Complex64> },
    /// Selective, non-negative: `Δ_j = softplus(w_j·u + c_j)`,
    /// `a_j = exp(-Δ_j exp(log_alpha_j))`, `b_j = Δ_j (W_B u)_j`.
    NonNegative {
        dt_weight: Dense<f64>,
        dt_bias: Vec<f64>,
        log_alpha: Vec<f64>,
        input: Dense<f64>,
    },
    /// Selective with eigenvalues in `[-1, 1]`: `a_j = clamp(c_j + w_j·u, -1, 1)`,
    /// `b = W_B u + b_B`.
    Signed {
        weight: Dense<f64>,
        bias: Vec<f64>,
        input: Dense<f64>,
        input_bias: Vec<f64>,
    },
}

impl Transition {
    pub fn kind(&self) -> LayerKind {
        match self {
            Transition::TimeInvariant { .. } => LayerKind::TimeInvariantComplex,
            Transition::NonNegative { .. } => LayerKind::InputDependentNonNegative,
            Transition::Signed { .. } => LayerKind::InputDependentSigned,
        }
    }

    fn state_dim(&self) -> usize {
        match self {
            Transition::TimeInvariant { modes, .. } => modes.len(),
            Transition::NonNegative { dt_bias, .. } => dt_bias.len(),
            Transition::Signed { bias, .. } => bias.len(),
        }
    }

    fn validate(&self, d_in: usize) -> Result<()> {
        let n = self.state_dim();
        match self {
            Transition::TimeInvariant { modes, input } => {
                check_dim("input map rows", n, input.rows())?;
                check_dim("input map cols", d_in, input.cols())?;
                if let Some(m) = modes.iter().find(|m| !(m.magnitude >= 0.0)) {
                    return Err(Error::InvalidParameter(format!(
                        "mode magnitude must be non-negative, got {}",
                        m.magnitude
                    )));
                }
            }
            Transition::NonNegative {
                dt_weight,
                log_alpha,
                input,
                ..
            } => {
                check_dim("dt weight rows", n, dt_weight.rows())?;
                check_dim("dt weight cols", d_in, dt_weight.cols())?;
                check_dim("log alpha", n, log_alpha.len())?;
                check_dim("input map rows", n, input.rows())?;
                check_dim("input map cols", d_in, input.cols())?;
            }
            Transition::Signed {
                weight,
                input,
                input_bias,
                ..
            } => {
                check_dim("transition weight rows", n, weight.rows())?;
                check_dim("transition weight cols", d_in, weight.cols())?;
                check_dim("input map rows", n, input.rows())?;
                check_dim("input map cols", d_in, input.cols())?;
                check_dim("input bias", n, input_bias.len())?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `y`.
    pub fn derivative_from_output(&self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Position-wise gated linear unit on a layer's readout `y`:
/// `(W y + c) ⊙ sigmoid(G y + g)`, plus the layer input when `residual`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub value: Dense<f64>,
    pub value_bias: Vec<f64>,
    pub gate: Dense<f64>,
    pub gate_bias: Vec<f64>,
    pub residual: bool,
}

impl Gate {
    pub fn width(&self) -> usize {
        self.value.rows()
    }

    fn validate(&self, d_in: usize, d_y: usize) -> Result<()> {
        let m = self.value.rows();
        check_dim("gate value cols", d_y, self.value.cols())?;
        check_dim("gate rows", m, self.gate.rows())?;
        check_dim("gate cols", d_y, self.gate.cols())?;
        check_dim("gate value bias", m, self.value_bias.len())?;
        check_dim("gate bias", m, self.gate_bias.len())?;
        if self.residual {
            check_dim("residual gate width", d_in, m)?;
        }
        Ok(())
    }

    /// Writes the gated output for readout `y` and layer input `u`.
    pub fn apply_into(&self, y: &[f64], u: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let v = dot(self.value.row(k), y) + self.value_bias[k];
            let g = sigmoid(dot(self.gate.row(k), y) + self.gate_bias[k]);
            *o = v * g + if self.residual { u[k] } else { 0.0 };
        }
    }
}

/// One diagonal recurrence layer with its readout.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalLayer {
    pub transition: Transition,
    /// Readout `C`, d_out × N.
    pub readout: Dense<Complex64>,
    /// Feedthrough `D`, d_out × d_in.
    pub feedthrough: Dense<f64>,
    pub initial_state: Vec<Complex64>,
    pub activation: Activation,
    /// Concatenate the layer input to its output.
    pub skip: bool,
    /// Optional gated unit between the readout and the skip concatenation.
    pub gate: Option<Gate>,
}

impl DiagonalLayer {
    pub fn new(
        transition: Transition,
        readout: Dense<Complex64>,
        feedthrough: Dense<f64>,
        initial_state: Vec<Complex64>,
        activation: Activation,
        skip: bool,
    ) -> Result<Self> {
        let layer = Self {
            transition,
            readout,
            feedthrough,
            initial_state,
            activation,
            skip,
            gate: None,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn with_gate(mut self, gate: Gate) -> Result<Self> {
        self.gate = Some(gate);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.state_dim();
        if n == 0 {
            return Err(Error::InvalidParameter("state dimension must be >= 1".into()));
        }
        let d_in = self.feedthrough.cols();
        self.transition.validate(d_in)?;
        check_dim("readout cols", n, self.readout.cols())?;
        check_dim(
            "feedthrough rows",
            self.readout.rows(),
            self.feedthrough.rows(),
        )?;
        check_dim("initial state", n, self.initial_state.len())?;
        if let Some(gate) = &self.gate {
            gate.validate(d_in, self.readout.rows())?;
        }
        if self.kind() != LayerKind::TimeInvariantComplex
            && self.initial_state.iter().any(|h| h.im != 0.0)
        {
            return Err(Error::InvalidParameter(
                "real-valued layer kinds need a real initial state".into(),
            ));
        }
        Ok(())
    }

    pub fn kind(&self) -> LayerKind {
        self.transition.kind()
    }

    pub fn state_dim(&self) -> usize {
        self.transition.state_dim()
    }

    pub fn input_width(&self) -> usize {
        self.feedthrough.cols()
    }

    /// Width before skip concatenation (after the gate, if any).
    pub fn readout_width(&self) -> usize {
        self.gate.as_ref().map_or(self.readout.rows(), Gate::width)
    }

    pub fn output_width(&self) -> usize {
        self.readout_width() + if self.skip { self.input_width() } else { 0 }
    }

    /// Eigenvalues of a time-invariant layer; empty for input-dependent kinds.
    pub(crate) fn fixed_eigenvalues(&self) -> Vec<Complex64> {
        match &self.transition {
            Transition::TimeInvariant { modes, .. } => modes.iter().map(Mode::eigenvalue).collect(),
            _ => Vec::new(),
        }
    }

    /// Writes `a(u)` and `b(u)` for the given input. `eig` must come from
    /// [`Self::fixed_eigenvalues`].
    pub(crate) fn coefficients_into(
        &self,
        eig: &[Complex64],
        u: &[f64],
        a: &mut [Complex64],
        b: &mut [Complex64],
    ) {
        match &self.transition {
            Transition::TimeInvariant { input, .. } => {
                for j in 0..a.len() {
                    a[j] = eig[j];
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (bm, um) in input.row(j).iter().zip(u) {
                        acc += bm * um;
                    }
                    b[j] = acc;
                }
            }
            Transition::NonNegative {
                dt_weight,
                dt_bias,
                log_alpha,
                input,
            } => {
                for j in 0..a.len() {
                    let pre = dot(dt_weight.row(j), u) + dt_bias[j];
                    let delta = softplus(pre);
                    a[j] = Complex64::new((-delta * log_alpha[j].exp()).exp(), 0.0);
                    b[j] = Complex64::new(delta * dot(input.row(j), u), 0.0);
                }
            }
            Transition::Signed {
                weight,
                bias,
                input,
                input_bias,
            } => {
                for j in 0..a.len() {
                    let pre = dot(weight.row(j), u) + bias[j];
                    a[j] = Complex64::new(pre.clamp(-1.0, 1.0), 0.0);
                    b[j] = Complex64::new(dot(input.row(j), u) + input_bias[j], 0.0);
                }
            }
        }
    }

    /// `(a(u), b(u))` for one input vector.
    pub fn coefficients(&self, u: &[f64]) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
        check_dim("layer input", self.input_width(), u.len())?;
        let n = self.state_dim();
        let mut a = vec![Complex64::default(); n];
        let mut b = vec![Complex64::default(); n];
        self.coefficients_into(&self.fixed_eigenvalues(), u, &mut a, &mut b);
        Ok((a, b))
    }

    /// Diagonal entries of `A(u)`, i.e. its eigenvalues.
    pub fn transition_eigenvalues(&self, u: &[f64]) -> Result<Vec<Complex64>> {
        Ok(self.coefficients(u)?.0)
    }

    /// One recurrence step `A(u) ⊙ h + B(u)`.
    pub fn step(&self, h: &[Complex64], u: &[f64]) -> Result<Vec<Complex64>> {
        check_dim("state", self.state_dim(), h.len())?;
        let (a, b) = self.coefficients(u)?;
        Ok(h.iter()
            .zip(a.iter().zip(&b))
            .map(|(h, (a, b))| a * h + b)
            .collect())
    }

    /// States `h_1 … h_T` for a sequence of input vectors.
    pub fn unroll_vectors<'a>(
        &self,
        inputs: impl IntoIterator<Item = &'a [f64]>,
    ) -> Result<Vec<Vec<Complex64>>> {
        let eig = self.fixed_eigenvalues();
        let n = self.state_dim();
        let (mut a, mut b) = (vec![Complex64::default(); n], vec![Complex64::default(); n]);
        let mut h = self.initial_state.clone();
        let mut out = Vec::new();
        for u in inputs {
            check_dim("layer input", self.input_width(), u.len())?;
            self.coefficients_into(&eig, u, &mut a, &mut b);
            for j in 0..n {
                h[j] = a[j] * h[j] + b[j];
            }
            out.push(h.clone());
        }
        Ok(out)
    }

    /// States for a scalar-input layer driven by `xs`.
    pub fn unroll(&self, xs: &InputSequence) -> Result<Vec<Vec<Complex64>>> {
        check_dim("layer input", 1, self.input_width())?;
        self.unroll_vectors(xs.tokens().iter().map(std::slice::from_ref))
    }

    /// State after `k` steps of the constant input `u`, from powers of the
    /// eigenvalues: `A(u)^k h_0 + Σ_{i<k} A(u)^i B(u)`.
    pub fn closed_form_state(&self, u: &[f64], k: u64) -> Result<Vec<Complex64>> {
        let (a, b) = self.coefficients(u)?;
        Ok(a.iter()
            .zip(&b)
            .zip(&self.initial_state)
            .map(|((&a, &b), &h0)| {
                let (power, sum) = power_and_geometric_sum(a, k);
                power * h0 + sum * b
            })
            .collect())
    }

    /// `σ(Re(C h) + D u)` into `out` (length d_out), ignoring the gate.
    pub(crate) fn activation_into(&self, h: &[Complex64], u: &[f64], out: &mut [f64]) {
        for (k, y) in out.iter_mut().enumerate() {
            let mut z = dot(self.feedthrough.row(k), u);
            for (c, h) in self.readout.row(k).iter().zip(h) {
                z += c.re * h.re - c.im * h.im;
            }
            *y = self.activation.apply(z);
        }
    }

    /// Readout `σ(Re(C h) + D u)`, gated if configured, without skip concatenation.
    pub fn readout_into(&self, h: &[Complex64], u: &[f64], out: &mut [f64]) {
        match &self.gate {
            None => self.activation_into(h, u, out),
            Some(gate) => {
                let mut y = vec![0.0; self.readout.rows()];
                self.activation_into(h, u, &mut y);
                gate.apply_into(&y, u, out);
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(a^k, Σ_{i<k} a^i)` by repeated squaring.
pub fn power_and_geometric_sum(a: Complex64, k: u64) -> (Complex64, Complex64) {
    let one = Complex64::new(1.0, 0.0);
    // (p, s) = (a^m, Σ_{i<m} a^i) for the bits consumed so far
    let (mut p, mut s) = (one, Complex64::new(0.0, 0.0));
    for bit in (0..64 - k.leading_zeros()).rev() {
        // double: m -> 2m
        s = s + p * s;
        p = p * p;
        if (k >> bit) & 1 == 1 {
            // m -> m + 1
            s = s + p;
            p = p * a;
        }
    }
    (p, s)
}

/// How raw tokens become the first layer's input vector.
#[derive(Clone, Debug, PartialEq)]
pub enum InputEncoding {
    /// The token itself, as a width-1 vector.
    Scalar,
    /// Learned lookup table for binary tokens (2 × width).
    Embedding(Dense<f64>),
}

impl InputEncoding {
    pub fn width(&self) -> usize {
        match self {
            InputEncoding::Scalar => 1,
            InputEncoding::Embedding(table) => table.cols(),
        }
    }

    pub fn encode_into(&self, x: f64, out: &mut [f64]) -> Result<()> {
        match self {
            InputEncoding::Scalar => out[0] = x,
            InputEncoding::Embedding(table) => {
                let row = binary_index(x)?;
                out.copy_from_slice(table.row(row));
            }
        }
        Ok(())
    }
}

pub(crate) fn binary_index(x: f64) -> Result<usize> {
    if x == 0.0 {
        Ok(0)
    } else if x == 1.0 {
        Ok(1)
    } else {
        Err(Error::NonBinaryToken(x))
    }
}

/// Affine readout head; the predicted class is the argmax of its outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    pub weight: Dense<f64>,
    pub bias: Vec<f64>,
}

impl Head {
    pub fn new(weight: Dense<f64>, bias: Vec<f64>) -> Result<Self> {
        check_dim("head bias", weight.rows(), bias.len())?;
        Ok(Self { weight, bias })
    }

    pub fn outputs(&self) -> usize {
        self.bias.len()
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        (0..self.outputs())
            .map(|k| dot(self.weight.row(k), y) + self.bias[k])
            .collect()
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Layers applied in order, followed by a head.
#[derive(Clone, Debug, PartialEq)]
pub struct StackModel {
    pub encoding: InputEncoding,
    pub layers: Vec<DiagonalLayer>,
    pub head: Head,
}

impl StackModel {
    pub fn new(encoding: InputEncoding, layers: Vec<DiagonalLayer>, head: Head) -> Result<Self> {
        let model = Self {
            encoding,
            layers,
            head,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidParameter("a stack needs at least one layer".into()));
        }
        let mut width = self.encoding.width();
        for layer in &self.layers {
            layer.validate()?;
            check_dim("layer input width", width, layer.input_width())?;
            width = layer.output_width();
        }
        check_dim("head input width", width, self.head.weight.cols())
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, DiagonalLayer::output_width)
    }

    pub fn runner(&self) -> Runner<'_> {
        Runner::new(self)
    }

    /// Runs the whole sequence and records every state, output and class.
    pub fn forward(&self, xs: &InputSequence) -> Result<ForwardTrace> {
        let mut runner = self.runner();
        let mut trace = ForwardTrace {
            states: vec![Vec::with_capacity(xs.len()); self.layers.len()],
            outputs: Vec::with_capacity(xs.len()),
            logits: Vec::with_capacity(xs.len()),
            classes: Vec::with_capacity(xs.len()),
        };
        for &x in xs.tokens() {
            runner.push(x)?;
            for (l, h) in runner.states().iter().enumerate() {
                trace.states[l].push(h.clone());
            }
            trace.outputs.push(runner.output().to_vec());
            let logits = runner.logits();
            trace.classes.push(argmax(&logits));
            trace.logits.push(logits);
        }
        Ok(trace)
    }

    /// Head outputs after the final token (head of the initial output if empty).
    pub fn final_logits(&self, xs: &InputSequence) -> Result<Vec<f64>> {
        let mut runner = self.runner();
        for &x in xs.tokens() {
            runner.push(x)?;
        }
        Ok(runner.logits())
    }

    pub fn classify(&self, xs: &InputSequence) -> Result<usize> {
        Ok(argmax(&self.final_logits(xs)?))
    }
}

/// Full record of a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    /// `states[layer][t]` is `h_{t+1}` of that layer.
    pub states: Vec<Vec<Vec<Complex64>>>,
    /// Output of the last layer at each step.
    pub outputs: Vec<Vec<f64>>,
    pub logits: Vec<Vec<f64>>,
    pub classes: Vec<usize>,
}

/// Streaming evaluator for a [`StackModel`]; holds the current state of every layer.
pub struct Runner<'m> {
    model: &'m StackModel,
    eig: Vec<Vec<Complex64>>,
    states: Vec<Vec<Complex64>>,
    /// Output (with skip) of every layer; index 0 is the encoded input.
    acts: Vec<Vec<f64>>,
    a: Vec<Complex64>,
    b: Vec<Complex64>,
    steps: usize,
}

impl<'m> Runner<'m> {
    pub fn new(model: &'m StackModel) -> Self {
        let mut acts = vec![vec![0.0; model.encoding.width()]];
        acts.extend(model.layers.iter().map(|l| vec![0.0; l.output_width()]));
        let max_n = model.layers.iter().map(DiagonalLayer::state_dim).max().unwrap_or(0);
        Self {
            model,
            eig: model.layers.iter().map(DiagonalLayer::fixed_eigenvalues).collect(),
            states: model.layers.iter().map(|l| l.initial_state.clone()).collect(),
            acts,
            a: vec![Complex64::default(); max_n],
            b: vec![Complex64::default(); max_n],
            steps: 0,
        }
    }

    pub fn push(&mut self, x: f64) -> Result<()> {
        self.push_with(x, |_, _| {})
    }

    /// Advances one token; `post_step(layer, state)` may rewrite each layer's
    /// new state before it is read out.
    pub fn push_with(
        &mut self,
        x: f64,
        mut post_step: impl FnMut(usize, &mut [Complex64]),
    ) -> Result<()> {
        self.model.encoding.encode_into(x, &mut self.acts[0])?;
        for (l, layer) in self.model.layers.iter().enumerate() {
            let n = layer.state_dim();
            let (below, above) = self.acts.split_at_mut(l + 1);
            let u = &below[l];
            let out = &mut above[0];
            let (a, b) = (&mut self.a[..n], &mut self.b[..n]);
            layer.coefficients_into(&self.eig[l], u, a, b);
            let h = &mut self.states[l];
            for j in 0..n {
                h[j] = a[j] * h[j] + b[j];
            }
            post_step(l, h);
            let width = layer.readout_width();
            layer.readout_into(h, u, &mut out[..width]);
            if layer.skip {
                out[width..].copy_from_slice(u);
            }
        }
        self.steps += 1;
        Ok(())
    }

    pub fn states(&self) -> &[Vec<Complex64>] {
        &self.states
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Output of the final layer (including skip).
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("at least the input slot")
    }

    pub fn logits(&self) -> Vec<f64> {
        self.model.head.apply(self.output())
    }

    pub fn class(&self) -> usize {
        argmax(&self.logits())
    }
}

/// Token sequence `x_1 … x_T`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InputSequence(Vec<f64>);

impl InputSequence {
    pub fn new(tokens: Vec<f64>) -> Self {
        Self(tokens)
    }

    /// Parses a string of `0`/`1` characters.
    pub fn from_bits(bits: &str) -> Result<Self> {
        bits.chars()
            .map(|c| match c {
                '0' => Ok(0.0),
                '1' => Ok(1.0),
                other => Err(Error::InvalidParameter(format!("not a bit: {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn tokens(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn concat(&self, other: &InputSequence) -> InputSequence {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Self(v)
    }

    pub fn into_tokens(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for InputSequence {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl FromIterator<f64> for InputSequence {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl fmt::Display for InputSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for x in &self.0 {
            if *x == 0.0 || *x == 1.0 {
                write!(f, "{}", *x as u8)?;
            } else {
                write!(f, "[{x}]")?;
            }
        }
        Ok(())
    }
}

/// Scalar-in, scalar-out layer helpers used by the constructions and tests.
pub mod scalar {
    use super::*;

    /// Time-invariant layer with identity readout: `h' = λ h + b x`.
    pub fn time_invariant(mode: Mode, input: Complex64, h0: Complex64) -> DiagonalLayer {
        DiagonalLayer {
            transition: Transition::TimeInvariant {
                modes: vec![mode],
                input: Dense::from_fn(1, 1, |_, _| input),
            },
            readout: Dense::from_fn(1, 1, |_, _| Complex64::new(1.0, 0.0)),
            feedthrough: Dense::zeros(1, 1),
            initial_state: vec![h0],
            activation: Activation::Identity,
            skip: false,
            gate: None,
        }
    }

    /// Signed selective layer with `a(x) = a0 + (a1 - a0) x` and `b(x) = b0 + (b1 - b0) x`.
    pub fn signed(a0: f64, a1: f64, b0: f64, b1: f64, h0: f64) -> DiagonalLayer {
        DiagonalLayer {
            transition: Transition::Signed {
                weight: Dense::from_fn(1, 1, |_, _| a1 - a0),
                bias: vec![a0],
                input: Dense::from_fn(1, 1, |_, _| b1 - b0),
                input_bias: vec![b0],
            },
            readout: Dense::from_fn(1, 1, |_, _| Complex64::new(1.0, 0.0)),
            feedthrough: Dense::zeros(1, 1),
            initial_state: vec![Complex64::new(h0, 0.0)],
            activation: Activation::Identity,
            skip: false,
            gate: None,
        }
    }
}
