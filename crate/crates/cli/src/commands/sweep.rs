use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use ssmlab::inputs::InputFamily;
use ssmlab::precision::CollapseRow;
use ssmlab::ssm::StackModel;
use ssmlab::zoo::{random_hybrid_stack, random_non_negative_stack};

use super::{certify_model, Ctx};
use crate::config::{invalid, SweepConfig, Zoo};
use crate::output::{run_jobs, write_csv};

#[derive(Serialize)]
struct SummaryRow {
    model_id: String,
    layers: usize,
    #[serde(rename = "W")]
    w: usize,
    stationary: bool,
    max_tau: Option<usize>,
    predicted: String,
    verdict: &'static str,
}

pub fn run(cfg: &SweepConfig, ctx: &Ctx) -> anyhow::Result<Vec<String>> {
    if cfg.count == 0 || cfg.max_depth == 0 || cfg.max_state == 0 || cfg.max_den == 0 || cfg.t_max == 0 {
        return Err(invalid("count, max_depth, max_state, max_den and t_max must be positive"));
    }
    let spec = cfg.precision.spec()?;
    let family_text = cfg.family.clone().unwrap_or_else(|| match cfg.zoo {
        Zoo::NonNegative => "ones:100000".into(),
        Zoo::Hybrid => "impulse:auto,100000".into(),
    });
    let family: InputFamily = family_text.parse().map_err(|e| invalid(format!("family: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed.unwrap_or(cfg.seed));
    let (prefix, models): (&str, Vec<StackModel>) = match cfg.zoo {
        Zoo::NonNegative => (
            "nn",
            (0..cfg.count)
                .map(|_| random_non_negative_stack(cfg.max_depth, cfg.max_state, &mut rng))
                .collect::<Result<_, _>>()?,
        ),
        Zoo::Hybrid => (
            "hybrid",
            (0..cfg.count)
                .map(|_| random_hybrid_stack(cfg.max_den, cfg.max_state, &mut rng))
                .collect::<Result<_, _>>()?,
        ),
    };

    let results = run_jobs(&models, ctx.jobs, |m| certify_model(m, None, &family, &spec, cfg.t_max));
    let mut rows: Vec<CollapseRow> = Vec::new();
    let mut summary = Vec::new();
    let mut failures = Vec::new();
    for (i, (model, res)) in models.iter().zip(results).enumerate() {
        let id = format!("{prefix}-{i}");
        let c = res?;
        rows.extend(c.report.rows(&id, &family_text));
        failures.extend(c.failure(&id));
        summary.push(SummaryRow {
            model_id: id,
            layers: model.layers.len(),
            w: c.input.cycle_len(),
            stationary: c.report.all_stationary(),
            max_tau: c.report.max_tau(),
            predicted: c.prediction.label(),
            verdict: c.verdict(),
        });
    }
    write_csv(&ctx.out.join("sweep.csv"), &rows)?;
    write_csv(&ctx.out.join("sweep_summary.csv"), &summary)?;
    let stationary = summary.iter().filter(|r| r.stationary).count();
    let max_tau = summary.iter().filter_map(|r| r.max_tau).max();
    println!(
        "{} {prefix} models on {family_text} (p={}): {stationary} stationary, max tau {max_tau:?} cycles",
        summary.len(),
        spec.mantissa_bits()
    );
    Ok(failures)
}
