use anyhow::Context;
use ssmlab::inputs::InputFamily;
use ssmlab::zoo::NamedModel;

use super::{certify_model, Ctx};
use crate::config::{invalid, CertifyConfig};
use crate::output::write_csv;

pub fn run(cfg: &CertifyConfig, ctx: &Ctx) -> anyhow::Result<Vec<String>> {
    let named: NamedModel = cfg.model.parse().map_err(|e| invalid(format!("model: {e}")))?;
    let family: InputFamily = cfg.family.parse().map_err(|e| invalid(format!("family: {e}")))?;
    let spec = cfg.precision.spec()?;
    if cfg.t_max == 0 {
        return Err(invalid("t_max must be at least 1"));
    }
    let seed = ctx.seed.unwrap_or(cfg.seed);
    let model = named.build(seed).context("building model")?;
    let c = certify_model(&model, Some(named), &family, &spec, cfg.t_max)?;

    let model_id = named.to_string();
    write_csv(&ctx.out.join("certify.csv"), &c.report.rows(&model_id, &cfg.family))?;
    let r = &c.report;
    println!(
        "{model_id} on {} (W={}, p={}): verdict {}; predicted {}",
        cfg.family,
        r.cycle_length,
        spec.mantissa_bits(),
        c.verdict(),
        c.prediction.label()
    );
    println!(
        "  {} of {} layer/phase pairs stationary, max tau {:?} cycles, {} cycles simulated",
        r.entries.iter().filter(|e| e.status.is_stationary()).count(),
        r.entries.len(),
        r.max_tau(),
        r.simulated_cycles
    );
    if r.parity_alternates() {
        println!(
            "  true parity alternates every cycle; readout {}",
            if r.parity_contradiction() {
                "is frozen (cannot track parity)"
            } else {
                "still changes"
            }
        );
    }
    Ok(c.failure(&model_id).into_iter().collect())
}
