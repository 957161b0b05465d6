use serde::Serialize;
use ssmlab::constructions::{
    fsa_equivalence_check, modular_counting_check, offset_fsa, offset_ssm, parity_signed_check, OracleReport,
};

use super::Ctx;
use crate::config::{invalid, ConstructConfig};
use crate::output::write_csv;

#[derive(Serialize)]
struct Row {
    construction: String,
    n: usize,
    variant: String,
    checks: usize,
    mismatches: usize,
    pass: bool,
}

pub fn run(cfg: &ConstructConfig, ctx: &Ctx) -> anyhow::Result<Vec<String>> {
    let seed = ctx.seed.unwrap_or(cfg.seed);
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut record = |variant: &str, r: OracleReport| {
        if let Some(m) = &r.first_mismatch {
            failures.push(format!("{} {variant}: {} mismatches, first {m}", cfg.construction, r.mismatches));
        }
        rows.push(Row {
            construction: cfg.construction.clone(),
            n: cfg.n,
            variant: variant.into(),
            checks: r.checks,
            mismatches: r.mismatches,
            pass: r.pass(),
        });
    };
    match cfg.construction.as_str() {
        "modcount" => {
            if cfg.n < 2 || cfg.t_max == 0 {
                return Err(invalid("modcount needs n >= 2 and t_max >= 1"));
            }
            record("integer modulus oracle", modular_counting_check(cfg.n as u64, cfg.t_max)?);
        }
        "offset" => {
            if cfg.n < 2 || cfg.trials == 0 {
                return Err(invalid("offset needs n >= 2 and trials >= 1"));
            }
            let max_len = cfg.max_len.unwrap_or(40 * cfg.n);
            let r = fsa_equivalence_check(&offset_ssm(cfg.n)?, &offset_fsa(cfg.n)?, cfg.n, cfg.trials, max_len, seed)?;
            let first_mismatch = r.counterexample.as_ref().map(|c| {
                format!(
                    "step {} of {}: ssm {} automaton {}",
                    c.step, c.input, c.ssm_output, c.fsa_output
                )
            });
            record(
                "automaton",
                OracleReport {
                    checks: r.steps_checked,
                    mismatches: usize::from(first_mismatch.is_some()),
                    first_mismatch,
                },
            );
        }
        "parity-signed" => {
            if cfg.exhaustive_len > 24 {
                return Err(invalid("exhaustive_len must be at most 24"));
            }
            record(
                "xor oracle",
                parity_signed_check(cfg.exhaustive_len, cfg.random_count, cfg.random_len, None, seed)?,
            );
            if let Some(p) = &cfg.precision {
                let spec = p.spec()?;
                let variant = format!("xor oracle, p={}", spec.mantissa_bits());
                record(
                    &variant,
                    parity_signed_check(cfg.exhaustive_len, cfg.random_count, cfg.random_len, Some(&spec), seed)?,
                );
            }
        }
        other => {
            return Err(invalid(format!(
                "unknown construction {other:?} (expected modcount, offset or parity-signed)"
            )))
        }
    }
    write_csv(&ctx.out.join("construct.csv"), &rows)?;
    for r in &rows {
        println!(
            "{} n={} [{}]: {} checks, {} mismatches: {}",
            r.construction,
            r.n,
            r.variant,
            r.checks,
            r.mismatches,
            if r.pass { "pass" } else { "FAIL" }
        );
    }
    Ok(failures)
}
