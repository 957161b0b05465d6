use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use ssmlab::psd::{nonzero_spectrum_match, psd_product_check, random_matrix, random_psd, MAX_DIM, PRODUCT_TOL};

use super::Ctx;
use crate::config::{invalid, PsdConfig};
use crate::output::write_csv;

#[derive(Serialize)]
struct Row {
    trial: usize,
    dim: usize,
    zero_columns_a: usize,
    zero_columns_b: usize,
    min_eigenvalue: f64,
    spectra_match: bool,
    pass: bool,
}

fn entries(m: &ssmlab::psd::SymMatrix) -> String {
    let d = m.dim();
    let rows: Vec<String> = (0..d)
        .map(|r| {
            let cells: Vec<String> = (0..d).map(|c| format!("{:e}", m.matrix()[(r, c)])).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

pub fn run(cfg: &PsdConfig, ctx: &Ctx) -> anyhow::Result<Vec<String>> {
    if cfg.dim == 0 || cfg.dim > MAX_DIM {
        return Err(invalid(format!("dim must be in 1..={MAX_DIM}, got {}", cfg.dim)));
    }
    if cfg.trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    let d = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed.unwrap_or(cfg.seed));
    let mut rows = Vec::with_capacity(cfg.trials);
    let mut failures = Vec::new();
    for trial in 0..cfg.trials {
        let (za, zb) = if cfg.rank_deficient {
            (rng.gen_range(0..d), rng.gen_range(0..d))
        } else {
            (0, 0)
        };
        let a = random_psd(d, za, &mut rng)?;
        let b = random_psd(d, zb, &mut rng)?;
        let r = psd_product_check(&a, &b)?;
        if !r.pass {
            failures.push(format!(
                "trial {trial}: min eigenvalue {:e}, spectra match {}; A = {}, B = {}",
                r.min_eigenvalue,
                r.spectra_match,
                entries(&a),
                entries(&b)
            ));
        }
        rows.push(Row {
            trial,
            dim: d,
            zero_columns_a: za,
            zero_columns_b: zb,
            min_eigenvalue: r.min_eigenvalue,
            spectra_match: r.spectra_match,
            pass: r.pass,
        });
    }
    let mut spectrum_failures = 0;
    for trial in 0..cfg.spectrum_trials {
        let s = random_matrix(d, &mut rng);
        let t = random_matrix(d, &mut rng);
        if !nonzero_spectrum_match(&s, &t)? {
            spectrum_failures += 1;
            failures.push(format!("spectrum trial {trial}: ST and TS nonzero spectra differ"));
        }
    }
    write_csv(&ctx.out.join("psd.csv"), &rows)?;
    let worst = rows.iter().map(|r| r.min_eigenvalue).fold(f64::INFINITY, f64::min);
    let passed = rows.iter().filter(|r| r.pass).count();
    println!(
        "d={d}: {passed}/{} PSD products pass (threshold -{PRODUCT_TOL:e}), worst min eigenvalue {worst:e}",
        rows.len()
    );
    if cfg.spectrum_trials > 0 {
        println!(
            "  ST/TS nonzero spectra: {}/{} match",
            cfg.spectrum_trials - spectrum_failures,
            cfg.spectrum_trials
        );
    }
    Ok(failures)
}
