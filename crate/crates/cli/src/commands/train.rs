use serde::Serialize;
use ssmlab::constructions::OffsetTaskSpec;
use ssmlab::train::offset::{gen_offset_dataset, offset_config, offset_run, scenario_double_isi, scenario_two_isi, trace, TraceRow};
use ssmlab::train::{parity_run, ModelKind, TrainConfig};

use super::Ctx;
use crate::config::{invalid, Experiment, TrainCommandConfig};
use crate::output::{line_plot, run_jobs, write_csv, Series};

/// One row of `results.csv`.
#[derive(Clone, Debug, Serialize)]
pub struct ResultRow {
    pub model: String,
    pub seed: String,
    pub train_len: usize,
    pub eval_len: usize,
    pub train_acc: f64,
    pub eval_acc: f64,
    pub epochs: usize,
    pub lr: f64,
}

fn slug(kind: ModelKind) -> String {
    kind.to_string().to_lowercase().replace('+', "-")
}

fn kinds(cfg: &TrainCommandConfig) -> anyhow::Result<Vec<ModelKind>> {
    if cfg.models.is_empty() {
        return Ok(match cfg.experiment {
            Experiment::Parity => ModelKind::ALL.to_vec(),
            Experiment::Offset => vec![ModelKind::S4d, ModelKind::Mamba],
        });
    }
    cfg.models
        .iter()
        .map(|m| m.parse().map_err(|e| invalid(format!("models: {e}"))))
        .collect()
}

/// Per-model configs with overrides applied, validated before anything runs.
fn configs(cfg: &TrainCommandConfig, base_seed: u64) -> anyhow::Result<Vec<(ModelKind, TrainConfig)>> {
    if cfg.seeds == 0 {
        return Err(invalid("seeds must be at least 1"));
    }
    let mut out = Vec::new();
    for kind in kinds(cfg)? {
        for seed in base_seed..base_seed + cfg.seeds as u64 {
            let mut t = match cfg.experiment {
                Experiment::Parity => TrainConfig::parity(kind, seed),
                Experiment::Offset => offset_config(kind, seed),
            };
            if let Some(lr) = cfg.learning_rate {
                t.learning_rate = lr;
            }
            if let Some(e) = cfg.epochs {
                t.epochs = e;
            }
            t.validate().map_err(|e| invalid(format!("{kind}: {e}")))?;
            out.push((kind, t));
        }
    }
    Ok(out)
}

pub fn run(cfg: &TrainCommandConfig, ctx: &Ctx) -> anyhow::Result<Vec<String>> {
    let runs = configs(cfg, ctx.seed.unwrap_or(cfg.seed))?;
    match cfg.experiment {
        Experiment::Parity => parity(cfg, ctx, &runs),
        Experiment::Offset => offset(cfg, ctx, &runs),
    }
}

fn parity(cfg: &TrainCommandConfig, ctx: &Ctx, runs: &[(ModelKind, TrainConfig)]) -> anyhow::Result<Vec<String>> {
    if cfg.train_len == 0 || cfg.eval_count == 0 || cfg.eval_lengths.iter().any(|&l| l == 0) {
        return Err(invalid("train_len, eval_count and eval lengths must be positive"));
    }
    let results = run_jobs(runs, ctx.jobs, |(kind, t)| {
        parity_run(*kind, t, cfg.train_len, &cfg.eval_lengths, cfg.eval_count)
    });
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut done = Vec::new();
    for ((kind, t), res) in runs.iter().zip(results) {
        match res {
            Ok(run) => {
                for &(len, acc) in &run.evals {
                    rows.push(ResultRow {
                        model: kind.to_string(),
                        seed: t.seed.to_string(),
                        train_len: cfg.train_len,
                        eval_len: len,
                        train_acc: run.train_acc,
                        eval_acc: acc,
                        epochs: t.epochs,
                        lr: t.learning_rate,
                    });
                }
                done.push(run);
            }
            Err(e) => failures.push(format!("{kind} seed {}: {e}", t.seed)),
        }
    }
    write_csv(&ctx.out.join("results.csv"), &rows)?;

    // One row per model: seed-averaged accuracies at the longest length.
    let mut table = Vec::new();
    for kind in kinds(cfg)? {
        let mine: Vec<_> = done.iter().filter(|r| r.kind == kind).collect();
        let Some(first) = mine.first() else { continue };
        let n = mine.len() as f64;
        let Some(&(eval_len, _)) = first.evals.last() else { continue };
        let seeds: Vec<String> = mine.iter().map(|r| r.seed.to_string()).collect();
        table.push(ResultRow {
            model: kind.to_string(),
            seed: seeds.join(" "),
            train_len: cfg.train_len,
            eval_len,
            train_acc: mine.iter().map(|r| r.train_acc).sum::<f64>() / n,
            eval_acc: mine.iter().map(|r| r.evals.last().map_or(0.0, |e| e.1)).sum::<f64>() / n,
            epochs: first.config.epochs,
            lr: first.config.learning_rate,
        });
    }
    write_csv(&ctx.out.join("table.csv"), &table)?;
    println!("{:<10} {:>9} {:>10}", "model", "train", format!("eval@{}", table.first().map_or(0, |r| r.eval_len)));
    for r in &table {
        println!("{:<10} {:>8.1}% {:>9.1}%", r.model, 100.0 * r.train_acc, 100.0 * r.eval_acc);
    }
    Ok(failures)
}

fn write_trace(ctx: &Ctx, plots: bool, name: &str, title: &str, rows: &[TraceRow]) -> anyhow::Result<()> {
    write_csv(&ctx.out.join(format!("{name}.csv")), rows)?;
    if plots {
        let pick = |f: fn(&TraceRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
        let (input, target, output) = (pick(|r| r.input), pick(|r| r.target), pick(|r| r.output));
        let svg = line_plot(
            title,
            &[
                Series { name: "input", color: "#bbbbbb", values: &input },
                Series { name: "next-token target", color: "#1f77b4", values: &target },
                Series { name: "model output", color: "#d62728", values: &output },
            ],
        );
        std::fs::write(ctx.out.join(format!("{name}.svg")), svg)?;
    }
    Ok(())
}

fn offset(cfg: &TrainCommandConfig, ctx: &Ctx, runs: &[(ModelKind, TrainConfig)]) -> anyhow::Result<Vec<String>> {
    let o = &cfg.offset;
    let task = OffsetTaskSpec::new(o.isi_len, o.iti_min, o.iti_max, o.seq_len).map_err(|e| invalid(format!("offset: {e}")))?;
    let probes = [
        ("two_isi", scenario_two_isi(&task, o.gap).map_err(|e| invalid(format!("offset: {e}")))?),
        ("double_isi", scenario_double_isi(&task).map_err(|e| invalid(format!("offset: {e}")))?),
    ];
    let results = run_jobs(runs, ctx.jobs, |(kind, t)| offset_run(*kind, t, &task));
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for ((kind, t), res) in runs.iter().zip(results) {
        let run = match res {
            Ok(run) => run,
            Err(e) => {
                failures.push(format!("{kind} seed {}: {e}", t.seed));
                continue;
            }
        };
        rows.push(ResultRow {
            model: kind.to_string(),
            seed: t.seed.to_string(),
            train_len: task.seq_len,
            eval_len: task.seq_len,
            train_acc: run.train_accuracy,
            eval_acc: run.accuracy,
            epochs: t.epochs,
            lr: t.learning_rate,
        });
        println!(
            "{kind} seed {}: offset accuracy train {:.1}%, held-out {:.1}%",
            t.seed,
            100.0 * run.train_accuracy,
            100.0 * run.accuracy
        );
        let held_out = gen_offset_dataset(&task, 1, t.seed.wrapping_add(1 << 33))?;
        let mut traces = vec![("held_out", held_out[0].input.clone())];
        traces.extend(probes.iter().cloned());
        for (probe, xs) in &traces {
            let name = format!("trace_{}_{}_{probe}", slug(*kind), t.seed);
            let title = format!("{kind} seed {} ({probe})", t.seed);
            write_trace(ctx, cfg.plots, &name, &title, &trace(&run.trained.model, xs)?)?;
        }
    }
    write_csv(&ctx.out.join("results.csv"), &rows)?;
    Ok(failures)
}
