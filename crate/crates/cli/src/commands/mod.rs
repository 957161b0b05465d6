pub mod certify;
pub mod construct;
pub mod psd;
pub mod sweep;
pub mod train;

use std::path::PathBuf;

use ssmlab::inputs::{compute_w, CyclicInputSpec, InputFamily};
use ssmlab::precision::{collapse_certificate, CollapseReport, PrecisionSpec};
use ssmlab::ssm::{LayerKind, StackModel};
use ssmlab::zoo::NamedModel;

/// Resolved command-line context shared by every command.
pub struct Ctx {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub jobs: usize,
}

/// What the theory says about a model on a cyclic input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Prediction {
    /// Every layer and phase must become stationary.
    Collapse(&'static str),
    /// The construction keeps moving forever.
    Circumvent(&'static str),
    None,
}

impl Prediction {
    pub fn label(&self) -> String {
        match self {
            Prediction::Collapse(why) => format!("collapse ({why})"),
            Prediction::Circumvent(why) => format!("no collapse ({why})"),
            Prediction::None => "none".into(),
        }
    }
}

pub fn predict(model: &StackModel, named: Option<NamedModel>, input: &CyclicInputSpec) -> Prediction {
    let w = input.cycle_len() as u64;
    let signed = model.layers.iter().any(|l| l.kind() == LayerKind::InputDependentSigned);
    if !signed {
        if let Ok(period) = compute_w(model) {
            if w % period == 0 {
                let all_nn = model.layers.iter().all(|l| l.kind() == LayerKind::InputDependentNonNegative);
                return Prediction::Collapse(if all_nn {
                    "non-negative transitions"
                } else {
                    "every eigenvalue to the cycle length is non-negative"
                });
            }
        }
    }
    match named {
        Some(NamedModel::ModCount(n)) if w % n != 0 => Prediction::Circumvent("unit-circle rotation"),
        Some(NamedModel::ParitySigned) if input.block.iter().filter(|&&x| x == 1.0).count() % 2 == 1 => {
            Prediction::Circumvent("sign flip on every cycle")
        }
        _ => Prediction::None,
    }
}

pub struct Certified {
    pub input: CyclicInputSpec,
    pub report: CollapseReport,
    pub prediction: Prediction,
}

impl Certified {
    pub fn verdict(&self) -> &'static str {
        if self.report.all_stationary() {
            "collapse"
        } else {
            "circumvented"
        }
    }

    /// Empty when the observation agrees with the prediction.
    pub fn failure(&self, model_id: &str) -> Option<String> {
        let stationary = self.report.all_stationary();
        match self.prediction {
            Prediction::Collapse(_) if !stationary => {
                let e = self.report.entries.iter().find(|e| !e.status.is_stationary())?;
                Some(format!(
                    "{model_id}: collapse predicted but layer {} phase {} is not stationary after {} cycles",
                    e.layer, e.phase, self.report.horizon
                ))
            }
            Prediction::Circumvent(_) if stationary => Some(format!(
                "{model_id}: construction collapsed (max tau {:?})",
                self.report.max_tau()
            )),
            _ => None,
        }
    }
}

pub fn certify_model(
    model: &StackModel,
    named: Option<NamedModel>,
    family: &InputFamily,
    spec: &PrecisionSpec,
    t_max: usize,
) -> anyhow::Result<Certified> {
    let model_w = compute_w(model).ok();
    let input = family.cyclic_spec(model_w)?;
    let report = collapse_certificate(model, &input, spec, t_max)?;
    let prediction = predict(model, named, &input);
    Ok(Certified {
        input,
        report,
        prediction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn certify(name: &str, family: &str) -> Certified {
        let named: NamedModel = name.parse().unwrap();
        let model = named.build(0).unwrap();
        let spec = PrecisionSpec::with_mantissa_bits(10).unwrap();
        certify_model(&model, Some(named), &family.parse().unwrap(), &spec, 20_000).unwrap()
    }

    #[test]
    fn predictions_match_observations() {
        let c = certify("mamba2", "ones:20000");
        assert!(matches!(c.prediction, Prediction::Collapse(_)));
        assert_eq!(c.verdict(), "collapse");
        assert!(c.failure("m").is_none());

        let c = certify("modcount:2", "ones:20000");
        assert!(matches!(c.prediction, Prediction::Circumvent(_)));
        assert_eq!(c.verdict(), "circumvented");

        // With a cycle of length 2 the rotation by half a turn lines up again.
        let c = certify("modcount:2", "impulse:auto,1000");
        assert!(matches!(c.prediction, Prediction::Collapse(_)));
        assert_eq!(c.verdict(), "collapse");

        let c = certify("parity-signed", "cycle:2,3,1000");
        assert!(matches!(c.prediction, Prediction::Circumvent(_)));
        assert!(c.failure("p").is_none());
        let c = certify("parity-signed", "impulse:4,4000");
        assert!(matches!(c.prediction, Prediction::Circumvent(_)));
        assert_eq!(c.verdict(), "circumvented");
    }
}
