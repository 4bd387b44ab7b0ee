use serde::{Deserialize, Serialize};

use crate::models::SteerNet;
use crate::scenegen::{Dataset, Split};
use crate::semantics::OneHotTensor;

use super::AnalysisError;

/// How a label is removed from the input during a scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum AblationMode {
    /// Feed zeros to the label's channel.
    Zero,
    /// Move the label's pixels into another label's channel.
    Camouflage { target: u8 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityEntry {
    pub label_id: u8,
    pub label: String,
    pub ablated_mse: f64,
    pub delta_mse: f64,
}

/// Per-label error increase under channel ablation, sorted by decreasing
/// delta (ties broken by label id). The ordering doubles as the label
/// importance ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub model_id: String,
    pub ablation: AblationMode,
    pub baseline_mse: f64,
    pub entries: Vec<SensitivityEntry>,
}

impl SensitivityReport {
    /// Rank position of a label id (0 = most important).
    pub fn rank_of(&self, label_id: u8) -> Option<usize> {
        self.entries.iter().position(|e| e.label_id == label_id)
    }

    pub fn entry(&self, label_id: u8) -> Option<&SensitivityEntry> {
        self.entries.iter().find(|e| e.label_id == label_id)
    }

    pub fn max_delta(&self) -> f64 {
        self.entries.first().map(|e| e.delta_mse).unwrap_or(0.0)
    }
}

fn mse_with<F>(net: &SteerNet, dataset: &Dataset, split: Split, ablate: F) -> Result<f64, AnalysisError>
where
    F: Fn(&OneHotTensor) -> Result<OneHotTensor, AnalysisError>,
{
    let range = dataset.split_range(split);
    let n = range.len();
    let mut sum = 0.0;
    for id in range {
        let scene = &dataset.scenes[id];
        let encoded = ablate(&scene.semantic.one_hot())?;
        let pred = net.predict(encoded.tensor())?;
        let err = pred - scene.steering;
        sum += err * err;
    }
    Ok(sum / n as f64)
}

/// Measure each label's importance by ablating its channel on every test
/// input and recording the change in steering MSE against the un-ablated
/// baseline. Deterministic; entries cover the whole label set.
///
/// In camouflage mode the target label's own row is reported with the
/// input unchanged (a label cannot be camouflaged into itself), which
/// pins its delta to exactly zero.
pub fn sensitivity_scan(
    net: &SteerNet,
    dataset: &Dataset,
    split: Split,
    ablation: AblationMode,
) -> Result<SensitivityReport, AnalysisError> {
    let classes = match net.config.channels {
        13 | 7 => net.config.channels,
        other => {
            return Err(AnalysisError::BadInput(format!(
                "sensitivity scan needs a segmentation-input model; this one takes {other} channels (label ablation is channel-wise)"
            )))
        }
    };
    if dataset.config.label_set.class_count() != classes {
        return Err(AnalysisError::BadInput(format!(
            "dataset is {:?} but the model takes {classes} channels",
            dataset.config.label_set
        )));
    }
    if dataset.split_range(split).is_empty() {
        return Err(AnalysisError::BadInput("empty test split".into()));
    }
    if let AblationMode::Camouflage { target } = ablation {
        if !dataset.config.label_set.contains(target) {
            return Err(AnalysisError::BadInput(format!(
                "camouflage target {target} is not a valid label id"
            )));
        }
    }

    let baseline_mse = mse_with(net, dataset, split, |oh| Ok(oh.clone()))?;
    let kind = dataset.config.label_set;
    let mut entries = Vec::with_capacity(classes);
    for label in 0..classes as u8 {
        let ablated_mse = match ablation {
            AblationMode::Zero => {
                mse_with(net, dataset, split, |oh| oh.zero_channel(label).map_err(to_analysis))?
            }
            AblationMode::Camouflage { target } if target == label => baseline_mse,
            AblationMode::Camouflage { target } => mse_with(net, dataset, split, |oh| {
                oh.camouflage_channel(label, target).map_err(to_analysis)
            })?,
        };
        entries.push(SensitivityEntry {
            label_id: label,
            label: kind.name(label).expect("id in range").to_string(),
            ablated_mse,
            delta_mse: ablated_mse - baseline_mse,
        });
    }
    entries.sort_by(|a, b| {
        b.delta_mse
            .partial_cmp(&a.delta_mse)
            .expect("finite deltas")
            .then(a.label_id.cmp(&b.label_id))
    });
    Ok(SensitivityReport {
        model_id: net.config.model_id().to_string(),
        ablation,
        baseline_mse,
        entries,
    })
}

fn to_analysis(e: crate::semantics::SemanticsError) -> AnalysisError {
    AnalysisError::BadInput(e.to_string())
}
