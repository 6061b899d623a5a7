//! Energy-harvester models and the On-Off power analysis built on them.

mod dataset;
mod fit;
mod model_c;
mod network;
mod onoff;

pub use dataset::{synth_dataset, DatasetSource, PowerDataset};
pub use fit::{fit_eh, loss_and_gradient, FitHyper, FitReport};
pub use model_c::{canonical_curve, canonical_model, model_c_eval, ModelC, CANONICAL_KNEE_UW};
pub use network::{eval_eh, EhModel, EH_PARAM_COUNT};
pub use onoff::{onoff_delivered, optimal_pon, pon_approx, OnOffLaw, PON_KNEE_UW};

use serde::{Deserialize, Serialize};

/// Memoryless input-power to harvested-power map, with its derivative for
/// gradient-based training.
pub trait Harvester: Send + Sync {
    /// Harvested power (µW) for instantaneous input power `p_in` (µW).
    fn power(&self, p_in: f64) -> f64;

    /// `d power / d p_in`.
    fn slope(&self, p_in: f64) -> f64;
}

/// Identity harvester; delivered power equals input power.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Linear;

impl Harvester for Linear {
    fn power(&self, p_in: f64) -> f64 {
        p_in
    }

    fn slope(&self, _p_in: f64) -> f64 {
        1.0
    }
}

/// Serializable choice of harvester.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HarvesterModel {
    /// The fixed sigmoid standing in for measured data, see [`canonical_model`].
    Canonical,
    Sigmoid(ModelC),
    Learned(EhModel),
    Linear,
}

impl Default for HarvesterModel {
    fn default() -> Self {
        HarvesterModel::Canonical
    }
}

impl Harvester for HarvesterModel {
    fn power(&self, p_in: f64) -> f64 {
        match self {
            HarvesterModel::Canonical => canonical_model().power(p_in),
            HarvesterModel::Sigmoid(m) => m.power(p_in),
            HarvesterModel::Learned(m) => m.power(p_in),
            HarvesterModel::Linear => p_in,
        }
    }

    fn slope(&self, p_in: f64) -> f64 {
        match self {
            HarvesterModel::Canonical => canonical_model().slope(p_in),
            HarvesterModel::Sigmoid(m) => m.slope(p_in),
            HarvesterModel::Learned(m) => m.slope(p_in),
            HarvesterModel::Linear => 1.0,
        }
    }
}

impl<H: Harvester + ?Sized> Harvester for &H {
    fn power(&self, p_in: f64) -> f64 {
        (**self).power(p_in)
    }

    fn slope(&self, p_in: f64) -> f64 {
        (**self).slope(p_in)
    }
}
