//! Least-squares regression of the tanh harvester network.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::network::{EhModel, EH_PARAM_COUNT};
use super::PowerDataset;
use crate::rng::substream;
use crate::{Error, Result};

/// Largest normalized target; keeps targets inside the tanh head's range.
const TARGET_CEILING: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Half-width of the uniform initialization interval.
    pub init_scale: f64,
}

impl Default for FitHyper {
    fn default() -> Self {
        Self {
            learning_rate: 0.02,
            epochs: 10_000,
            seed: 7,
            init_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub model: EhModel,
    /// RMSE in µW over the training pairs.
    pub rmse: f64,
    pub final_loss: f64,
    pub epochs: usize,
}

/// Mean squared error of the zero-offset corrected network over
/// normalized pairs `(u, t)`, and its gradient with respect to the 17
/// parameters.
pub fn loss_and_gradient(model: &EhModel, data: &[(f64, f64)]) -> (f64, [f64; EH_PARAM_COUNT]) {
    let zero = model.forward(0.0);
    let m = data.len() as f64;
    let mut loss = 0.0;
    let mut grad = [0.0; EH_PARAM_COUNT];
    let mut residual_sum = 0.0;
    for &(u, t) in data {
        let tr = model.forward(u);
        let r = tr.out - zero.out - t;
        loss += r * r;
        residual_sum += r;
        model.backward(u, &tr, 2.0 * r / m, &mut grad);
    }
    model.backward(0.0, &zero, -2.0 * residual_sum / m, &mut grad);
    (loss / m, grad)
}

/// Fits the network to `data` by full-batch gradient descent with adaptive
/// moment steps. Deterministic for a given seed.
pub fn fit_eh(data: &PowerDataset, hyper: &FitHyper) -> Result<FitReport> {
    let pairs = data.pairs();
    if pairs.len() < 10 {
        return Err(Error::Dataset(format!(
            "need at least 10 points, got {}",
            pairs.len()
        )));
    }
    let p_max = pairs.iter().map(|p| p.0).fold(0.0, f64::max);
    let p_min = pairs
        .iter()
        .map(|p| p.0)
        .filter(|&p| p > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !(p_max >= 10.0 * p_min) {
        return Err(Error::Dataset(
            "input power must span at least one decade".into(),
        ));
    }
    if !(hyper.learning_rate > 0.0 && hyper.init_scale > 0.0) {
        return Err(Error::domain("learning rate and init scale must be positive"));
    }
    let out_max = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
    let input_scale = p_max;
    let power_scale = if out_max > 0.0 { out_max / TARGET_CEILING } else { 1.0 };
    let normalized: Vec<(f64, f64)> = pairs
        .iter()
        .map(|&(p, q)| (p / input_scale, q / power_scale))
        .collect();

    let mut rng = substream(hyper.seed, crate::rng::streams::INIT);
    let mut theta = [0.0; EH_PARAM_COUNT];
    for v in &mut theta {
        *v = rng.random_range(-hyper.init_scale..hyper.init_scale);
    }

    let mut adam = crate::nn::Adam::new(EH_PARAM_COUNT, hyper.learning_rate);
    let mut best = (f64::INFINITY, theta);
    for epoch in 0..hyper.epochs {
        let model = EhModel::from_params(&theta, input_scale, power_scale)?;
        let (loss, grad) = loss_and_gradient(&model, &normalized);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::FitDiverged { epoch });
        }
        if loss < best.0 {
            best = (loss, theta);
        }
        adam.step(&mut theta, &grad);
    }
    let mut model = EhModel::from_params(&best.1, input_scale, power_scale)?;
    let (final_loss, _) = loss_and_gradient(&model, &normalized);
    if !final_loss.is_finite() {
        return Err(Error::FitDiverged { epoch: hyper.epochs });
    }
    let rmse = final_loss.sqrt() * power_scale;
    model.rmse = Some(rmse);
    Ok(FitReport {
        model,
        rmse,
        final_loss,
        epochs: hyper.epochs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eh::{DatasetSource, Harvester};

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let data: Vec<(f64, f64)> = (0..40)
            .map(|i| {
                let u = i as f64 / 39.0;
                (u, 0.9 / (1.0 + (-12.0 * (u - 0.4)).exp()))
            })
            .collect();
        let mut rng = substream(5, 0);
        let h = 1e-4;
        for _ in 0..20 {
            let mut theta = [0.0; EH_PARAM_COUNT];
            for v in &mut theta {
                *v = rng.random_range(-1.5..1.5);
            }
            let model = EhModel::from_params(&theta, 1.0, 1.0).unwrap();
            let (_, grad) = loss_and_gradient(&model, &data);
            for k in 0..EH_PARAM_COUNT {
                let mut plus = theta;
                plus[k] += h;
                let mut minus = theta;
                minus[k] -= h;
                let lp = loss_and_gradient(&EhModel::from_params(&plus, 1.0, 1.0).unwrap(), &data).0;
                let lm = loss_and_gradient(&EhModel::from_params(&minus, 1.0, 1.0).unwrap(), &data).0;
                let fd = (lp - lm) / (2.0 * h);
                let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-6);
                assert!(rel < 1e-4, "param {k}: analytic {} vs fd {fd}", grad[k]);
            }
        }
    }

    #[test]
    fn rejects_small_or_narrow_datasets() {
        let few = PowerDataset::new(vec![(1.0, 1.0); 5], DatasetSource::File).unwrap();
        assert!(fit_eh(&few, &FitHyper::default()).is_err());
        let narrow: Vec<_> = (0..20).map(|i| (10.0 + i as f64, 1.0)).collect();
        let narrow = PowerDataset::new(narrow, DatasetSource::File).unwrap();
        assert!(matches!(
            fit_eh(&narrow, &FitHyper::default()),
            Err(Error::Dataset(_))
        ));
    }

    #[test]
    fn divergence_is_reported_with_epoch() {
        let pairs: Vec<_> = (1..=20).map(|i| (i as f64 * 10.0, 1.0)).collect();
        let d = PowerDataset::new(pairs, DatasetSource::File).unwrap();
        let hyper = FitHyper {
            learning_rate: f64::INFINITY,
            epochs: 10,
            ..FitHyper::default()
        };
        assert!(matches!(fit_eh(&d, &hyper), Err(Error::FitDiverged { .. })));
    }

    #[test]
    fn constant_dataset_fits_constant() {
        let pairs: Vec<_> = (0..50)
            .map(|i| (10f64.powf(1.0 + 2.0 * i as f64 / 49.0), 12.0))
            .collect();
        let d = PowerDataset::new(pairs.clone(), DatasetSource::File).unwrap();
        let hyper = FitHyper {
            epochs: 5000,
            ..FitHyper::default()
        };
        let fit = fit_eh(&d, &hyper).unwrap();
        for (p, _) in pairs {
            let v = fit.model.power(p);
            assert!((v - 12.0).abs() < 0.6, "f({p}) = {v}");
        }
    }

    #[test]
    fn same_seed_same_parameters() {
        let d = crate::eh::synth_dataset(100, 1000.0, 0.0, 3).unwrap();
        let hyper = FitHyper {
            epochs: 300,
            ..FitHyper::default()
        };
        let a = fit_eh(&d, &hyper).unwrap();
        let b = fit_eh(&d, &hyper).unwrap();
        assert_eq!(a.model.params(), b.model.params());
    }
}
