//! Experiment drivers: theory curves, gradient benchmarks, optimisation runs
//! and prior studies. Every driver is deterministic in its seed and returns
//! plain records that serialise to CSV.

mod bench;
mod optimize;
mod prior_study;
mod theory;

pub use bench::{run_grad_bench, summarize_bench, BenchSummary, BenchmarkRecord, GradBenchConfig};
pub use optimize::{
    mean_ratio_curve, optimize, run_optimize, OptimizationStep, OptimizationTrace, OptimizeConfig, TraceRow,
};
pub use prior_study::{run_prior_study, PriorStudy, PriorStudyConfig, PriorStudyRow, RmsRow};
pub use theory::{run_theory_curves, theory_point, write_theory_csv, TheoryConfig, TheoryRow};

use std::f64::consts::PI;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimator::LayerPriors;
use crate::priors::{exponential_fit_prior, qaoa_cost_prior_barren, qaoa_mixer_prior_barren, ExpFitParams};
use crate::qaoa::{CircuitParams, LayerKind, QaoaSimulator};

/// Linear annealing ramp `θ_i = (π/20)((4 - 5[i even])/(L-1)·i + 4)`.
pub fn annealing_init(layers: usize) -> Result<CircuitParams> {
    if layers < 2 {
        return Err(invalid("annealing ramp needs at least two layers"));
    }
    let theta = (0..2 * layers)
        .map(|i| {
            let slope = if i % 2 == 0 { -1.0 } else { 4.0 };
            PI / 20.0 * (slope / (layers - 1) as f64 * i as f64 + 4.0)
        })
        .collect();
    CircuitParams::new(theta)
}

/// Cosine between an estimated and the exact gradient; zero for a zero estimate.
pub fn relative_slope(estimate: &[f64], exact: &[f64]) -> Result<f64> {
    if estimate.len() != exact.len() {
        return Err(invalid("gradients differ in length"));
    }
    let ne = exact.iter().map(|x| x * x).sum::<f64>().sqrt();
    if ne == 0.0 {
        return Err(Error::ZeroGradient);
    }
    let nh = estimate.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nh == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = estimate.iter().zip(exact).map(|(a, b)| a * b).sum();
    Ok((dot / (nh * ne)).clamp(-1.0, 1.0))
}

pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Which prior family plans the Bayesian allocators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorChoice {
    /// `10^{slope·k + intercept}` on the layer's own spectrum.
    #[default]
    ExponentialFit,
    /// Two-design limit for deep circuits.
    BarrenPlateau,
}

/// Prior settings shared by the benchmark drivers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSettings {
    pub kind: PriorChoice,
    pub exp_fit: ExpFitParams,
    /// Monte-Carlo samples for the barren-plateau cost prior.
    pub mc_samples: u64,
}

impl Default for PriorSettings {
    fn default() -> Self {
        Self {
            kind: PriorChoice::ExponentialFit,
            exp_fit: ExpFitParams::default(),
            mc_samples: 200_000,
        }
    }
}

/// Shot variance assumed for the `-cut` observable: `M/4`.
pub fn cut_shot_variance(sim: &QaoaSimulator) -> f64 {
    (sim.graph().n_edges() as f64 / 4.0).max(f64::MIN_POSITIVE)
}

/// Priors for both layer kinds of one graph instance.
pub fn layer_priors(sim: &QaoaSimulator, settings: &PriorSettings, seed: u64) -> Result<LayerPriors> {
    let n = sim.n_qubits();
    let m = sim.graph().n_edges() as u32;
    match settings.kind {
        PriorChoice::ExponentialFit => {
            let s2 = cut_shot_variance(sim);
            Ok(LayerPriors {
                mixer: exponential_fit_prior(
                    &sim.layer_spectrum(LayerKind::Mixer)?,
                    LayerKind::Mixer,
                    settings.exp_fit,
                    s2,
                )?,
                cost: exponential_fit_prior(
                    &sim.layer_spectrum(LayerKind::Cost)?,
                    LayerKind::Cost,
                    settings.exp_fit,
                    s2,
                )?,
            })
        }
        PriorChoice::BarrenPlateau => Ok(LayerPriors {
            mixer: qaoa_mixer_prior_barren(n, m)?,
            cost: qaoa_cost_prior_barren(n, m, settings.mc_samples, seed)?,
        }),
    }
}

/// Independent seed for a labelled sub-task.
pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    // splitmix64 finaliser over the label sequence
    let mut z = seed;
    for &l in labels {
        z = z
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(l.wrapping_mul(0xD1B5_4A32_D192_ED03));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

pub fn rng_for(seed: u64, labels: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, labels))
}

/// Mean and standard error of a sample.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Writes serialisable records as CSV with a header row.
pub fn write_csv<T: Serialize>(out: impl Write, records: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annealing_examples() {
        let t = annealing_init(12).unwrap();
        assert!((t.theta()[0] - PI / 5.0).abs() < 1e-15);
        assert!((t.theta()[1] - PI / 20.0 * (4.0 / 11.0 + 4.0)).abs() < 1e-15);
        for l in 2..=64 {
            let t = annealing_init(l).unwrap();
            assert!(t.theta().iter().all(|x| x.is_finite() && x.abs() < PI));
        }
        assert!(annealing_init(1).is_err());
    }

    #[test]
    fn slope_examples() {
        let g = [1.0, -2.0, 0.5];
        assert!((relative_slope(&g, &g).unwrap() - 1.0).abs() < 1e-15);
        assert!((relative_slope(&[-1.0, 2.0, -0.5], &g).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(relative_slope(&[2.0, 1.0, 0.0], &g).unwrap(), 0.0);
        assert_eq!(relative_slope(&[0.0; 3], &g).unwrap(), 0.0);
        assert!(matches!(relative_slope(&g, &[0.0; 3]), Err(Error::ZeroGradient)));
    }

    #[test]
    fn seeds_differ_by_label() {
        assert_ne!(derive_seed(1, &[0]), derive_seed(1, &[1]));
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_eq!(derive_seed(5, &[3, 4]), derive_seed(5, &[3, 4]));
    }
}
