use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, mean_stderr, rng_for};
use crate::error::{invalid, Result};
use crate::priors::{qaoa_cost_prior_barren, qaoa_mixer_prior_barren, PriorModel};
use crate::qaoa::{random_graph, CircuitParams, LayerKind, QaoaSimulator};
use crate::trigcore::FourierModel;

/// Empirical Fourier moments at the bulk layer over random graphs and angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorStudyConfig {
    /// Vertices; every graph has `2n` edges.
    pub n: u32,
    pub layer_counts: Vec<usize>,
    pub samples: usize,
    /// Monte-Carlo samples for the barren-plateau cost prior.
    pub mc_samples: u64,
    pub seed: u64,
}

impl Default for PriorStudyConfig {
    fn default() -> Self {
        Self {
            n: 10,
            layer_counts: vec![1, 2, 4, 8, 16, 30],
            samples: 200,
            mc_samples: 200_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorStudyRow {
    pub kind: LayerKind,
    pub layers: usize,
    pub k: u32,
    pub a2_mean: f64,
    pub a2_stderr: f64,
    pub b2_mean: f64,
    pub b2_stderr: f64,
    /// Two-design limit of `⟨a_k²⟩`.
    pub barren_a2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsRow {
    pub kind: LayerKind,
    pub layers: usize,
    pub rms_derivative: f64,
    pub rms_stderr: f64,
    pub barren_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorStudy {
    pub moments: Vec<PriorStudyRow>,
    pub rms: Vec<RmsRow>,
}

fn barren_value(prior: &PriorModel, k: u32) -> f64 {
    prior.spectrum().position(k).map_or(0.0, |i| prior.second_moments()[i])
}

/// Coefficients padded onto the band `1..=width`.
fn padded(model: &FourierModel, width: u32) -> (Vec<f64>, Vec<f64>) {
    let mut a = vec![0.0; width as usize];
    let mut b = vec![0.0; width as usize];
    for (i, k) in model.spectrum.mu().iter().enumerate() {
        if *k <= width {
            a[*k as usize - 1] = model.a[i];
            b[*k as usize - 1] = model.b[i];
        }
    }
    (a, b)
}

pub fn run_prior_study(config: &PriorStudyConfig) -> Result<PriorStudy> {
    if config.samples < 2 || config.layer_counts.contains(&0) {
        return Err(invalid("need at least two samples and positive layer counts"));
    }
    let n = config.n;
    let m_edges = 2 * n;
    let barren = [
        (LayerKind::Mixer, qaoa_mixer_prior_barren(n, m_edges)?, n),
        (
            LayerKind::Cost,
            qaoa_cost_prior_barren(n, m_edges, config.mc_samples, derive_seed(config.seed, &[1]))?,
            m_edges,
        ),
    ];
    let mut study = PriorStudy {
        moments: Vec::new(),
        rms: Vec::new(),
    };
    for (li, &layers) in config.layer_counts.iter().enumerate() {
        let bulk = layers.div_ceil(2) - 1;
        let scans = (0..config.samples)
            .into_par_iter()
            .map(|s| {
                let graph = random_graph(n, derive_seed(config.seed, &[0, li as u64, s as u64]))?;
                let sim = QaoaSimulator::new(graph)?;
                let params = CircuitParams::random(layers, &mut rng_for(config.seed, &[2, li as u64, s as u64]));
                let mixer = sim.exact_fourier_scan(&params, 2 * bulk)?;
                let cost = if sim.maxcut() > 0 {
                    Some(sim.exact_fourier_scan(&params, 2 * bulk + 1)?)
                } else {
                    None
                };
                Ok((mixer, cost))
            })
            .collect::<Result<Vec<_>>>()?;
        for (kind, prior, width) in &barren {
            let models: Vec<Option<&FourierModel>> = scans
                .iter()
                .map(|(mx, c)| match kind {
                    LayerKind::Mixer => Some(mx),
                    LayerKind::Cost => c.as_ref(),
                })
                .collect();
            let coeffs: Vec<(Vec<f64>, Vec<f64>)> = models
                .iter()
                .map(|m| {
                    m.map_or_else(
                        || (vec![0.0; *width as usize], vec![0.0; *width as usize]),
                        |m| padded(m, *width),
                    )
                })
                .collect();
            for k in 1..=*width {
                let a2: Vec<f64> = coeffs.iter().map(|(a, _)| a[k as usize - 1].powi(2)).collect();
                let b2: Vec<f64> = coeffs.iter().map(|(_, b)| b[k as usize - 1].powi(2)).collect();
                let (a2_mean, a2_stderr) = mean_stderr(&a2);
                let (b2_mean, b2_stderr) = mean_stderr(&b2);
                study.moments.push(PriorStudyRow {
                    kind: *kind,
                    layers,
                    k,
                    a2_mean,
                    a2_stderr,
                    b2_mean,
                    b2_stderr,
                    barren_a2: barren_value(prior, k),
                });
            }
            let d2: Vec<f64> = models
                .iter()
                .map(|m| m.map_or(0.0, |m| m.derivative_at_zero().powi(2)))
                .collect();
            let (mean, se) = mean_stderr(&d2);
            let rms = mean.sqrt();
            study.rms.push(RmsRow {
                kind: *kind,
                layers,
                rms_derivative: rms,
                rms_stderr: if rms > 0.0 { se / (2.0 * rms) } else { 0.0 },
                barren_rms: prior.expected_sq_derivative().sqrt(),
            });
        }
    }
    Ok(study)
}
