use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, l2_distance, layer_priors, mean_stderr, relative_slope, rng_for, PriorSettings};
use crate::allocators::Method;
use crate::error::{invalid, Result};
use crate::estimator::{estimate_gradient, EstimatorOptions, LayerPriors};
use crate::qaoa::{random_graph, CircuitParams, QaoaSimulator};

/// Gradient-quality benchmark over random graphs and parameter draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradBenchConfig {
    /// Vertices; every graph has `2n` edges.
    pub n: u32,
    pub layers: usize,
    pub instances: usize,
    pub theta_draws: usize,
    pub budgets: Vec<u64>,
    pub methods: Vec<Method>,
    pub priors: PriorSettings,
    pub estimator: EstimatorOptions,
    pub seed: u64,
}

impl Default for GradBenchConfig {
    fn default() -> Self {
        Self {
            n: 10,
            layers: 6,
            instances: 5,
            theta_draws: 4,
            budgets: vec![360, 1080, 3600, 10_800, 36_000],
            methods: Method::ALL.to_vec(),
            priors: PriorSettings::default(),
            estimator: EstimatorOptions::default(),
            seed: 0,
        }
    }
}

impl GradBenchConfig {
    /// Full-size setting: 18 vertices, 12 layers, 30 graphs with 10 draws each.
    pub fn full_scale() -> Self {
        Self {
            n: 18,
            layers: 12,
            instances: 30,
            theta_draws: 10,
            budgets: vec![1296, 3888, 12_960, 38_880, 129_600, 388_800, 1_296_000],
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub instance: usize,
    pub instance_seed: u64,
    pub draw: usize,
    pub method: Method,
    pub m_g: u64,
    pub l2_error: f64,
    pub relative_slope: f64,
    pub rounds_spent: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub method: Method,
    pub m_g: u64,
    pub samples: usize,
    pub l2_error_mean: f64,
    pub l2_error_stderr: f64,
    pub relative_slope_mean: f64,
    pub relative_slope_stderr: f64,
}

struct Instance {
    seed: u64,
    sim: QaoaSimulator,
    priors: LayerPriors,
}

pub fn run_grad_bench(config: &GradBenchConfig) -> Result<Vec<BenchmarkRecord>> {
    if config.layers == 0 || config.instances == 0 || config.theta_draws == 0 {
        return Err(invalid("layers, instances and theta_draws must be positive"));
    }
    let instances = (0..config.instances)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(config.seed, &[0, i as u64]);
            let sim = QaoaSimulator::new(random_graph(config.n, seed)?)?;
            let priors = layer_priors(&sim, &config.priors, derive_seed(config.seed, &[1]))?;
            Ok(Instance { seed, sim, priors })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::new();
    for i in 0..config.instances {
        for d in 0..config.theta_draws {
            cells.push((i, d));
        }
    }
    let per_cell = cells
        .par_iter()
        .map(|&(i, d)| {
            let inst = &instances[i];
            let params = CircuitParams::random(config.layers, &mut rng_for(config.seed, &[2, i as u64, d as u64]));
            let exact = inst.sim.exact_gradient(&params)?;
            let mut out = Vec::new();
            for (mi, &method) in config.methods.iter().enumerate() {
                for (bi, &m_g) in config.budgets.iter().enumerate() {
                    let seed = derive_seed(config.seed, &[3, i as u64, d as u64, mi as u64, bi as u64]);
                    let est = estimate_gradient(&inst.sim, &params, m_g, method, &inst.priors, config.estimator, seed)?;
                    out.push(BenchmarkRecord {
                        instance: i,
                        instance_seed: inst.seed,
                        draw: d,
                        method,
                        m_g,
                        l2_error: l2_distance(&est.gradient, &exact),
                        relative_slope: relative_slope(&est.gradient, &exact)?,
                        rounds_spent: est.rounds_spent(),
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_cell.into_iter().flatten().collect())
}

/// Mean and standard error per `(method, m_g)`.
pub fn summarize_bench(records: &[BenchmarkRecord]) -> Vec<BenchSummary> {
    type Group = (Method, Vec<f64>, Vec<f64>);
    let mut groups: BTreeMap<(String, u64), Group> = BTreeMap::new();
    for r in records {
        let e = groups
            .entry((r.method.to_string(), r.m_g))
            .or_insert_with(|| (r.method, Vec::new(), Vec::new()));
        e.1.push(r.l2_error);
        e.2.push(r.relative_slope);
    }
    groups
        .into_iter()
        .map(|((_, m_g), (method, l2, rs))| {
            let (l2m, l2s) = mean_stderr(&l2);
            let (rm, rse) = mean_stderr(&rs);
            BenchSummary {
                method,
                m_g,
                samples: l2.len(),
                l2_error_mean: l2m,
                l2_error_stderr: l2s,
                relative_slope_mean: rm,
                relative_slope_stderr: rse,
            }
        })
        .collect()
}
