use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{annealing_init, derive_seed, layer_priors, rng_for, PriorSettings};
use crate::allocators::Method;
use crate::error::{invalid, Result};
use crate::estimator::{estimate_gradient, EstimatorOptions, LayerPriors, Sampling};
use crate::qaoa::{random_graph, CircuitParams, QaoaSimulator};

const MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationStep {
    pub iteration: usize,
    pub theta: Vec<f64>,
    pub ratio: f64,
    /// Accepted step size; zero when the line search gave up.
    pub eta: f64,
    /// Cumulative shots, including line-search evaluations.
    pub rounds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub method: Method,
    pub steps: Vec<OptimizationStep>,
}

impl OptimizationTrace {
    pub fn final_ratio(&self) -> f64 {
        self.steps.last().map_or(f64::NAN, |s| s.ratio)
    }
}

fn measured_cost(
    sim: &QaoaSimulator,
    params: &CircuitParams,
    shots: u64,
    sampling: Sampling,
    rng: &mut impl Rng,
) -> Result<f64> {
    let state = sim.prepare_state(params, None)?;
    match sampling {
        Sampling::Exact => Ok(sim.expectation(&state)),
        Sampling::Shots => Ok(sim.sample_measurement(&state, shots, rng)?.0),
    }
}

/// Gradient descent from the annealing ramp with a backtracking line search.
///
/// Every iteration estimates the gradient with `m_g` shots, measures the
/// cost at the current point with another `m_g`, then tries steps `η₀, η₀/2,
/// …` (each measured with `m_g` shots) until the measured cost drops below the
/// current one. After the last halving the step is zero.
#[allow(clippy::too_many_arguments)]
pub fn optimize(
    sim: &QaoaSimulator,
    layers: usize,
    method: Method,
    priors: &LayerPriors,
    m_g: u64,
    iterations: usize,
    eta0: f64,
    options: EstimatorOptions,
    seed: u64,
) -> Result<OptimizationTrace> {
    if !(eta0 > 0.0 && eta0.is_finite()) {
        return Err(invalid("initial step size must be positive"));
    }
    let mut theta = annealing_init(layers)?;
    let mut rounds = 0u64;
    let mut steps = vec![OptimizationStep {
        iteration: 0,
        theta: theta.theta().to_vec(),
        ratio: sim.approximation_ratio(&theta)?,
        eta: 0.0,
        rounds,
    }];
    for it in 1..=iterations {
        let grad = estimate_gradient(
            sim,
            &theta,
            m_g,
            method,
            priors,
            options,
            derive_seed(seed, &[it as u64, 0]),
        )?;
        rounds += grad.rounds_spent();
        let mut rng = rng_for(seed, &[it as u64, 1]);
        let current = measured_cost(sim, &theta, m_g, options.sampling, &mut rng)?;
        rounds += m_g;
        let mut eta = eta0;
        let mut accepted = 0.0;
        if grad.gradient.iter().any(|g| *g != 0.0) {
            for _ in 0..=MAX_HALVINGS {
                let mut trial = theta.clone();
                for (t, g) in trial.theta_mut().iter_mut().zip(&grad.gradient) {
                    *t -= eta * g;
                }
                let f = measured_cost(sim, &trial, m_g, options.sampling, &mut rng)?;
                rounds += m_g;
                if f < current {
                    theta = trial;
                    accepted = eta;
                    break;
                }
                eta /= 2.0;
            }
        }
        steps.push(OptimizationStep {
            iteration: it,
            theta: theta.theta().to_vec(),
            ratio: sim.approximation_ratio(&theta)?,
            eta: accepted,
            rounds,
        });
    }
    Ok(OptimizationTrace { method, steps })
}

/// Optimisation runs over random graph instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    pub n: u32,
    pub layers: usize,
    pub instances: usize,
    pub iterations: usize,
    pub m_g: u64,
    pub eta0: f64,
    pub methods: Vec<Method>,
    pub priors: PriorSettings,
    pub estimator: EstimatorOptions,
    pub seed: u64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            n: 10,
            layers: 8,
            instances: 8,
            iterations: 40,
            m_g: 1440,
            eta0: 1.0,
            methods: Method::ALL.to_vec(),
            priors: PriorSettings::default(),
            estimator: EstimatorOptions::default(),
            seed: 0,
        }
    }
}

impl OptimizeConfig {
    /// Shallow full-size setting: 18 vertices, 12 layers, three rounds per
    /// parameter-shift term.
    pub fn full_scale_shallow() -> Self {
        Self {
            n: 18,
            layers: 12,
            instances: 23,
            m_g: 3888,
            ..Default::default()
        }
    }

    /// Deep full-size setting with barren-plateau priors.
    pub fn full_scale_deep() -> Self {
        Self {
            n: 12,
            layers: 30,
            instances: 23,
            m_g: 6480,
            priors: PriorSettings {
                kind: super::PriorChoice::BarrenPlateau,
                ..Default::default()
            },
            ..Default::default()
        }
    }
}

/// Flat CSV row of a trace step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub instance: usize,
    pub method: Method,
    pub iteration: usize,
    pub ratio: f64,
    pub eta: f64,
    pub rounds: u64,
}

/// Runs every `(instance, method)` pair; traces are ordered by instance, then method.
pub fn run_optimize(config: &OptimizeConfig) -> Result<Vec<(usize, OptimizationTrace)>> {
    let priors_seed = derive_seed(config.seed, &[1]);
    let sims = (0..config.instances)
        .into_par_iter()
        .map(|i| {
            let sim = QaoaSimulator::new(random_graph(config.n, derive_seed(config.seed, &[0, i as u64]))?)?;
            let priors = layer_priors(&sim, &config.priors, priors_seed)?;
            Ok((sim, priors))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::new();
    for i in 0..config.instances {
        for (mi, &method) in config.methods.iter().enumerate() {
            cells.push((i, mi, method));
        }
    }
    cells
        .par_iter()
        .map(|&(i, mi, method)| {
            let (sim, priors) = &sims[i];
            let seed = derive_seed(config.seed, &[4, i as u64, mi as u64]);
            let trace = optimize(
                sim,
                config.layers,
                method,
                priors,
                config.m_g,
                config.iterations,
                config.eta0,
                config.estimator,
                seed,
            )?;
            Ok((i, trace))
        })
        .collect()
}

impl TraceRow {
    pub fn from_traces(traces: &[(usize, OptimizationTrace)]) -> Vec<TraceRow> {
        traces
            .iter()
            .flat_map(|(i, t)| {
                t.steps.iter().map(move |s| TraceRow {
                    instance: *i,
                    method: t.method,
                    iteration: s.iteration,
                    ratio: s.ratio,
                    eta: s.eta,
                    rounds: s.rounds,
                })
            })
            .collect()
    }
}

/// Mean approximation ratio per iteration for one method.
pub fn mean_ratio_curve(traces: &[(usize, OptimizationTrace)], method: Method) -> Vec<f64> {
    let sel: Vec<&OptimizationTrace> = traces.iter().map(|(_, t)| t).filter(|t| t.method == method).collect();
    if sel.is_empty() {
        return Vec::new();
    }
    let len = sel.iter().map(|t| t.steps.len()).min().unwrap_or(0);
    (0..len)
        .map(|k| sel.iter().map(|t| t.steps[k].ratio).sum::<f64>() / sel.len() as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_descent_is_monotone() {
        let sim = QaoaSimulator::new(random_graph(6, 4).unwrap()).unwrap();
        let priors = layer_priors(&sim, &PriorSettings::default(), 0).unwrap();
        let opts = EstimatorOptions {
            sampling: Sampling::Exact,
            postprocess: false,
        };
        let t = optimize(&sim, 3, Method::Psr, &priors, 10_000, 15, 1.0, opts, 7).unwrap();
        for w in t.steps.windows(2) {
            assert!(w[1].ratio >= w[0].ratio - 1e-12);
            assert!(w[1].rounds >= w[0].rounds);
        }
        assert!(t.steps.iter().all(|s| (0.0..=1.0).contains(&s.ratio)));
        assert!(t.final_ratio() > t.steps[0].ratio);
    }
}
