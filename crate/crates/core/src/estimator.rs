//! Executes measurement plans on the simulator and forms derivative estimates.
//!
//! Every position `x_i` is measured at `+x_i` and `-x_i` with `m_i` rounds
//! each. The antisymmetric part `y_i = (F(x_i) - F(-x_i))/2` enters the
//! estimate `δ̂ = Σ w_i y_i`. Optional postprocessing re-solves the weights with
//! the statistical error taken from the observed shot variances.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocators::{
    blge_allocate, psr_allocate, slge_allocate, ulge_allocate, EvalKind, GeneratorDecomposition, MeasurementPlan,
    Method,
};
use crate::error::{invalid, Error, Result};
use crate::priors::PriorModel;
use crate::qaoa::{CircuitParams, EvalRequest, LayerKind, QaoaSimulator};

/// How circuit outputs are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// Finite shots drawn from the exact output distribution.
    #[default]
    Shots,
    /// Exact expectation values; variances are reported as zero.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorOptions {
    pub sampling: Sampling,
    pub postprocess: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionRecord {
    pub x: f64,
    pub y: f64,
    /// Mean of the two single-shot variances at `±x`.
    pub sigma2: f64,
    pub rounds: u64,
    /// Set when too few rounds were taken for a sample variance and the
    /// prior shot variance was used instead.
    pub substituted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    pub delta_hat: f64,
    pub per_position: Vec<PositionRecord>,
    pub weights_used: Vec<f64>,
    pub postprocessed: bool,
    /// Total shots, counting both signs of every position.
    pub rounds_spent: u64,
}

impl EstimateReport {
    fn zero(method: Method) -> Self {
        Self {
            method,
            delta_hat: 0.0,
            per_position: Vec::new(),
            weights_used: Vec::new(),
            postprocessed: false,
            rounds_spent: 0,
        }
    }

    /// Variance of each `y_i` implied by the recorded shot variances.
    pub fn y_variances(&self) -> Vec<f64> {
        self.per_position
            .iter()
            .map(|p| p.sigma2 / (2.0 * p.rounds as f64))
            .collect()
    }
}

fn request(plan: &MeasurementPlan, i: usize, layer: usize, x: f64) -> EvalRequest {
    match plan.eval_kind() {
        EvalKind::LayerShift => EvalRequest::LayerShift { layer, x },
        EvalKind::GeneratorInsert => EvalRequest::GeneratorInsert {
            layer,
            generator: plan.generator_indices.as_ref().expect("generator plan")[i],
            x,
        },
    }
}

/// Mean and single-shot variance of the cost under one modification.
fn measure(
    sim: &QaoaSimulator,
    params: &CircuitParams,
    req: &EvalRequest,
    rounds: u64,
    sampling: Sampling,
    rng: &mut impl Rng,
) -> Result<(f64, f64)> {
    let state = sim.prepare_state(params, Some(req))?;
    match sampling {
        Sampling::Exact => Ok((sim.expectation(&state), 0.0)),
        Sampling::Shots => sim.sample_measurement(&state, rounds, rng),
    }
}

/// Estimates `∂F/∂θ_layer` by executing `plan`.
///
/// `prior` supplies the systematic term for postprocessing and the fallback
/// shot variance for single-round positions.
pub fn estimate_partial(
    sim: &QaoaSimulator,
    params: &CircuitParams,
    layer: usize,
    plan: &MeasurementPlan,
    prior: &PriorModel,
    options: EstimatorOptions,
    rng: &mut impl Rng,
) -> Result<EstimateReport> {
    if layer >= params.len() {
        return Err(invalid(format!("layer {layer} out of range")));
    }
    if plan.positions.len() != plan.weights.len() || plan.positions.len() != plan.rounds.len() {
        return Err(invalid("plan vectors differ in length"));
    }
    if plan.rounds.contains(&0) {
        return Err(invalid("every position needs at least one round"));
    }
    let mut per_position = Vec::with_capacity(plan.len());
    for (i, (&x, &rounds)) in plan.positions.iter().zip(&plan.rounds).enumerate() {
        let (yp, vp) = measure(sim, params, &request(plan, i, layer, x), rounds, options.sampling, rng)?;
        let (ym, vm) = measure(sim, params, &request(plan, i, layer, -x), rounds, options.sampling, rng)?;
        let substituted = options.sampling == Sampling::Shots && rounds < 2;
        let sigma2 = if substituted {
            prior.shot_variance()
        } else {
            (vp + vm) / 2.0
        };
        per_position.push(PositionRecord {
            x,
            y: (yp - ym) / 2.0,
            sigma2,
            rounds,
            substituted,
        });
    }
    let mut report = EstimateReport {
        method: plan.method,
        delta_hat: 0.0,
        per_position,
        weights_used: plan.weights.clone(),
        postprocessed: false,
        rounds_spent: plan.shots(),
    };
    let reweight = options.postprocess
        && options.sampling == Sampling::Shots
        && matches!(plan.method, Method::Blge | Method::Slge)
        && !plan.is_empty();
    if reweight {
        report.weights_used = postprocess_weights(prior, &plan.positions, &report.y_variances())?;
        report.postprocessed = true;
    }
    report.delta_hat = report
        .weights_used
        .iter()
        .zip(&report.per_position)
        .map(|(w, p)| w * p.y)
        .sum();
    Ok(report)
}

/// `Σ_k A_k((Sw)_k - μ_k)² + Σ_i w_i² v_i` for fixed positions.
pub fn posterior_objective(prior: &PriorModel, positions: &[f64], weights: &[f64], y_variances: &[f64]) -> f64 {
    let a = prior.second_moments();
    let sys: f64 = prior
        .spectrum()
        .iter()
        .enumerate()
        .map(|(k, mu)| {
            let r: f64 = positions.iter().zip(weights).map(|(x, w)| w * (mu * x).sin()).sum();
            a[k] * (r - mu).powi(2)
        })
        .sum();
    let stat: f64 = weights.iter().zip(y_variances).map(|(w, v)| w * w * v).sum();
    sys + stat
}

/// Minimiser of [`posterior_objective`] over the weights.
pub fn postprocess_weights(prior: &PriorModel, positions: &[f64], y_variances: &[f64]) -> Result<Vec<f64>> {
    let n = positions.len();
    if y_variances.len() != n {
        return Err(invalid("one variance per position required"));
    }
    let mu: Vec<f64> = prior.spectrum().iter().collect();
    let a = prior.second_moments();
    let s = DMatrix::from_fn(mu.len(), n, |k, i| (mu[k] * positions[i]).sin());
    let sa = DMatrix::from_fn(mu.len(), n, |k, i| a[k] * s[(k, i)]);
    let mut lhs = s.transpose() * &sa;
    for i in 0..n {
        lhs[(i, i)] += y_variances[i];
    }
    let rhs = sa.transpose() * DVector::from_vec(mu);
    let svd = lhs.svd(true, true);
    let eps = 1e-14 * svd.singular_values.max();
    let w = svd.solve(&rhs, eps).map_err(|e| invalid(e.to_string()))?;
    Ok(w.iter().copied().collect())
}

/// Priors used to plan the two kinds of layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPriors {
    pub mixer: PriorModel,
    pub cost: PriorModel,
}

impl LayerPriors {
    pub fn get(&self, kind: LayerKind) -> &PriorModel {
        match kind {
            LayerKind::Mixer => &self.mixer,
            LayerKind::Cost => &self.cost,
        }
    }
}

/// Per-parameter budgets with cost layers getting twice the mixer share.
///
/// Each mixer parameter gets `⌊m_g/(3L)⌋` shots and each cost parameter
/// twice that. The remainder goes one shot at a time to the cost parameters
/// in index order.
pub fn split_budget(layers: usize, m_g: u64) -> Vec<u64> {
    let unit = m_g / (3 * layers as u64);
    let mut out: Vec<u64> = (0..2 * layers)
        .map(|i| match LayerKind::of(i) {
            LayerKind::Mixer => unit,
            LayerKind::Cost => 2 * unit,
        })
        .collect();
    let mut rest = m_g - 3 * layers as u64 * unit;
    'outer: while rest > 0 {
        for i in (1..2 * layers).step_by(2) {
            if rest == 0 {
                break 'outer;
            }
            out[i] += 1;
            rest -= 1;
        }
    }
    out
}

/// Smallest per-parameter budget the method accepts for a layer kind.
pub fn component_minimum(sim: &QaoaSimulator, kind: LayerKind, method: Method) -> u64 {
    match method {
        Method::Psr => 2 * sim.generator_count(kind) as u64,
        Method::Ulge => 2 * sim.layer_nu(kind) as u64,
        Method::Blge | Method::Slge => 2,
    }
}

/// Smallest total budget that [`split_budget`] turns into feasible plans.
pub fn minimum_gradient_budget(sim: &QaoaSimulator, layers: usize, method: Method) -> u64 {
    let mixer = component_minimum(sim, LayerKind::Mixer, method);
    let cost = component_minimum(sim, LayerKind::Cost, method);
    3 * layers as u64 * mixer.max(cost.div_ceil(2))
}

/// Plan for one parameter of the given kind.
pub fn plan_component(
    sim: &QaoaSimulator,
    kind: LayerKind,
    method: Method,
    priors: &LayerPriors,
    m: u64,
) -> Result<MeasurementPlan> {
    match method {
        Method::Blge => blge_allocate(priors.get(kind), m),
        Method::Slge => slge_allocate(priors.get(kind), m),
        Method::Ulge => ulge_allocate(&sim.layer_spectrum(kind)?, m),
        Method::Psr => psr_allocate(&GeneratorDecomposition::uniform(sim.generator_count(kind))?, m),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub gradient: Vec<f64>,
    pub reports: Vec<EstimateReport>,
}

impl GradientEstimate {
    pub fn rounds_spent(&self) -> u64 {
        self.reports.iter().map(|r| r.rounds_spent).sum()
    }
}

/// Estimates the full gradient with total budget `m_g`.
///
/// Component `i` draws from stream `i` of a generator seeded with `seed`, so
/// the result does not depend on thread scheduling.
pub fn estimate_gradient(
    sim: &QaoaSimulator,
    params: &CircuitParams,
    m_g: u64,
    method: Method,
    priors: &LayerPriors,
    options: EstimatorOptions,
    seed: u64,
) -> Result<GradientEstimate> {
    let layers = params.layers();
    if layers == 0 {
        return Err(invalid("circuit has no layers"));
    }
    let needed = minimum_gradient_budget(sim, layers, method);
    if m_g < needed {
        return Err(Error::BudgetTooSmall { needed, got: m_g });
    }
    let budgets = split_budget(layers, m_g);
    let mut plans: HashMap<(LayerKind, u64), MeasurementPlan> = HashMap::new();
    for (i, &m) in budgets.iter().enumerate() {
        let kind = LayerKind::of(i);
        if let std::collections::hash_map::Entry::Vacant(e) = plans.entry((kind, m)) {
            e.insert(plan_component(sim, kind, method, priors, m)?);
        }
    }
    let reports = budgets
        .par_iter()
        .enumerate()
        .map(|(i, &m)| {
            let kind = LayerKind::of(i);
            let plan = &plans[&(kind, m)];
            if plan.is_empty() {
                return Ok(EstimateReport::zero(method));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            estimate_partial(sim, params, i, plan, priors.get(kind), options, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GradientEstimate {
        gradient: reports.iter().map(|r| r.delta_hat).collect(),
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qaoa::random_graph;
    use crate::trigcore::FrequencySpectrum;

    fn sim(n: u32, seed: u64) -> QaoaSimulator {
        QaoaSimulator::new(random_graph(n, seed).unwrap()).unwrap()
    }

    #[test]
    fn split_is_two_to_one() {
        assert_eq!(split_budget(2, 12), vec![2, 4, 2, 4]);
        let b = split_budget(2, 17);
        assert_eq!(b, vec![2, 7, 2, 6]);
        assert_eq!(b.iter().sum::<u64>(), 17);
        let b = split_budget(12, 1296);
        assert!(b.iter().step_by(2).all(|&m| m == 36));
        assert!(b.iter().skip(1).step_by(2).all(|&m| m == 72));
    }

    #[test]
    fn exact_ulge_reproduces_gradient() {
        let s = sim(6, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = CircuitParams::random(3, &mut rng);
        let exact = s.exact_gradient(&params).unwrap();
        let prior = PriorModel::new(FrequencySpectrum::full(2).unwrap(), vec![1.0, 1.0], 1.0).unwrap();
        let priors = LayerPriors {
            mixer: prior.clone(),
            cost: prior,
        };
        let opts = EstimatorOptions {
            sampling: Sampling::Exact,
            postprocess: false,
        };
        let m = minimum_gradient_budget(&s, 3, Method::Ulge);
        for method in [Method::Ulge, Method::Psr] {
            let m = m.max(minimum_gradient_budget(&s, 3, method));
            let est = estimate_gradient(&s, &params, m, method, &priors, opts, 1).unwrap();
            for (a, b) in est.gradient.iter().zip(&exact) {
                assert!((a - b).abs() < 1e-8, "{method}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn infeasible_budget_reports_minimum() {
        let s = sim(6, 1);
        let priors = LayerPriors {
            mixer: PriorModel::new(FrequencySpectrum::full(1).unwrap(), vec![1.0], 1.0).unwrap(),
            cost: PriorModel::new(FrequencySpectrum::full(1).unwrap(), vec![1.0], 1.0).unwrap(),
        };
        let params = CircuitParams::zeros(2);
        let needed = minimum_gradient_budget(&s, 2, Method::Psr);
        match estimate_gradient(&s, &params, needed - 1, Method::Psr, &priors, Default::default(), 0) {
            Err(Error::BudgetTooSmall { needed: n, .. }) => assert_eq!(n, needed),
            other => panic!("{other:?}"),
        }
        assert!(estimate_gradient(&s, &params, needed, Method::Psr, &priors, Default::default(), 0).is_ok());
    }

    #[test]
    fn postprocess_solves_its_objective() {
        let prior = PriorModel::new(FrequencySpectrum::full(3).unwrap(), vec![0.1, 0.01, 0.001], 1.0).unwrap();
        let xs = [0.4, 1.1, 2.0];
        let v = [0.01, 0.02, 0.005];
        let w = postprocess_weights(&prior, &xs, &v).unwrap();
        let f0 = posterior_objective(&prior, &xs, &w, &v);
        for i in 0..3 {
            for d in [-1e-4, 1e-4] {
                let mut w2 = w.clone();
                w2[i] += d;
                assert!(posterior_objective(&prior, &xs, &w2, &v) >= f0);
            }
        }
    }
}
