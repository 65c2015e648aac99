//! Bayesian allocation: minimise the prior-averaged squared error
//! `Σ_k A_k((Sw)_k - μ_k)² + s‖w‖₁²` with `s = σ²/m` over positions and weights.
//!
//! The positions live on the continuum `(0, π)`, so the problem is solved by
//! an exchange method on its dual: the restricted primal over a finite
//! position set is solved exactly, the dual point `κ = A∘(Sw - μ)` is
//! formed, and every local maximum of `|Σ κ_k sin(μ_k x)|` exceeding the
//! level `s‖w‖₁` is added to the set. The dual value uses the exact sup norm,
//! so the reported duality gap certifies the solution.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::nnqp::solve_nonneg_qp;
use super::rounding::allocate_rounds;
use super::{MeasurementPlan, Method};
use crate::error::{invalid, Error, Result};
use crate::priors::PriorModel;
use crate::trigcore::{abs_local_maxima, SineSeries};

const TARGET_GAP: f64 = 1e-9;
const MAX_GAP: f64 = 1e-4;
const MAX_EXCHANGE_ITERS: usize = 200;
const MAX_REFINE_ITERS: usize = 20;
/// Relative window below the sup norm in which maxima count as candidates.
const NEAR_GLOBAL: f64 = 1e-3;
const MERGE_RADIUS: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlgeSolution {
    /// Plan after integer rounding.
    pub plan: MeasurementPlan,
    /// Continuous optimum before rounding.
    pub positions: Vec<f64>,
    pub weights: Vec<f64>,
    pub kappa: Vec<f64>,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub iterations: usize,
}

struct Problem {
    mu: Vec<f64>,
    a: Vec<f64>,
    s: f64,
}

struct Iterate {
    positions: Vec<f64>,
    weights: Vec<f64>,
    kappa: Vec<f64>,
    primal: f64,
    dual: f64,
    gap: f64,
    /// Local maxima `(x, |ρ_κ(x)|)` of the current dual function.
    maxima: Vec<(f64, f64)>,
    sup: f64,
}

impl Problem {
    fn new(prior: &PriorModel, m: u64) -> Result<Self> {
        let a = prior.second_moments().to_vec();
        if a.iter().any(|x| !x.is_finite()) || !prior.shot_variance().is_finite() {
            return Err(invalid("prior entries must be finite"));
        }
        Ok(Self {
            mu: prior.spectrum().iter().collect(),
            a,
            s: prior.shot_variance() / m as f64,
        })
    }

    fn response(&self, xs: &[f64], w: &[f64]) -> Vec<f64> {
        self.mu
            .iter()
            .map(|mu| xs.iter().zip(w).map(|(x, wi)| wi * (mu * x).sin()).sum())
            .collect()
    }

    fn primal(&self, xs: &[f64], w: &[f64]) -> f64 {
        let r = self.response(xs, w);
        let sys: f64 = (0..self.mu.len())
            .map(|k| self.a[k] * (r[k] - self.mu[k]).powi(2))
            .sum();
        let l1: f64 = w.iter().map(|x| x.abs()).sum();
        sys + self.s * l1 * l1
    }

    /// Exact minimiser of the primal with positions fixed.
    fn weights_at(&self, xs: &[f64]) -> Vec<f64> {
        let n = xs.len();
        if n == 0 {
            return Vec::new();
        }
        let kk = self.mu.len();
        let sm = DMatrix::from_fn(kk, n, |k, i| (self.mu[k] * xs[i]).sin());
        let a = DVector::from_vec(self.a.clone());
        let mu = DVector::from_vec(self.mu.clone());
        // normal equations of the split problem, u = [w⁺; w⁻]
        let sas = sm.transpose() * DMatrix::from_diagonal(&a) * &sm;
        let sam = sm.transpose() * a.component_mul(&mu);
        let mut q = DMatrix::zeros(2 * n, 2 * n);
        let mut c = DVector::zeros(2 * n);
        for i in 0..n {
            c[i] = 2.0 * sam[i];
            c[n + i] = -2.0 * sam[i];
            for j in 0..n {
                let v = 2.0 * sas[(i, j)];
                q[(i, j)] = v + 2.0 * self.s;
                q[(n + i, n + j)] = v + 2.0 * self.s;
                q[(i, n + j)] = -v + 2.0 * self.s;
                q[(n + i, j)] = -v + 2.0 * self.s;
            }
        }
        let u = solve_nonneg_qp(&q, &c);
        (0..n).map(|i| u[i] - u[n + i]).collect()
    }

    fn evaluate(&self, positions: Vec<f64>, spectrum: &crate::trigcore::FrequencySpectrum) -> Result<Iterate> {
        let weights = self.weights_at(&positions);
        let r = self.response(&positions, &weights);
        let kappa: Vec<f64> = (0..self.mu.len())
            .map(|k| {
                if self.a[k] > 0.0 {
                    self.a[k] * (r[k] - self.mu[k])
                } else {
                    0.0
                }
            })
            .collect();
        let primal = self.primal(&positions, &weights);
        let series = SineSeries::new(spectrum.clone(), kappa.clone())?;
        let maxima = if kappa.iter().all(|&k| k == 0.0) {
            Vec::new()
        } else {
            abs_local_maxima(&series)?
        };
        let sup = maxima.iter().map(|&(_, v)| v).fold(0.0, f64::max);
        let quad: f64 = (0..self.mu.len())
            .filter(|&k| self.a[k] > 0.0)
            .map(|k| kappa[k] * kappa[k] / self.a[k])
            .sum();
        let lin: f64 = (0..self.mu.len()).map(|k| kappa[k] * self.mu[k]).sum();
        let dual = -quad - sup * sup / self.s - 2.0 * lin;
        let gap = if primal > 0.0 { (primal - dual) / primal } else { 0.0 };
        Ok(Iterate {
            positions,
            weights,
            kappa,
            primal,
            dual,
            gap,
            maxima,
            sup,
        })
    }
}

fn merge_sorted(mut xs: Vec<f64>) -> Vec<f64> {
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    xs
}

/// Solves the Bayesian allocation problem and rounds it to a plan.
pub fn blge_solve(prior: &PriorModel, m: u64) -> Result<BlgeSolution> {
    if m < 2 {
        return Err(Error::BudgetTooSmall { needed: 2, got: m });
    }
    let problem = Problem::new(prior, m)?;
    let spectrum = prior.spectrum();

    // w = 0 gives κ = -A∘μ; its maxima seed the position set
    let seed_coeffs: Vec<f64> = problem.mu.iter().zip(&problem.a).map(|(m, a)| -m * a).collect();
    let seed = abs_local_maxima(&SineSeries::new(spectrum.clone(), seed_coeffs)?)?;
    let mut positions: Vec<f64> = seed.iter().map(|&(x, _)| x).collect();

    let mut best: Option<Iterate> = None;
    let mut iterations = 0;
    for _ in 0..MAX_EXCHANGE_ITERS {
        iterations += 1;
        let it = problem.evaluate(positions, spectrum)?;
        let l1: f64 = it.weights.iter().map(|w| w.abs()).sum();
        let level = problem.s * l1;
        let violators: Vec<f64> = it
            .maxima
            .iter()
            .filter(|&&(_, v)| v > level * (1.0 + 1e-12))
            .map(|&(x, _)| x)
            .collect();
        let support: Vec<f64> = it
            .positions
            .iter()
            .zip(&it.weights)
            .filter(|(_, w)| **w != 0.0)
            .map(|(x, _)| *x)
            .collect();
        let done = it.gap < TARGET_GAP || violators.is_empty();
        if best.as_ref().is_none_or(|b| it.gap < b.gap) {
            best = Some(it);
        }
        if done {
            break;
        }
        // a violator next to a support point supersedes it
        let kept = support
            .into_iter()
            .filter(|x| violators.iter().all(|v| (v - x).abs() > MERGE_RADIUS));
        positions = merge_sorted(kept.chain(violators.iter().copied()).collect());
    }
    let mut best = best.expect("at least one iteration");

    // snap positions onto the maxima of the dual function
    for _ in 0..MAX_REFINE_ITERS {
        let cand: Vec<f64> = best
            .maxima
            .iter()
            .filter(|&&(_, v)| v >= (1.0 - NEAR_GLOBAL) * best.sup)
            .map(|&(x, _)| x)
            .collect();
        iterations += 1;
        let it = problem.evaluate(merge_sorted(cand), spectrum)?;
        if it.gap < best.gap {
            best = it;
        } else {
            break;
        }
        if best.gap < TARGET_GAP {
            break;
        }
    }
    if best.gap.is_nan() || best.gap >= MAX_GAP {
        return Err(Error::NotConverged { gap: best.gap });
    }

    let (positions, weights): (Vec<f64>, Vec<f64>) = best
        .positions
        .iter()
        .zip(&best.weights)
        .filter(|(_, w)| **w != 0.0)
        .map(|(x, w)| (*x, *w))
        .unzip();
    let rounds = allocate_rounds(&weights, m, false)?;
    let keep: Vec<usize> = (0..rounds.len()).filter(|&i| rounds[i] > 0).collect();
    let plan = MeasurementPlan {
        method: Method::Blge,
        positions: keep.iter().map(|&i| positions[i]).collect(),
        weights: keep.iter().map(|&i| weights[i]).collect(),
        rounds: keep.iter().map(|&i| rounds[i]).collect(),
        generator_indices: None,
    };
    Ok(BlgeSolution {
        plan,
        positions,
        weights,
        kappa: best.kappa,
        primal: best.primal,
        dual: best.dual,
        gap: best.gap,
        iterations,
    })
}

pub fn blge_allocate(prior: &PriorModel, m: u64) -> Result<MeasurementPlan> {
    blge_solve(prior, m).map(|s| s.plan)
}
