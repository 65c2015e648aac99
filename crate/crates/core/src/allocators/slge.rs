//! Single-position estimator.
//!
//! With one position `x` and the optimal weight, the expected squared error is
//! `ε(x) = ⟨μ²⟩ - ⟨μ sin μx⟩² / (⟨sin² μx⟩ + s)` where `⟨f⟩ = Σ_k A_k f(μ_k)`.
//! Its stationary points are the roots of the cosine series
//! `h(x) = ⟨μ² cos μx⟩(⟨sin² μx⟩ + s) - ½⟨μ sin μx⟩⟨μ sin 2μx⟩` of degree `3ν`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{MeasurementPlan, Method};
use crate::error::{Error, Result};
use crate::priors::PriorModel;
use crate::trigcore::TrigPoly;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlgePoint {
    pub x: f64,
    pub weight: f64,
    /// Expected squared error at this position with the optimal weight.
    pub error: f64,
}

fn brackets(prior: &PriorModel) -> (Vec<f64>, &[f64]) {
    (prior.spectrum().iter().collect(), prior.second_moments())
}

/// `ε(x)`, with the numerator in Lagrange-identity form to avoid cancellation.
pub fn slge_objective(prior: &PriorModel, s: f64, x: f64) -> f64 {
    slge_at(prior, s, x).error
}

/// Optimal weight and error for a fixed position.
pub fn slge_at(prior: &PriorModel, s: f64, x: f64) -> SlgePoint {
    let (mu, a) = brackets(prior);
    let sines: Vec<f64> = mu.iter().map(|m| (m * x).sin()).collect();
    let mut u = 0.0;
    let mut v = 0.0;
    let mut mu2 = 0.0;
    for k in 0..mu.len() {
        u += a[k] * mu[k] * sines[k];
        v += a[k] * sines[k] * sines[k];
        mu2 += a[k] * mu[k] * mu[k];
    }
    let mut lagrange = 0.0;
    for k in 0..mu.len() {
        for l in 0..k {
            let d = mu[k] * sines[l] - mu[l] * sines[k];
            lagrange += a[k] * a[l] * d * d;
        }
    }
    let den = v + s;
    SlgePoint {
        x,
        weight: u / den,
        error: (lagrange + s * mu2) / den,
    }
}

/// The stationarity polynomial `h(x)` as a dense cosine series.
pub fn slge_stationarity_poly(prior: &PriorModel, s: f64) -> TrigPoly {
    let (mu, a) = brackets(prior);
    let nu = prior.spectrum().nu() as usize;
    let mut h = TrigPoly::zeros(3 * nu);
    let c0 = a.iter().sum::<f64>() / 2.0 + s;
    for k in 0..mu.len() {
        let mk = mu[k] as usize;
        let dk = a[k] * mu[k] * mu[k];
        h.cos[mk] += dk * c0;
        for l in 0..mu.len() {
            let ml = mu[l] as usize;
            let diff = mk.abs_diff(2 * ml);
            let sum = mk + 2 * ml;
            // ⟨μ² cos μx⟩ · (-½⟨cos 2μx⟩)
            h.cos[diff] -= dk * a[l] / 4.0;
            h.cos[sum] -= dk * a[l] / 4.0;
            // -½⟨μ sin μx⟩⟨μ sin 2μx⟩
            let p = a[k] * mu[k] * a[l] * mu[l] / 4.0;
            h.cos[diff] -= p;
            h.cos[sum] += p;
        }
    }
    h
}

/// Best single position over all stationary points in `(0, π)`.
pub fn slge_optimum(prior: &PriorModel, s: f64) -> Result<SlgePoint> {
    let h = slge_stationarity_poly(prior, s);
    let roots = match h.real_roots() {
        Ok(r) => r,
        Err(Error::DegeneratePolynomial) => Vec::new(),
        Err(e) => return Err(e),
    };
    let mut points: Vec<SlgePoint> = roots
        .into_iter()
        .filter(|&x| x > 0.0 && x < PI)
        .map(|x| slge_at(prior, s, x))
        .collect();
    if points.is_empty() {
        points.push(slge_at(prior, s, PI / 2.0));
    }
    let min = points.iter().map(|p| p.error).fold(f64::INFINITY, f64::min);
    // among equally good positions prefer the smallest
    Ok(*points
        .iter()
        .find(|p| p.error <= min + 1e-12 * min.abs())
        .expect("nonempty"))
}

/// Single-position plan using all `⌊m/2⌋` rounds.
pub fn slge_allocate(prior: &PriorModel, m: u64) -> Result<MeasurementPlan> {
    if m < 2 {
        return Err(Error::BudgetTooSmall { needed: 2, got: m });
    }
    let p = slge_optimum(prior, prior.shot_variance() / m as f64)?;
    Ok(MeasurementPlan {
        method: Method::Slge,
        positions: vec![p.x],
        weights: vec![p.weight],
        rounds: vec![m / 2],
        generator_indices: None,
    })
}
