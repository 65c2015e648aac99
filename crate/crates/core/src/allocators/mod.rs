//! Measurement allocation for symmetric derivative estimators.
//!
//! An estimator measures `F` at `±x_i`, forms `y_i = (F(x_i) - F(-x_i))/2`
//! and returns `δ̂ = Σ w_i y_i`. Given a prior and a total budget of `m`
//! shots, the allocators choose the positions, weights and per-position
//! rounds; [`error_budget`] evaluates the resulting expected squared error.

mod blge;
mod nnqp;
mod rounding;
mod slge;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::priors::PriorModel;
use crate::trigcore::FrequencySpectrum;

pub use blge::{blge_allocate, blge_solve, BlgeSolution};
pub use nnqp::solve_nonneg_qp;
pub use rounding::allocate_rounds;
pub use slge::{slge_allocate, slge_at, slge_objective, slge_optimum, slge_stationarity_poly, SlgePoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "BLGE")]
    Blge,
    #[serde(rename = "ULGE")]
    Ulge,
    #[serde(rename = "SLGE")]
    Slge,
    #[serde(rename = "PSR")]
    Psr,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Blge, Method::Ulge, Method::Slge, Method::Psr];

    pub fn name(self) -> &'static str {
        match self {
            Method::Blge => "BLGE",
            Method::Ulge => "ULGE",
            Method::Slge => "SLGE",
            Method::Psr => "PSR",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "BLGE" => Ok(Method::Blge),
            "ULGE" => Ok(Method::Ulge),
            "SLGE" => Ok(Method::Slge),
            "PSR" => Ok(Method::Psr),
            _ => Err(invalid(format!("unknown method {s:?}"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How a plan's signed evaluations are realised on the circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalKind {
    /// Shift the layer parameter by `±x_i`.
    LayerShift,
    /// Insert `e^{±ix_i ζ_i H_i}` for generator `i` of the layer.
    GeneratorInsert,
}

/// Output of an allocator.
///
/// `rounds[i]` shots are spent at `+x_i` and again at `-x_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPlan {
    pub method: Method,
    pub positions: Vec<f64>,
    pub weights: Vec<f64>,
    pub rounds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_indices: Option<Vec<usize>>,
}

impl MeasurementPlan {
    pub fn eval_kind(&self) -> EvalKind {
        if self.generator_indices.is_some() {
            EvalKind::GeneratorInsert
        } else {
            EvalKind::LayerShift
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Shots consumed, `Σ 2 m_i`.
    pub fn shots(&self) -> u64 {
        self.rounds.iter().map(|r| 2 * r).sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    /// Checks the structural invariants against a budget.
    pub fn validate(&self, budget: u64) -> Result<()> {
        let n = self.positions.len();
        if self.weights.len() != n || self.rounds.len() != n {
            return Err(invalid("positions, weights and rounds must have equal length"));
        }
        if let Some(g) = &self.generator_indices {
            if g.len() != n {
                return Err(invalid("one generator index per position required"));
            }
        } else {
            if self.positions.iter().any(|&x| !(x > 0.0 && x < PI)) {
                return Err(invalid("positions must lie in (0, π)"));
            }
            if self.positions.windows(2).any(|p| p[0] >= p[1]) {
                return Err(invalid("positions must be strictly increasing"));
            }
        }
        if self.shots() > budget {
            return Err(invalid(format!("plan uses {} shots, budget is {budget}", self.shots())));
        }
        Ok(())
    }

    /// `(Sw)_k = Σ_i w_i sin(μ_k x_i)` for each frequency.
    pub fn response(&self, spectrum: &FrequencySpectrum) -> Vec<f64> {
        spectrum
            .iter()
            .map(|mu| {
                self.positions
                    .iter()
                    .zip(&self.weights)
                    .map(|(x, w)| w * (mu * x).sin())
                    .sum()
            })
            .collect()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Expected squared error split into per-frequency bias and shot noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub sys_per_frequency: Vec<f64>,
    pub stat: f64,
    pub total: f64,
    /// Relative correlation between estimate and true derivative.
    pub omega: f64,
}

impl ErrorBudget {
    pub fn sys(&self) -> f64 {
        self.sys_per_frequency.iter().sum()
    }

    /// Share of the total that is shot noise; 0 for a zero total.
    pub fn stat_fraction(&self) -> f64 {
        if self.total > 0.0 {
            self.stat / self.total
        } else {
            0.0
        }
    }
}

/// Which statistical error model [`error_budget`] applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatModel {
    /// Rounds exactly proportional to `|w_i|`: `(σ²/m)‖w‖₁²`.
    Ideal,
    /// The plan's integer rounds: `Σ w_i² σ² / (2 m_i)`.
    Actual,
}

/// Evaluates a plan against a prior.
pub fn error_budget(plan: &MeasurementPlan, prior: &PriorModel, m: u64, model: StatModel) -> Result<ErrorBudget> {
    let sigma2 = prior.shot_variance();
    let stat = match model {
        StatModel::Ideal => {
            if m == 0 {
                return Err(invalid("budget must be positive"));
            }
            sigma2 / m as f64 * plan.l1_norm().powi(2)
        }
        StatModel::Actual => {
            let mut acc = 0.0;
            for (w, &r) in plan.weights.iter().zip(&plan.rounds) {
                if r == 0 {
                    if *w != 0.0 {
                        return Err(invalid("zero-round position with nonzero weight"));
                    }
                    continue;
                }
                acc += w * w * sigma2 / (2.0 * r as f64);
            }
            acc
        }
    };
    let spectrum = prior.spectrum();
    let a2 = prior.second_moments();
    let mu: Vec<f64> = spectrum.iter().collect();
    // generator-inserted plans are unbiased by construction
    let response = match plan.eval_kind() {
        EvalKind::GeneratorInsert => mu.clone(),
        EvalKind::LayerShift => plan.response(spectrum),
    };
    let sys_per_frequency: Vec<f64> = (0..mu.len()).map(|k| a2[k] * (response[k] - mu[k]).powi(2)).collect();
    let total = sys_per_frequency.iter().sum::<f64>() + stat;

    let dd: f64 = (0..mu.len()).map(|k| a2[k] * mu[k] * mu[k]).sum();
    let ed: f64 = (0..mu.len()).map(|k| a2[k] * mu[k] * response[k]).sum();
    let ee: f64 = (0..mu.len()).map(|k| a2[k] * response[k] * response[k]).sum::<f64>() + stat;
    let omega = if dd > 0.0 && ee > 0.0 {
        (ed * ed / (dd * ee)).clamp(0.0, 1.0).sqrt()
    } else {
        0.0
    };
    Ok(ErrorBudget {
        sys_per_frequency,
        stat,
        total,
        omega,
    })
}

/// Closed-form unbiased plan on the full band `1..=ν`.
pub fn ulge_positions_weights(nu: u32) -> (Vec<f64>, Vec<f64>) {
    let n = nu as f64;
    (0..nu)
        .map(|i| {
            let t = i as f64 + 0.5;
            let x = PI / n * t;
            let s = (PI / (2.0 * n) * t).sin();
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            (x, sign / (2.0 * n * s * s))
        })
        .unzip()
}

pub fn ulge_allocate(spectrum: &FrequencySpectrum, m: u64) -> Result<MeasurementPlan> {
    let nu = spectrum.nu();
    let needed = 2 * nu as u64;
    if m < needed {
        return Err(Error::BudgetTooSmall { needed, got: m });
    }
    let (positions, weights) = ulge_positions_weights(nu);
    let rounds = allocate_rounds(&weights, m, true)?;
    Ok(MeasurementPlan {
        method: Method::Ulge,
        positions,
        weights,
        rounds,
        generator_indices: None,
    })
}

/// Decomposition of a layer generator into commuting two-level terms `ζ_i H_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorDecomposition {
    coefficients: Vec<f64>,
}

impl GeneratorDecomposition {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(invalid("need at least one generator"));
        }
        if coefficients.iter().any(|z| *z == 0.0 || !z.is_finite()) {
            return Err(invalid("generator coefficients must be finite and nonzero"));
        }
        Ok(Self { coefficients })
    }

    /// `count` generators with unit coefficient.
    pub fn uniform(count: usize) -> Result<Self> {
        Self::new(vec![1.0; count])
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }
}

/// Parameter-shift plan over generator-inserted evaluations.
pub fn psr_allocate(decomp: &GeneratorDecomposition, m: u64) -> Result<MeasurementPlan> {
    let n = decomp.len() as u64;
    if m < 2 * n {
        return Err(Error::BudgetTooSmall { needed: 2 * n, got: m });
    }
    let zeta = decomp.coefficients();
    let positions = zeta.iter().map(|z| PI / (2.0 * z.abs())).collect();
    let weights: Vec<f64> = zeta.iter().map(|z| z.abs()).collect();
    let rounds = allocate_rounds(&weights, m, true)?;
    Ok(MeasurementPlan {
        method: Method::Psr,
        positions,
        weights,
        rounds,
        generator_indices: Some((0..zeta.len()).collect()),
    })
}

/// `ν_eff = sqrt(Σ μ⁴⟨a²⟩ / Σ μ²⟨a²⟩)`.
pub fn effective_spectral_width(prior: &PriorModel) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (mu, a) in prior.spectrum().iter().zip(prior.second_moments()) {
        let m2 = mu * mu * a;
        den += m2;
        num += mu * mu * m2;
    }
    if den <= 0.0 {
        return Err(invalid("prior has no weight"));
    }
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn prior(mu: &[u32], a2: &[f64], sigma2: f64) -> PriorModel {
        PriorModel::new(FrequencySpectrum::new(mu.to_vec()).unwrap(), a2.to_vec(), sigma2).unwrap()
    }

    #[test]
    fn ulge_examples() {
        let (x, w) = ulge_positions_weights(1);
        assert_abs_diff_eq!(x[0], PI / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-15);
        let (x, w) = ulge_positions_weights(2);
        assert_abs_diff_eq!(x[0], PI / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], 3.0 * PI / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[0], 1.7071067811865475, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], -0.2928932188134524, epsilon = 1e-12);
        let (_, w8) = ulge_positions_weights(8);
        assert_abs_diff_eq!(w8.iter().map(|w| w.abs()).sum::<f64>(), 8.0, epsilon = 1e-9);
    }

    #[test]
    fn ulge_budget_check() {
        let s = FrequencySpectrum::full(4).unwrap();
        assert!(matches!(
            ulge_allocate(&s, 7),
            Err(Error::BudgetTooSmall { needed: 8, got: 7 })
        ));
        let p = ulge_allocate(&s, 8).unwrap();
        assert_eq!(p.rounds, vec![1; 4]);
        p.validate(8).unwrap();
    }

    #[test]
    fn ulge_error_is_pure_shot_noise() {
        let p = prior(&[1, 2, 3], &[0.3, 0.2, 0.1], 2.0);
        let plan = ulge_allocate(p.spectrum(), 1000).unwrap();
        let e = error_budget(&plan, &p, 1000, StatModel::Ideal).unwrap();
        assert!(e.sys_per_frequency.iter().all(|s| s.abs() < 1e-20));
        assert_abs_diff_eq!(e.total, 2.0 * 9.0 / 1000.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_weight_plan() {
        let p = prior(&[1, 2], &[0.5, 0.25], 1.0);
        let plan = MeasurementPlan {
            method: Method::Blge,
            positions: vec![1.0],
            weights: vec![0.0],
            rounds: vec![0],
            generator_indices: None,
        };
        for model in [StatModel::Ideal, StatModel::Actual] {
            let e = error_budget(&plan, &p, 10, model).unwrap();
            assert_eq!(e.stat, 0.0);
            assert_abs_diff_eq!(e.total, 0.5 + 4.0 * 0.25, epsilon = 1e-15);
            assert_eq!(e.omega, 0.0);
        }
    }

    #[test]
    fn zero_round_nonzero_weight_is_rejected() {
        let p = prior(&[1], &[1.0], 1.0);
        let plan = MeasurementPlan {
            method: Method::Blge,
            positions: vec![1.0],
            weights: vec![0.5],
            rounds: vec![0],
            generator_indices: None,
        };
        assert!(error_budget(&plan, &p, 10, StatModel::Actual).is_err());
    }

    #[test]
    fn single_frequency_omega() {
        let p = prior(&[1], &[1.0], 1.0);
        let plan = MeasurementPlan {
            method: Method::Slge,
            positions: vec![PI / 2.0],
            weights: vec![0.5],
            rounds: vec![0],
            generator_indices: None,
        };
        let e = error_budget(&plan, &p, 1, StatModel::Ideal).unwrap();
        assert_abs_diff_eq!(e.omega * e.omega, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(e.total, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn psr_examples() {
        let d = GeneratorDecomposition::uniform(5).unwrap();
        let p = psr_allocate(&d, 100).unwrap();
        assert!(p.rounds.iter().all(|&r| r == 10));
        let p = psr_allocate(&d, 103).unwrap();
        assert!(p.rounds.iter().all(|&r| r >= 10));
        p.validate(103).unwrap();
        assert_eq!(p.eval_kind(), EvalKind::GeneratorInsert);

        let single = psr_allocate(&GeneratorDecomposition::new(vec![3.0]).unwrap(), 10).unwrap();
        assert_abs_diff_eq!(single.positions[0], PI / 6.0, epsilon = 1e-15);
        assert_eq!(single.weights, vec![3.0]);

        let d = GeneratorDecomposition::new(vec![1.0, 1.0, 2.0]).unwrap();
        let p = psr_allocate(&d, 800).unwrap();
        assert_eq!(p.rounds, vec![100, 100, 200]);
        let pr = prior(&[1], &[1.0], 1.5);
        let e = error_budget(&p, &pr, 800, StatModel::Ideal).unwrap();
        assert_abs_diff_eq!(e.total, 16.0 * 1.5 / 800.0, epsilon = 1e-15);
        let ea = error_budget(&p, &pr, 800, StatModel::Actual).unwrap();
        assert_abs_diff_eq!(ea.total, e.total, epsilon = 1e-15);

        assert!(psr_allocate(&d, 5).is_err());
        assert!(GeneratorDecomposition::new(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn effective_width_examples() {
        assert_abs_diff_eq!(
            effective_spectral_width(&prior(&[7], &[0.3], 1.0)).unwrap(),
            7.0,
            epsilon = 1e-14
        );
        let e = effective_spectral_width(&prior(&[1, 2], &[1.0, 1.0], 1.0)).unwrap();
        assert_abs_diff_eq!(e, (17.0f64 / 5.0).sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn plan_json_round_trip() {
        let s = FrequencySpectrum::full(3).unwrap();
        let p = ulge_allocate(&s, 60).unwrap();
        let j = p.to_json().unwrap();
        assert!(j.contains("\"ULGE\"") && !j.contains("generator_indices"));
        assert_eq!(MeasurementPlan::from_json(&j).unwrap(), p);
        let q = psr_allocate(&GeneratorDecomposition::uniform(2).unwrap(), 8).unwrap();
        assert_eq!(MeasurementPlan::from_json(&q.to_json().unwrap()).unwrap(), q);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("blge".parse::<Method>().unwrap(), Method::Blge);
        assert!("foo".parse::<Method>().is_err());
    }
}
