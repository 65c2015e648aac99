use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::allocators::{
    blge_solve, error_budget, slge_optimum, ulge_positions_weights, MeasurementPlan, Method, StatModel,
};
use crate::error::{invalid, Result};
use crate::priors::PriorModel;
use crate::trigcore::FrequencySpectrum;

/// Input of the analytic error curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    pub prior: PriorModel,
    pub m_grid: Vec<u64>,
    pub methods: Vec<Method>,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        let mu: Vec<u32> = (1..=5).collect();
        let a2 = mu.iter().map(|&k| 0.1 * 10f64.powi(-(k as i32))).collect();
        let prior = PriorModel::new(FrequencySpectrum::new(mu).expect("valid"), a2, 1.0).expect("valid");
        Self {
            prior,
            m_grid: (4..=28).map(|i| 10f64.powf(i as f64 / 4.0).round() as u64).collect(),
            methods: vec![Method::Blge, Method::Ulge, Method::Slge],
        }
    }
}

/// One point of the analytic curves, using the continuous optimum of each method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryRow {
    pub method: Method,
    pub m: u64,
    pub eps_total: f64,
    pub eps_stat: f64,
    pub eps_sys: Vec<f64>,
    pub omega: f64,
    pub stat_fraction: f64,
    pub positions: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn theory_point(prior: &PriorModel, method: Method, m: u64) -> Result<TheoryRow> {
    let (positions, weights) = match method {
        Method::Blge => {
            let sol = blge_solve(prior, m)?;
            (sol.positions, sol.weights)
        }
        Method::Ulge => ulge_positions_weights(prior.spectrum().nu()),
        Method::Slge => {
            let p = slge_optimum(prior, prior.shot_variance() / m as f64)?;
            (vec![p.x], vec![p.weight])
        }
        Method::Psr => return Err(invalid("theory curves cover BLGE, ULGE and SLGE")),
    };
    let plan = MeasurementPlan {
        method,
        rounds: vec![0; positions.len()],
        positions,
        weights,
        generator_indices: None,
    };
    let e = error_budget(&plan, prior, m, StatModel::Ideal)?;
    Ok(TheoryRow {
        method,
        m,
        eps_total: e.total,
        eps_stat: e.stat,
        stat_fraction: e.stat_fraction(),
        eps_sys: e.sys_per_frequency,
        omega: e.omega,
        positions: plan.positions,
        weights: plan.weights,
    })
}

pub fn run_theory_curves(config: &TheoryConfig) -> Result<Vec<TheoryRow>> {
    if config.m_grid.contains(&0) {
        return Err(invalid("budgets must be positive"));
    }
    let mut rows = Vec::new();
    for &method in &config.methods {
        for &m in &config.m_grid {
            rows.push(theory_point(&config.prior, method, m)?);
        }
    }
    Ok(rows)
}

/// CSV with one `eps_sys_k<μ>` column per frequency. Positions and weights
/// are `;`-separated lists.
pub fn write_theory_csv(out: impl Write, spectrum: &FrequencySpectrum, rows: &[TheoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["method", "m", "eps_total", "eps_stat", "stat_fraction"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(spectrum.mu().iter().map(|k| format!("eps_sys_k{k}")));
    header.extend(
        ["omega", "n_positions", "positions", "weights"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
    for r in rows {
        let mut rec = vec![
            r.method.to_string(),
            r.m.to_string(),
            r.eps_total.to_string(),
            r.eps_stat.to_string(),
            r.stat_fraction.to_string(),
        ];
        rec.extend(r.eps_sys.iter().map(|x| x.to_string()));
        rec.push(r.omega.to_string());
        rec.push(r.positions.len().to_string());
        rec.push(join(&r.positions));
        rec.push(join(&r.weights));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
