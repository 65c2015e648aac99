//! Prior second moments of Fourier sine coefficients and the shot variance.
//!
//! Sources: unitary 2-design averages, barren-plateau closed forms for the
//! QAOA mixer and cost layers, a rough exponential fit, and empirical means
//! over exactly computed Fourier models.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Hypergeometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::qaoa::LayerKind;
use crate::trigcore::{FourierModel, FrequencySpectrum};

/// Diagonal prior `⟨a_k²⟩` over a spectrum together with the single-shot variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PriorFile", into = "PriorFile")]
pub struct PriorModel {
    spectrum: FrequencySpectrum,
    second_moments: Vec<f64>,
    shot_variance: f64,
    stderr: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct PriorFile {
    mu: Vec<u32>,
    a2: Vec<f64>,
    sigma2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stderr: Option<Vec<f64>>,
}

impl TryFrom<PriorFile> for PriorModel {
    type Error = Error;
    fn try_from(f: PriorFile) -> Result<Self> {
        let p = PriorModel::new(FrequencySpectrum::new(f.mu)?, f.a2, f.sigma2)?;
        match f.stderr {
            Some(se) => p.with_stderr(se),
            None => Ok(p),
        }
    }
}

impl From<PriorModel> for PriorFile {
    fn from(p: PriorModel) -> Self {
        PriorFile {
            mu: p.spectrum.mu().to_vec(),
            a2: p.second_moments,
            sigma2: p.shot_variance,
            stderr: p.stderr,
        }
    }
}

impl PriorModel {
    pub fn new(spectrum: FrequencySpectrum, second_moments: Vec<f64>, shot_variance: f64) -> Result<Self> {
        if second_moments.len() != spectrum.len() {
            return Err(invalid("second moments must match the spectrum length"));
        }
        if second_moments.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(invalid("second moments must be finite and nonnegative"));
        }
        if second_moments.iter().all(|&a| a == 0.0) {
            return Err(invalid("at least one second moment must be positive"));
        }
        if !(shot_variance.is_finite() && shot_variance > 0.0) {
            return Err(invalid("shot variance must be positive"));
        }
        Ok(Self {
            spectrum,
            second_moments,
            shot_variance,
            stderr: None,
        })
    }

    pub fn with_stderr(mut self, stderr: Vec<f64>) -> Result<Self> {
        if stderr.len() != self.spectrum.len() {
            return Err(invalid("standard errors must match the spectrum length"));
        }
        self.stderr = Some(stderr);
        Ok(self)
    }

    pub fn with_shot_variance(mut self, shot_variance: f64) -> Result<Self> {
        if !(shot_variance.is_finite() && shot_variance > 0.0) {
            return Err(invalid("shot variance must be positive"));
        }
        self.shot_variance = shot_variance;
        Ok(self)
    }

    pub fn spectrum(&self) -> &FrequencySpectrum {
        &self.spectrum
    }

    pub fn second_moments(&self) -> &[f64] {
        &self.second_moments
    }

    pub fn shot_variance(&self) -> f64 {
        self.shot_variance
    }

    pub fn stderr(&self) -> Option<&[f64]> {
        self.stderr.as_deref()
    }

    /// `⟨δ²⟩ = Σ μ_k² ⟨a_k²⟩`, the expected squared derivative.
    pub fn expected_sq_derivative(&self) -> f64 {
        self.spectrum
            .iter()
            .zip(&self.second_moments)
            .map(|(mu, a)| mu * mu * a)
            .sum()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Generator eigenvalues with relative multiplicities `Tr[P_i]/d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumWithMultiplicities {
    eigenvalues: Vec<i64>,
    relative_multiplicities: Vec<f64>,
    hilbert_dim: u64,
}

impl SpectrumWithMultiplicities {
    pub fn new(eigenvalues: Vec<i64>, relative_multiplicities: Vec<f64>, hilbert_dim: u64) -> Result<Self> {
        if eigenvalues.len() != relative_multiplicities.len() {
            return Err(invalid("one multiplicity per eigenvalue required"));
        }
        if eigenvalues.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("eigenvalues must be strictly increasing"));
        }
        if relative_multiplicities.iter().any(|&p| p.is_nan() || p < 0.0) {
            return Err(invalid("multiplicities must be nonnegative"));
        }
        let total: f64 = relative_multiplicities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("multiplicities sum to {total}, expected 1")));
        }
        Ok(Self {
            eigenvalues,
            relative_multiplicities,
            hilbert_dim,
        })
    }

    /// Mixer generator restricted to the even-parity sector: eigenvalues
    /// `i ∈ {0, 2, …}` with `Tr[P_i] = C(N, i)` and `d = 2^{N-1}`.
    pub fn mixer_even_sector(n: u32) -> Result<Self> {
        if n < 2 {
            return Err(invalid("need at least two qubits"));
        }
        let ln_d = (n as f64 - 1.0) * std::f64::consts::LN_2;
        let (eig, mult): (Vec<i64>, Vec<f64>) = (0..=n)
            .step_by(2)
            .map(|i| (i as i64, (ln_binomial(n, i) - ln_d).exp()))
            .unzip();
        // renormalise away the last-ulp drift of the exp/ln round trip
        let total: f64 = mult.iter().sum();
        let mult = mult.into_iter().map(|p| p / total).collect();
        Self::new(eig, mult, 1u64 << (n - 1))
    }

    pub fn eigenvalues(&self) -> &[i64] {
        &self.eigenvalues
    }

    pub fn relative_multiplicities(&self) -> &[f64] {
        &self.relative_multiplicities
    }

    pub fn hilbert_dim(&self) -> u64 {
        self.hilbert_dim
    }
}

/// `ξ_d = d³ / ((d+1)(d²-1))`.
pub fn xi(d: u64) -> f64 {
    let d = d as f64;
    d * d * d / ((d + 1.0) * (d * d - 1.0))
}

/// `ln n!` by direct summation; exact to a few ulps for the sizes used here.
pub fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

pub fn ln_binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Ergodic prior under the 2-design assumption:
/// `⟨a_k²⟩ = 2 ξ_d (σ_O²/d) Σ_{λ_i - λ_j = μ_k} p_i p_j`, twice the mean
/// `|c_k|²` of the complex coefficient.
///
/// Returns `None` when the generator has a single eigenvalue (no frequencies).
/// The shot variance is set to `σ_O²`, the variance when measuring in the
/// maximally mixed state.
pub fn two_design_prior(spec: &SpectrumWithMultiplicities, sigma_o_sq: f64) -> Result<Option<PriorModel>> {
    let d = spec.hilbert_dim;
    if d < 2 {
        return Err(invalid("Hilbert space dimension must be at least 2"));
    }
    if sigma_o_sq.is_nan() || sigma_o_sq < 0.0 {
        return Err(invalid("observable variance must be nonnegative"));
    }
    let mut moments: std::collections::BTreeMap<u32, f64> = Default::default();
    let (lam, p) = (&spec.eigenvalues, &spec.relative_multiplicities);
    for i in 0..lam.len() {
        for j in 0..i {
            let mu = u32::try_from(lam[i] - lam[j]).map_err(|_| invalid("frequency overflow"))?;
            *moments.entry(mu).or_default() += p[i] * p[j];
        }
    }
    if moments.is_empty() {
        return Ok(None);
    }
    let scale = 2.0 * xi(d) * sigma_o_sq / d as f64;
    let (mu, a2): (Vec<u32>, Vec<f64>) = moments.into_iter().map(|(m, s)| (m, scale * s)).unzip();
    PriorModel::new(FrequencySpectrum::new(mu)?, a2, sigma_o_sq).map(Some)
}

/// Closed-form barren-plateau prior for a QAOA mixer layer on `N` qubits
/// and `M` edges. Only even frequencies appear.
pub fn qaoa_mixer_prior_barren(n: u32, m: u32) -> Result<PriorModel> {
    if n < 2 || m < 1 {
        return Err(invalid("mixer prior needs N >= 2 and M >= 1"));
    }
    let ln_pref = (m as f64).ln() - 4f64.ln() - (n as f64 - 1.0) * 8f64.ln();
    let (mu, a2): (Vec<u32>, Vec<f64>) = (2..=n)
        .step_by(2)
        .map(|k| {
            let ln = ln_pref + ln_factorial(2 * n) - ln_factorial(n - k) - ln_factorial(n + k);
            (k, ln.exp())
        })
        .unzip();
    PriorModel::new(FrequencySpectrum::new(mu)?, a2, m as f64 / 4.0)
}

/// Monte-Carlo estimate of `ζ_k` for `k = 0..=M` with per-bin standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaEstimate {
    /// `ζ̂_k`, symmetrised over `±k`.
    pub zeta: Vec<f64>,
    pub stderr: Vec<f64>,
    pub samples: u64,
}

impl ZetaEstimate {
    /// Total joint mass `Σ_{k=-M}^{M} ζ̂_k`.
    pub fn total_mass(&self) -> f64 {
        self.zeta[0] + 2.0 * self.zeta[1..].iter().sum::<f64>()
    }
}

const ZETA_CHUNKS: u64 = 64;

/// Samples the signed cut difference `cut₁ - cut₂` for two uniformly random
/// partitions of a uniformly random `M`-edge graph on `N` vertices.
fn sample_cut_difference(rng: &mut ChaCha8Rng, n: u32, m: u64, gamma: u64) -> i64 {
    let mut remaining = n as u64;
    let mut sectors = [0u64; 4];
    for (i, s) in sectors.iter_mut().enumerate().take(3) {
        let p = 1.0 / (4 - i) as f64;
        *s = if remaining == 0 {
            0
        } else {
            Binomial::new(remaining, p).expect("valid binomial").sample(rng)
        };
        remaining -= *s;
    }
    sectors[3] = remaining;
    let [s00, s01, s10, s11] = sectors;
    let e1 = s00 * s10 + s01 * s11;
    let e2 = s00 * s01 + s10 * s11;
    let c1 = Hypergeometric::new(gamma, e1, m)
        .expect("valid hypergeometric")
        .sample(rng);
    let c2 = Hypergeometric::new(gamma - e1, e2, m - c1)
        .expect("valid hypergeometric")
        .sample(rng);
    c1 as i64 - c2 as i64
}

/// Estimates `ζ_k` by sampling sector occupations and hypergeometric edge draws.
pub fn estimate_zeta(n: u32, m: u32, mc_samples: u64, seed: u64) -> Result<ZetaEstimate> {
    if n < 2 {
        return Err(invalid("need at least two vertices"));
    }
    let gamma = n as u64 * (n as u64 - 1) / 2;
    if m < 1 || m as u64 > gamma {
        return Err(invalid(format!("edge count must lie in 1..={gamma}")));
    }
    if mc_samples == 0 {
        return Err(invalid("need at least one Monte-Carlo sample"));
    }
    let bins = 2 * m as usize + 1;
    let histogram = (0..ZETA_CHUNKS)
        .into_par_iter()
        .map(|chunk| {
            let lo = mc_samples * chunk / ZETA_CHUNKS;
            let hi = mc_samples * (chunk + 1) / ZETA_CHUNKS;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let mut h = vec![0u64; bins];
            for _ in lo..hi {
                let k = sample_cut_difference(&mut rng, n, m as u64, gamma);
                h[(k + m as i64) as usize] += 1;
            }
            h
        })
        .reduce(
            || vec![0u64; bins],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let ns = mc_samples as f64;
    let mid = m as usize;
    let mut zeta = Vec::with_capacity(mid + 1);
    let mut stderr = Vec::with_capacity(mid + 1);
    for k in 0..=mid {
        // per-sample indicator Y = (1[+k] + 1[-k]) / 2
        let (plus, minus) = (histogram[mid + k] as f64, histogram[mid - k] as f64);
        let (mean, second) = if k == 0 {
            (plus / ns, plus / ns)
        } else {
            ((plus + minus) / (2.0 * ns), (plus + minus) / (4.0 * ns))
        };
        let var = if mc_samples > 1 {
            (second - mean * mean).max(0.0) * ns / (ns - 1.0)
        } else {
            0.0
        };
        zeta.push(mean);
        stderr.push((var / ns).sqrt());
    }
    Ok(ZetaEstimate {
        zeta,
        stderr,
        samples: mc_samples,
    })
}

/// Barren-plateau prior for a QAOA cost layer: the two-design prior on the
/// even-parity sector (`d = 2^{N-1}`, `σ_O² = M/4`) with the graph-averaged
/// pair weights `ζ_k`, i.e. `⟨a_k²⟩ = ξ_d (M / 2^N) ζ_k` for `k = 1..=M`.
/// Carries Monte-Carlo standard errors. The shot variance is `M/4`.
pub fn qaoa_cost_prior_barren(n: u32, m: u32, mc_samples: u64, seed: u64) -> Result<PriorModel> {
    let z = estimate_zeta(n, m, mc_samples, seed)?;
    let scale = xi(1u64 << (n - 1)) * m as f64 / 2f64.powi(n as i32);
    let a2: Vec<f64> = z.zeta[1..].iter().map(|v| scale * v).collect();
    let se: Vec<f64> = z.stderr[1..].iter().map(|v| scale * v).collect();
    PriorModel::new(FrequencySpectrum::full(m)?, a2, m as f64 / 4.0)?.with_stderr(se)
}

/// Parameters of the exponential fit `⟨a_k²⟩ = 10^{slope·k + intercept}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpFitParams {
    pub slope: f64,
    pub intercept_mixer: f64,
    pub intercept_cost: f64,
}

impl Default for ExpFitParams {
    fn default() -> Self {
        Self {
            slope: -0.3,
            intercept_mixer: -1.1,
            intercept_cost: -1.6,
        }
    }
}

/// Exponential-fit prior on a given spectrum. Mixer layers keep only even
/// frequencies.
pub fn exponential_fit_prior(
    spectrum: &FrequencySpectrum,
    kind: LayerKind,
    params: ExpFitParams,
    shot_variance: f64,
) -> Result<PriorModel> {
    let a2 = spectrum
        .mu()
        .iter()
        .map(|&k| exponential_fit_value(k, kind, params))
        .collect();
    PriorModel::new(spectrum.clone(), a2, shot_variance)
}

pub fn exponential_fit_value(k: u32, kind: LayerKind, params: ExpFitParams) -> f64 {
    let intercept = match kind {
        LayerKind::Mixer if k % 2 == 1 => return 0.0,
        LayerKind::Mixer => params.intercept_mixer,
        LayerKind::Cost => params.intercept_cost,
    };
    10f64.powf(params.slope * k as f64 + intercept)
}

/// Sample means of squared Fourier coefficients across a model ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMoments {
    pub mu: Vec<u32>,
    pub a2_mean: Vec<f64>,
    pub a2_stderr: Vec<f64>,
    pub b2_mean: Vec<f64>,
    pub b2_stderr: Vec<f64>,
    pub samples: usize,
}

impl EmpiricalMoments {
    pub fn from_models(models: &[FourierModel]) -> Result<Self> {
        if models.len() < 2 {
            return Err(invalid("need at least two models"));
        }
        let spectrum = &models[0].spectrum;
        if models.iter().any(|m| &m.spectrum != spectrum) {
            return Err(invalid("all models must share one spectrum"));
        }
        let (a2_mean, a2_stderr) = mean_and_stderr(models, |m, k| m.a[k] * m.a[k], spectrum.len());
        let (b2_mean, b2_stderr) = mean_and_stderr(models, |m, k| m.b[k] * m.b[k], spectrum.len());
        Ok(Self {
            mu: spectrum.mu().to_vec(),
            a2_mean,
            a2_stderr,
            b2_mean,
            b2_stderr,
            samples: models.len(),
        })
    }
}

fn mean_and_stderr(
    models: &[FourierModel],
    f: impl Fn(&FourierModel, usize) -> f64,
    len: usize,
) -> (Vec<f64>, Vec<f64>) {
    let n = models.len() as f64;
    (0..len)
        .map(|k| {
            let mean = models.iter().map(|m| f(m, k)).sum::<f64>() / n;
            let var = models.iter().map(|m| (f(m, k) - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, (var / n).sqrt())
        })
        .unzip()
}

/// Prior from the empirical mean of `a_k²` across models.
pub fn empirical_prior(models: &[FourierModel], shot_variance: f64) -> Result<PriorModel> {
    let e = EmpiricalMoments::from_models(models)?;
    PriorModel::new(FrequencySpectrum::new(e.mu)?, e.a2_mean, shot_variance)?.with_stderr(e.a2_stderr)
}
