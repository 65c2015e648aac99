//! Trigonometric polynomials with integer frequencies.
//!
//! Every cost function restricted to one circuit parameter is a real
//! trigonometric polynomial `b0 + Σ a_k sin(μ_k x) + b_k cos(μ_k x)`. The
//! allocators need exact evaluation, global extrema of sine series and all
//! real roots of derived polynomials; this module provides those pieces.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Roots whose modulus deviates from one by less than this are accepted directly.
const UNIT_CIRCLE_TOL: f64 = 1e-7;
/// Looser band whose candidates are only accepted after Newton polishing succeeds.
const UNIT_CIRCLE_RESCUE_TOL: f64 = 1e-3;
const NEWTON_ITERS: usize = 20;
/// Relative tolerance used when collecting ties of the global maximum.
pub const MAXIMA_TIE_TOL: f64 = 1e-8;

/// Ascending list of distinct positive integer frequencies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct FrequencySpectrum {
    mu: Vec<u32>,
}

impl FrequencySpectrum {
    pub fn new(mu: Vec<u32>) -> Result<Self> {
        if mu.is_empty() {
            return Err(invalid("frequency spectrum must not be empty"));
        }
        if mu[0] == 0 {
            return Err(invalid("frequencies must be positive"));
        }
        if mu.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("frequencies must be strictly increasing"));
        }
        Ok(Self { mu })
    }

    /// The full band `1..=nu`.
    pub fn full(nu: u32) -> Result<Self> {
        Self::new((1..=nu).collect())
    }

    pub fn mu(&self) -> &[u32] {
        &self.mu
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// Spectral width.
    pub fn nu(&self) -> u32 {
        *self.mu.last().expect("spectrum is never empty")
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.mu.iter().map(|&m| m as f64)
    }

    pub fn position(&self, freq: u32) -> Option<usize> {
        self.mu.binary_search(&freq).ok()
    }
}

impl TryFrom<Vec<u32>> for FrequencySpectrum {
    type Error = Error;
    fn try_from(mu: Vec<u32>) -> Result<Self> {
        Self::new(mu)
    }
}

impl From<FrequencySpectrum> for Vec<u32> {
    fn from(s: FrequencySpectrum) -> Self {
        s.mu
    }
}

/// Exact Fourier representation of a single-parameter restriction `F(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierModel {
    pub spectrum: FrequencySpectrum,
    /// Sine coefficients.
    pub a: Vec<f64>,
    /// Cosine coefficients.
    pub b: Vec<f64>,
    /// Constant offset (the zero frequency).
    pub b0: f64,
}

impl FourierModel {
    pub fn new(spectrum: FrequencySpectrum, a: Vec<f64>, b: Vec<f64>, b0: f64) -> Result<Self> {
        if a.len() != spectrum.len() || b.len() != spectrum.len() {
            return Err(invalid("coefficient vectors must match the spectrum length"));
        }
        Ok(Self { spectrum, a, b, b0 })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.spectrum
            .iter()
            .zip(self.a.iter().zip(&self.b))
            .fold(self.b0, |acc, (mu, (a, b))| {
                let (s, c) = (mu * x).sin_cos();
                acc + a * s + b * c
            })
    }

    /// `F'(0) = Σ μ_k a_k`.
    pub fn derivative_at_zero(&self) -> f64 {
        self.spectrum.iter().zip(&self.a).map(|(mu, a)| mu * a).sum()
    }

    /// The odd part `(F(x) - F(-x)) / 2`.
    pub fn antisymmetric_projection(&self) -> SineSeries {
        SineSeries {
            spectrum: self.spectrum.clone(),
            coeffs: self.a.clone(),
        }
    }

    pub fn to_trig_poly(&self) -> TrigPoly {
        let d = self.spectrum.nu() as usize;
        let mut cos = vec![0.0; d + 1];
        let mut sin = vec![0.0; d + 1];
        cos[0] = self.b0;
        for (k, &mu) in self.spectrum.mu().iter().enumerate() {
            cos[mu as usize] += self.b[k];
            sin[mu as usize] += self.a[k];
        }
        TrigPoly { cos, sin }
    }
}

/// `Σ κ_k sin(μ_k x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineSeries {
    pub spectrum: FrequencySpectrum,
    pub coeffs: Vec<f64>,
}

impl SineSeries {
    pub fn new(spectrum: FrequencySpectrum, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != spectrum.len() {
            return Err(invalid("coefficient vector must match the spectrum length"));
        }
        Ok(Self { spectrum, coeffs })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.spectrum
            .iter()
            .zip(&self.coeffs)
            .map(|(mu, c)| c * (mu * x).sin())
            .sum()
    }

    fn second_derivative(&self, x: f64) -> f64 {
        self.spectrum
            .iter()
            .zip(&self.coeffs)
            .map(|(mu, c)| -c * mu * mu * (mu * x).sin())
            .sum()
    }

    /// Derivative as a cosine series.
    pub fn derivative(&self) -> TrigPoly {
        let d = self.spectrum.nu() as usize;
        let mut cos = vec![0.0; d + 1];
        for (mu, &c) in self.spectrum.mu().iter().zip(&self.coeffs) {
            cos[*mu as usize] += c * *mu as f64;
        }
        TrigPoly {
            cos,
            sin: vec![0.0; d + 1],
        }
    }

    fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }
}

/// Dense trigonometric polynomial `Σ_{k=0}^{D} cos_k cos(kx) + sin_k sin(kx)`.
///
/// `sin[0]` carries no meaning and is ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPoly {
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl TrigPoly {
    pub fn new(cos: Vec<f64>, sin: Vec<f64>) -> Result<Self> {
        if cos.len() != sin.len() || cos.is_empty() {
            return Err(invalid(
                "cosine and sine coefficient vectors must have equal nonzero length",
            ));
        }
        Ok(Self { cos, sin })
    }

    pub fn zeros(degree: usize) -> Self {
        Self {
            cos: vec![0.0; degree + 1],
            sin: vec![0.0; degree + 1],
        }
    }

    pub fn degree(&self) -> usize {
        self.cos.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = self.cos[0];
        for k in 1..self.cos.len() {
            let (s, c) = (k as f64 * x).sin_cos();
            acc += self.cos[k] * c + self.sin[k] * s;
        }
        acc
    }

    pub fn eval_derivative(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for k in 1..self.cos.len() {
            let kf = k as f64;
            let (s, c) = (kf * x).sin_cos();
            acc += kf * (self.sin[k] * c - self.cos[k] * s);
        }
        acc
    }

    fn scale(&self) -> f64 {
        self.cos
            .iter()
            .zip(&self.sin)
            .skip(1)
            .map(|(c, s)| c.abs() + s.abs())
            .sum::<f64>()
            + self.cos[0].abs()
    }

    /// Highest index with a coefficient that is not negligible against the rest.
    fn effective_degree(&self) -> usize {
        let scale = self.scale();
        (1..self.cos.len())
            .rev()
            .find(|&k| self.cos[k].abs() + self.sin[k].abs() > 1e-15 * scale)
            .unwrap_or(0)
    }

    /// All real roots in `[0, 2π)`, ascending.
    ///
    /// Substitutes `z = e^{ix}`, so that `z^D T(x)` becomes a degree-`2D`
    /// complex polynomial, takes its companion-matrix eigenvalues and keeps
    /// those on the unit circle. Each surviving root is Newton-polished on
    /// the real line.
    pub fn real_roots(&self) -> Result<Vec<f64>> {
        if self.scale() == 0.0 {
            return Err(Error::DegeneratePolynomial);
        }
        let d = self.effective_degree();
        if d == 0 {
            return Ok(Vec::new());
        }
        let n = 2 * d;
        // coefficient of z^j
        let mut p = vec![Complex64::new(0.0, 0.0); n + 1];
        p[d] = Complex64::new(self.cos[0], 0.0);
        for k in 1..=d {
            p[d + k] = Complex64::new(self.cos[k], -self.sin[k]) * 0.5;
            p[d - k] = Complex64::new(self.cos[k], self.sin[k]) * 0.5;
        }
        let lead = p[n];
        let mut companion = DMatrix::<Complex64>::zeros(n, n);
        for i in 1..n {
            companion[(i, i - 1)] = Complex64::new(1.0, 0.0);
        }
        for i in 0..n {
            companion[(i, n - 1)] = -p[i] / lead;
        }
        let eig = eigenvalues(companion)?;

        let scale = self.scale();
        let mut roots: Vec<f64> = Vec::new();
        for z in eig.iter() {
            let off = (z.norm() - 1.0).abs();
            if off >= UNIT_CIRCLE_RESCUE_TOL {
                continue;
            }
            let x0 = z.arg().rem_euclid(TAU);
            let (x, converged) = self.newton_polish(x0);
            let residual = self.eval(x).abs();
            let accepted = if off < UNIT_CIRCLE_TOL {
                true
            } else {
                converged && residual <= 1e-11 * scale
            };
            if accepted {
                roots.push(x.rem_euclid(TAU));
            }
        }
        roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(dedup_angles(roots, 1e-7))
    }

    fn newton_polish(&self, mut x: f64) -> (f64, bool) {
        for _ in 0..NEWTON_ITERS {
            let f = self.eval(x);
            let df = self.eval_derivative(x);
            if f == 0.0 {
                return (x, true);
            }
            if df == 0.0 || !df.is_finite() {
                return (x, false);
            }
            let step = f / df;
            // never let polishing wander off to a different root
            if step.abs() > 0.1 {
                return (x, false);
            }
            x -= step;
            if step.abs() <= 1e-15 * (1.0 + x.abs()) {
                return (x, true);
            }
        }
        let converged = self.eval(x).abs() <= 1e-12 * self.scale();
        (x, converged)
    }
}

/// Eigenvalues of a complex matrix via the Schur form.
///
/// Shifted QR stalls on cyclic matrices such as the companion of `z^n + 1`,
/// so a capped attempt is followed by retries on random unitary conjugates.
fn eigenvalues(m: DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    let max_iter = 100 * n.max(10);
    if let Some(e) = Schur::try_new(m.clone(), f64::EPSILON, max_iter).and_then(|s| s.eigenvalues()) {
        return Ok(e.iter().copied().collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..4 {
        let r = DMatrix::<Complex64>::from_fn(n, n, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let q = r.qr().q();
        let conj = q.adjoint() * &m * &q;
        if let Some(e) = Schur::try_new(conj, f64::EPSILON, max_iter).and_then(|s| s.eigenvalues()) {
            return Ok(e.iter().copied().collect());
        }
    }
    Err(Error::DegeneratePolynomial)
}

/// Merges sorted angles closer than `tol`, treating `0` and `2π` as neighbours.
fn dedup_angles(sorted: Vec<f64>, tol: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(sorted.len());
    for x in sorted {
        match out.last() {
            Some(&last) if x - last < tol => {}
            _ => out.push(x),
        }
    }
    if out.len() > 1 && out[0] + TAU - out[out.len() - 1] < tol {
        out.pop();
    }
    out
}

/// Every real root in `[0, 2π)` of the given trigonometric polynomial.
pub fn real_roots_on_period(poly: &TrigPoly) -> Result<Vec<f64>> {
    poly.real_roots()
}

/// Local maxima of `|Σ κ_k sin(μ_k x)|` on `(0, π)`, as `(position, value)`
/// pairs sorted by position.
pub fn abs_local_maxima(series: &SineSeries) -> Result<Vec<(f64, f64)>> {
    if series.is_zero() {
        return Err(Error::DegenerateSeries);
    }
    let crit = series.derivative().real_roots()?;
    let mut out = Vec::new();
    for x in crit {
        if x <= 0.0 || x >= PI {
            continue;
        }
        let v = series.eval(x);
        if v == 0.0 {
            continue;
        }
        // |p| has a local maximum where p and p'' have opposite signs
        let curv = series.second_derivative(x);
        if v * curv <= 0.0 {
            out.push((x, v.abs()));
        }
    }
    Ok(out)
}

/// All positions in `[0, π)` where `|Σ κ_k sin(μ_k x)|` attains its global
/// maximum (up to [`MAXIMA_TIE_TOL`] relative), and the maximum itself.
pub fn global_abs_maxima(series: &SineSeries) -> Result<(Vec<f64>, f64)> {
    let maxima = abs_local_maxima(series)?;
    let best = maxima.iter().map(|&(_, v)| v).fold(0.0, f64::max);
    if best == 0.0 {
        return Err(Error::DegenerateSeries);
    }
    let positions = maxima
        .into_iter()
        .filter(|&(_, v)| v >= best * (1.0 - MAXIMA_TIE_TOL))
        .map(|(x, _)| x)
        .collect();
    Ok((positions, best))
}

/// Sup norm `max_x |Σ κ_k sin(μ_k x)|`; zero for the zero series.
pub fn sup_norm(series: &SineSeries) -> Result<f64> {
    if series.is_zero() {
        return Ok(0.0);
    }
    global_abs_maxima(series).map(|(_, v)| v)
}

/// Grid points `x_j = 2πj/(2ν+1)` used for exact Fourier inversion.
pub fn fourier_grid(nu: u32) -> Vec<f64> {
    let n = 2 * nu as usize + 1;
    (0..n).map(|j| TAU * j as f64 / n as f64).collect()
}

/// Recovers the unique degree-`ν` trigonometric polynomial through samples
/// taken on [`fourier_grid`].
pub fn exact_fourier_coeffs(samples: &[f64], nu: u32) -> Result<FourierModel> {
    let n = 2 * nu as usize + 1;
    if nu == 0 {
        return Err(invalid("spectral width must be at least 1"));
    }
    if samples.len() != n {
        return Err(invalid(format!(
            "expected {n} samples for nu = {nu}, got {}",
            samples.len()
        )));
    }
    let grid = fourier_grid(nu);
    let nf = n as f64;
    let b0 = samples.iter().sum::<f64>() / nf;
    let mut a = Vec::with_capacity(nu as usize);
    let mut b = Vec::with_capacity(nu as usize);
    for k in 1..=nu {
        let kf = k as f64;
        let (mut sa, mut sb) = (0.0, 0.0);
        for (&x, &y) in grid.iter().zip(samples) {
            let (s, c) = (kf * x).sin_cos();
            sa += y * s;
            sb += y * c;
        }
        a.push(2.0 * sa / nf);
        b.push(2.0 * sb / nf);
    }
    FourierModel::new(FrequencySpectrum::full(nu)?, a, b, b0)
}
