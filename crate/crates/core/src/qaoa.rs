//! Full statevector simulation of the QAOA MaxCut ansatz.
//!
//! Conventions: `θ` has length `2L`; even indices are mixer angles and odd
//! indices cost angles. Layer `α` applies the cost unitary `e^{iγ·cut}` with
//! `γ = θ[2α+1]`, then the mixer `Π_j e^{iβX_j/2}` with `β = θ[2α]`, starting
//! from `|+⟩^N`. The observable is `H_c = -cut`.

use std::collections::BTreeSet;

use num_complex::Complex64;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::trigcore::{exact_fourier_coeffs, fourier_grid, FourierModel, FrequencySpectrum};

pub const MAX_QUBITS: u32 = 24;

/// Which Hamiltonian generates a given parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Mixer,
    Cost,
}

impl LayerKind {
    pub fn of(index: usize) -> Self {
        if index.is_multiple_of(2) {
            LayerKind::Mixer
        } else {
            LayerKind::Cost
        }
    }
}

/// Undirected simple graph on vertices `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphFile", into = "GraphFile")]
pub struct Graph {
    n: u32,
    edges: Vec<(u32, u32)>,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    n: u32,
    edges: Vec<[u32; 2]>,
}

impl TryFrom<GraphFile> for Graph {
    type Error = Error;
    fn try_from(f: GraphFile) -> Result<Self> {
        Graph::new(f.n, f.edges.into_iter().map(|[i, j]| (i, j)).collect())
    }
}

impl From<Graph> for GraphFile {
    fn from(g: Graph) -> Self {
        GraphFile {
            n: g.n,
            edges: g.edges.into_iter().map(|(i, j)| [i, j]).collect(),
        }
    }
}

impl Graph {
    /// Validates and normalises edges to `i < j`; duplicates and self-loops are rejected.
    pub fn new(n: u32, edges: Vec<(u32, u32)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            let (i, j) = (a.min(b), a.max(b));
            if i == j {
                return Err(invalid(format!("self-loop at vertex {i}")));
            }
            if j >= n {
                return Err(invalid(format!("edge ({i},{j}) out of range for {n} vertices")));
            }
            if !seen.insert((i, j)) {
                return Err(invalid(format!("duplicate edge ({i},{j})")));
            }
            out.push((i, j));
        }
        Ok(Self { n, edges: out })
    }

    pub fn n_vertices(&self) -> u32 {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Uniformly samples `2N` distinct edges.
pub fn random_graph(n: u32, seed: u64) -> Result<Graph> {
    let gamma = n as usize * (n as usize).saturating_sub(1) / 2;
    let m = 2 * n as usize;
    if gamma < m {
        return Err(invalid(format!("{n} vertices cannot host {m} distinct edges")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample_indices(&mut rng, gamma, m).into_vec();
    idx.sort_unstable();
    let all: Vec<(u32, u32)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    Graph::new(n, idx.into_iter().map(|k| all[k]).collect())
}

/// Number of cut edges for every bitstring; bit `v` of `z` is vertex `v`'s side.
pub fn cut_values(graph: &Graph) -> Result<Vec<u32>> {
    if graph.n > MAX_QUBITS {
        return Err(invalid(format!("at most {MAX_QUBITS} vertices supported")));
    }
    let dim = 1usize << graph.n;
    let mut cuts = vec![0u32; dim];
    for &(i, j) in &graph.edges {
        for (z, c) in cuts.iter_mut().enumerate() {
            *c += (((z >> i) ^ (z >> j)) & 1) as u32;
        }
    }
    Ok(cuts)
}

pub fn maxcut_value(graph: &Graph) -> Result<u32> {
    Ok(cut_values(graph)?.into_iter().max().unwrap_or(0))
}

/// Angle vector `θ` of length `2L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CircuitParams {
    theta: Vec<f64>,
}

impl CircuitParams {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() || !theta.len().is_multiple_of(2) {
            return Err(invalid("parameter vector must have even positive length"));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(invalid("parameters must be finite"));
        }
        Ok(Self { theta })
    }

    pub fn zeros(layers: usize) -> Self {
        Self {
            theta: vec![0.0; 2 * layers],
        }
    }

    /// Uniform draw from `[0, 2π)^{2L}`.
    pub fn random(layers: usize, rng: &mut impl Rng) -> Self {
        Self {
            theta: (0..2 * layers)
                .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
                .collect(),
        }
    }

    pub fn layers(&self) -> usize {
        self.theta.len() / 2
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }
}

impl TryFrom<Vec<f64>> for CircuitParams {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CircuitParams> for Vec<f64> {
    fn from(p: CircuitParams) -> Self {
        p.theta
    }
}

/// Modification of the circuit for a single evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvalRequest {
    /// `θ_l → θ_l + x`.
    LayerShift { layer: usize, x: f64 },
    /// Extra `e^{ixG_i}` right after layer `l`, where `G_i` is one term of
    /// that layer's generator: `X_i/2` for mixer qubit `i`, the cut indicator
    /// of edge `i` for a cost layer.
    GeneratorInsert { layer: usize, generator: usize, x: f64 },
}

impl EvalRequest {
    pub fn layer(&self) -> usize {
        match *self {
            EvalRequest::LayerShift { layer, .. } | EvalRequest::GeneratorInsert { layer, .. } => layer,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub amplitudes: Vec<Complex64>,
}

impl StateVector {
    pub fn plus(n: u32) -> Self {
        let dim = 1usize << n;
        let a = Complex64::new(1.0 / (dim as f64).sqrt(), 0.0);
        Self {
            amplitudes: vec![a; dim],
        }
    }

    pub fn basis(n: u32, z: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1usize << n];
        amplitudes[z] = Complex64::new(1.0, 0.0);
        Self { amplitudes }
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    fn inner(&self, other: &[Complex64]) -> Complex64 {
        self.amplitudes.iter().zip(other).map(|(a, b)| a.conj() * b).sum()
    }
}

/// Simulator for one graph, caching its cut table.
#[derive(Debug, Clone)]
pub struct QaoaSimulator {
    graph: Graph,
    cuts: Vec<u32>,
    maxcut: u32,
}

impl QaoaSimulator {
    pub fn new(graph: Graph) -> Result<Self> {
        let cuts = cut_values(&graph)?;
        let maxcut = cuts.iter().copied().max().unwrap_or(0);
        Ok(Self { graph, cuts, maxcut })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn cuts(&self) -> &[u32] {
        &self.cuts
    }

    pub fn maxcut(&self) -> u32 {
        self.maxcut
    }

    pub fn n_qubits(&self) -> u32 {
        self.graph.n
    }

    /// Number of commuting two-level generators in a layer of the given kind.
    pub fn generator_count(&self, kind: LayerKind) -> usize {
        match kind {
            LayerKind::Mixer => self.graph.n as usize,
            LayerKind::Cost => self.graph.edges.len(),
        }
    }

    /// Frequencies present in a single-parameter restriction for a layer kind.
    ///
    /// Mixer: even integers up to `N`. Cost: differences of achievable cut values.
    pub fn layer_spectrum(&self, kind: LayerKind) -> Result<FrequencySpectrum> {
        match kind {
            LayerKind::Mixer => FrequencySpectrum::new((2..=self.graph.n).step_by(2).collect()),
            LayerKind::Cost => {
                let mut present = vec![false; self.maxcut as usize + 1];
                for &c in &self.cuts {
                    present[c as usize] = true;
                }
                let vals: Vec<usize> = (0..present.len()).filter(|&c| present[c]).collect();
                let mut diffs = BTreeSet::new();
                for (i, &a) in vals.iter().enumerate() {
                    for &b in &vals[..i] {
                        diffs.insert((a - b) as u32);
                    }
                }
                FrequencySpectrum::new(diffs.into_iter().collect())
            }
        }
    }

    /// Spectral width `ν` of a layer: `N` for mixers, MaxCut for cost layers.
    pub fn layer_nu(&self, kind: LayerKind) -> u32 {
        match kind {
            LayerKind::Mixer => self.graph.n,
            LayerKind::Cost => self.maxcut,
        }
    }

    fn apply_cost(&self, psi: &mut [Complex64], gamma: f64) {
        let table: Vec<Complex64> = (0..=self.maxcut)
            .map(|c| Complex64::from_polar(1.0, gamma * c as f64))
            .collect();
        for (a, &c) in psi.iter_mut().zip(&self.cuts) {
            *a *= table[c as usize];
        }
    }

    fn apply_edge_phase(&self, psi: &mut [Complex64], edge: usize, x: f64) {
        let (i, j) = self.graph.edges[edge];
        let phase = Complex64::from_polar(1.0, x);
        for (z, a) in psi.iter_mut().enumerate() {
            if ((z >> i) ^ (z >> j)) & 1 == 1 {
                *a *= phase;
            }
        }
    }

    /// `e^{iβX_q/2}` on qubit `q`.
    fn apply_rx(psi: &mut [Complex64], q: u32, beta: f64) {
        let (s, c) = (beta / 2.0).sin_cos();
        let is = Complex64::new(0.0, s);
        let stride = 1usize << q;
        for block in psi.chunks_mut(2 * stride) {
            let (lo, hi) = block.split_at_mut(stride);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x * c + y * is;
                *b = x * is + y * c;
            }
        }
    }

    fn apply_mixer(&self, psi: &mut [Complex64], beta: f64) {
        for q in 0..self.graph.n {
            Self::apply_rx(psi, q, beta);
        }
    }

    fn apply_layer(&self, psi: &mut [Complex64], index: usize, angle: f64) {
        match LayerKind::of(index) {
            LayerKind::Mixer => self.apply_mixer(psi, angle),
            LayerKind::Cost => self.apply_cost(psi, angle),
        }
    }

    /// Parameter indices in application order.
    fn schedule(layers: usize) -> impl DoubleEndedIterator<Item = usize> {
        (0..layers).flat_map(|a| [2 * a + 1, 2 * a])
    }

    fn validate(&self, params: &CircuitParams, request: Option<&EvalRequest>) -> Result<()> {
        if let Some(r) = request {
            let l = r.layer();
            if l >= params.len() {
                return Err(invalid(format!(
                    "layer {l} out of range for {} parameters",
                    params.len()
                )));
            }
            if let EvalRequest::GeneratorInsert { generator, .. } = *r {
                let count = self.generator_count(LayerKind::of(l));
                if generator >= count {
                    return Err(invalid(format!(
                        "generator {generator} out of range ({count} in layer {l})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn prepare_state(&self, params: &CircuitParams, request: Option<&EvalRequest>) -> Result<StateVector> {
        self.validate(params, request)?;
        let mut state = StateVector::plus(self.graph.n);
        let psi = &mut state.amplitudes;
        for l in Self::schedule(params.layers()) {
            let mut angle = params.theta[l];
            if let Some(&EvalRequest::LayerShift { layer, x }) = request {
                if layer == l {
                    angle += x;
                }
            }
            self.apply_layer(psi, l, angle);
            if let Some(&EvalRequest::GeneratorInsert { layer, generator, x }) = request {
                if layer == l {
                    match LayerKind::of(l) {
                        LayerKind::Mixer => Self::apply_rx(psi, generator as u32, x),
                        LayerKind::Cost => self.apply_edge_phase(psi, generator, x),
                    }
                }
            }
        }
        Ok(state)
    }

    /// `⟨ψ|H_c|ψ⟩ = -Σ_z |ψ_z|² cut(z)`.
    pub fn expectation(&self, state: &StateVector) -> f64 {
        -state
            .amplitudes
            .iter()
            .zip(&self.cuts)
            .map(|(a, &c)| a.norm_sqr() * c as f64)
            .sum::<f64>()
    }

    /// Exact cost, optionally under a modification.
    pub fn evaluate(&self, params: &CircuitParams, request: Option<&EvalRequest>) -> Result<f64> {
        Ok(self.expectation(&self.prepare_state(params, request)?))
    }

    /// Probability of each cut value.
    pub fn cut_distribution(&self, state: &StateVector) -> Vec<f64> {
        let mut p = vec![0.0; self.maxcut as usize + 1];
        for (a, &c) in state.amplitudes.iter().zip(&self.cuts) {
            p[c as usize] += a.norm_sqr();
        }
        p
    }

    /// Draws `shots` bitstrings and returns the sample mean and unbiased
    /// sample variance of `-cut`. The variance is 0 for a single shot.
    ///
    /// Only the cut value of each bitstring enters the estimate, so the
    /// draw is performed on the cut-value marginal with sequential binomials.
    pub fn sample_measurement(&self, state: &StateVector, shots: u64, rng: &mut impl Rng) -> Result<(f64, f64)> {
        if shots == 0 {
            return Err(invalid("need at least one shot"));
        }
        let counts = multinomial(&self.cut_distribution(state), shots, rng);
        let n = shots as f64;
        let mean_cut = counts
            .iter()
            .enumerate()
            .map(|(c, &k)| c as f64 * k as f64)
            .sum::<f64>()
            / n;
        let var = if shots > 1 {
            counts
                .iter()
                .enumerate()
                .map(|(c, &k)| k as f64 * (c as f64 - mean_cut).powi(2))
                .sum::<f64>()
                / (n - 1.0)
        } else {
            0.0
        };
        Ok((-mean_cut, var))
    }

    /// `∂F/∂θ_l` for every parameter via one forward and one backward sweep.
    pub fn exact_gradient(&self, params: &CircuitParams) -> Result<Vec<f64>> {
        let phi = self.prepare_state(params, None)?;
        let mut phi = phi.amplitudes;
        let mut lambda: Vec<Complex64> = phi.iter().zip(&self.cuts).map(|(a, &c)| -*a * c as f64).collect();
        let mut grad = vec![0.0; params.len()];
        let mut g_phi = vec![Complex64::new(0.0, 0.0); phi.len()];
        for l in Self::schedule(params.layers()).rev() {
            // G φ for the layer generator
            match LayerKind::of(l) {
                LayerKind::Cost => {
                    for ((g, a), &c) in g_phi.iter_mut().zip(&phi).zip(&self.cuts) {
                        *g = *a * c as f64;
                    }
                }
                LayerKind::Mixer => {
                    g_phi.iter_mut().for_each(|g| *g = Complex64::new(0.0, 0.0));
                    for q in 0..self.graph.n {
                        let bit = 1usize << q;
                        for (z, g) in g_phi.iter_mut().enumerate() {
                            *g += phi[z ^ bit] * 0.5;
                        }
                    }
                }
            }
            let ip: Complex64 = lambda.iter().zip(&g_phi).map(|(a, b)| a.conj() * b).sum();
            // d/dθ ⟨φ|O|φ⟩ = 2 Re ⟨λ| iG |φ⟩
            grad[l] = 2.0 * (Complex64::i() * ip).re;
            let back = -params.theta[l];
            self.apply_layer(&mut phi, l, back);
            self.apply_layer(&mut lambda, l, back);
        }
        Ok(grad)
    }

    /// Exact Fourier model of `x ↦ F(θ + x e_l)` on the full band `1..=ν`.
    pub fn exact_fourier_scan(&self, params: &CircuitParams, layer: usize) -> Result<FourierModel> {
        let nu = self.layer_nu(LayerKind::of(layer));
        if nu == 0 {
            return Err(invalid("layer has no nonzero frequencies"));
        }
        let samples = fourier_grid(nu)
            .into_iter()
            .map(|x| self.evaluate(params, Some(&EvalRequest::LayerShift { layer, x })))
            .collect::<Result<Vec<_>>>()?;
        exact_fourier_coeffs(&samples, nu)
    }

    pub fn approximation_ratio(&self, params: &CircuitParams) -> Result<f64> {
        Ok(-self.evaluate(params, None)? / self.maxcut as f64)
    }
}

/// Multinomial draw via sequential conditional binomials.
pub fn multinomial(probs: &[f64], n: u64, rng: &mut impl Rng) -> Vec<u64> {
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = n;
    let mut mass: f64 = probs.iter().sum();
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() {
            counts[i] = remaining;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = if q >= 1.0 {
            remaining
        } else if q <= 0.0 {
            0
        } else {
            Binomial::new(remaining, q).expect("valid binomial").sample(rng)
        };
        counts[i] = k;
        remaining -= k;
        mass -= p;
    }
    counts
}

/// Inner product helper used by tests of the adjoint sweep.
pub fn overlap(a: &StateVector, b: &StateVector) -> Complex64 {
    a.inner(&b.amplitudes)
}
