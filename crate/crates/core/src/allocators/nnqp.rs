use nalgebra::{DMatrix, DVector};

/// Minimises `½ uᵀQu - cᵀu` over `u ≥ 0` for symmetric positive
/// semidefinite `Q`, using a Lawson–Hanson style active-set method.
///
/// Returns the minimiser. Subproblems that are singular on the free set are
/// solved in the least-squares sense.
pub fn solve_nonneg_qp(q: &DMatrix<f64>, c: &DVector<f64>) -> DVector<f64> {
    let n = c.len();
    let scale = (0..n)
        .map(|i| q[(i, i)].abs())
        .fold(0.0, f64::max)
        .max(c.amax())
        .max(f64::MIN_POSITIVE);
    let tol = 1e-13 * scale;
    let mut u = DVector::<f64>::zeros(n);
    let mut free = vec![false; n];
    for _outer in 0..(10 * n + 50) {
        let grad = c - q * &u;
        // first index wins ties, so symmetric problems resolve deterministically
        let mut candidate: Option<usize> = None;
        for j in (0..n).filter(|&j| !free[j]) {
            if candidate.is_none_or(|b| grad[j] > grad[b]) {
                candidate = Some(j);
            }
        }
        match candidate {
            Some(j) if grad[j] > tol => free[j] = true,
            _ => break,
        }
        for _inner in 0..(10 * n + 50) {
            let idx: Vec<usize> = (0..n).filter(|&j| free[j]).collect();
            let z_free = solve_subproblem(q, c, &idx);
            let mut z = DVector::<f64>::zeros(n);
            for (k, &j) in idx.iter().enumerate() {
                z[j] = z_free[k];
            }
            if idx.iter().all(|&j| z[j] > 0.0) {
                u = z;
                break;
            }
            // step towards z until the first free variable hits zero
            let mut alpha: f64 = 1.0;
            for &j in &idx {
                if z[j] <= 0.0 {
                    let denom = u[j] - z[j];
                    if denom > 0.0 {
                        alpha = alpha.min(u[j] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            u += (z - &u) * alpha;
            for &j in &idx {
                if u[j] <= 1e-15 * u.amax().max(1e-300) {
                    u[j] = 0.0;
                    free[j] = false;
                }
            }
            if !free.iter().any(|&f| f) {
                break;
            }
        }
    }
    u
}

fn solve_subproblem(q: &DMatrix<f64>, c: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    let k = idx.len();
    let qs = DMatrix::from_fn(k, k, |a, b| q[(idx[a], idx[b])]);
    let cs = DVector::from_fn(k, |a, _| c[idx[a]]);
    if let Some(ch) = qs.clone().cholesky() {
        let z = ch.solve(&cs);
        // accept only if the factorisation was well conditioned
        let resid = (&qs * &z - &cs).amax();
        if resid <= 1e-10 * cs.amax().max(f64::MIN_POSITIVE) {
            return z;
        }
    }
    let svd = qs.svd(true, true);
    let eps = 1e-13 * svd.singular_values.max();
    svd.solve(&cs, eps).unwrap_or_else(|_| DVector::zeros(k))
}
