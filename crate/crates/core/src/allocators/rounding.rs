use crate::error::{Error, Result};

/// Integer rounds per position for a budget of `m` shots.
///
/// Starts from the nearest integer to the proportional share
/// `m|w_i|/(2‖w‖₁)`, raising it to one when `min_one` is set. Overshoot is
/// removed where it costs the least statistical error, then any leftover
/// pairs of shots go where they reduce `Σ w_i²/m_i` the most. Positions
/// that end with zero rounds are left at zero; callers drop them.
pub fn allocate_rounds(weights: &[f64], m: u64, min_one: bool) -> Result<Vec<u64>> {
    let n = weights.len();
    let floor_round = if min_one { 1 } else { 0 };
    let active: Vec<bool> = weights.iter().map(|w| *w != 0.0).collect();
    let n_active = active.iter().filter(|&&a| a).count() as u64;
    if min_one && 2 * n_active > m {
        return Err(Error::BudgetTooSmall {
            needed: 2 * n_active,
            got: m,
        });
    }
    let l1: f64 = weights.iter().map(|w| w.abs()).sum();
    let mut rounds = vec![0u64; n];
    if l1 == 0.0 {
        return Ok(rounds);
    }
    for i in 0..n {
        if active[i] {
            let ideal = m as f64 * weights[i].abs() / (2.0 * l1);
            rounds[i] = (ideal.round() as u64).max(floor_round);
        }
    }
    if m >= 2 && rounds.iter().all(|&r| r == 0) {
        let top = (0..n)
            .max_by(|&a, &b| weights[a].abs().total_cmp(&weights[b].abs()))
            .expect("nonzero weights exist");
        rounds[top] = 1;
    }
    let cost = |w: f64, r: u64| if r == 0 { f64::INFINITY } else { w * w / r as f64 };
    let mut used: u64 = rounds.iter().map(|r| 2 * r).sum();
    while used > m {
        // cheapest removal
        let i = (0..n)
            .filter(|&i| rounds[i] > floor_round)
            .min_by(|&a, &b| {
                let da = cost(weights[a], rounds[a] - 1) - cost(weights[a], rounds[a]);
                let db = cost(weights[b], rounds[b] - 1) - cost(weights[b], rounds[b]);
                da.total_cmp(&db)
            })
            .expect("budget covers the minimum rounds");
        rounds[i] -= 1;
        used -= 2;
    }
    while m - used >= 2 {
        let best = (0..n).filter(|&i| active[i] && rounds[i] > 0).max_by(|&a, &b| {
            let ga = cost(weights[a], rounds[a]) - cost(weights[a], rounds[a] + 1);
            let gb = cost(weights[b], rounds[b]) - cost(weights[b], rounds[b] + 1);
            ga.total_cmp(&gb)
        });
        match best {
            Some(i) => {
                rounds[i] += 1;
                used += 2;
            }
            None => break,
        }
    }
    Ok(rounds)
}
