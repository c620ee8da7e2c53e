//! Seeded instance generators and independent numerical oracles for the
//! acceptance suite. The oracles share no code with `coalition_core`.

use coalition_core::{Instance, WardropSplit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SEED: u64 = 0x5eed_c0a1;

pub fn rng(stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(SEED);
    r.set_stream(stream);
    r
}

pub fn random_capacities<R: Rng>(rng: &mut R, n: usize, cap_max: u32) -> Vec<u32> {
    (0..n).map(|_| rng.gen_range(1..=cap_max)).collect()
}

/// Λ drawn log-uniformly from `[lo·N, hi·N]`.
pub fn random_lambda<R: Rng>(rng: &mut R, total: u32, lo: f64, hi: f64) -> f64 {
    let t: f64 = rng.gen();
    f64::from(total) * (lo.ln() + t * (hi.ln() - lo.ln())).exp()
}

/// The shared instance set: `count` instances with `2 ≤ n ≤ 5`, capacities
/// in `1..=20` and Λ in `[0.1N, 10N]`.
pub fn base_instances(count: usize) -> Vec<Instance> {
    let mut r = rng(1);
    (0..count)
        .map(|_| {
            let n = r.gen_range(2..=5);
            let caps = random_capacities(&mut r, n, 20);
            let total = caps.iter().sum();
            let lambda = random_lambda(&mut r, total, 0.1, 10.0);
            Instance::new(caps, lambda, 1.0).expect("valid random instance")
        })
        .collect()
}

/// A payoff vector consistent with `split`: each coalition's rate is divided
/// among its members with random positive weights.
pub fn random_consistent_phi<R: Rng>(rng: &mut R, split: &WardropSplit, n: usize) -> Vec<f64> {
    let mut phi = vec![0.0; n];
    for (c, rate) in split.rates() {
        let members: Vec<usize> = c.members().collect();
        let weights: Vec<f64> = members.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for (&i, w) in members.iter().zip(&weights) {
            phi[i] = rate * w / total;
        }
    }
    phi
}

/// `ln B(k, a)` from the finite series `1/B = Σ_j k!/j! · a^{j-k}`, summed
/// in log space.
pub fn oracle_ln_erlang_b(servers: u32, load: f64) -> f64 {
    let ln_a = load.ln();
    // ln(k!/j!) accumulated downwards from j = k
    let mut ln_ratio = vec![0.0; servers as usize + 1];
    for j in (0..servers as usize).rev() {
        ln_ratio[j] = ln_ratio[j + 1] + ((j + 1) as f64).ln();
    }
    let terms: Vec<f64> = (0..=servers)
        .map(|j| ln_ratio[j as usize] + (f64::from(j) - f64::from(servers)) * ln_a)
        .collect();
    let peak = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - peak).exp()).sum();
    -(peak + sum.ln())
}

pub fn oracle_erlang_b(servers: u32, load: f64) -> f64 {
    oracle_ln_erlang_b(servers, load).exp()
}

/// Result of the dense-grid duopoly oracle.
#[derive(Clone, Copy, Debug)]
pub struct GridRoot {
    /// Arrival rate of the `k`-server side.
    pub rate: f64,
    /// Sign changes seen on the coarse grid.
    pub sign_changes: usize,
}

/// Scans `x ↦ ln B(k, x/μ) - ln B(N-k, (Λ-x)/μ)` on `points` interior grid
/// points of `(0, Λ)`, then bisects the bracketing cell down to `1e-12·Λ`.
pub fn oracle_duopoly_rate(k: u32, other: u32, lambda: f64, mu: f64, points: usize) -> GridRoot {
    let f = |x: f64| oracle_ln_erlang_b(k, x / mu) - oracle_ln_erlang_b(other, (lambda - x) / mu);
    let step = lambda / (points + 1) as f64;
    let xs: Vec<f64> = (1..=points).map(|i| step * i as f64).collect();
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut sign_changes = 0;
    let mut cell = None;
    let mut lo_val = (0.0, f64::NEG_INFINITY);
    for (&x, &v) in xs.iter().zip(&fs) {
        if (lo_val.1 < 0.0) != (v < 0.0) {
            sign_changes += 1;
            cell.get_or_insert((lo_val.0, x));
        }
        lo_val = (x, v);
    }
    let (mut lo, mut hi) = cell.unwrap_or((xs[points - 1], lambda));
    while hi - lo > 1e-12 * lambda {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    GridRoot {
        rate: 0.5 * (lo + hi),
        sign_changes: sign_changes.max(usize::from(cell.is_none())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_matches_closed_forms() {
        // B(1, a) = a / (1 + a); B(2, a) = a²/2 / (1 + a + a²/2)
        for a in [0.01, 0.7, 3.0, 250.0] {
            assert!((oracle_erlang_b(1, a) - a / (1.0 + a)).abs() < 1e-14);
            let b2 = 0.5 * a * a / (1.0 + a + 0.5 * a * a);
            assert!((oracle_erlang_b(2, a) / b2 - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn symmetric_duopoly_splits_evenly() {
        let g = oracle_duopoly_rate(6, 6, 9.0, 1.0, 10_000);
        assert_eq!(g.sign_changes, 1);
        assert!((g.rate - 4.5).abs() < 1e-9);
    }

    #[test]
    fn generator_is_deterministic() {
        let a = base_instances(5);
        let b = base_instances(5);
        assert_eq!(a, b);
        for inst in &a {
            let n = f64::from(inst.total_capacity());
            assert!((2..=5).contains(&inst.n()));
            assert!(inst.lambda() >= 0.1 * n && inst.lambda() <= 10.0 * n);
        }
    }
}
