//! Wardrop equilibrium splits of the market and pessimal anticipated worths.
//!
//! Customers join coalitions until every coalition shows the same blocking
//! probability `B*`. The solver works on `y = ln B*`: for a candidate `y`
//! each coalition's offered load is the unique `a` with `ln B(N_C, a) = y`,
//! and the outer search drives `Σ a_C(y)` to the total offered load. Both
//! levels keep a sign-change bracket and take Newton steps only when they
//! stay inside it, using `d ln B / d ln a = N - a (1 - B)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::enumerate::SetPartitions;
use crate::erlang::{ln_erlang_b, ln_erlang_b_real};
use crate::error::{Error, Result};
use crate::instance::{Coalition, Instance, Partition};
use crate::roots::{find_increasing, Tolerance};

/// Largest agent count for which subset-sum queries (Ψ, k*) enumerate coalitions.
pub const SUBSET_CAP: usize = 20;

/// Acceptable drift of `Σ λ_C` from Λ, relative to Λ.
pub const SUM_TOLERANCE: f64 = 1e-9;
/// Acceptable spread of the per-coalition blocking probabilities.
pub const BLOCKING_TOLERANCE: f64 = 1e-9;

const MAX_ITER: usize = 200;
/// `ln a` below which an equilibrium load is considered to have underflowed.
const LN_LOAD_FLOOR: f64 = -700.0;

/// Equilibrium split of the market across the coalitions of a partition.
#[derive(Clone, Debug, PartialEq)]
pub struct WardropSplit {
    partition: Partition,
    rates: Vec<f64>,
    common_blocking: f64,
    residual: f64,
    sum_error: f64,
}

impl WardropSplit {
    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// `(C, λ_C)` pairs in partition order.
    pub fn rates(&self) -> impl Iterator<Item = (Coalition, f64)> + '_ {
        self.partition
            .coalitions()
            .iter()
            .copied()
            .zip(self.rates.iter().copied())
    }

    pub fn rate(&self, c: Coalition) -> Option<f64> {
        self.partition.index_of(c).map(|i| self.rates[i])
    }

    pub fn rate_at(&self, index: usize) -> f64 {
        self.rates[index]
    }

    /// The common blocking probability `B*`.
    pub fn common_blocking(&self) -> f64 {
        self.common_blocking
    }

    /// `max_C |B(N_C, λ_C/μ) - B*|` achieved by the solver.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// `|Σ_C λ_C - Λ|`.
    pub fn sum_error(&self) -> f64 {
        self.sum_error
    }
}

/// Equilibrium offered loads for coalitions with the given server counts.
/// Returns the loads and `ln B*`.
fn equilibrium_loads(caps: &[u32], load: f64) -> Result<(Vec<f64>, f64)> {
    if caps.len() == 1 {
        return Ok((vec![load], ln_erlang_b(caps[0], load)));
    }
    let largest = *caps.iter().max().expect("non-empty");
    let k = caps.len() as f64;
    // the largest coalition alone absorbs Λ/k at the bottom of the bracket and Λ at the top
    let y_lo = ln_erlang_b(largest, load / k);
    let y_hi = ln_erlang_b(largest, load);

    let loads_at = |y: f64| -> Result<(Vec<f64>, f64)> {
        let mut loads = Vec::with_capacity(caps.len());
        let mut slope = 0.0;
        for &m in caps {
            let a = invert_blocking(m, y, load)?;
            let b = y.exp();
            slope += a / (f64::from(m) - a * (1.0 - b));
            loads.push(a);
        }
        Ok((loads, slope))
    };

    let mut failure = None;
    let root = find_increasing(
        "wardrop common blocking",
        |y| match loads_at(y) {
            Ok((loads, slope)) => (loads.iter().sum::<f64>() - load, slope),
            Err(e) => {
                failure.get_or_insert(e);
                (f64::NAN, f64::NAN)
            }
        },
        y_lo,
        y_hi,
        Tolerance {
            x_tol: 1e-15 * y_lo.abs().max(1e-3),
            f_tol: 1e-14 * load,
            max_iter: MAX_ITER,
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let (loads, _) = loads_at(root.x)?;
    Ok((loads, root.x))
}

/// Offered load `a` with `ln B(servers, a) = y`.
fn invert_blocking(servers: u32, y: f64, load: f64) -> Result<f64> {
    let h = |u: f64| {
        let a = u.exp();
        let ln_b = ln_erlang_b(servers, a);
        let slope = f64::from(servers) - a * (1.0 - ln_b.exp());
        (ln_b - y, slope)
    };
    let u_hi = load.ln();
    let mut u_lo = u_hi - 8.0;
    while h(u_lo).0 >= 0.0 {
        u_lo -= 16.0;
        if u_lo < LN_LOAD_FLOOR {
            return Err(Error::Domain(format!(
                "equilibrium load for {servers} servers underflows (ln B* = {y})"
            )));
        }
    }
    let root = find_increasing(
        "blocking inversion",
        h,
        u_lo,
        u_hi,
        Tolerance {
            x_tol: 1e-15,
            f_tol: 1e-15 * y.abs().max(1e-3),
            max_iter: MAX_ITER,
        },
    )?;
    Ok(root.x.exp())
}

/// Solves the Wardrop equilibrium of `p`.
pub fn solve_we(inst: &Instance, p: &Partition) -> Result<WardropSplit> {
    let covered = p.coalitions().iter().fold(0u32, |m, c| m | c.mask());
    if covered != inst.grand().mask() {
        return Err(Error::InvalidPartition(format!(
            "{p} does not partition the {} agents of the instance",
            inst.n()
        )));
    }
    let caps: Vec<u32> = p
        .coalitions()
        .iter()
        .map(|&c| inst.capacity_of(c))
        .collect();
    let load = inst.offered_load();
    let (loads, ln_b_star) = equilibrium_loads(&caps, load)?;

    let b_star = ln_b_star.exp();
    let residual = caps
        .iter()
        .zip(&loads)
        .map(|(&m, &a)| (ln_erlang_b(m, a).exp() - b_star).abs())
        .fold(0.0, f64::max);
    let rates: Vec<f64> = loads.iter().map(|a| a * inst.mu()).collect();
    let sum_error = (rates.iter().sum::<f64>() - inst.lambda()).abs();

    if sum_error > SUM_TOLERANCE * inst.lambda() || residual > BLOCKING_TOLERANCE {
        return Err(Error::NonConvergence {
            method: "wardrop equilibrium",
            iterations: MAX_ITER,
            residual: residual.max(sum_error / inst.lambda()),
        });
    }
    if let Some(i) = rates.iter().position(|&r| !(r > 0.0)) {
        return Err(Error::InvariantViolation(format!(
            "coalition {} received no traffic",
            p.coalitions()[i]
        )));
    }
    Ok(WardropSplit {
        partition: p.clone(),
        rates,
        common_blocking: b_star,
        residual,
        sum_error,
    })
}

/// Equilibrium offered load of the larger side of a duopoly with real
/// server counts `k` and `total - k` (`k ≥ total/2`), using the integral
/// extension of the Erlang-B formula. Plain bisection on the smaller side's
/// log-load.
pub fn duopoly_load_real(k: f64, total: f64, load: f64) -> Result<f64> {
    let other = total - k;
    if !(other > 0.0 && k >= other) {
        return Err(Error::Domain(format!(
            "need total/2 <= k < total, got k={k}, total={total}"
        )));
    }
    let mut failure = None;
    let mut f = |u: f64| {
        let small = u.exp();
        let diff =
            ln_erlang_b_real(other, small).and_then(|l| Ok(l - ln_erlang_b_real(k, load - small)?));
        match diff {
            Ok(d) => d,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };
    // the smaller side never gets more than half the market
    let u_hi = (0.5 * load).ln();
    let mut u_lo = u_hi - 4.0;
    while f(u_lo) >= 0.0 {
        u_lo -= 8.0;
        if u_lo < LN_LOAD_FLOOR {
            return Err(Error::Domain("duopoly split underflows".into()));
        }
    }
    let root = find_increasing(
        "real-capacity duopoly",
        |u| (f(u), f64::NAN),
        u_lo,
        u_hi,
        Tolerance {
            x_tol: 1e-13,
            f_tol: 0.0,
            max_iter: MAX_ITER,
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(load - root.x.exp())
}

/// `ȗλ_Q`: the least equilibrium rate `Q` can be held to by any arrangement
/// of the agents outside it.
#[derive(Clone, Debug, PartialEq)]
pub struct AnticipatedWorth {
    pub value: f64,
    pub minimizing_partition: Partition,
    /// Number of arrangements examined.
    pub arrangements: usize,
}

/// Ψ values and their maximisers among achievable duopoly capacities.
#[derive(Clone, Debug, PartialEq)]
pub struct KStar {
    /// `(k, Ψ(k))` for every achievable larger-side capacity, increasing in `k`.
    pub profile: Vec<(u32, f64)>,
    /// The argmax set `k*`.
    pub ks: Vec<u32>,
    /// `ℂ*`: proper coalitions whose capacity lies in `k*`.
    pub coalitions: Vec<Coalition>,
}

/// An instance with memoised equilibrium splits and anticipated worths.
///
/// Cached values are computed outside the lock and inserted idempotently, so
/// concurrent callers observe the same results as a sequential run.
#[derive(Debug)]
pub struct Game {
    inst: Instance,
    splits: Mutex<HashMap<Partition, Arc<WardropSplit>>>,
    worths: Mutex<HashMap<Coalition, Arc<AnticipatedWorth>>>,
}

impl Game {
    pub fn new(inst: Instance) -> Self {
        Game {
            inst,
            splits: Mutex::new(HashMap::new()),
            worths: Mutex::new(HashMap::new()),
        }
    }

    pub fn instance(&self) -> &Instance {
        &self.inst
    }

    pub fn lambda(&self) -> f64 {
        self.inst.lambda()
    }

    pub fn split(&self, p: &Partition) -> Result<Arc<WardropSplit>> {
        if let Some(s) = self.splits.lock().expect("cache lock").get(p) {
            return Ok(Arc::clone(s));
        }
        let s = Arc::new(solve_we(&self.inst, p)?);
        let mut cache = self.splits.lock().expect("cache lock");
        Ok(Arc::clone(cache.entry(p.clone()).or_insert(s)))
    }

    /// `λ_C^P` for `C ∈ P`.
    pub fn rate(&self, p: &Partition, c: Coalition) -> Result<f64> {
        self.split(p)?
            .rate(c)
            .ok_or_else(|| Error::InvalidPartition(format!("{c} is not a coalition of {p}")))
    }

    pub fn anticipated_worth(&self, q: Coalition) -> Result<Arc<AnticipatedWorth>> {
        if let Some(w) = self.worths.lock().expect("cache lock").get(&q) {
            return Ok(Arc::clone(w));
        }
        let w = Arc::new(self.compute_anticipated_worth(q)?);
        let mut cache = self.worths.lock().expect("cache lock");
        Ok(Arc::clone(cache.entry(q).or_insert(w)))
    }

    /// Shorthand for `anticipated_worth(q)?.value`.
    pub fn pessimal(&self, q: Coalition) -> Result<f64> {
        Ok(self.anticipated_worth(q)?.value)
    }

    fn compute_anticipated_worth(&self, q: Coalition) -> Result<AnticipatedWorth> {
        let grand = self.inst.grand();
        if !q.is_subset_of(grand) {
            return Err(Error::Domain(format!(
                "{q} names agents outside the instance"
            )));
        }
        let Some(rest) = grand.without(q) else {
            return Ok(AnticipatedWorth {
                value: self.inst.lambda(),
                minimizing_partition: Partition::grand(self.inst.n()),
                arrangements: 1,
            });
        };
        let mut best: Option<(f64, Partition)> = None;
        let mut arrangements = 0;
        for mut outside in SetPartitions::of(rest)? {
            outside.push(q);
            let p = Partition::from_disjoint(outside);
            let value = self.rate(&p, q)?;
            arrangements += 1;
            if best.as_ref().is_none_or(|(v, _)| value < *v) {
                best = Some((value, p));
            }
        }
        let (value, minimizing_partition) = best.expect("at least one arrangement");
        Ok(AnticipatedWorth {
            value,
            minimizing_partition,
            arrangements,
        })
    }

    /// Capacities `k ≥ N - k` realised by some proper coalition, increasing.
    pub fn achievable_capacities(&self) -> Result<Vec<u32>> {
        let n = self.inst.n();
        if n > SUBSET_CAP {
            return Err(Error::TooLarge {
                what: "subset enumeration",
                size: n,
                limit: SUBSET_CAP,
            });
        }
        let total = self.inst.total_capacity();
        let mut ks: Vec<u32> = proper_coalitions(n)
            .map(|c| self.inst.capacity_of(c))
            .filter(|&k| 2 * k >= total)
            .collect();
        ks.sort_unstable();
        ks.dedup();
        Ok(ks)
    }

    /// `Ψ(k; Λ) = λ_k / k`, the per-server rate of the larger coalition of a
    /// duopoly whose larger side has `k` servers.
    pub fn psi(&self, k: u32) -> Result<f64> {
        let total = self.inst.total_capacity();
        if 2 * k < total || k >= total {
            return Err(Error::Domain(format!(
                "Ψ needs N/2 <= k < N (N = {total}), got {k}"
            )));
        }
        if self.inst.n() > SUBSET_CAP {
            return Err(Error::TooLarge {
                what: "subset enumeration",
                size: self.inst.n(),
                limit: SUBSET_CAP,
            });
        }
        let rep = proper_coalitions(self.inst.n())
            .find(|&c| self.inst.capacity_of(c) == k)
            .ok_or_else(|| Error::Domain(format!("no proper coalition has exactly {k} servers")))?;
        let rest = self.inst.grand().without(rep).expect("proper coalition");
        let p = Partition::from_disjoint(vec![rep, rest]);
        Ok(self.rate(&p, rep)? / f64::from(k))
    }

    /// `k*(Λ)` and `ℂ*`. Ties within relative 1e-9 of the maximum are kept.
    pub fn k_star(&self) -> Result<KStar> {
        if self.inst.n() < 2 {
            return Err(Error::Domain("k* needs at least two agents".into()));
        }
        let profile = self
            .achievable_capacities()?
            .into_iter()
            .map(|k| Ok((k, self.psi(k)?)))
            .collect::<Result<Vec<_>>>()?;
        let best = profile
            .iter()
            .map(|&(_, v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        let ks: Vec<u32> = profile
            .iter()
            .filter(|&&(_, v)| v >= best - 1e-9 * best.abs())
            .map(|&(k, _)| k)
            .collect();
        let coalitions = proper_coalitions(self.inst.n())
            .filter(|&c| ks.contains(&self.inst.capacity_of(c)))
            .collect();
        Ok(KStar {
            profile,
            ks,
            coalitions,
        })
    }
}

/// Non-empty proper coalitions of `n` agents, by increasing mask.
pub(crate) fn proper_coalitions(n: usize) -> impl Iterator<Item = Coalition> {
    let full = Coalition::full(n).mask();
    (1..full).filter_map(Coalition::from_mask)
}

/// Uncached `ȗλ_Q`.
pub fn anticipated_worth(inst: &Instance, q: Coalition) -> Result<AnticipatedWorth> {
    Game::new(inst.clone()).compute_anticipated_worth(q)
}

pub fn psi(inst: &Instance, k: u32) -> Result<f64> {
    Game::new(inst.clone()).psi(k)
}

pub fn k_star(inst: &Instance) -> Result<KStar> {
    Game::new(inst.clone()).k_star()
}
