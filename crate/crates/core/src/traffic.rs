//! Heavy- and light-traffic diagnostics for duopolies.

use crate::enumerate::{enumerate_duopolies, proper_subsets};
use crate::error::{Error, Result};
use crate::instance::{Coalition, Instance, Partition};
use crate::stability::is_stable_partition_rbia;
use crate::wardrop::{duopoly_load_real, Game};

/// Agent cap for [`regime_sweep`].
pub const SWEEP_AGENT_CAP: usize = 8;
/// Grid length cap for [`regime_sweep`].
pub const SWEEP_GRID_CAP: usize = 64;

/// `(k, Ψ(k))` for real larger-side capacities `k ∈ [N/2, N)` at total rate `lambda`.
pub fn psi_profile_real(inst: &Instance, lambda: f64, k_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Domain(format!(
            "arrival rate must be positive, got {lambda}"
        )));
    }
    let total = f64::from(inst.total_capacity());
    let load = lambda / inst.mu();
    k_grid
        .iter()
        .map(|&k| {
            if !(2.0 * k >= total && k < total) {
                return Err(Error::Domain(format!(
                    "k = {k} outside [N/2, N) for N = {total}"
                )));
            }
            let a = duopoly_load_real(k, total, load)?;
            Ok((k, a * inst.mu() / k))
        })
        .collect()
}

/// Evenly spaced real capacities from `N/2` to `N - margin`.
pub fn real_k_grid(total: u32, margin: f64, step: f64) -> Vec<f64> {
    let lo = f64::from(total) / 2.0;
    let hi = f64::from(total) - margin;
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=count).map(|i| lo + step * i as f64).collect()
}

/// The larger coalition of a duopoly (the one holding agent 0 on ties).
pub fn larger_side(inst: &Instance, p: &Partition) -> Coalition {
    let [a, b] = p.coalitions() else {
        panic!("larger_side needs a 2-partition, got {p}");
    };
    if inst.capacity_of(*b) > inst.capacity_of(*a) {
        *b
    } else {
        *a
    }
}

/// Duopolies whose larger coalition contains no proper sub-coalition with
/// more than half the servers. Purely combinatorial.
pub fn light_traffic_class(inst: &Instance) -> Vec<Partition> {
    let total = inst.total_capacity();
    enumerate_duopolies(inst.n())
        .filter(|p| {
            let big = larger_side(inst, p);
            proper_subsets(big).all(|c| 2 * inst.capacity_of(c) <= total)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Light,
    Heavy,
}

/// Classification of every duopoly at one arrival rate.
#[derive(Clone, Debug, PartialEq)]
pub struct RegimePoint {
    pub lambda: f64,
    /// RB-IA stable-partition verdict per duopoly, aligned with [`RegimeReport::duopolies`].
    pub stable: Vec<bool>,
    /// `λ_{C1} / Λ` per duopoly.
    pub light_concentration: Vec<f64>,
    /// `λ_{C1} / (Λ k / N)` per duopoly.
    pub heavy_concentration: Vec<f64>,
    /// Number of achievable `k` (increasing) at which Ψ fails to increase.
    pub psi_violations: usize,
    /// Which limiting stable set this point already matches.
    pub limits: Vec<Regime>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegimeReport {
    pub instance: Instance,
    pub lambda_grid: Vec<f64>,
    pub duopolies: Vec<Partition>,
    /// Larger-side capacity of each duopoly.
    pub larger_capacity: Vec<u32>,
    /// Indices into `duopolies` of the light-traffic class.
    pub light_class: Vec<usize>,
    pub points: Vec<RegimePoint>,
}

impl RegimeReport {
    /// Indices of the stable duopolies at grid point `i`.
    pub fn stable_set(&self, i: usize) -> Vec<usize> {
        (0..self.duopolies.len())
            .filter(|&d| self.points[i].stable[d])
            .collect()
    }

    /// Whether each stable set contains the one before it.
    pub fn nested(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[0].stable.iter().zip(&w[1].stable).all(|(&a, &b)| !a || b))
    }

    /// Largest grid rate up to which the stable set equals the light-traffic class.
    pub fn light_threshold(&self) -> Option<f64> {
        self.points
            .iter()
            .take_while(|p| p.limits.contains(&Regime::Light))
            .last()
            .map(|p| p.lambda)
    }

    /// Smallest grid rate from which every duopoly stays stable.
    pub fn heavy_threshold(&self) -> Option<f64> {
        let tail = self
            .points
            .iter()
            .rev()
            .take_while(|p| p.limits.contains(&Regime::Heavy))
            .count();
        (tail > 0).then(|| self.points[self.points.len() - tail].lambda)
    }
}

/// Classifies every duopoly of `inst` at each rate of `lambda_grid`.
pub fn regime_sweep(inst: &Instance, lambda_grid: &[f64]) -> Result<RegimeReport> {
    if inst.n() < 2 || inst.n() > SWEEP_AGENT_CAP {
        return Err(Error::TooLarge {
            what: "regime sweep agents",
            size: inst.n(),
            limit: SWEEP_AGENT_CAP,
        });
    }
    if lambda_grid.is_empty() || lambda_grid.len() > SWEEP_GRID_CAP {
        return Err(Error::TooLarge {
            what: "regime sweep grid",
            size: lambda_grid.len(),
            limit: SWEEP_GRID_CAP,
        });
    }
    if lambda_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Domain(
            "arrival-rate grid must be strictly increasing".into(),
        ));
    }
    let duopolies: Vec<Partition> = enumerate_duopolies(inst.n()).collect();
    let light: Vec<Partition> = light_traffic_class(inst);
    let light_class: Vec<usize> = duopolies
        .iter()
        .enumerate()
        .filter(|(_, p)| light.contains(p))
        .map(|(i, _)| i)
        .collect();
    let larger: Vec<Coalition> = duopolies.iter().map(|p| larger_side(inst, p)).collect();
    let larger_capacity: Vec<u32> = larger.iter().map(|&c| inst.capacity_of(c)).collect();
    let total = f64::from(inst.total_capacity());

    let mut points = Vec::with_capacity(lambda_grid.len());
    for &lambda in lambda_grid {
        let game = Game::new(inst.with_lambda(lambda)?);
        let mut stable = Vec::with_capacity(duopolies.len());
        let mut light_concentration = Vec::with_capacity(duopolies.len());
        let mut heavy_concentration = Vec::with_capacity(duopolies.len());
        for (p, &big) in duopolies.iter().zip(&larger) {
            stable.push(is_stable_partition_rbia(&game, p)?.stable);
            let share = game.rate(p, big)? / lambda;
            light_concentration.push(share);
            heavy_concentration.push(share * total / f64::from(inst.capacity_of(big)));
        }
        let psi: Vec<f64> = game
            .achievable_capacities()?
            .into_iter()
            .map(|k| game.psi(k))
            .collect::<Result<_>>()?;
        let psi_violations = psi.windows(2).filter(|w| !(w[1] > w[0])).count();
        let mut limits = Vec::new();
        let stable_idx: Vec<usize> = (0..duopolies.len()).filter(|&d| stable[d]).collect();
        if stable_idx == light_class {
            limits.push(Regime::Light);
        }
        if stable.iter().all(|&s| s) {
            limits.push(Regime::Heavy);
        }
        points.push(RegimePoint {
            lambda,
            stable,
            light_concentration,
            heavy_concentration,
            psi_violations,
            limits,
        });
    }
    Ok(RegimeReport {
        instance: inst.clone(),
        lambda_grid: lambda_grid.to_vec(),
        duopolies,
        larger_capacity,
        light_class,
        points,
    })
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| {
            if i + 1 == count {
                hi
            } else {
                10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64)
            }
        })
        .collect()
}

/// Parses `log:LO:HI:COUNT`, `lin:LO:HI:COUNT` or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Parse(format!("bad grid {text:?}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = text.split(':').collect();
    let grid = match parts.as_slice() {
        [kind, lo, hi, count] => {
            let (lo, hi) = (num(lo)?, num(hi)?);
            let count: usize = count.trim().parse().map_err(|_| bad())?;
            if count == 0 || !(lo > 0.0 && hi >= lo) {
                return Err(bad());
            }
            match *kind {
                "log" => log_grid(lo, hi, count),
                "lin" if count == 1 => vec![lo],
                "lin" => (0..count)
                    .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
                    .collect(),
                _ => return Err(bad()),
            }
        }
        [list] => list.split(',').map(num).collect::<Result<_>>()?,
        _ => return Err(bad()),
    };
    if grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(bad());
    }
    Ok(grid)
}
