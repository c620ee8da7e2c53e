//! Payoff vectors consistent with a partition.

use std::sync::Arc;

use crate::enumerate::ENUMERATION_CAP;
use crate::error::{Error, Result};
use crate::instance::{Coalition, Partition};
use crate::wardrop::{Game, WardropSplit};

/// Consistency tolerance for internally generated payoffs, relative to Λ.
pub const INTERNAL_TOLERANCE: f64 = 1e-9;
/// Consistency tolerance for hand-entered payoffs, relative to Λ.
pub const USER_TOLERANCE: f64 = 1e-6;

/// Built-in allocation rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PayoffRule {
    Proportional,
    Shapley,
}

impl PayoffRule {
    pub fn name(self) -> &'static str {
        match self {
            PayoffRule::Proportional => "proportional",
            PayoffRule::Shapley => "shapley",
        }
    }

    pub fn apply(self, game: &Game, p: &Partition) -> Result<Configuration> {
        match self {
            PayoffRule::Proportional => proportional_payoff(game, p),
            PayoffRule::Shapley => shapley_payoff(game, p),
        }
    }
}

impl std::fmt::Display for PayoffRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PayoffRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "proportional" => Ok(PayoffRule::Proportional),
            "shapley" => Ok(PayoffRule::Shapley),
            _ => Err(Error::Parse(format!("unknown payoff rule {s:?}"))),
        }
    }
}

/// A partition together with a payoff per agent (internal agent order).
#[derive(Clone, Debug)]
pub struct Configuration {
    partition: Partition,
    phi: Vec<f64>,
    split: Arc<WardropSplit>,
}

impl Configuration {
    /// Checks `phi` against the equilibrium of `p` with tolerance `rel_tol · Λ`.
    pub fn new(game: &Game, p: Partition, phi: Vec<f64>, rel_tol: f64) -> Result<Self> {
        if phi.len() != game.instance().n() {
            return Err(Error::Domain(format!(
                "payoff vector has {} entries for {} agents",
                phi.len(),
                game.instance().n()
            )));
        }
        let split = game.split(&p)?;
        let cfg = Configuration {
            partition: p,
            phi,
            split,
        };
        let report = cfg.consistency(game.lambda() * rel_tol);
        if !report.valid {
            return Err(Error::Domain(format!(
                "inconsistent payoff vector: {report}"
            )));
        }
        Ok(cfg)
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn split(&self) -> &WardropSplit {
        &self.split
    }

    /// `Σ_{i∈Q} φ_i`.
    pub fn payoff_of(&self, q: Coalition) -> f64 {
        q.members().map(|i| self.phi[i]).sum()
    }

    fn consistency(&self, tol: f64) -> ConsistencyReport {
        let negative: Vec<usize> = (0..self.phi.len())
            .filter(|&i| !(self.phi[i] >= 0.0))
            .collect();
        let mut worst = (0.0, None);
        for (c, rate) in self.split.rates() {
            let residual = (self.payoff_of(c) - rate).abs();
            if !(residual <= worst.0) {
                worst = (residual, Some(c));
            }
        }
        ConsistencyReport {
            valid: negative.is_empty() && worst.0 <= tol,
            worst_residual: worst.0,
            worst_coalition: worst.1.filter(|_| worst.0 > tol),
            negative,
        }
    }
}

/// Outcome of [`validate_configuration`].
#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyReport {
    pub valid: bool,
    /// `max_C |Σ_{i∈C} φ_i - λ_C|`.
    pub worst_residual: f64,
    /// The coalition attaining the worst residual, when it exceeds the tolerance.
    pub worst_coalition: Option<Coalition>,
    /// Agents with negative payoff.
    pub negative: Vec<usize>,
}

impl std::fmt::Display for ConsistencyReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.valid {
            return write!(f, "consistent (worst residual {:e})", self.worst_residual);
        }
        if let Some(c) = self.worst_coalition {
            write!(f, "coalition {c} off by {:e}", self.worst_residual)?;
        }
        if !self.negative.is_empty() {
            write!(f, " negative payoffs at agents {:?}", self.negative)?;
        }
        Ok(())
    }
}

/// Checks consistency and non-negativity of `phi` for `p`, with tolerance
/// `rel_tol · Λ` on every coalition sum.
pub fn validate_configuration(
    game: &Game,
    p: &Partition,
    phi: &[f64],
    rel_tol: f64,
) -> Result<ConsistencyReport> {
    if phi.len() != game.instance().n() {
        return Err(Error::Domain(format!(
            "payoff vector has {} entries for {} agents",
            phi.len(),
            game.instance().n()
        )));
    }
    let cfg = Configuration {
        partition: p.clone(),
        phi: phi.to_vec(),
        split: game.split(p)?,
    };
    Ok(cfg.consistency(game.lambda() * rel_tol))
}

/// Each agent receives its coalition's rate in proportion to its servers.
pub fn proportional_payoff(game: &Game, p: &Partition) -> Result<Configuration> {
    let inst = game.instance();
    let split = game.split(p)?;
    let mut phi = vec![0.0; inst.n()];
    for (c, rate) in split.rates() {
        let total = f64::from(inst.capacity_of(c));
        for i in c.members() {
            phi[i] = f64::from(inst.capacity(i)) / total * rate;
        }
    }
    Ok(Configuration {
        partition: p.clone(),
        phi,
        split,
    })
}

/// Worth `ν_S` of a sub-coalition `S ⊆ C`: its equilibrium rate when the rest
/// of `C` regroups as one rival and every other coalition of `p` stays put.
pub fn subcoalition_worth(
    game: &Game,
    p: &Partition,
    parent: Coalition,
    s: Coalition,
) -> Result<f64> {
    if s == parent {
        return game.rate(p, parent);
    }
    game.rate(&p.with_split(parent, s), s)
}

/// Shapley shares within each coalition, using [`subcoalition_worth`] as the
/// characteristic function and `ν_∅ = 0`.
pub fn shapley_payoff(game: &Game, p: &Partition) -> Result<Configuration> {
    let inst = game.instance();
    let split = game.split(p)?;
    let mut phi = vec![0.0; inst.n()];
    for &c in p.coalitions() {
        if c.len() > ENUMERATION_CAP {
            return Err(Error::TooLarge {
                what: "Shapley sub-coalition worths",
                size: c.len(),
                limit: ENUMERATION_CAP,
            });
        }
        let members: Vec<usize> = c.members().collect();
        let size = members.len();
        // worths indexed by local bitmask over `members`
        let mut worth = vec![0.0; 1 << size];
        for (local, w) in worth.iter_mut().enumerate().skip(1) {
            let s = Coalition::from_members(
                (0..size)
                    .filter(|b| local & (1 << b) != 0)
                    .map(|b| members[b]),
            )
            .expect("non-empty");
            *w = subcoalition_worth(game, p, c, s)?;
        }
        let factorial: Vec<f64> = (0..=size)
            .scan(1.0, |acc, k| {
                if k > 0 {
                    *acc *= k as f64;
                }
                Some(*acc)
            })
            .collect();
        for (b, &agent) in members.iter().enumerate() {
            let bit = 1usize << b;
            let mut share = 0.0;
            for local in 0..(1usize << size) {
                if local & bit != 0 {
                    continue;
                }
                let k = local.count_ones() as usize;
                let weight = factorial[k] * factorial[size - k - 1] / factorial[size];
                share += weight * (worth[local | bit] - worth[local]);
            }
            phi[agent] = share;
        }
    }
    Ok(Configuration {
        partition: p.clone(),
        phi,
        split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Instance;

    fn game(caps: &[u32], lambda: f64) -> Game {
        Game::new(Instance::new(caps.to_vec(), lambda, 1.0).unwrap())
    }

    fn part(g: &Game, groups: &[&[usize]]) -> Partition {
        Partition::new(
            g.instance().n(),
            groups
                .iter()
                .map(|m| Coalition::from_members(m.iter().copied()).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn proportional_singletons_get_their_rates() {
        let g = game(&[4, 2, 1], 3.0);
        let p = Partition::singletons(3);
        let cfg = proportional_payoff(&g, &p).unwrap();
        for (c, r) in cfg.split().rates() {
            assert_eq!(cfg.payoff_of(c), r);
        }
    }

    #[test]
    fn proportional_scales_by_capacity() {
        let g = game(&[10, 2, 2, 2], 13.0);
        let p = part(&g, &[&[0, 1, 2], &[3]]);
        let cfg = proportional_payoff(&g, &p).unwrap();
        let rate = cfg.split().rate_at(0);
        assert!((cfg.phi()[0] - rate * 10.0 / 14.0).abs() < 1e-12);
        assert!((cfg.phi()[1] - cfg.phi()[2]).abs() < 1e-15);
    }

    #[test]
    fn shapley_two_member_formula() {
        let g = game(&[5, 3, 2], 6.0);
        let p = part(&g, &[&[0, 1], &[2]]);
        let cfg = shapley_payoff(&g, &p).unwrap();
        let c = p.coalitions()[0];
        let lam = cfg.split().rate_at(0);
        let nu_i = subcoalition_worth(&g, &p, c, Coalition::singleton(0)).unwrap();
        let nu_j = subcoalition_worth(&g, &p, c, Coalition::singleton(1)).unwrap();
        let expected = 0.5 * (lam - nu_j) + 0.5 * nu_i;
        assert!((cfg.phi()[0] - expected).abs() < 1e-12);
        assert!((cfg.phi()[0] + cfg.phi()[1] - lam).abs() < 1e-12);
        assert_eq!(cfg.phi()[2], cfg.split().rate_at(1));
    }

    #[test]
    fn shapley_equal_capacities_match_proportional() {
        let g = game(&[3, 3, 3, 1], 5.0);
        let p = part(&g, &[&[0, 1, 2], &[3]]);
        let s = shapley_payoff(&g, &p).unwrap();
        let q = proportional_payoff(&g, &p).unwrap();
        for (a, b) in s.phi().iter().zip(q.phi()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn validation_flags_perturbation_and_zero() {
        let g = game(&[4, 2, 1], 3.0);
        let p = part(&g, &[&[0, 1], &[2]]);
        let cfg = proportional_payoff(&g, &p).unwrap();
        assert!(
            validate_configuration(&g, &p, cfg.phi(), INTERNAL_TOLERANCE)
                .unwrap()
                .valid
        );
        let mut bad = cfg.phi().to_vec();
        bad[1] += 0.3;
        let r = validate_configuration(&g, &p, &bad, INTERNAL_TOLERANCE).unwrap();
        assert!(!r.valid);
        assert_eq!(r.worst_coalition, Some(p.coalitions()[0]));
        let zero = validate_configuration(&g, &p, &[0.0; 3], INTERNAL_TOLERANCE).unwrap();
        assert!(!zero.valid);
        assert!(Configuration::new(&g, p, bad, USER_TOLERANCE).is_err());
    }

    #[test]
    fn negative_payoff_rejected() {
        let g = game(&[1, 1], 1.0);
        let p = Partition::grand(2);
        let r = validate_configuration(&g, &p, &[1.5, -0.5], INTERNAL_TOLERANCE).unwrap();
        assert!(!r.valid);
        assert_eq!(r.negative, vec![1]);
    }
}
