//! Blocking checks under the GB-PA, RB-PA and RB-IA rules.
//!
//! Every blocking condition is a strict inequality. A deviation only counts
//! when its margin exceeds `BLOCK_TOLERANCE · Λ`, so exact ties such as the
//! grand-coalition merger out of a duopoly never block.

use std::fmt;

use serde::Serialize;

use crate::enumerate::{enumerate_mergers, enumerate_splits, proper_subsets, ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::instance::{Coalition, Partition};
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::payoffs::{Configuration, INTERNAL_TOLERANCE};
use crate::wardrop::Game;

/// Blocking margin threshold relative to Λ.
pub const BLOCK_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Rule {
    #[serde(rename = "GB-PA")]
    Gbpa,
    #[serde(rename = "RB-PA")]
    Rbpa,
    #[serde(rename = "RB-IA")]
    Rbia,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Gbpa => "GB-PA",
            Rule::Rbpa => "RB-PA",
            Rule::Rbia => "RB-IA",
        })
    }
}

impl std::str::FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "gbpa" => Ok(Rule::Gbpa),
            "rbpa" => Ok(Rule::Rbpa),
            "rbia" => Ok(Rule::Rbia),
            _ => Err(Error::Parse(format!("unknown rule {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Merger,
    Split,
    General,
}

/// Second-stage check of an RB-IA split: `Q`'s rate once it leaves with the
/// opponents left in place, against what its members currently receive.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviationCheck {
    pub partition: Partition,
    pub rate: f64,
    pub payoff: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockReport {
    pub rule: Rule,
    pub blocker: Coalition,
    pub kind: BlockKind,
    /// `ȗλ_Q`.
    pub anticipated: f64,
    /// What the rule compares `ȗλ_Q` against.
    pub prevailing: f64,
    /// Smallest margin over the conditions that make this a block.
    pub margin: f64,
    pub deviation: Option<DeviationCheck>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityVerdict {
    pub rule: Rule,
    pub stable: bool,
    /// Every blocking coalition, in canonical candidate order.
    pub witnesses: Vec<BlockReport>,
}

impl StabilityVerdict {
    fn from_witnesses(rule: Rule, witnesses: Vec<BlockReport>) -> Self {
        StabilityVerdict {
            rule,
            stable: witnesses.is_empty(),
            witnesses,
        }
    }

    pub fn blockers(&self) -> impl Iterator<Item = Coalition> + '_ {
        self.witnesses.iter().map(|w| w.blocker)
    }
}

fn ensure_enumerable(game: &Game) -> Result<()> {
    let n = game.instance().n();
    if n > ENUMERATION_CAP {
        return Err(Error::TooLarge {
            what: "stability check",
            size: n,
            limit: ENUMERATION_CAP,
        });
    }
    Ok(())
}

fn epsilon(game: &Game) -> f64 {
    BLOCK_TOLERANCE * game.lambda()
}

fn classify(p: &Partition, q: Coalition) -> BlockKind {
    let covering: Vec<Coalition> = p
        .coalitions()
        .iter()
        .copied()
        .filter(|c| !c.is_disjoint(q))
        .collect();
    match covering.as_slice() {
        [c] if q.is_proper_subset_of(*c) => BlockKind::Split,
        cs if cs.len() >= 2 && cs.iter().all(|c| c.is_subset_of(q)) => BlockKind::Merger,
        _ => BlockKind::General,
    }
}

/// Pessimal anticipation against perfectly assessed payoffs, over every `Q ∉ P`.
pub fn check_gbpa(game: &Game, cfg: &Configuration) -> Result<StabilityVerdict> {
    ensure_enumerable(game)?;
    let p = cfg.partition();
    let eps = epsilon(game);
    let mut witnesses = Vec::new();
    for q in proper_subsets(game.instance().grand()).chain(std::iter::once(game.instance().grand()))
    {
        if p.contains(q) {
            continue;
        }
        let anticipated = game.pessimal(q)?;
        let prevailing = cfg.payoff_of(q);
        let margin = anticipated - prevailing;
        if margin > eps {
            witnesses.push(BlockReport {
                rule: Rule::Gbpa,
                blocker: q,
                kind: classify(p, q),
                anticipated,
                prevailing,
                margin,
                deviation: None,
            });
        }
    }
    Ok(StabilityVerdict::from_witnesses(Rule::Gbpa, witnesses))
}

fn merger_witnesses(game: &Game, p: &Partition, rule: Rule) -> Result<Vec<BlockReport>> {
    let eps = epsilon(game);
    let split = game.split(p)?;
    let mut out = Vec::new();
    for m in enumerate_mergers(p) {
        let anticipated = game.pessimal(m.merged)?;
        let prevailing: f64 = m
            .parts
            .iter()
            .map(|&c| split.rate(c).expect("part of partition"))
            .sum();
        let margin = anticipated - prevailing;
        if margin > eps {
            out.push(BlockReport {
                rule,
                blocker: m.merged,
                kind: BlockKind::Merger,
                anticipated,
                prevailing,
                margin,
                deviation: None,
            });
        }
    }
    Ok(out)
}

/// Pessimal anticipation against perfectly assessed payoffs, restricted to
/// mergers and splits.
pub fn check_rbpa(game: &Game, cfg: &Configuration) -> Result<StabilityVerdict> {
    ensure_enumerable(game)?;
    let p = cfg.partition();
    let eps = epsilon(game);
    let mut witnesses = merger_witnesses(game, p, Rule::Rbpa)?;
    for s in enumerate_splits(p) {
        let anticipated = game.pessimal(s.q)?;
        let prevailing = cfg.payoff_of(s.q);
        let margin = anticipated - prevailing;
        if margin > eps {
            witnesses.push(BlockReport {
                rule: Rule::Rbpa,
                blocker: s.q,
                kind: BlockKind::Split,
                anticipated,
                prevailing,
                margin,
                deviation: None,
            });
        }
    }
    Ok(StabilityVerdict::from_witnesses(Rule::Rbpa, witnesses))
}

/// `(N_Q / N_C) λ_C`: the capacity-share estimate of what `Q ⊊ C` earns now.
fn capacity_share(game: &Game, p: &Partition, parent: Coalition, q: Coalition) -> Result<f64> {
    let inst = game.instance();
    Ok(
        f64::from(inst.capacity_of(q)) / f64::from(inst.capacity_of(parent))
            * game.rate(p, parent)?,
    )
}

/// Pessimal anticipation with imperfect assessment: splits are judged first
/// against capacity shares and then against the members' actual payoffs in
/// the post-split market.
pub fn check_rbia(game: &Game, cfg: &Configuration) -> Result<StabilityVerdict> {
    ensure_enumerable(game)?;
    let p = cfg.partition();
    let eps = epsilon(game);
    let mut witnesses = merger_witnesses(game, p, Rule::Rbia)?;
    for s in enumerate_splits(p) {
        let anticipated = game.pessimal(s.q)?;
        let prevailing = capacity_share(game, p, s.parent, s.q)?;
        let first = anticipated - prevailing;
        if first <= eps {
            continue;
        }
        let after = p.with_split(s.parent, s.q);
        let rate = game.rate(&after, s.q)?;
        let payoff = cfg.payoff_of(s.q);
        let second = rate - payoff;
        if second > eps {
            witnesses.push(BlockReport {
                rule: Rule::Rbia,
                blocker: s.q,
                kind: BlockKind::Split,
                anticipated,
                prevailing,
                margin: first.min(second),
                deviation: Some(DeviationCheck {
                    partition: after,
                    rate,
                    payoff,
                }),
            });
        }
    }
    Ok(StabilityVerdict::from_witnesses(Rule::Rbia, witnesses))
}

/// Whether every configuration on `p` is RB-IA stable.
///
/// A split that passes the capacity-share test is fatal on its own: the
/// members of `Q` can be handed arbitrarily small consistent payoffs, which
/// makes the second-stage test pass as well.
pub fn is_stable_partition_rbia(game: &Game, p: &Partition) -> Result<StabilityVerdict> {
    ensure_enumerable(game)?;
    let eps = epsilon(game);
    let mut witnesses = merger_witnesses(game, p, Rule::Rbia)?;
    for s in enumerate_splits(p) {
        let anticipated = game.pessimal(s.q)?;
        let prevailing = capacity_share(game, p, s.parent, s.q)?;
        let margin = anticipated - prevailing;
        if margin > eps {
            witnesses.push(BlockReport {
                rule: Rule::Rbia,
                blocker: s.q,
                kind: BlockKind::Split,
                anticipated,
                prevailing,
                margin,
                deviation: None,
            });
        }
    }
    Ok(StabilityVerdict::from_witnesses(Rule::Rbia, witnesses))
}

/// Outcome of [`grand_coalition_rbia`].
#[derive(Clone, Debug, PartialEq)]
pub struct GrandCoalitionRbia {
    pub exists_stable: bool,
    /// `max{ȗλ_C : C ⊊ N, 1 ∈ C}`; any consistent payoff giving the largest
    /// agent at least this much is stable. `Λ` for a single agent.
    pub floor: Option<f64>,
}

pub fn grand_coalition_rbia(game: &Game) -> Result<GrandCoalitionRbia> {
    ensure_enumerable(game)?;
    let inst = game.instance();
    if inst.n() == 1 {
        return Ok(GrandCoalitionRbia {
            exists_stable: true,
            floor: Some(game.lambda()),
        });
    }
    let largest = inst.capacity(0);
    if largest < inst.total_capacity() - largest {
        return Ok(GrandCoalitionRbia {
            exists_stable: false,
            floor: None,
        });
    }
    let mut floor = f64::NEG_INFINITY;
    for q in proper_subsets(inst.grand()).filter(|q| q.contains(0)) {
        floor = floor.max(game.pessimal(q)?);
    }
    Ok(GrandCoalitionRbia {
        exists_stable: true,
        floor: Some(floor),
    })
}

/// A grand-coalition payoff giving the largest agent exactly `floor` and
/// sharing the rest among the others in proportion to their servers.
pub fn grand_coalition_floor_payoff(game: &Game, floor: f64) -> Result<Configuration> {
    let inst = game.instance();
    let lambda = game.lambda();
    if !(0.0..=lambda).contains(&floor) {
        return Err(Error::Domain(format!("floor {floor} outside [0, Λ]")));
    }
    let mut phi = vec![0.0; inst.n()];
    phi[0] = floor;
    let others = f64::from(inst.total_capacity() - inst.capacity(0));
    for (i, v) in phi.iter_mut().enumerate().skip(1) {
        *v = (lambda - floor) * f64::from(inst.capacity(i)) / others;
    }
    if inst.n() == 1 {
        phi[0] = lambda;
    }
    Configuration::new(game, Partition::grand(inst.n()), phi, INTERNAL_TOLERANCE)
}

/// A payoff polytope `{Φ ≥ 0 : Σ_C φ = λ_C for C ∈ P, Σ_Q φ ≥ b_Q}` solved for
/// the payoff that maximises the smallest surplus `Σ_Q φ - b_Q`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolytopeReport {
    pub feasible: bool,
    /// Largest achievable smallest surplus; `+∞` when there are no inequality rows.
    pub slack: f64,
    pub witness_phi: Option<Vec<f64>>,
    /// Set when a merger blocks and the payoff-dependent part was skipped.
    pub merger_block: Option<BlockReport>,
}

/// Maximises the smallest surplus over `bounds` subject to consistency with `p`.
pub fn max_slack(
    game: &Game,
    p: &Partition,
    bounds: &[(Coalition, f64)],
) -> Result<PolytopeReport> {
    let n = game.instance().n();
    let lambda = game.lambda();
    let split = game.split(p)?;
    let eps = epsilon(game);
    let mut lp = LinearProgram::new(n + 1);
    // last variable s = t + Λ, with t the smallest surplus, kept within [-Λ, Λ]
    lp.objective[n] = 1.0;
    let row = |c: Coalition, s: f64| {
        let mut v = vec![0.0; n + 1];
        for i in c.members() {
            v[i] = 1.0;
        }
        v[n] = s;
        v
    };
    for (c, rate) in split.rates() {
        lp.add(row(c, 0.0), Relation::Eq, rate);
    }
    for &(q, b) in bounds {
        lp.add(row(q, -1.0), Relation::Ge, b - lambda);
    }
    let mut cap = vec![0.0; n + 1];
    cap[n] = 1.0;
    lp.add(cap, Relation::Le, 2.0 * lambda);

    match lp.solve()? {
        LpOutcome::Optimal { x, value } => {
            let slack = if bounds.is_empty() {
                f64::INFINITY
            } else {
                value - lambda
            };
            Ok(PolytopeReport {
                feasible: slack >= -eps,
                slack,
                witness_phi: Some(x[..n].to_vec()),
                merger_block: None,
            })
        }
        LpOutcome::Infeasible => Ok(PolytopeReport {
            feasible: false,
            slack: f64::NEG_INFINITY,
            witness_phi: None,
            merger_block: None,
        }),
        LpOutcome::Unbounded => Err(Error::InvariantViolation(
            "bounded payoff program reported unbounded".into(),
        )),
    }
}

/// Smallest surplus `Σ_Q φ - b_Q` of a given payoff over `bounds`.
pub fn slack_of(phi: &[f64], bounds: &[(Coalition, f64)]) -> f64 {
    bounds
        .iter()
        .map(|&(q, b)| q.members().map(|i| phi[i]).sum::<f64>() - b)
        .fold(f64::INFINITY, f64::min)
}

/// `(Q, ȗλ_Q)` for every non-empty proper subset of every coalition of `p`.
pub fn rbpa_bounds(game: &Game, p: &Partition) -> Result<Vec<(Coalition, f64)>> {
    enumerate_splits(p)
        .map(|s| Ok((s.q, game.pessimal(s.q)?)))
        .collect()
}

/// Whether some consistent payoff makes `p` RB-PA stable.
pub fn rbpa_stable_polytope_feasible(game: &Game, p: &Partition) -> Result<PolytopeReport> {
    ensure_enumerable(game)?;
    if let Some(block) = merger_witnesses(game, p, Rule::Rbpa)?.into_iter().next() {
        return Ok(PolytopeReport {
            feasible: false,
            slack: f64::NEG_INFINITY,
            witness_phi: None,
            merger_block: Some(block),
        });
    }
    max_slack(game, p, &rbpa_bounds(game, p)?)
}

/// `(Q, λ_Q^{P̂})` for every split that passes the RB-IA capacity-share test.
pub fn rbia_bounds(game: &Game, p: &Partition) -> Result<Vec<(Coalition, f64)>> {
    let eps = epsilon(game);
    let mut out = Vec::new();
    for s in enumerate_splits(p) {
        if game.pessimal(s.q)? - capacity_share(game, p, s.parent, s.q)? > eps {
            out.push((s.q, game.rate(&p.with_split(s.parent, s.q), s.q)?));
        }
    }
    Ok(out)
}

/// Whether some consistent payoff makes `p` RB-IA stable.
pub fn rbia_stable_region(game: &Game, p: &Partition) -> Result<PolytopeReport> {
    ensure_enumerable(game)?;
    if let Some(block) = merger_witnesses(game, p, Rule::Rbia)?.into_iter().next() {
        return Ok(PolytopeReport {
            feasible: false,
            slack: f64::NEG_INFINITY,
            witness_phi: None,
            merger_block: Some(block),
        });
    }
    max_slack(game, p, &rbia_bounds(game, p)?)
}

/// A GB-PA blocker found by trying, in order, `N \ {j}` for every agent when
/// all agents stand alone, or otherwise `N \ {a}` for the members `a` of the
/// first coalition with two or more agents, then the singleton of that
/// coalition with the largest shortfall `ȗλ_{a} - φ_a`.
pub fn find_blocking_witness_gbpa(game: &Game, cfg: &Configuration) -> Result<BlockReport> {
    let inst = game.instance();
    if inst.n() < 3 {
        return Err(Error::Domain(
            "a GB-PA blocker is only guaranteed for three or more agents".into(),
        ));
    }
    let p = cfg.partition();
    let eps = epsilon(game);
    let grand = inst.grand();
    let report = |q: Coalition| -> Result<BlockReport> {
        let anticipated = game.pessimal(q)?;
        let prevailing = cfg.payoff_of(q);
        Ok(BlockReport {
            rule: Rule::Gbpa,
            blocker: q,
            kind: classify(p, q),
            anticipated,
            prevailing,
            margin: anticipated - prevailing,
            deviation: None,
        })
    };
    let all_but = |j: usize| grand.without(Coalition::singleton(j)).expect("n >= 3");

    let candidates: Vec<usize> = match p.coalitions().iter().find(|c| c.len() >= 2) {
        None => (0..inst.n()).collect(),
        Some(c) => c.members().collect(),
    };
    for &j in &candidates {
        let r = report(all_but(j))?;
        if r.margin > eps {
            return Ok(r);
        }
    }
    if p.len() < inst.n() {
        let mut best: Option<BlockReport> = None;
        for &a in &candidates {
            let r = report(Coalition::singleton(a))?;
            if best.as_ref().is_none_or(|b| r.margin > b.margin) {
                best = Some(r);
            }
        }
        if let Some(r) = best.filter(|r| r.margin > eps) {
            return Ok(r);
        }
    }
    Err(Error::InvariantViolation(format!(
        "no GB-PA blocker found for {p} along the constructive order"
    )))
}
