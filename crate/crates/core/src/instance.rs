//! Instances, coalitions and partitions.
//!
//! Agents are indexed internally by their position after sorting capacities
//! in non-increasing order, so agent 0 always owns the most servers. The
//! instance keeps the permutation back to the caller's ordering; everything
//! that leaves the library (JSON, CSV, CLI output) speaks in the caller's
//! 1-based ids.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on the number of agents representable by a [`Coalition`] bitmask.
pub const MAX_AGENTS: usize = 32;

/// A coalition formation game between Erlang-B service providers.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    capacities: Vec<u32>,
    /// `user_index[agent]` is the 0-based position of `agent` in the caller's ordering.
    user_index: Vec<usize>,
    lambda: f64,
    mu: f64,
}

/// JSON scenario document: `{"capacities":[...], "lambda":float, "mu":float}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub capacities: Vec<u32>,
    pub lambda: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
}

fn default_mu() -> f64 {
    1.0
}

impl Instance {
    pub fn new(capacities: Vec<u32>, lambda: f64, mu: f64) -> Result<Self> {
        if capacities.is_empty() {
            return Err(Error::InvalidInstance(
                "at least one agent is required".into(),
            ));
        }
        if capacities.len() > MAX_AGENTS {
            return Err(Error::TooLarge {
                what: "agent set",
                size: capacities.len(),
                limit: MAX_AGENTS,
            });
        }
        if let Some(pos) = capacities.iter().position(|&c| c == 0) {
            return Err(Error::InvalidInstance(format!(
                "agent {} has no servers",
                pos + 1
            )));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidInstance(format!(
                "market size must be positive and finite, got {lambda}"
            )));
        }
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::InvalidInstance(format!(
                "service rate must be positive and finite, got {mu}"
            )));
        }
        let mut user_index: Vec<usize> = (0..capacities.len()).collect();
        // stable: equal capacities keep the caller's relative order
        user_index.sort_by(|&a, &b| capacities[b].cmp(&capacities[a]));
        let sorted = user_index.iter().map(|&i| capacities[i]).collect();
        Ok(Instance {
            capacities: sorted,
            user_index,
            lambda,
            mu,
        })
    }

    pub fn from_scenario(s: &Scenario) -> Result<Self> {
        Instance::new(s.capacities.clone(), s.lambda, s.mu)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text)?;
        Instance::from_scenario(&scenario)
    }

    /// The scenario in the caller's original agent order.
    pub fn scenario(&self) -> Scenario {
        let mut capacities = vec![0; self.n()];
        for (agent, &user) in self.user_index.iter().enumerate() {
            capacities[user] = self.capacities[agent];
        }
        Scenario {
            capacities,
            lambda: self.lambda,
            mu: self.mu,
        }
    }

    /// Same agents and service rate, different market size.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidInstance(format!(
                "market size must be positive and finite, got {lambda}"
            )));
        }
        Ok(Instance {
            lambda,
            ..self.clone()
        })
    }

    pub fn n(&self) -> usize {
        self.capacities.len()
    }

    /// Capacities in internal (non-increasing) order.
    pub fn capacities(&self) -> &[u32] {
        &self.capacities
    }

    pub fn capacity(&self, agent: usize) -> u32 {
        self.capacities[agent]
    }

    /// Total number of servers `N`.
    pub fn total_capacity(&self) -> u32 {
        self.capacities.iter().sum()
    }

    pub fn capacity_of(&self, c: Coalition) -> u32 {
        c.members().map(|i| self.capacities[i]).sum()
    }

    /// Market size Λ (arrivals per unit time).
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Λ/μ, the total offered load in Erlangs.
    pub fn offered_load(&self) -> f64 {
        self.lambda / self.mu
    }

    pub fn grand(&self) -> Coalition {
        Coalition::full(self.n())
    }

    /// 1-based id of an internal agent in the caller's ordering.
    pub fn user_id(&self, agent: usize) -> usize {
        self.user_index[agent] + 1
    }

    pub fn agent_for_user_id(&self, id: usize) -> Result<usize> {
        if id == 0 || id > self.n() {
            return Err(Error::Parse(format!(
                "agent id {id} outside 1..={}",
                self.n()
            )));
        }
        Ok(self
            .user_index
            .iter()
            .position(|&u| u + 1 == id)
            .expect("permutation covers every id"))
    }

    pub fn coalition_from_ids(&self, ids: &[usize]) -> Result<Coalition> {
        if ids.is_empty() {
            return Err(Error::Parse("empty coalition".into()));
        }
        let mut mask = 0u32;
        for &id in ids {
            let bit = 1u32 << self.agent_for_user_id(id)?;
            if mask & bit != 0 {
                return Err(Error::Parse(format!("agent id {id} repeated")));
            }
            mask |= bit;
        }
        Ok(Coalition(mask))
    }

    /// Sorted user ids of the members of `c`.
    pub fn coalition_ids(&self, c: Coalition) -> Vec<usize> {
        let mut ids: Vec<usize> = c.members().map(|a| self.user_id(a)).collect();
        ids.sort_unstable();
        ids
    }

    pub fn partition_from_ids(&self, groups: &[Vec<usize>]) -> Result<Partition> {
        let coalitions = groups
            .iter()
            .map(|g| self.coalition_from_ids(g))
            .collect::<Result<Vec<_>>>()?;
        Partition::new(self.n(), coalitions)
    }

    /// Parses a partition written as a JSON array of id arrays, e.g. `[[1,2],[3]]`.
    pub fn parse_partition(&self, text: &str) -> Result<Partition> {
        let groups: Vec<Vec<usize>> = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("partition `{text}`: {e}")))?;
        self.partition_from_ids(&groups)
    }

    /// User-facing form of a partition: id arrays ordered by smallest id.
    pub fn partition_ids(&self, p: &Partition) -> Vec<Vec<usize>> {
        let mut groups: Vec<Vec<usize>> = p
            .coalitions()
            .iter()
            .map(|&c| self.coalition_ids(c))
            .collect();
        groups.sort();
        groups
    }

    /// Maps an internally indexed vector to the caller's agent order.
    pub fn to_user_order(&self, per_agent: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (agent, &v) in per_agent.iter().enumerate() {
            out[self.user_index[agent]] = v;
        }
        out
    }

    /// Inverse of [`Instance::to_user_order`].
    pub fn from_user_order(&self, per_user: &[f64]) -> Result<Vec<f64>> {
        if per_user.len() != self.n() {
            return Err(Error::Parse(format!(
                "expected {} payoff entries, got {}",
                self.n(),
                per_user.len()
            )));
        }
        Ok(self.user_index.iter().map(|&u| per_user[u]).collect())
    }
}

/// A non-empty set of agents, stored as a bitmask over internal agent indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Coalition(u32);

impl Coalition {
    pub fn from_mask(mask: u32) -> Option<Self> {
        (mask != 0).then_some(Coalition(mask))
    }

    pub fn singleton(agent: usize) -> Self {
        assert!(agent < MAX_AGENTS);
        Coalition(1 << agent)
    }

    pub fn full(n: usize) -> Self {
        assert!((1..=MAX_AGENTS).contains(&n));
        Coalition(if n == 32 { u32::MAX } else { (1u32 << n) - 1 })
    }

    pub fn from_members<I: IntoIterator<Item = usize>>(members: I) -> Option<Self> {
        let mask = members.into_iter().fold(0u32, |m, a| m | (1 << a));
        Coalition::from_mask(mask)
    }

    pub fn mask(self) -> u32 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn contains(self, agent: usize) -> bool {
        agent < MAX_AGENTS && self.0 & (1 << agent) != 0
    }

    pub fn smallest(self) -> usize {
        self.0.trailing_zeros() as usize
    }

    pub fn members(self) -> Members {
        Members(self.0)
    }

    pub fn is_subset_of(self, other: Coalition) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_proper_subset_of(self, other: Coalition) -> bool {
        self.is_subset_of(other) && self != other
    }

    pub fn is_disjoint(self, other: Coalition) -> bool {
        self.0 & other.0 == 0
    }

    pub fn union(self, other: Coalition) -> Coalition {
        Coalition(self.0 | other.0)
    }

    /// `self \ other`, or `None` when nothing is left.
    pub fn without(self, other: Coalition) -> Option<Coalition> {
        Coalition::from_mask(self.0 & !other.0)
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, a) in self.members().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, "}}")
    }
}

/// Iterator over the members of a coalition in increasing index order.
#[derive(Clone, Debug)]
pub struct Members(u32);

impl Iterator for Members {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let i = self.0.trailing_zeros();
        self.0 &= self.0 - 1;
        Some(i as usize)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.0.count_ones() as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Members {}

/// Disjoint coalitions covering every agent, ordered by smallest member.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    coalitions: Vec<Coalition>,
}

impl Partition {
    pub fn new(n: usize, mut coalitions: Vec<Coalition>) -> Result<Self> {
        if coalitions.is_empty() {
            return Err(Error::InvalidPartition("no coalitions".into()));
        }
        let full = Coalition::full(n).mask();
        let mut seen = 0u32;
        for c in &coalitions {
            if c.mask() & !full != 0 {
                return Err(Error::InvalidPartition(format!(
                    "coalition {c} names agents outside 0..{n}"
                )));
            }
            if c.mask() & seen != 0 {
                return Err(Error::InvalidPartition(format!(
                    "coalition {c} overlaps another coalition"
                )));
            }
            seen |= c.mask();
        }
        if seen != full {
            return Err(Error::InvalidPartition(format!(
                "agents {} are not covered",
                Coalition(full & !seen)
            )));
        }
        coalitions.sort_by_key(|c| c.smallest());
        Ok(Partition { coalitions })
    }

    /// Builds from coalitions already known to be disjoint.
    pub(crate) fn from_disjoint(mut coalitions: Vec<Coalition>) -> Self {
        coalitions.sort_by_key(|c| c.smallest());
        Partition { coalitions }
    }

    pub fn grand(n: usize) -> Self {
        Partition {
            coalitions: vec![Coalition::full(n)],
        }
    }

    pub fn singletons(n: usize) -> Self {
        Partition {
            coalitions: (0..n).map(Coalition::singleton).collect(),
        }
    }

    pub fn coalitions(&self) -> &[Coalition] {
        &self.coalitions
    }

    pub fn len(&self) -> usize {
        self.coalitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coalitions.is_empty()
    }

    pub fn is_grand(&self) -> bool {
        self.coalitions.len() == 1
    }

    pub fn contains(&self, c: Coalition) -> bool {
        self.coalitions.contains(&c)
    }

    pub fn index_of(&self, c: Coalition) -> Option<usize> {
        self.coalitions.iter().position(|&x| x == c)
    }

    /// The coalition holding `agent`.
    pub fn coalition_of(&self, agent: usize) -> Coalition {
        *self
            .coalitions
            .iter()
            .find(|c| c.contains(agent))
            .expect("partition covers every agent")
    }

    /// `(P \ {parent}) ∪ {q, parent \ q}`; `q == parent` returns a clone.
    pub fn with_split(&self, parent: Coalition, q: Coalition) -> Partition {
        debug_assert!(self.contains(parent) && q.is_subset_of(parent));
        let mut cs: Vec<Coalition> = self
            .coalitions
            .iter()
            .copied()
            .filter(|&c| c != parent)
            .collect();
        cs.push(q);
        if let Some(rest) = parent.without(q) {
            cs.push(rest);
        }
        Partition::from_disjoint(cs)
    }

    /// Replaces the coalitions in `merged` by their union.
    pub fn with_merger(&self, merged: &[Coalition]) -> Partition {
        let union = merged.iter().fold(0u32, |m, c| m | c.mask());
        let mut cs: Vec<Coalition> = self
            .coalitions
            .iter()
            .copied()
            .filter(|c| !merged.contains(c))
            .collect();
        cs.push(Coalition(union));
        Partition::from_disjoint(cs)
    }

    /// `(∪_{C∈P} {C \ q}) ∪ {q}`: `q` leaves its coalitions, everyone else stays put.
    pub fn with_deviation(&self, q: Coalition) -> Partition {
        let mut cs: Vec<Coalition> = self
            .coalitions
            .iter()
            .filter_map(|&c| c.without(q))
            .collect();
        cs.push(q);
        Partition::from_disjoint(cs)
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, c) in self.coalitions.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capacities_sorted_with_user_ids_preserved() {
        let inst = Instance::new(vec![2, 10, 2, 5], 13.0, 1.0).unwrap();
        assert_eq!(inst.capacities(), &[10, 5, 2, 2]);
        assert_eq!(inst.user_id(0), 2);
        assert_eq!(inst.user_id(1), 4);
        // ties keep caller order
        assert_eq!(inst.user_id(2), 1);
        assert_eq!(inst.user_id(3), 3);
        assert_eq!(inst.total_capacity(), 19);
        assert_eq!(inst.scenario().capacities, vec![2, 10, 2, 5]);
    }

    #[test]
    fn rejects_bad_instances() {
        assert!(Instance::new(vec![], 1.0, 1.0).is_err());
        assert!(Instance::new(vec![1, 0], 1.0, 1.0).is_err());
        assert!(Instance::new(vec![1], 0.0, 1.0).is_err());
        assert!(Instance::new(vec![1], 1.0, -1.0).is_err());
        assert!(Instance::new(vec![1], f64::NAN, 1.0).is_err());
        assert!(Instance::new(vec![1; 33], 1.0, 1.0).is_err());
    }

    #[test]
    fn scenario_json_defaults_mu() {
        let inst = Instance::from_json(r#"{"capacities":[10,2,2,2],"lambda":13}"#).unwrap();
        assert_eq!(inst.mu(), 1.0);
        assert_eq!(inst.lambda(), 13.0);
        assert!(Instance::from_json(r#"{"capacities":[1]}"#).is_err());
    }

    #[test]
    fn partition_parse_uses_user_ids() {
        let inst = Instance::new(vec![2, 10, 2], 1.0, 1.0).unwrap();
        let p = inst.parse_partition("[[2,3],[1]]").unwrap();
        assert_eq!(p.len(), 2);
        // user 2 is internal agent 0
        assert_eq!(p.coalitions()[0], Coalition::from_members([0, 2]).unwrap());
        assert_eq!(inst.partition_ids(&p), vec![vec![1], vec![2, 3]]);
        assert!(inst.parse_partition("[[1,2]]").is_err());
        assert!(inst.parse_partition("[[1,2],[2,3]]").is_err());
        assert!(inst.parse_partition("[[1,2],[3,4]]").is_err());
        assert!(inst.parse_partition("[[1,2],[]]").is_err());
    }

    #[test]
    fn partition_surgery() {
        let p = Partition::new(
            4,
            vec![
                Coalition::from_members([0, 1, 2]).unwrap(),
                Coalition::singleton(3),
            ],
        )
        .unwrap();
        let q = Coalition::from_members([0, 1]).unwrap();
        let split = p.with_split(p.coalitions()[0], q);
        assert_eq!(split.len(), 3);
        assert!(split.contains(q) && split.contains(Coalition::singleton(2)));
        let merged = split.with_merger(&[Coalition::singleton(2), Coalition::singleton(3)]);
        assert!(merged.contains(Coalition::from_members([2, 3]).unwrap()));
        let dev = p.with_deviation(Coalition::from_members([2, 3]).unwrap());
        assert_eq!(
            dev.coalitions(),
            &[q, Coalition::from_members([2, 3]).unwrap()]
        );
    }

    #[test]
    fn user_order_round_trip() {
        let inst = Instance::new(vec![1, 3, 2], 1.0, 1.0).unwrap();
        let internal = vec![30.0, 20.0, 10.0];
        let user = inst.to_user_order(&internal);
        assert_eq!(user, vec![10.0, 30.0, 20.0]);
        assert_eq!(inst.from_user_order(&user).unwrap(), internal);
    }
}
