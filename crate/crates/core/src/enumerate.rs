//! Exhaustive enumeration of set partitions, mergers and splits.
//!
//! Partitions are generated as restricted growth strings in lexicographic
//! order, so the grand coalition always comes first and the all-singletons
//! partition last. Every iterator here is `Clone` and restarts from scratch
//! when rebuilt.

use crate::error::{Error, Result};
use crate::instance::{Coalition, Instance, Partition};

/// Largest agent set whose partitions are enumerated exhaustively (Bell(12) ≈ 4.2M).
pub const ENUMERATION_CAP: usize = 12;

/// Every partition of the agents of `inst`.
pub fn enumerate_partitions(inst: &Instance) -> Result<SetPartitions> {
    SetPartitions::of(inst.grand())
}

/// Set partitions of the members of a coalition.
#[derive(Clone, Debug)]
pub struct SetPartitions {
    elems: Vec<usize>,
    rgs: Vec<usize>,
    done: bool,
}

impl SetPartitions {
    pub fn of(set: Coalition) -> Result<Self> {
        let elems: Vec<usize> = set.members().collect();
        if elems.len() > ENUMERATION_CAP {
            return Err(Error::TooLarge {
                what: "partition enumeration",
                size: elems.len(),
                limit: ENUMERATION_CAP,
            });
        }
        Ok(SetPartitions {
            rgs: vec![0; elems.len()],
            elems,
            done: false,
        })
    }

    fn current(&self) -> Vec<Coalition> {
        let blocks = self.rgs.iter().max().map_or(0, |&m| m + 1);
        let mut masks = vec![0u32; blocks];
        for (&e, &b) in self.elems.iter().zip(&self.rgs) {
            masks[b] |= 1 << e;
        }
        masks
            .into_iter()
            .map(|m| Coalition::from_mask(m).expect("restricted growth blocks are non-empty"))
            .collect()
    }

    fn advance(&mut self) {
        let n = self.rgs.len();
        // prefix maxima decide how far each digit may grow
        let mut prefix_max = vec![0usize; n];
        for i in 1..n {
            prefix_max[i] = prefix_max[i - 1].max(self.rgs[i - 1]);
        }
        for i in (1..n).rev() {
            if self.rgs[i] <= prefix_max[i] {
                self.rgs[i] += 1;
                for d in &mut self.rgs[i + 1..] {
                    *d = 0;
                }
                return;
            }
        }
        self.done = true;
    }
}

impl Iterator for SetPartitions {
    /// Blocks of the current partition, ordered by smallest member.
    type Item = Vec<Coalition>;

    fn next(&mut self) -> Option<Vec<Coalition>> {
        if self.done || self.elems.is_empty() {
            return None;
        }
        let out = self.current();
        self.advance();
        Some(out)
    }
}

/// A merger of two or more coalitions of a partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Merger {
    pub merged: Coalition,
    pub parts: Vec<Coalition>,
}

/// A proper sub-coalition `q` breaking away from `parent`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Split {
    pub q: Coalition,
    pub parent: Coalition,
}

/// All `2^k - k - 1` mergers of a `k`-partition, by increasing index subset.
pub fn enumerate_mergers(p: &Partition) -> impl Iterator<Item = Merger> + Clone + '_ {
    let k = p.len();
    (0u64..(1u64 << k))
        .filter(|s| s.count_ones() >= 2)
        .map(move |s| {
            let parts: Vec<Coalition> = (0..k)
                .filter(|i| s & (1 << i) != 0)
                .map(|i| p.coalitions()[i])
                .collect();
            let merged = parts
                .iter()
                .copied()
                .reduce(Coalition::union)
                .expect("at least two parts");
            Merger { merged, parts }
        })
}

/// Every non-empty proper subset of every coalition of `p`.
pub fn enumerate_splits(p: &Partition) -> impl Iterator<Item = Split> + Clone + '_ {
    p.coalitions()
        .iter()
        .filter(|c| c.len() >= 2)
        .flat_map(|&parent| proper_subsets(parent).map(move |q| Split { q, parent }))
}

/// Every 2-partition of `n` agents, ordered by the mask of the coalition
/// holding agent 0.
pub fn enumerate_duopolies(n: usize) -> impl Iterator<Item = Partition> {
    let grand = Coalition::full(n);
    proper_subsets(grand)
        .filter(|c| c.contains(0))
        .map(move |c| Partition::from_disjoint(vec![c, grand.without(c).expect("proper")]))
}

/// Non-empty proper subsets of `c` in increasing mask order.
pub fn proper_subsets(c: Coalition) -> impl Iterator<Item = Coalition> + Clone {
    let full = c.mask();
    // submask walk upward: (s - full) & full steps to the next larger submask
    let mut s: u32 = 0;
    std::iter::from_fn(move || {
        s = s.wrapping_sub(full) & full;
        if s == 0 || s == full {
            None
        } else {
            Coalition::from_mask(s)
        }
    })
}

/// Non-empty subsets of `c`, including `c` itself.
pub fn subsets(c: Coalition) -> impl Iterator<Item = Coalition> + Clone {
    proper_subsets(c).chain(std::iter::once(c))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(n: usize) -> Instance {
        Instance::new(vec![1; n], 1.0, 1.0).unwrap()
    }

    #[test]
    fn partition_counts() {
        assert_eq!(enumerate_partitions(&inst(1)).unwrap().count(), 1);
        assert_eq!(enumerate_partitions(&inst(3)).unwrap().count(), 5);
        assert_eq!(enumerate_partitions(&inst(6)).unwrap().count(), 203);
    }

    #[test]
    fn canonical_order_starts_grand_ends_singletons() {
        let all: Vec<_> = enumerate_partitions(&inst(4)).unwrap().collect();
        assert_eq!(all.first().unwrap(), &vec![Coalition::full(4)]);
        assert_eq!(all.last().unwrap().len(), 4);
        // restartable
        let again: Vec<_> = enumerate_partitions(&inst(4)).unwrap().collect();
        assert_eq!(all, again);
    }

    #[test]
    fn cap_enforced() {
        let err = enumerate_partitions(&inst(13)).unwrap_err();
        assert!(matches!(err, Error::TooLarge { size: 13, .. }));
        assert!(enumerate_partitions(&inst(12)).is_ok());
    }

    #[test]
    fn partitions_of_subset_use_its_members() {
        let set = Coalition::from_members([1, 3]).unwrap();
        let parts: Vec<_> = SetPartitions::of(set).unwrap().collect();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0], vec![set]);
        assert_eq!(
            parts[1],
            vec![Coalition::singleton(1), Coalition::singleton(3)]
        );
    }

    #[test]
    fn merger_counts() {
        let two = Partition::singletons(2);
        let m: Vec<_> = enumerate_mergers(&two).collect();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].merged, Coalition::full(2));
        assert_eq!(enumerate_mergers(&Partition::singletons(3)).count(), 4);
        assert_eq!(enumerate_mergers(&Partition::grand(5)).count(), 0);
        assert_eq!(
            enumerate_mergers(&Partition::singletons(5)).count(),
            32 - 5 - 1
        );
    }

    #[test]
    fn split_counts() {
        assert_eq!(enumerate_splits(&Partition::grand(2)).count(), 2);
        assert_eq!(enumerate_splits(&Partition::grand(3)).count(), 6);
        assert_eq!(enumerate_splits(&Partition::grand(4)).count(), 14);
        assert_eq!(enumerate_splits(&Partition::singletons(4)).count(), 0);
        let p = Partition::new(
            4,
            vec![
                Coalition::from_members([0, 1]).unwrap(),
                Coalition::from_members([2, 3]).unwrap(),
            ],
        )
        .unwrap();
        let s: Vec<_> = enumerate_splits(&p).map(|s| s.q).collect();
        assert_eq!(
            s,
            vec![
                Coalition::singleton(0),
                Coalition::singleton(1),
                Coalition::singleton(2),
                Coalition::singleton(3)
            ]
        );
    }

    #[test]
    fn duopoly_counts() {
        assert_eq!(enumerate_duopolies(1).count(), 0);
        assert_eq!(enumerate_duopolies(2).count(), 1);
        assert_eq!(enumerate_duopolies(5).count(), 15);
        assert!(enumerate_duopolies(4).all(|p| p.len() == 2 && p.coalitions()[0].contains(0)));
    }

    #[test]
    fn subsets_walk() {
        let c = Coalition::from_members([0, 2, 5]).unwrap();
        let all: Vec<u32> = subsets(c).map(|s| s.mask()).collect();
        assert_eq!(all, vec![1, 4, 5, 32, 33, 36, 37]);
    }
}
