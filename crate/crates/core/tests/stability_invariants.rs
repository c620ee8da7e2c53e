use std::collections::BTreeSet;

use coalition_core::enumerate::{
    enumerate_duopolies, enumerate_mergers, enumerate_partitions, enumerate_splits,
};
use coalition_core::payoffs::INTERNAL_TOLERANCE;
use coalition_core::stability::{
    check_gbpa, check_rbia, check_rbpa, find_blocking_witness_gbpa, grand_coalition_rbia,
    is_stable_partition_rbia, rbia_stable_region, rbpa_bounds, rbpa_stable_polytope_feasible,
    slack_of,
};
use coalition_core::{
    proportional_payoff, shapley_payoff, BlockKind, Coalition, Configuration, Game, Instance,
    Partition, Rule,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn game(caps: &[u32], lambda: f64) -> Game {
    Game::new(Instance::new(caps.to_vec(), lambda, 1.0).unwrap())
}

fn all_partitions(g: &Game) -> Vec<Partition> {
    enumerate_partitions(g.instance())
        .unwrap()
        .map(|b| Partition::new(g.instance().n(), b).unwrap())
        .collect()
}

fn random_phi(rng: &mut ChaCha8Rng, g: &Game, p: &Partition) -> Configuration {
    let split = g.split(p).unwrap();
    let mut phi = vec![0.0; g.instance().n()];
    for (c, rate) in split.rates() {
        let w: Vec<f64> = c.members().map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = w.iter().sum();
        for (i, wi) in c.members().zip(&w) {
            phi[i] = rate * wi / total;
        }
    }
    Configuration::new(g, p.clone(), phi, INTERNAL_TOLERANCE).unwrap()
}

fn configurations(rng: &mut ChaCha8Rng, g: &Game, p: &Partition) -> Vec<Configuration> {
    let mut out = vec![
        proportional_payoff(g, p).unwrap(),
        shapley_payoff(g, p).unwrap(),
    ];
    out.extend((0..4).map(|_| random_phi(rng, g, p)));
    out
}

fn eps(g: &Game) -> f64 {
    1e-9 * g.lambda()
}

/// Blockers recomputed from the game primitives, one rule at a time.
fn oracle_blockers(g: &Game, cfg: &Configuration, rule: Rule) -> BTreeSet<Coalition> {
    let p = cfg.partition();
    let n = g.instance().n();
    let mut out = BTreeSet::new();
    match rule {
        Rule::Gbpa => {
            for mask in 1..(1u32 << n) {
                let q = Coalition::from_mask(mask).unwrap();
                if !p.contains(q) && g.pessimal(q).unwrap() > cfg.payoff_of(q) + eps(g) {
                    out.insert(q);
                }
            }
        }
        Rule::Rbpa | Rule::Rbia => {
            for m in enumerate_mergers(p) {
                let prevailing: f64 = m.parts.iter().map(|&c| g.rate(p, c).unwrap()).sum();
                if g.pessimal(m.merged).unwrap() > prevailing + eps(g) {
                    out.insert(m.merged);
                }
            }
            for s in enumerate_splits(p) {
                let worth = g.pessimal(s.q).unwrap();
                let blocks = if rule == Rule::Rbpa {
                    worth > cfg.payoff_of(s.q) + eps(g)
                } else {
                    let inst = g.instance();
                    let share = f64::from(inst.capacity_of(s.q))
                        / f64::from(inst.capacity_of(s.parent))
                        * g.rate(p, s.parent).unwrap();
                    let after = g.rate(&p.with_split(s.parent, s.q), s.q).unwrap();
                    worth > share + eps(g) && after > cfg.payoff_of(s.q) + eps(g)
                };
                if blocks {
                    out.insert(s.q);
                }
            }
        }
    }
    out
}

#[test]
fn verdicts_match_primitive_oracle_and_nest() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (caps, lambda) in [
        (vec![9u32, 4, 3, 1], 3.0),
        (vec![9, 4, 3, 1], 40.0),
        (vec![6, 5, 5, 2, 2], 12.0),
    ] {
        let g = game(&caps, lambda);
        for p in all_partitions(&g) {
            for cfg in configurations(&mut rng, &g, &p) {
                let gb = check_gbpa(&g, &cfg).unwrap();
                let pa = check_rbpa(&g, &cfg).unwrap();
                let ia = check_rbia(&g, &cfg).unwrap();
                for v in [&gb, &pa, &ia] {
                    let got: BTreeSet<Coalition> = v.blockers().collect();
                    assert_eq!(got, oracle_blockers(&g, &cfg, v.rule), "{:?} {p}", v.rule);
                    assert_eq!(v.stable, v.witnesses.is_empty());
                    for w in &v.witnesses {
                        assert!(w.margin > eps(&g));
                    }
                }
                // a restricted-rule block is a general block
                let general: BTreeSet<Coalition> = gb.blockers().collect();
                assert!(pa.blockers().all(|q| general.contains(&q)));
                // mergers block identically under both restricted rules
                let mergers = |v: &coalition_core::StabilityVerdict| -> BTreeSet<Coalition> {
                    v.witnesses
                        .iter()
                        .filter(|w| w.kind == BlockKind::Merger)
                        .map(|w| w.blocker)
                        .collect()
                };
                assert_eq!(mergers(&pa), mergers(&ia));
                // ties at the grand coalition never block
                if p.len() == 2 {
                    let grand = g.instance().grand();
                    assert!(pa.blockers().all(|q| q != grand));
                    assert!(ia.blockers().all(|q| q != grand));
                }
                for w in ia.witnesses.iter().filter(|w| w.kind == BlockKind::Split) {
                    let dev = w.deviation.as_ref().expect("split deviation recorded");
                    assert!(dev.partition.contains(w.blocker));
                    assert_eq!(dev.partition.len(), p.len() + 1);
                }
            }
        }
    }
}

#[test]
fn proportional_payoffs_make_restricted_rules_agree() {
    for (caps, lambda) in [
        (vec![7u32, 2, 2, 2, 2], 0.5),
        (vec![7, 2, 2, 2, 2], 30.0),
        (vec![10, 2, 2, 2], 13.0),
        (vec![12, 9, 5, 4, 1], 6.0),
        (vec![3, 3], 2.0),
    ] {
        let g = game(&caps, lambda);
        for p in all_partitions(&g) {
            let cfg = proportional_payoff(&g, &p).unwrap();
            let pa = check_rbpa(&g, &cfg).unwrap();
            let ia = check_rbia(&g, &cfg).unwrap();
            assert_eq!(pa.stable, ia.stable, "{caps:?} {p}");
            assert_eq!(
                pa.blockers().collect::<Vec<_>>(),
                ia.blockers().collect::<Vec<_>>()
            );
        }
    }
}

#[test]
fn gbpa_witness_examples() {
    // identical agents standing alone are blocked by everyone but one
    let g = game(&[3, 3, 3], 4.0);
    let p = Partition::singletons(3);
    let phi: Vec<f64> = g.split(&p).unwrap().rates().map(|(_, r)| r).collect();
    let cfg = Configuration::new(&g, p.clone(), phi, INTERNAL_TOLERANCE).unwrap();
    let w = find_blocking_witness_gbpa(&g, &cfg).unwrap();
    assert_eq!(w.blocker.len(), 2);
    assert_eq!(w.kind, BlockKind::Merger);

    let g = game(&[5, 3, 2], 6.0);
    let p = g
        .instance()
        .partition_from_ids(&[vec![1, 2], vec![3]])
        .unwrap();
    let cfg = proportional_payoff(&g, &p).unwrap();
    let w = find_blocking_witness_gbpa(&g, &cfg).unwrap();
    assert!(w.blocker.len() == 1 || w.blocker.len() == 2);
    assert!(!p.contains(w.blocker));

    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..5 {
        let caps: Vec<u32> = (0..4).map(|_| rng.gen_range(1..=20)).collect();
        let g = game(&caps, rng.gen_range(1.0..100.0));
        let parts = all_partitions(&g);
        for _ in 0..100 {
            let p = &parts[rng.gen_range(0..parts.len())];
            let cfg = random_phi(&mut rng, &g, p);
            let w = find_blocking_witness_gbpa(&g, &cfg).unwrap();
            assert!(oracle_blockers(&g, &cfg, Rule::Gbpa).contains(&w.blocker));
        }
    }
    let two = game(&[2, 1], 1.0);
    let cfg = proportional_payoff(&two, &Partition::singletons(2)).unwrap();
    assert!(find_blocking_witness_gbpa(&two, &cfg).is_err());
}

#[test]
fn two_agents_with_equilibrium_payoffs_are_gbpa_stable() {
    let g = game(&[4, 1], 2.0);
    let duo = Partition::singletons(2);
    let phi: Vec<f64> = g.split(&duo).unwrap().rates().map(|(_, r)| r).collect();
    for p in [duo, Partition::grand(2)] {
        let cfg = Configuration::new(&g, p, phi.clone(), INTERNAL_TOLERANCE).unwrap();
        assert!(check_gbpa(&g, &cfg).unwrap().stable);
    }
}

#[test]
fn grand_coalition_examples() {
    let g = game(&[5, 4, 3], 6.0);
    let r = grand_coalition_rbia(&g).unwrap();
    assert!(!r.exists_stable && r.floor.is_none());

    let g = game(&[10, 2, 2, 2], 13.0);
    let r = grand_coalition_rbia(&g).unwrap();
    assert!(r.exists_stable);
    let floor = r.floor.unwrap();
    let one = Coalition::singleton(0);
    assert!(floor >= g.pessimal(one).unwrap() && floor < g.lambda());

    let g = game(&[7], 3.0);
    let r = grand_coalition_rbia(&g).unwrap();
    assert_eq!((r.exists_stable, r.floor), (true, Some(3.0)));
}

#[test]
fn partition_stability_examples() {
    let g = game(&[4, 3, 1], 2.0);
    let matched = g
        .instance()
        .partition_from_ids(&[vec![1], vec![2, 3]])
        .unwrap();
    assert!(is_stable_partition_rbia(&g, &matched).unwrap().stable);

    let g = game(&[10, 2, 2, 2], 13.0);
    let p = g
        .instance()
        .partition_from_ids(&[vec![1, 2, 3], vec![4]])
        .unwrap();
    let v = is_stable_partition_rbia(&g, &p).unwrap();
    assert!(!v.stable);
    assert!(v.witnesses.iter().all(|w| w.kind == BlockKind::Split));
}

#[test]
fn polytope_examples() {
    let g = game(&[6, 4, 3], 5.0);
    let grand = Partition::grand(3);
    assert!(!rbpa_stable_polytope_feasible(&g, &grand).unwrap().feasible);

    // singletons: no split rows, merger rows decide
    let singles = Partition::singletons(3);
    let r = rbpa_stable_polytope_feasible(&g, &singles).unwrap();
    assert!(!r.feasible);
    assert!(r.merger_block.is_some());

    for p in enumerate_duopolies(3) {
        if !is_stable_partition_rbia(&g, &p).unwrap().stable {
            continue;
        }
        let report = rbpa_stable_polytope_feasible(&g, &p).unwrap();
        assert!(report.feasible);
        let cfg = proportional_payoff(&g, &p).unwrap();
        let bounds = rbpa_bounds(&g, &p).unwrap();
        assert!(slack_of(cfg.phi(), &bounds) > 0.0);
        assert!(report.slack >= slack_of(cfg.phi(), &bounds) - 1e-9);
        // the max-slack payoff is itself stable
        let phi = report.witness_phi.unwrap();
        let witness = Configuration::new(&g, p.clone(), phi, INTERNAL_TOLERANCE).unwrap();
        assert!(check_rbpa(&g, &witness).unwrap().stable);
        assert!(rbia_stable_region(&g, &p).unwrap().feasible);
    }
}
