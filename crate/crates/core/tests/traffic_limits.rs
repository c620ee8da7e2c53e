use coalition_core::traffic::{
    larger_side, light_traffic_class, log_grid, parse_grid, psi_profile_real, real_k_grid,
    regime_sweep, SWEEP_AGENT_CAP, SWEEP_GRID_CAP,
};
use coalition_core::{Error, Game, Instance};
use std::collections::BTreeSet;

fn inst(caps: &[u32], lambda: f64) -> Instance {
    Instance::new(caps.to_vec(), lambda, 1.0).unwrap()
}

#[test]
fn light_class_for_one_large_four_small() {
    let i = inst(&[7, 2, 2, 2, 2], 1.0);
    let class = light_traffic_class(&i);
    let caps: BTreeSet<u32> = class
        .iter()
        .map(|p| i.capacity_of(larger_side(&i, p)))
        .collect();
    assert_eq!(caps, BTreeSet::from([8, 9]));
    // {large} against the four small ones is the most balanced split
    let matched = i.partition_from_ids(&[vec![1], vec![2, 3, 4, 5]]).unwrap();
    assert!(class.contains(&matched));
    // 4 pairings of the large agent plus the matched one
    assert_eq!(class.len(), 5);
}

#[test]
fn larger_side_holds_more_servers() {
    let i = inst(&[5, 4, 3], 1.0);
    let p = i.partition_from_ids(&[vec![1], vec![2, 3]]).unwrap();
    assert_eq!(i.capacity_of(larger_side(&i, &p)), 7);
}

/// Second-order heavy-traffic expansion of the split:
/// `λ₁/k − λ₂/(N−k) ≈ 1/(N−k) − 1/k`.
#[test]
fn heavy_traffic_per_server_gap() {
    let i = inst(&[7, 2, 2, 2, 2], 1.0);
    let total = f64::from(i.total_capacity());
    let lambda = 1000.0 * total;
    let game = Game::new(i.with_lambda(lambda).unwrap());
    for p in coalition_core::enumerate::enumerate_duopolies(5) {
        let big = larger_side(&i, &p);
        let k = f64::from(i.capacity_of(big));
        if k == total - k {
            continue;
        }
        let l1 = game.rate(&p, big).unwrap();
        let gap = l1 / k - (lambda - l1) / (total - k);
        let predicted = 1.0 / (total - k) - 1.0 / k;
        assert!(
            (gap / predicted - 1.0).abs() < 0.1,
            "k={k}: {gap} vs {predicted}"
        );
    }
}

#[test]
fn real_psi_at_half_is_the_mean_rate() {
    let i = inst(&[6, 5, 3, 2], 1.0);
    for lambda in [0.5, 16.0, 800.0] {
        let prof = psi_profile_real(&i, lambda, &[8.0]).unwrap();
        assert!((prof[0].1 - lambda / 16.0).abs() < 1e-9 * lambda);
    }
}

#[test]
fn real_psi_matches_integer_psi() {
    let i = inst(&[6, 5, 3, 2], 9.0);
    let game = Game::new(i.clone());
    for k in [8u32, 9, 10, 11, 13, 14] {
        let real = psi_profile_real(&i, 9.0, &[f64::from(k)]).unwrap()[0].1;
        assert!((real - game.psi(k).unwrap()).abs() < 1e-9, "k={k}");
    }
}

#[test]
fn real_psi_increases_in_heavy_traffic() {
    let i = inst(&[7, 2, 2, 2, 2], 1.0);
    let prof = psi_profile_real(&i, 1500.0, &real_k_grid(15, 1.0, 0.25)).unwrap();
    assert!(prof.windows(2).all(|w| w[1].1 > w[0].1));
}

#[test]
fn larger_side_share_grows_as_traffic_thins() {
    let i = inst(&[7, 2, 2, 2, 2], 1.0);
    let total = i.total_capacity();
    for p in coalition_core::enumerate::enumerate_duopolies(5) {
        let big = larger_side(&i, &p);
        if 2 * i.capacity_of(big) == total {
            continue;
        }
        // the smaller side's share, which avoids cancellation near 1
        let small = i.grand().without(big).unwrap();
        let shares: Vec<f64> = [10.0, 1.0, 0.1, 0.01, 0.001]
            .iter()
            .map(|&l| {
                Game::new(i.with_lambda(l).unwrap())
                    .rate(&p, small)
                    .unwrap()
                    / l
            })
            .collect();
        assert!(shares.windows(2).all(|w| w[1] < w[0]), "{p}: {shares:?}");
    }
}

#[test]
fn psi_domain_is_checked() {
    let i = inst(&[3, 2], 1.0);
    assert!(psi_profile_real(&i, 1.0, &[2.0]).is_err());
    assert!(psi_profile_real(&i, 1.0, &[5.0]).is_err());
    assert!(psi_profile_real(&i, 0.0, &[3.0]).is_err());
}

#[test]
fn k_grid_endpoints() {
    let g = real_k_grid(15, 0.5, 0.25);
    assert_eq!(g.first(), Some(&7.5));
    assert_eq!(g.last(), Some(&14.5));
    assert_eq!(g.len(), 29);
}

#[test]
fn sweep_rejects_bad_inputs() {
    let nine = inst(&[1; 9], 1.0);
    assert!(
        matches!(regime_sweep(&nine, &[1.0]), Err(Error::TooLarge { limit, .. }) if limit == SWEEP_AGENT_CAP)
    );
    let i = inst(&[3, 2, 1], 1.0);
    assert!(regime_sweep(&i, &[]).is_err());
    let long = log_grid(0.1, 10.0, SWEEP_GRID_CAP + 1);
    assert!(regime_sweep(&i, &long).is_err());
    assert!(regime_sweep(&i, &[2.0, 1.0]).is_err());
    assert!(regime_sweep(&inst(&[4], 1.0), &[1.0]).is_err());
}

#[test]
fn sweep_shape() {
    let i = inst(&[4, 3, 2, 1], 1.0);
    let r = regime_sweep(&i, &[0.1, 1.0, 10.0]).unwrap();
    assert_eq!(r.duopolies.len(), 7);
    assert_eq!(r.points.len(), 3);
    for p in &r.points {
        assert_eq!(p.stable.len(), 7);
        assert!(p.light_concentration.iter().all(|&c| c > 0.0 && c < 1.0));
    }
}

#[test]
fn grids() {
    let g = log_grid(0.01, 100.0, 5);
    let want = [0.01, 0.1, 1.0, 10.0, 100.0];
    for (a, b) in g.iter().zip(want) {
        assert!((a / b - 1.0).abs() < 1e-12);
    }
    assert_eq!(g[4], 100.0);
    assert_eq!(log_grid(3.0, 9.0, 1), vec![3.0]);

    assert_eq!(parse_grid("lin:1:3:3").unwrap(), vec![1.0, 2.0, 3.0]);
    assert_eq!(parse_grid("0.5, 2,8").unwrap(), vec![0.5, 2.0, 8.0]);
    assert_eq!(parse_grid("log:1:100:3").unwrap().len(), 3);
    for bad in [
        "",
        "log:0:1:3",
        "lin:2:1:3",
        "cube:1:2:3",
        "1,-2",
        "log:1:2:x",
        "1:2",
    ] {
        assert!(parse_grid(bad).is_err(), "{bad}");
    }
}
