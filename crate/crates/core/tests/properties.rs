use approx::assert_abs_diff_eq;
use proptest::prelude::{any, prop, prop_assert, prop_assert_eq, prop_assume, proptest};
use proptest::strategy::Strategy as PropStrategy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use silo_games::markov::{
    build_transition_matrix, controlled_column, expected_value, stationary_distribution,
    stationary_power,
};
use silo_games::mmzd::{alpha0_bounds, state_welfare_vector, synthesize, PinningSpec};
use silo_games::sim::{self, convergence_report, InitialState, Seat, SimPlan};
use silo_games::strategy::{Baseline, Strategy, StrategyTable};
use silo_games::{GameConfig, JointProfile, OrgParams, StateSpace};

fn c2() -> GameConfig {
    GameConfig::homogeneous(2, 1, 1, 10.0, 10.0, OrgParams::new(3.0, 0.4, 0.1))
}

fn random_table(cfg: &GameConfig, rng: &mut ChaCha8Rng) -> Strategy {
    let space = StateSpace::for_config(cfg).unwrap();
    let k = cfg.action_count();
    let rows = (0..space.len())
        .map(|_| {
            let row: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.01).collect();
            let s: f64 = row.iter().sum();
            row.into_iter().map(|x| x / s).collect()
        })
        .collect();
    Strategy::Table(StrategyTable::from_rows(space, rows).unwrap())
}

fn arb_game(max_n: usize, max_r: u32) -> impl PropStrategy<Value = GameConfig> {
    (2..=max_n, 1..=max_r, 1u32..=6, 0.5f64..20.0, 0.5f64..20.0).prop_flat_map(
        move |(n, r, k, t0, t1)| {
            prop::collection::vec((0.0f64..5.0, 0.0f64..0.6, 0.0f64..0.3), n).prop_map(
                move |orgs| GameConfig {
                    n_orgs: n,
                    local_iters: k,
                    max_rounds: r,
                    theta0: t0,
                    theta1: t1,
                    orgs: orgs
                        .into_iter()
                        .map(|(m, b, c)| OrgParams::new(m, b, c))
                        .collect(),
                },
            )
        },
    )
}

// Anonymity: utility depends on the others only through the total.
proptest! {
    #[test]
    fn utility_depends_on_total_only(cfg in arb_game(4, 3), seed in any::<u64>()) {
        let space = StateSpace::for_config(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let a = space.decode(silo_games::StateIndex(rng.random_range(0..space.len())));
            let b = space.decode(silo_games::StateIndex(rng.random_range(0..space.len())));
            for i in 0..cfg.n_orgs {
                if a.actions()[i] == b.actions()[i] && a.total() == b.total() {
                    prop_assert_eq!(cfg.org_utility(i, &a), cfg.org_utility(i, &b));
                }
            }
            // moving participation between two other orgs keeps the total
            let mut c = a.clone();
            let (x, y) = (1, cfg.n_orgs - 1);
            if x != y && c.actions()[x] > 0 && c.actions()[y] < cfg.max_rounds {
                c.actions_mut()[x] -= 1;
                c.actions_mut()[y] += 1;
                prop_assert_eq!(cfg.org_utility(0, &a), cfg.org_utility(0, &c));
            }
            let sum: f64 = (0..cfg.n_orgs).map(|i| cfg.org_utility(i, &a)).sum();
            prop_assert_eq!(cfg.social_welfare(&a), sum);
        }
    }

    // Raising one's own participation by one, with the others fixed, changes
    // one's utility by the marginal model gain minus beta*K.
    #[test]
    fn own_marginal_utility(cfg in arb_game(3, 4), org in 0usize..3, seed in any::<u64>()) {
        let org = org % cfg.n_orgs;
        let space = StateSpace::for_config(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = space.decode(silo_games::StateIndex(rng.random_range(0..space.len())));
        let y = p.actions()[org];
        prop_assume!(y < cfg.max_rounds);
        let q = p.with_action(org, y + 1);
        let o = &cfg.orgs[org];
        let chi = |t: u64| cfg.theta0 / (cfg.theta1 + cfg.local_iters as f64 * t as f64);
        let expected = o.unit_revenue * (chi(p.total()) - chi(q.total()))
            - o.compute_coeff * cfg.local_iters as f64;
        let got = cfg.org_utility(org, &q) - cfg.org_utility(org, &p);
        prop_assert!((got - expected).abs() < 1e-9, "{} vs {}", got, expected);
    }
}

#[test]
fn zero_determinant_identity_for_any_column() {
    // v . (controlled column) = 0 for every stationary v, whatever the strategies.
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for (n, r) in [(2usize, 1u32), (2, 2), (3, 1), (3, 2)] {
        let cfg = GameConfig::homogeneous(n, 2, r, 5.0, 6.0, OrgParams::new(2.0, 0.1, 0.05));
        for _ in 0..10 {
            let strategies: Vec<Strategy> = (0..n).map(|_| random_table(&cfg, &mut rng)).collect();
            let tm = build_transition_matrix(&strategies, &cfg, 4096).unwrap();
            let st = stationary_distribution(&tm).unwrap();
            for (org, strategy) in strategies.iter().enumerate() {
                for g in 0..=r {
                    let col = controlled_column(strategy, org, g, &cfg, 4096).unwrap();
                    for v in &st.distributions {
                        let dot: f64 = v.iter().zip(&col).map(|(a, b)| a * b).sum();
                        assert!(dot.abs() < 1e-10, "org {org} slice {g}: {dot}");
                    }
                }
            }
        }
    }
}

#[test]
fn pinned_value_is_sandwiched_between_block_extremes() {
    // For phi > 0 every feasible alpha0 satisfies
    // max_{slice states} S <= -alpha0 <= min_{other states} S.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut feasible = 0;
    for _ in 0..400 {
        let n = rng.random_range(2..=3);
        let r = rng.random_range(1..=3);
        let orgs = (0..n)
            .map(|_| {
                OrgParams::new(
                    rng.random_range(0.0..4.0),
                    rng.random_range(0.0..0.5),
                    rng.random_range(0.0..0.2),
                )
            })
            .collect();
        let cfg = GameConfig {
            n_orgs: n,
            local_iters: 2,
            max_rounds: r,
            theta0: 8.0,
            theta1: 9.0,
            orgs,
        };
        let space = StateSpace::for_config(&cfg).unwrap();
        let s = state_welfare_vector(&cfg, &vec![1.0; n], 4096).unwrap();
        let g = rng.random_range(0..=r);
        let b = alpha0_bounds(&space, &s, 0.05, g, 0).unwrap();
        if !b.feasible {
            continue;
        }
        feasible += 1;
        let (mut hi_slice, mut lo_other) = (f64::NEG_INFINITY, f64::INFINITY);
        for j in space.indices() {
            if space.action(j, 0) == g {
                hi_slice = hi_slice.max(s[j.as_usize()]);
            } else {
                lo_other = lo_other.min(s[j.as_usize()]);
            }
        }
        assert!(hi_slice <= -b.alpha0_max + 1e-9);
        assert!(-b.alpha0_min <= lo_other + 1e-9);
    }
    assert!(feasible > 0);
}

#[test]
fn power_iteration_matches_null_space() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = GameConfig::homogeneous(3, 1, 2, 5.0, 6.0, OrgParams::new(2.0, 0.1, 0.05));
    for _ in 0..5 {
        let strategies: Vec<Strategy> = (0..3).map(|_| random_table(&cfg, &mut rng)).collect();
        let tm = build_transition_matrix(&strategies, &cfg, 4096).unwrap();
        let exact = stationary_distribution(&tm).unwrap();
        let power = stationary_power(&tm, 1e-13, 100_000).unwrap();
        for (a, b) in exact.distributions[0].iter().zip(&power.distributions[0]) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }
}

#[test]
fn simulation_agrees_with_stationary_welfare() {
    // C2 MMZD against Rand: the long-run mean welfare is the pinned value.
    let cfg = c2();
    let res = synthesize(&cfg, &PinningSpec::new(0.5, 0), 3.0 / 55.0).unwrap();
    let opp = Strategy::Baseline(Baseline::Rand);
    let tm = build_transition_matrix(&[res.strategy.clone(), opp.clone()], &cfg, 4096).unwrap();
    let st = stationary_distribution(&tm).unwrap();
    let s = state_welfare_vector(&cfg, &[1.0, 1.0], 4096).unwrap();
    assert_abs_diff_eq!(
        expected_value(&st.distributions[0], &s).unwrap(),
        -3.0 / 55.0,
        epsilon = 1e-12
    );

    let plan = SimPlan {
        cfg,
        seats: vec![Seat::Fixed(res.strategy), Seat::Fixed(opp)],
        rounds: 60,
        reps: 2000,
        seed: 7,
        initial_state: InitialState::Uniform,
    };
    let traj = sim::run(&plan).unwrap();
    let report = convergence_report(&traj, -3.0 / 55.0, 10, 0.01).unwrap();
    assert!(report.within_tolerance, "{report:?}");
    assert!(
        report.deviation < 4.0 * report.std_error + 2e-3,
        "{report:?}"
    );
}

#[test]
fn replications_do_not_depend_on_batch() {
    // Replication k is the same whether it runs alone or inside a batch.
    let cfg = GameConfig::homogeneous(3, 2, 3, 5.0, 6.0, OrgParams::new(2.0, 0.1, 0.05));
    let seats = vec![
        Seat::Mixed,
        Seat::Fixed(Strategy::Baseline(Baseline::Rand)),
        Seat::Mixed,
    ];
    let mk = |reps| SimPlan {
        cfg: cfg.clone(),
        seats: seats.clone(),
        rounds: 15,
        reps,
        seed: 99,
        initial_state: InitialState::Uniform,
    };
    let small = sim::run(&mk(3)).unwrap();
    let large = sim::run(&mk(64)).unwrap();
    for rep in 0..3 {
        assert_eq!(small.rep_records(rep), large.rep_records(rep));
    }
}

#[test]
fn tft_tracks_the_group() {
    let cfg = GameConfig::homogeneous(3, 1, 3, 5.0, 6.0, OrgParams::new(2.0, 0.1, 0.05));
    let tft = Strategy::Baseline(Baseline::Tft);
    let low = tft.row(&cfg, &JointProfile::new(vec![0, 1, 1])).unwrap();
    let high = tft.row(&cfg, &JointProfile::new(vec![3, 3, 2])).unwrap();
    assert_eq!(low[3], 0.0);
    assert!(low[0] > 0.0);
    assert_eq!(high[0], 0.0);
    assert!(high[3] > 0.0);
}
