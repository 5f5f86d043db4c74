use mtss::action::{Action, Observation};
use mtss::agents::{run_mnl_agent_epoch, Agent, AgentKind, AgentSettings, Schedule};
use mtss::env::{draw_instance, preset, step_semi, Environment, ScenarioConfig, ThetaSource};
use mtss::genmodel::{BetaLogisticSpec, Link};
use mtss::history::InteractionHistory;
use mtss::lmm::LmmSpec;
use mtss::rng::{derive_seed, seeded_rng};
use mtss::{GaussianBelief, ItemCatalog, ProblemKind};

fn every_round() -> AgentSettings {
    AgentSettings {
        schedule: Some(Schedule::EveryRound),
        ..Default::default()
    }
}

/// Play `rounds` semi-bandit rounds and return the chosen actions.
fn play_semi(env: &Environment, agent: &mut Agent, rounds: usize, seed: u64) -> Vec<Action> {
    let Environment::Semi(e) = env else {
        panic!("semi-bandit expected")
    };
    let mut h = InteractionHistory::new(ProblemKind::SemiBandit, env.catalog().n_items());
    let mut rng = seeded_rng(seed, "feedback");
    (0..rounds)
        .map(|_| {
            let a = agent.select(&h, env.catalog()).unwrap();
            let (obs, _) = step_semi(e, &a, &mut rng).unwrap();
            h.record(a.clone(), obs).unwrap();
            a
        })
        .collect()
}

fn small_semi(sigma1: f64) -> (ScenarioConfig, Vec<f64>, Environment) {
    let mut s = preset("semi-6.1-desk").unwrap();
    s.n_items = 40;
    s.theta_source = ThetaSource::Lmm { sigma1 };
    let gamma = vec![0.3, -0.5, 0.2, 0.4, 0.1];
    let env = draw_instance(&s, &gamma, &mut seeded_rng(1, "instance")).unwrap();
    (s, gamma, env)
}

#[test]
fn schedule_refreshes_ceil_t_over_m_times() {
    let (s, _, env) = small_semi(0.5);
    for m in [1u64, 7, 100, 300] {
        let settings = AgentSettings {
            schedule: Some(Schedule::EveryMRounds { m }),
            ..Default::default()
        };
        let mut agent = Agent::new(AgentKind::Mtss, &s, None, &settings, 3).unwrap();
        play_semi(&env, &mut agent, 250, 3);
        assert_eq!(agent.gamma_draws(), 250u64.div_ceil(m));
    }
}

#[test]
fn beta_schedule_counts_rounds_not_epochs() {
    let s = preset("mnl-6.1-desk").unwrap();
    let gamma = vec![0.3, -0.5, 0.2, 0.4, 0.1];
    let env = draw_instance(&s, &gamma, &mut seeded_rng(2, "instance")).unwrap();
    let Environment::Mnl(e) = &env else { unreachable!() };
    let settings = AgentSettings {
        schedule: Some(Schedule::EveryMRounds { m: 50 }),
        sampler: mtss::genmodel::GammaSamplerConfig {
            n_burnin: 20,
            n_keep: 20,
            refresh_iters: 5,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut agent = Agent::new(AgentKind::Mtss, &s, None, &settings, 4).unwrap();
    let mut h = InteractionHistory::new(ProblemKind::Mnl, s.n_items);
    let mut rng = seeded_rng(4, "feedback");
    let mut last_bucket = None;
    let mut expected = 0;
    while h.rounds() < 400 {
        let bucket = h.rounds() / 50;
        if last_bucket != Some(bucket) {
            expected += 1;
            last_bucket = Some(bucket);
        }
        let before = h.stats().all_pulls().to_vec();
        let (action, obs) = run_mnl_agent_epoch(&mut agent, e, &mut h, &mut rng).unwrap();
        assert_eq!(agent.gamma_draws(), expected);
        // Each offered item gains exactly one epoch, whatever the epoch length.
        for (i, b) in before.iter().enumerate() {
            let offered = action.items().contains(&i) as u64;
            assert_eq!(h.stats().pulls(i), b + offered);
        }
        assert!(matches!(obs, Observation::MnlEpoch { .. }));
    }
}

#[test]
fn same_seed_same_actions() {
    for name in ["semi-6.1-desk", "cascade-6.1-desk"] {
        let s = preset(name).unwrap();
        let runs: Vec<_> = (0..2)
            .map(|_| {
                mtss::harness::run_replication_with(&s, AgentKind::Mtss, 300, 17, None, &AgentSettings::default())
                    .unwrap()
            })
            .collect();
        assert_eq!(runs[0].trace, runs[1].trace, "{name}");
    }
}

#[test]
fn mtss_is_equivariant_under_item_permutation() {
    let (s, _, env) = small_semi(0.5);
    let n = s.n_items;
    let perm: Vec<usize> = (0..n).map(|j| (j * 7 + 3) % n).collect();
    let mut agent = Agent::new(AgentKind::Mtss, &s, None, &every_round(), 5).unwrap();
    let mut h = InteractionHistory::new(ProblemKind::SemiBandit, n);
    let Environment::Semi(e) = &env else { unreachable!() };
    let mut rng = seeded_rng(5, "feedback");
    for _ in 0..60 {
        let a = agent.select(&h, env.catalog()).unwrap();
        let (obs, _) = step_semi(e, &a, &mut rng).unwrap();
        h.record(a, obs).unwrap();
    }
    let pcat = env.catalog().permuted(&perm).unwrap();
    let ph = h.permuted(&perm).unwrap();
    let mut inverse = vec![0; n];
    for (j, &p) in perm.iter().enumerate() {
        inverse[p] = j;
    }
    let mut matched = 0;
    for round in 0..50 {
        let mut a1 = agent.clone();
        let mut a2 = agent.clone();
        // Advance both copies to a distinct selection slot per round.
        for _ in 0..round {
            a1.sample_parameters(&h, env.catalog()).unwrap();
            a2.sample_parameters(&ph, &pcat).unwrap();
        }
        let t1 = a1.sample_parameters(&h, env.catalog()).unwrap();
        let t2 = a2.sample_parameters(&ph, &pcat).unwrap();
        for i in 0..n {
            assert!((t1[i] - t2[inverse[i]]).abs() < 1e-9, "round {round}, item {i}");
        }
        let mut expect: Vec<usize> = agent
            .clone()
            .select(&h, env.catalog())
            .unwrap()
            .items()
            .iter()
            .map(|&i| inverse[i])
            .collect();
        expect.sort_unstable();
        let got = agent.clone().select(&ph, &pcat).unwrap();
        if got.items() == expect.as_slice() {
            matched += 1;
        }
    }
    assert_eq!(matched, 50);
}

#[test]
fn tiny_sigma1_mtss_acts_like_determined() {
    let (s, _, env) = small_semi(0.5);
    let mut tiny = s.clone();
    tiny.theta_source = ThetaSource::Lmm { sigma1: 1e-6 };
    let mut mtss = Agent::new(AgentKind::Mtss, &tiny, None, &every_round(), 6).unwrap();
    let mut det = Agent::new(AgentKind::Determined, &s, None, &every_round(), 6).unwrap();
    let a = play_semi(&env, &mut mtss, 500, 6);
    let b = play_semi(&env, &mut det, 500, 6);
    let same = a.iter().zip(&b).filter(|(x, y)| x == y).count();
    assert!(same >= 495, "{same} of 500 identical");
}

#[test]
fn symmetric_two_item_choice_is_fair() {
    let spec = LmmSpec::isotropic(1, 1.0, 1.0).unwrap();
    let cat = ItemCatalog::new(vec![vec![1.0], vec![1.0]]).unwrap();
    let mut h = InteractionHistory::new(ProblemKind::SemiBandit, 2);
    h.record(Action::Subset(vec![0, 1]), Observation::SemiBandit(vec![0.4, 0.4]))
        .unwrap();
    // Non-positive draws are dropped by the greedy rule, so compare item 0
    // against item 1 only.
    let (mut zeros, mut ones) = (0usize, 0usize);
    for r in 0..10_000 {
        let mut agent = Agent::lmm(
            AgentKind::Mtss,
            1,
            spec.clone(),
            None,
            &every_round(),
            derive_seed(7, "fair", r),
        )
        .unwrap();
        match agent.select(&h, &cat).unwrap().items() {
            [0] => zeros += 1,
            [1] => ones += 1,
            _ => {}
        }
    }
    let m = (zeros + ones) as f64;
    let p = zeros as f64 / m;
    assert!(m > 5000.0);
    assert!((p - 0.5).abs() < 3.0 * (0.25 / m).sqrt(), "{p}");
}

#[test]
fn agnostic_ignores_features() {
    let (s, _, env) = small_semi(0.5);
    let mut shuffled_rows: Vec<Vec<f64>> = (0..s.n_items).map(|i| env.catalog().features(i).to_vec()).collect();
    shuffled_rows.rotate_left(5);
    let other = ItemCatalog::new(shuffled_rows).unwrap();
    let mut h = InteractionHistory::new(ProblemKind::SemiBandit, s.n_items);
    h.record(Action::Subset(vec![1, 2]), Observation::SemiBandit(vec![1.0, -1.0]))
        .unwrap();
    for r in 0..20 {
        let mut a = Agent::new(AgentKind::Agnostic, &s, None, &AgentSettings::default(), r).unwrap();
        let mut b = a.clone();
        assert_eq!(a.select(&h, env.catalog()).unwrap(), b.select(&h, &other).unwrap());
    }
}

#[test]
fn cascade_success_raises_first_rank_probability() {
    let spec = BetaLogisticSpec::new(2.0, Link::Plain, GaussianBelief::isotropic(1, 1.0).unwrap()).unwrap();
    let cat = ItemCatalog::new(vec![vec![1.0]; 4]).unwrap();
    let empty = InteractionHistory::new(ProblemKind::Cascade, 4);
    let mut one = empty.clone();
    one.record(Action::Ranked(vec![2]), Observation::Cascade { click: Some(0) })
        .unwrap();
    let m = 4000;
    let first = |h: &InteractionHistory| {
        (0..m)
            .filter(|&r| {
                let mut a = Agent::beta(
                    AgentKind::Agnostic,
                    ProblemKind::Cascade,
                    2,
                    spec.clone(),
                    None,
                    &AgentSettings::default(),
                    r,
                )
                .unwrap();
                a.select(h, &cat).unwrap().items()[0] == 2
            })
            .count() as f64
            / m as f64
    };
    let (p0, p1) = (first(&empty), first(&one));
    assert!(p1 > p0 + 3.0 * (0.25 / m as f64).sqrt() * 2f64.sqrt(), "{p0} -> {p1}");
}

#[test]
fn half_thetas_give_lowest_index_assortment() {
    // Determined agent with a prior pinned at gamma = 0 maps every item to 1/2.
    let spec = BetaLogisticSpec::new(2.0, Link::Plain, GaussianBelief::isotropic(1, 1e-30).unwrap()).unwrap();
    let cat = ItemCatalog::new(vec![vec![1.0]; 6])
        .unwrap()
        .with_revenues(vec![1.0; 6])
        .unwrap();
    let h = InteractionHistory::new(ProblemKind::Mnl, 6);
    let mut d = Agent::beta(
        AgentKind::Determined,
        ProblemKind::Mnl,
        3,
        spec,
        None,
        &AgentSettings::default(),
        1,
    )
    .unwrap();
    let theta = d.sample_parameters(&h, &cat).unwrap();
    assert!(theta.iter().all(|t| (t - 0.5).abs() < 1e-12));
    let mut d2 = d.clone();
    assert_eq!(d2.select(&h, &cat).unwrap().items(), &[0, 1, 2]);
}

#[test]
fn shifted_link_mtss_means_exceed_half() {
    let s = preset("mnl-6.1-desk").unwrap();
    let gamma = vec![0.3, -0.5, 0.2, 0.4, 0.1];
    let env = draw_instance(&s, &gamma, &mut seeded_rng(8, "instance")).unwrap();
    let Environment::Mnl(e) = &env else { unreachable!() };
    let settings = AgentSettings {
        schedule: Some(Schedule::EveryMRounds { m: 20 }),
        sampler: mtss::genmodel::GammaSamplerConfig {
            n_burnin: 100,
            n_keep: 50,
            refresh_iters: 10,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut agent = Agent::new(AgentKind::Mtss, &s, None, &settings, 8).unwrap();
    let mut h = InteractionHistory::new(ProblemKind::Mnl, s.n_items);
    let mut rng = seeded_rng(8, "feedback");
    while h.rounds() < 300 {
        run_mnl_agent_epoch(&mut agent, e, &mut h, &mut rng).unwrap();
        let g = agent.cached_gamma().unwrap();
        assert!((0..s.n_items).all(|i| Link::Shifted.mean(env.catalog().linear_score(i, g)) > 0.5));
    }
    assert!(agent.clamp_stats().fraction() < 1e-3);
}

#[test]
fn oracle_concentrates_on_true_top_k() {
    let (s, _, env) = small_semi(0.5);
    let mut agent = Agent::new(
        AgentKind::Oracle,
        &s,
        Some(env.ground().gamma_true()),
        &every_round(),
        9,
    )
    .unwrap();
    let actions = play_semi(&env, &mut agent, 3000, 9);
    let best = mtss::optim::top_k(env.ground().theta(), s.k).unwrap();
    let hits = actions[2500..].iter().filter(|a| a.items() == best.items()).count();
    assert!(hits >= 450, "{hits} of 500");
}

#[test]
fn determined_agent_learns_when_the_model_is_exact() {
    let (s, _, env) = small_semi(0.0);
    let agent = Agent::new(AgentKind::Determined, &s, None, &every_round(), 10).unwrap();
    let out = mtss::harness::run_on_environment(&s, env, agent, 2000, 10).unwrap();
    let inst = out.trace.instant();
    let first = inst[..200].iter().sum::<f64>() / 200.0;
    let last = inst[1800..].iter().sum::<f64>() / 200.0;
    assert!(last < 0.1 * first, "first decile {first}, last decile {last}");
}
