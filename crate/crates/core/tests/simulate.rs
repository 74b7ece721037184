use efc::measures::{CoagulationMeasure, ModelSpec, SplittingMeasure};
use efc::rates::coag_row;
use efc::simulate::{
    rng_for, simulate_path, simulate_truncated, ChainState, EventKind, PathParams, SimConfig, Simulator, Terminal,
    DEFAULT_RATE_CACHE,
};
use efc::stats::chi_square_test;
use efc::EfcError;

fn uniform_logpower() -> ModelSpec {
    ModelSpec::new(
        CoagulationMeasure::uniform(1.0).unwrap(),
        SplittingMeasure::log_power(1.0, 1.0).unwrap(),
        None,
    )
    .unwrap()
}

fn log_power(beta: f64) -> ModelSpec {
    ModelSpec::new(
        CoagulationMeasure::log_power(1.0, beta).unwrap(),
        SplittingMeasure::log_power(1.0, 1.0).unwrap(),
        None,
    )
    .unwrap()
}

fn pure_coag() -> ModelSpec {
    ModelSpec::new(CoagulationMeasure::uniform(1.0).unwrap(), SplittingMeasure::zero(), None).unwrap()
}

fn assert_within_sigmas(hits: u64, draws: u64, p: f64, sigmas: f64) {
    let freq = hits as f64 / draws as f64;
    let sd = (p * (1.0 - p) / draws as f64).sqrt();
    assert!((freq - p).abs() <= sigmas * sd, "freq {freq} vs p {p} (sd {sd})");
}

/// Histogram of merge sizes `2..=n` against the exact row.
fn merge_gof(sim: &Simulator, n: u64, draws: u64, seed: u64, by_rejection: bool) -> f64 {
    let mut rng = rng_for(seed, 0);
    let mut counts = vec![0u64; (n - 1) as usize];
    for _ in 0..draws {
        let k = if by_rejection {
            sim.coag_sampler().sample_by_rejection(n, &mut rng).unwrap()
        } else {
            sim.coag_sampler().sample(n, &mut rng).unwrap()
        };
        counts[(k - 2) as usize] += 1;
    }
    let row = coag_row(sim.spec().lam(), n).unwrap();
    let total: f64 = row.iter().sum();
    let expected: Vec<f64> = row.iter().map(|r| r / total * draws as f64).collect();
    chi_square_test(&counts, &expected, 5.0).2
}

#[test]
fn uniform_three_blocks_merge_law() {
    let sim = Simulator::new(&uniform_logpower(), 8).unwrap();
    let mut rng = rng_for(11, 0);
    let draws = 100_000;
    let twos = (0..draws)
        .filter(|_| sim.coag_sampler().sample(3, &mut rng).unwrap() == 2)
        .count() as u64;
    assert_within_sigmas(twos, draws, 0.75, 4.0);
}

#[test]
fn two_blocks_always_merge_fully() {
    let sim = Simulator::new(&log_power(2.0), 8).unwrap();
    let mut rng = rng_for(1, 0);
    for _ in 0..100 {
        assert_eq!(sim.coag_sampler().sample(2, &mut rng).unwrap(), 2);
    }
}

#[test]
fn uniform_thirty_blocks_goodness_of_fit() {
    let sim = Simulator::new(&uniform_logpower(), 8).unwrap();
    let p = merge_gof(&sim, 30, 100_000, 5, false);
    assert!(p > 0.001, "p = {p}");
}

#[test]
fn rejection_path_matches_exact_table() {
    for beta in [1.5, 3.0] {
        let sim = Simulator::new(&log_power(beta), 8).unwrap();
        let p = merge_gof(&sim, 1000, 200_000, 9, true);
        assert!(p > 0.001, "beta {beta}: p = {p}");
    }
    let sim = Simulator::new(&uniform_logpower(), 8).unwrap();
    let p = merge_gof(&sim, 40, 100_000, 10, true);
    assert!(p > 0.001, "uniform: p = {p}");
}

#[test]
fn rejection_acceptance_floor() {
    let mut rng = rng_for(2, 0);
    for beta in [1.2, 2.0, 3.0] {
        let sim = Simulator::new(&log_power(beta), 8).unwrap();
        for n in [513u64, 10_000, 1_000_000] {
            let acc = sim.coag_sampler().acceptance_rate(n, 20_000, &mut rng).unwrap();
            assert!(acc >= 0.2, "beta {beta} n {n}: acceptance {acc}");
        }
    }
}

#[test]
fn beta_density_without_envelope_refuses_large_n() {
    let spec = ModelSpec::new(
        CoagulationMeasure::beta_density(2.0, 0.5, 1.0).unwrap(),
        SplittingMeasure::zero(),
        None,
    )
    .unwrap();
    let sim = Simulator::new(&spec, 8).unwrap();
    let mut rng = rng_for(0, 0);
    assert!(sim.coag_sampler().sample(200, &mut rng).is_ok());
    assert!(matches!(
        sim.coag_sampler().sample(1000, &mut rng),
        Err(EfcError::EnvelopeUnavailable(_))
    ));
}

#[test]
fn fragment_size_of_two_has_exact_probability() {
    let spec = uniform_logpower();
    let mu = spec.effective_mu();
    let p2 = mu.mass(2) / mu.total();
    assert!((p2 - 0.184830).abs() < 5e-6, "{p2}");
    let sim = Simulator::new(&spec, 8).unwrap();
    let mut rng = rng_for(4, 0);
    let draws = 200_000;
    let twos = (0..draws)
        .filter(|_| sim.frag_sampler().sample(&mut rng).unwrap() == 2)
        .count() as u64;
    assert_within_sigmas(twos, draws, p2, 4.0);
}

#[test]
fn single_atom_fragments() {
    let spec = ModelSpec::new(
        CoagulationMeasure::uniform(1.0).unwrap(),
        SplittingMeasure::tabulated(vec![0.0, 0.5], None).unwrap(),
        None,
    )
    .unwrap();
    let sim = Simulator::new(&spec, 8).unwrap();
    let mut rng = rng_for(4, 0);
    for _ in 0..1000 {
        assert_eq!(sim.frag_sampler().sample(&mut rng).unwrap(), 2);
    }
}

#[test]
fn holding_rate_at_three() {
    let sim = Simulator::new(&uniform_logpower(), 8).unwrap();
    let q = sim.holding_rate(3).unwrap();
    let mu_total = 0.937_548_254_315_843_8;
    assert!((q - (2.0 + 3.0 * mu_total)).abs() < 1e-8, "{q}");
    assert!((q - 4.812644).abs() < 1e-6);
    let p_frag = 3.0 * mu_total / q;
    assert!((p_frag - 0.584_428_085).abs() < 1e-8);

    let mut rng = rng_for(8, 0);
    let draws = 100_000;
    let mut frags = 0;
    for _ in 0..draws {
        let mut s = ChainState { n: 3, t: 0.0 };
        if sim.step(&mut s, &mut rng).unwrap().kind == EventKind::Frag {
            frags += 1;
        }
    }
    assert_within_sigmas(frags, draws, p_frag, 4.0);
}

#[test]
fn single_block_only_fragments() {
    let sim = Simulator::new(&log_power(2.0), 8).unwrap();
    let mut rng = rng_for(3, 0);
    let mut total_time = 0.0;
    let draws = 20_000;
    for _ in 0..draws {
        let mut s = ChainState { n: 1, t: 0.0 };
        let e = sim.step(&mut s, &mut rng).unwrap();
        assert_eq!(e.kind, EventKind::Frag);
        total_time += e.t;
    }
    // Mean holding time 1/μ(ℕ₊).
    let mean = total_time / draws as f64;
    let expected = 1.0 / 0.937_548_254_315_843_8;
    assert!((mean - expected).abs() < 4.0 * expected / (draws as f64).sqrt(), "{mean}");
}

#[test]
fn pure_coalescence_absorbs_at_one() {
    let sim = Simulator::new(&pure_coag(), 8).unwrap();
    let mut rng = rng_for(0, 0);
    let mut s = ChainState { n: 2, t: 0.0 };
    let e = sim.step(&mut s, &mut rng).unwrap();
    assert_eq!((e.kind, e.k, e.n_after), (EventKind::Coag, 2, 1));
    assert!(matches!(sim.step(&mut s, &mut rng), Err(EfcError::ZeroRate { n: 1 })));
}

fn config(spec: ModelSpec, n0: u64, t_max: f64, n_ceiling: u64, a_floor: Option<u64>, seed: u64) -> SimConfig {
    SimConfig {
        spec,
        n0,
        t_max,
        n_ceiling,
        a_floor,
        seed,
        rate_cache_size: DEFAULT_RATE_CACHE,
    }
}

#[test]
fn pure_coalescent_hits_floor() {
    let sim = Simulator::new(&pure_coag(), DEFAULT_RATE_CACHE).unwrap();
    let params = PathParams {
        n0: 100,
        t_max: 1e6,
        n_ceiling: 1000,
        a_floor: Some(1),
        seed: 7,
    };
    for r in 0..20 {
        let s = sim.run(&params, r, |_| {}).unwrap();
        assert!(matches!(s.terminal, Terminal::HitFloor(t) if t.is_finite() && t > 0.0));
        assert_eq!(s.final_state.n, 1);
    }
}

#[test]
fn pure_fragmentation_hits_ceiling() {
    let spec = ModelSpec::new(
        CoagulationMeasure::zero(),
        SplittingMeasure::log_power(1.0, 1.0).unwrap(),
        None,
    )
    .unwrap();
    let tr = simulate_path(&config(spec, 10, 1e6, 10_000, None, 3)).unwrap();
    assert!(matches!(tr.terminal(), Terminal::HitCeiling(_)));
    assert!(tr.events.iter().all(|e| e.kind == EventKind::Frag));
    assert!(tr.summary.levels.iter().all(|l| l.t_first.is_some()));
}

#[test]
fn identical_seeds_give_identical_paths() {
    let cfg = config(log_power(1.5), 200, 5.0, 20_000, Some(10), 42);
    let a = simulate_path(&cfg).unwrap();
    let b = simulate_path(&cfg).unwrap();
    assert_eq!(a, b);
    let c = simulate_path(&SimConfig { seed: 43, ..cfg }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn trajectories_are_valid_paths() {
    for (spec, seed) in [(log_power(1.5), 1), (log_power(3.0), 2), (uniform_logpower(), 3)] {
        let tr = simulate_path(&config(spec, 600, 2.0, 50_000, Some(5), seed)).unwrap();
        let mut n = 600;
        let mut t = 0.0;
        for e in &tr.events {
            assert_eq!(e.n_before, n);
            assert!(e.t > t);
            match e.kind {
                EventKind::Coag => assert!(e.k >= 2 && e.k <= e.n_before && e.n_after == e.n_before - e.k + 1),
                EventKind::Frag => assert!(e.k >= 1 && e.n_after == e.n_before + e.k),
            }
            n = e.n_after;
            t = e.t;
        }
        assert_eq!(tr.summary.final_state.n, n);
        match tr.terminal() {
            Terminal::HitFloor(tau) => assert!(n <= 5 && tau == t),
            Terminal::HitCeiling(tau) => assert!(n >= 50_000 && tau == t),
            Terminal::TimeBudget => assert!(n > 5 && n < 50_000),
        }
    }
}

#[test]
fn truncated_fragments_respect_the_cap() {
    for m in [1u64, 3, 17] {
        let tr = simulate_truncated(&config(log_power(2.0), 50, 3.0, 10_000, None, m), m).unwrap();
        let frags: Vec<u64> = tr
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Frag)
            .map(|e| e.k)
            .collect();
        assert!(!frags.is_empty());
        assert!(frags.iter().all(|&k| k <= m));
        if m == 1 {
            assert!(frags.iter().all(|&k| k == 1));
        }
    }
}

#[test]
fn median_supremum_grows_with_truncation() {
    let params = PathParams {
        n0: 100,
        t_max: 1.0,
        n_ceiling: 100_000,
        a_floor: None,
        seed: 12,
    };
    let mut medians = Vec::new();
    for m in [1u64, 4, 16, 64] {
        let spec = log_power(1.5).with_truncation(Some(m)).unwrap();
        let sim = Simulator::new(&spec, DEFAULT_RATE_CACHE).unwrap();
        let mut sups: Vec<u64> = (0..101).map(|r| sim.run(&params, r, |_| {}).unwrap().sup_n).collect();
        sups.sort_unstable();
        medians.push(sups[50]);
    }
    assert!(medians.windows(2).all(|w| w[0] <= w[1]), "{medians:?}");
}

/// Next state from `n = 30` against `q_{30,·}/Q(30)`, bucketing fragment
/// sizes above 200.
#[test]
fn embedded_jump_chain_at_thirty() {
    let spec = uniform_logpower();
    let sim = Simulator::new(&spec, 8).unwrap();
    let n = 30u64;
    let mu = spec.effective_mu();
    let row = coag_row(spec.lam(), n).unwrap();
    let q = sim.holding_rate(n).unwrap();
    // Cells: merges k = 2..=30, fragments k = 1..=200, fragment tail.
    let mut probs: Vec<f64> = row.iter().map(|r| r / q).collect();
    probs.extend((1..=200).map(|k| n as f64 * mu.mass(k) / q));
    probs.push(n as f64 * mu.tail_sum_from(201) / q);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);

    let draws = 100_000u64;
    let mut counts = vec![0u64; probs.len()];
    let mut rng = rng_for(21, 0);
    for _ in 0..draws {
        let mut s = ChainState { n, t: 0.0 };
        let e = sim.step(&mut s, &mut rng).unwrap();
        let cell = match e.kind {
            EventKind::Coag => (e.k - 2) as usize,
            EventKind::Frag => row.len() + (e.k.min(201) - 1) as usize,
        };
        counts[cell] += 1;
    }
    let expected: Vec<f64> = probs.iter().map(|p| p * draws as f64).collect();
    let (_, _, p) = chi_square_test(&counts, &expected, 5.0);
    assert!(p > 0.001, "p = {p}");
}

/// Fragment-size histograms of a chain truncated far above the ceiling and
/// of the untruncated chain agree.
#[test]
fn large_truncation_matches_untruncated() {
    let hist = |m: Option<u64>| {
        let spec = log_power(2.0).with_truncation(m).unwrap();
        let sim = Simulator::new(&spec, DEFAULT_RATE_CACHE).unwrap();
        let params = PathParams {
            n0: 100,
            t_max: 2.0,
            n_ceiling: 5_000,
            a_floor: None,
            seed: 77,
        };
        let mut h = [0u64; 8];
        for r in 0..100 {
            sim.run(&params, r, |e| {
                if e.kind == EventKind::Frag {
                    h[(63 - e.k.leading_zeros() as usize).min(7)] += 1;
                }
            })
            .unwrap();
        }
        h
    };
    let a = hist(Some(100_000));
    let b = hist(None);
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let mut stat = 0.0;
    let mut cells = 0;
    for i in 0..8 {
        let tot = (a[i] + b[i]) as f64;
        if tot == 0.0 {
            continue;
        }
        cells += 1;
        let ea = tot * na / (na + nb);
        let eb = tot * nb / (na + nb);
        stat += (a[i] as f64 - ea).powi(2) / ea + (b[i] as f64 - eb).powi(2) / eb;
    }
    let p = statrs::function::gamma::gamma_ur((cells - 1) as f64 / 2.0, stat / 2.0);
    assert!(p > 0.001, "p = {p}, {a:?} vs {b:?}");
}
