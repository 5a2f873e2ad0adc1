//! Acceptance suite. One line per criterion, PASS or FAIL, at the pinned
//! tolerances. Criteria listed in `KNOWN_RED` are reported like any other;
//! the run fails if any of them turns green, so a fix is noticed.

mod common;

use rand::Rng;
use stochgame::fixtures;
use stochgame::modified::{
    check_min_superadditivity, modified_payoff, random_min_samples, CutoffVector, ModifiedSpec,
    PlayerSpec,
};
use stochgame::occupancy::{
    abel_decompose, block_breakdown, discounted_payoff, equivalent_stationary, mixture_stationary,
    occupation_stationary,
};
use stochgame::simulate::coin_run_oracle;
use stochgame::structure::{classify, strongly_controllable_witness, Control};
use stochgame::uniform::{uniform_pipeline, verify_uniform_eq, PipelineOptions, VerifyOptions};
use stochgame::values::{
    default_grid, discounted_maxmin, discounted_minmax, equilibrium_gaps, modified_maxmin_stat,
    modified_minmax_stat, stationary_equilibrium, uniform_minmax_all, uniform_value, SearchOptions,
    StatOptions, ValueKind,
};
use stochgame::{StationaryProfile, StationaryStrategy, StochasticGame};

/// Criteria expected to fail; see the README for the analysis.
const KNOWN_RED: &[usize] = &[10];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn c1_big_match_stationary_maxmin() -> Outcome {
    let game = fixtures::big_match();
    let mut worst_v: f64 = 0.0;
    let mut worst_a: f64 = 0.0;
    for lambda in [0.5, 0.9, 0.99] {
        let spec = fixtures::big_match_spec(&game, lambda);
        let v = modified_maxmin_stat(&game, &spec, 0, &StatOptions::default()).unwrap();
        let p = v.profile.player(0).at(0)[0];
        let alpha = (1.0 - lambda) / (1.0 - lambda * (1.0 - p));
        worst_v = worst_v.max((v.value - 1.0 / 3.0).abs());
        worst_a = worst_a.max((alpha - 2.0 / 3.0).abs());
    }
    outcome(
        worst_v <= 1e-3 && worst_a <= 1e-2,
        format!("max |v - 1/3| = {worst_v:.2e}, max |alpha - 2/3| = {worst_a:.2e}"),
    )
}

fn c2_big_match_uniform_maxmin() -> Outcome {
    let game = fixtures::big_match();
    let est = uniform_value(&game, 0, ValueKind::MaxMin, &default_grid()).unwrap();
    let spec = fixtures::big_match_spec(&game, 0.99);
    let mm = modified_minmax_stat(&game, &spec, 0, &StatOptions::default()).unwrap();
    let e1 = (est.limits[0] - 0.5).abs();
    let e2 = (mm.value - 0.5).abs();
    outcome(
        e1 <= 1e-2 && e2 <= 1e-2,
        format!(
            "uniform maxmin {:.5}, minmax_stat(0.99) {:.5}",
            est.limits[0], mm.value
        ),
    )
}

fn c3_example2() -> Outcome {
    let game = fixtures::example2();
    let x = StationaryProfile::uniform(&game);
    let eval = |lambda: f64| {
        let occ = occupation_stationary(&game, 0, lambda, &x).unwrap();
        let g = discounted_payoff(&game, &occ)[0];
        let m = modified_payoff(&game, &fixtures::example2_spec(&game, lambda), &occ, 0).unwrap();
        (g, m)
    };
    let (g5, m5) = eval(0.5);
    let (g9, m9) = eval(0.999);
    let exact = (g5 - 6.0 * 0.5 / 1.5)
        .abs()
        .max((m5 - 4.0 * 0.5 / 1.5).abs());
    let limit = (g9 - 3.0).abs().max((m9 - 2.0).abs());
    outcome(
        exact <= 1e-9 && limit <= 5e-3,
        format!("closed-form error {exact:.1e}; at 0.999 payoff {g9:.5}, modified {m9:.5}"),
    )
}

fn c4_example1() -> Outcome {
    let (lambda, p) = (0.6, 0.5);
    let game = fixtures::example1(p, fixtures::example1_y(lambda, p));
    let uniform = StationaryProfile::uniform(&game);
    let mut ok = true;
    let mut notes = Vec::new();
    for (s0, want) in [(1usize, "T"), (0, "B")] {
        let spec = fixtures::example1_spec(&game, s0, lambda);
        let br = stochgame::values::modified_best_response(&game, &spec, 0, &uniform).unwrap();
        let row = br.strategy.at(1);
        let got = &game.actions(1, 0)[br.strategy.mode(1)];
        let pure = row.iter().any(|&q| q == 1.0);
        ok &= got == want && pure;
        notes.push(format!("from {}: {got}", game.state_name(s0)));
    }
    let spec = fixtures::example1_spec(&game, 0, lambda);
    let part = &spec.per_player[0].partition;
    let d = part.block_of(0);
    let mut worst: f64 = 0.0;
    for a in 0..2 {
        let x = StationaryProfile(vec![StationaryStrategy::pure(&game, 0, &[0, a, 0, 0])]);
        let occ = occupation_stationary(&game, 0, lambda, &x).unwrap();
        let bd = block_breakdown(&game, &occ, part).unwrap();
        let c = bd.payoffs[d][0].min(spec.per_player[0].cutoffs.0[d] * bd.times[d]);
        worst = worst.max(c.abs());
    }
    ok &= worst <= 1e-9;
    notes.push(format!("in-block contribution {worst:.1e}"));
    outcome(ok, notes.join(", "))
}

fn c5_identities() -> Outcome {
    let mut rng = common::rng(5);
    let mut worst = [0.0f64; 5];
    for _ in 0..1000 {
        let players = rng.gen_range(1..=3);
        let states = rng.gen_range(1..=4);
        let game = common::random_game(&mut rng, players, states, 3);
        let r = game.scale();
        let lambda = rng.gen_range(0.0..0.99);
        let x = common::random_profile(&mut rng, &game);
        let s0 = rng.gen_range(0..states);
        let occ = occupation_stationary(&game, s0, lambda, &x).unwrap();
        let gamma = discounted_payoff(&game, &occ);
        let spec = common::random_spec(&mut rng, &game, lambda).with_s0(s0);
        for i in 0..players {
            let part = &spec.per_player[i].partition;
            let bd = block_breakdown(&game, &occ, part).unwrap();
            let sum_u: f64 = bd.payoffs.iter().map(|u| u[i]).sum();
            let sum_t: f64 = bd.times.iter().sum();
            worst[0] = worst[0].max((sum_u - gamma[i]).abs().max((sum_t - 1.0).abs()) / r);
            let m = modified_payoff(&game, &spec, &occ, i).unwrap();
            worst[1] = worst[1].max((m - gamma[i]) / r);
        }
        let free = ModifiedSpec {
            s0,
            lambda,
            per_player: (0..players)
                .map(|_| {
                    let partition = common::random_partition(&mut rng, states);
                    let c = (0..partition.len())
                        .map(|_| r * rng.gen_range(1.0..2.0))
                        .collect();
                    PlayerSpec {
                        partition,
                        cutoffs: CutoffVector(c),
                        lambda: None,
                    }
                })
                .collect(),
        };
        for (i, g) in gamma.iter().enumerate() {
            let m = modified_payoff(&game, &free, &occ, i).unwrap();
            worst[2] = worst[2].max((m - g).abs() / r);
        }

        let len = rng.gen_range(1..60);
        let seq: Vec<f64> = (0..len).map(|_| rng.gen_range(-r..r)).collect();
        let l = len - 1;
        let m = rng.gen_range(0..=l);
        let terms = abel_decompose(&seq, lambda, m, l).unwrap();
        let direct: f64 = seq
            .iter()
            .enumerate()
            .map(|(n, v)| lambda.powi(n as i32) * v)
            .sum();
        worst[3] = worst[3].max((terms.total() - direct).abs() / r);

        let (a1, b1, a2, b2) = (
            rng.gen_range(-r..r),
            rng.gen_range(-r..r),
            rng.gen_range(-r..r),
            rng.gen_range(-r..r),
        );
        worst[4] = worst[4].max((a1.min(b1) + a2.min(b2) - (a1 + a2).min(b1 + b2)) / r);
    }
    let max = worst.iter().copied().fold(0.0, f64::max);
    let sampled = check_min_superadditivity(&random_min_samples(&mut rng, 1000, 1.0));
    outcome(
        max <= 1e-8 && sampled,
        format!(
            "decomposition {:.1e}, domination {:.1e}, equality {:.1e}, abel {:.1e}, min {:.1e}",
            worst[0], worst[1], worst[2], worst[3], worst[4]
        ),
    )
}

fn c6_stationary_equivalence() -> Outcome {
    let mut rng = common::rng(6);
    let mut round_trip: f64 = 0.0;
    for _ in 0..200 {
        let players = rng.gen_range(1..=3);
        let states = rng.gen_range(1..=4);
        let game = common::random_game(&mut rng, players, states, 3);
        let lambda = rng.gen_range(0.0..0.99);
        let x = common::random_profile(&mut rng, &game);
        let s0 = rng.gen_range(0..states);
        let occ = occupation_stationary(&game, s0, lambda, &x).unwrap();
        for i in 0..players {
            let y = equivalent_stationary(&game, &occ, i);
            let occ2 = occupation_stationary(&game, s0, lambda, &x.with_player(i, y)).unwrap();
            for (r1, r2) in occ.entries.iter().zip(&occ2.entries) {
                for (a, b) in r1.iter().zip(r2) {
                    round_trip = round_trip.max((a - b).abs());
                }
            }
        }
    }
    let mut mixture: f64 = 0.0;
    let mut monotone = true;
    for _ in 0..100 {
        let states = rng.gen_range(1..=4);
        let game = common::random_game(&mut rng, 1, states, 3);
        let lambda = rng.gen_range(0.0..0.99);
        let s0 = rng.gen_range(0..states);
        let base = StationaryProfile::uniform(&game);
        let x1 = common::random_strategy(&mut rng, &game, 0);
        let x2 = common::random_strategy(&mut rng, &game, 0);
        let pay = |x: &StationaryStrategy| {
            let occ =
                occupation_stationary(&game, s0, lambda, &base.with_player(0, x.clone())).unwrap();
            discounted_payoff(&game, &occ)[0]
        };
        let (g1, g2) = (pay(&x1), pay(&x2));
        let mut prev = None;
        for k in 0..=10 {
            let alpha = k as f64 / 10.0;
            let y = mixture_stationary(&game, s0, lambda, &base, 0, &x1, &x2, alpha).unwrap();
            let g = pay(&y);
            mixture = mixture.max((g - (alpha * g1 + (1.0 - alpha) * g2)).abs());
            if let Some(p) = prev {
                let step: f64 = g - p;
                monotone &= step * (g1 - g2) >= -1e-8;
            }
            prev = Some(g);
        }
    }
    outcome(
        round_trip <= 1e-8 && mixture <= 1e-8 && monotone,
        format!("round trip {round_trip:.1e}, mixture {mixture:.1e}, monotone {monotone}"),
    )
}

fn random_two_player(rng: &mut impl Rng) -> (StochasticGame, ModifiedSpec) {
    let states = rng.gen_range(2..=3);
    let game = common::random_game(rng, 2, states, 2);
    let lambda = rng.gen_range(0.5..0.95);
    let spec = common::random_spec(rng, &game, lambda);
    (game, spec)
}

fn c7_equilibrium_certification() -> Outcome {
    let mut rng = common::rng(7);
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let (game, spec) = random_two_player(&mut rng);
        let res = stationary_equilibrium(&game, &spec, &SearchOptions::default()).unwrap();
        let (_, gaps) = equilibrium_gaps(&game, &spec, &res.profile).unwrap();
        let gap = gaps.iter().copied().fold(0.0, f64::max) / game.scale();
        worst = worst.max(gap);
        if gap > 1e-4 || !res.certified {
            failures.push(k);
        }
    }
    outcome(
        failures.is_empty(),
        format!("worst gap {worst:.1e}·R, uncertified games {failures:?}"),
    )
}

fn c8_inequality_chain() -> Outcome {
    let mut rng = common::rng(8);
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..20 {
        let (game, spec) = random_two_player(&mut rng);
        let r = game.scale();
        for i in 0..2 {
            let opts = StatOptions::default();
            let up = modified_minmax_stat(&game, &spec, i, &opts).unwrap().value;
            let lo = modified_maxmin_stat(&game, &spec, i, &opts).unwrap().value;
            let dmm = discounted_minmax(&game, i, spec.lambda, 1e-10 * r)
                .unwrap()
                .values[spec.s0];
            let dxm = discounted_maxmin(&game, i, spec.lambda, 1e-10 * r)
                .unwrap()
                .values[spec.s0];
            worst = worst.max((up - dmm) / r).max((lo - dxm) / r);
        }
    }
    outcome(worst <= 1e-6, format!("largest excess {worst:.1e}·R"))
}

fn c9_structure() -> Outcome {
    let grid = default_grid();
    let bm = fixtures::big_match();
    let rep = classify(
        &bm,
        &uniform_minmax_all(&bm, &grid).unwrap(),
        1e-4 * bm.scale(),
    );
    let k = rep.sibling_partition.block_of(0);
    let witness = Control::Controllable {
        player: 0,
        state: 0,
        action: 0,
    };
    let bm_ok = rep.strongly_controllable
        && rep.sibling_partition.block(k) == [0]
        && rep.tags[k] == witness
        && strongly_controllable_witness(&bm, &[0]) == witness;

    let e2 = fixtures::example2();
    let rep = classify(
        &e2,
        &uniform_minmax_all(&e2, &grid).unwrap(),
        1e-4 * e2.scale(),
    );
    let e2_ok = rep.strongly_controllable && rep.tags == [Control::Closed];

    let te = fixtures::two_exit();
    let rep = classify(
        &te,
        &uniform_minmax_all(&te, &grid).unwrap(),
        1e-4 * te.scale(),
    );
    let te_ok = !rep.strongly_controllable
        && strongly_controllable_witness(&te, &[0, 1]) == Control::Neither;
    outcome(
        bm_ok && e2_ok && te_ok,
        format!("big match {bm_ok}, example 2 closed {e2_ok}, two-exit rejected {te_ok}"),
    )
}

fn c10_uniform_pipeline() -> Outcome {
    let eps = 0.1;
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, game) in [
        ("example 2", fixtures::example2()),
        ("big match", fixtures::big_match()),
        ("chain", fixtures::chain3()),
    ] {
        let res = uniform_pipeline(&game, eps, &PipelineOptions::default()).unwrap();
        let Some(sigma) = &res.sigma else {
            ok = false;
            notes.push(format!("{name}: not strongly controllable"));
            continue;
        };
        let rep =
            verify_uniform_eq(&game, sigma, &res.vbar, eps, &VerifyOptions::default()).unwrap();
        let margin = rep
            .states
            .iter()
            .flat_map(|s| s.floor_margin.iter().copied())
            .fold(f64::INFINITY, f64::min);
        ok &= rep.pass;
        notes.push(format!(
            "{name}: {} (gain {:.3}, floor margin {:.3})",
            if rep.pass { "ok" } else { "fail" },
            rep.max_gain,
            margin
        ));
    }
    outcome(ok, notes.join("; "))
}

fn c11_coin() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (k, p) in [0.3, 0.5, 0.9].into_iter().enumerate() {
        let rep = coin_run_oracle(p, 100_000, k as u64).unwrap();
        ok &= rep.matches_pmf || rep.matches_stated;
        notes.push(format!(
            "p={p}: mean {:.4} ± {:.4} matches {}",
            rep.mean,
            rep.ci,
            rep.verdict()
        ));
    }
    outcome(ok, notes.join("; "))
}

fn main() {
    let mut known = KNOWN_RED.to_vec();
    known.dedup();
    assert_eq!(
        known.len(),
        KNOWN_RED.len(),
        "KNOWN_RED lists a criterion twice"
    );
    assert!(known.iter().all(|k| (1..=11).contains(k)));
    let criteria: [(usize, &str, fn() -> Outcome); 11] = [
        (
            1,
            "big match stationary max-min",
            c1_big_match_stationary_maxmin,
        ),
        (2, "big match uniform max-min", c2_big_match_uniform_maxmin),
        (3, "example 2 limits", c3_example2),
        (4, "example 1 best responses", c4_example1),
        (5, "identity suite", c5_identities),
        (6, "stationary equivalence", c6_stationary_equivalence),
        (7, "equilibrium certification", c7_equilibrium_certification),
        (8, "inequality chain", c8_inequality_chain),
        (9, "structure", c9_structure),
        (10, "uniform equilibrium pipeline", c10_uniform_pipeline),
        (11, "coin-run harness", c11_coin),
    ];
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        let t = std::time::Instant::now();
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let known = if KNOWN_RED.contains(&id) {
            " [known red]"
        } else {
            ""
        };
        println!(
            "{tag} {id:>2} {name}{known}: {} ({:.1}s)",
            o.detail,
            t.elapsed().as_secs_f64()
        );
        if o.pass == KNOWN_RED.contains(&id) {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("criteria with unexpected outcome: {unexpected:?}");
        std::process::exit(1);
    }
}
