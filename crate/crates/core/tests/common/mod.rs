#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stochgame::game::GameBuilder;
use stochgame::modified::{CutoffVector, ModifiedSpec, Partition, PlayerSpec};
use stochgame::{StationaryProfile, StationaryStrategy, StochasticGame};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random game with `players` players, `states` states and 1 to
/// `max_actions` actions per player and state. Payoffs are uniform on
/// [-1, 1]; each transition row has a random support.
pub fn random_game(
    rng: &mut impl Rng,
    players: usize,
    states: usize,
    max_actions: usize,
) -> StochasticGame {
    let pnames: Vec<String> = (1..=players).map(|i| i.to_string()).collect();
    let snames: Vec<String> = (0..states).map(|s| format!("s{s}")).collect();
    let mut acts: Vec<Vec<Vec<String>>> = Vec::new();
    for _ in 0..states {
        acts.push(
            (0..players)
                .map(|_| {
                    let k = rng.gen_range(1..=max_actions);
                    (0..k).map(|a| format!("a{a}")).collect()
                })
                .collect(),
        );
    }
    let mut b = GameBuilder::new(&pnames);
    for s in 0..states {
        let refs: Vec<Vec<&str>> = acts[s]
            .iter()
            .map(|l| l.iter().map(String::as_str).collect())
            .collect();
        let slices: Vec<&[&str]> = refs.iter().map(Vec::as_slice).collect();
        b = b.state(&snames[s], &slices);
    }
    for s in 0..states {
        let sizes: Vec<usize> = acts[s].iter().map(Vec::len).collect();
        let total: usize = sizes.iter().product();
        for mut idx in 0..total {
            let mut names = Vec::with_capacity(players);
            for (i, &n) in sizes.iter().enumerate() {
                names.push(acts[s][i][idx % n].as_str());
                idx /= n;
            }
            let profile = names.join("|");
            let payoff: Vec<f64> = (0..players).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut w: Vec<f64> = (0..states)
                .map(|_| {
                    if rng.gen_bool(0.6) {
                        rng.gen_range(0.05..1.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            if w.iter().all(|&x| x == 0.0) {
                w[rng.gen_range(0..states)] = 1.0;
            }
            let sum: f64 = w.iter().sum();
            let mut tr: Vec<(&str, f64)> = Vec::new();
            for (t, &x) in w.iter().enumerate() {
                if x > 0.0 {
                    tr.push((snames[t].as_str(), x / sum));
                }
            }
            // exact normalization on the last entry
            let head: f64 = tr[..tr.len() - 1].iter().map(|p| p.1).sum();
            tr.last_mut().unwrap().1 = 1.0 - head;
            b = b.entry(&snames[s], &profile, &payoff, &tr);
        }
    }
    b.build().expect("random game is well formed")
}

pub fn random_strategy(
    rng: &mut impl Rng,
    game: &StochasticGame,
    player: usize,
) -> StationaryStrategy {
    StationaryStrategy(
        (0..game.num_states())
            .map(|s| {
                let n = game.num_actions(s, player);
                let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0) + 1e-3).collect();
                let t: f64 = w.iter().sum();
                w.iter().map(|x| x / t).collect()
            })
            .collect(),
    )
}

pub fn random_profile(rng: &mut impl Rng, game: &StochasticGame) -> StationaryProfile {
    StationaryProfile(
        (0..game.num_players())
            .map(|i| random_strategy(rng, game, i))
            .collect(),
    )
}

pub fn random_partition(rng: &mut impl Rng, states: usize) -> Partition {
    let labels: Vec<usize> = (0..states).map(|_| rng.gen_range(0..states)).collect();
    Partition::from_labels(&labels)
}

/// Random partitions per player with cutoffs in [-R, R].
pub fn random_spec(rng: &mut impl Rng, game: &StochasticGame, lambda: f64) -> ModifiedSpec {
    let r = game.payoff_bound();
    let s0 = rng.gen_range(0..game.num_states());
    let per_player = (0..game.num_players())
        .map(|_| {
            let partition = random_partition(rng, game.num_states());
            let cutoffs = (0..partition.len()).map(|_| rng.gen_range(-r..r)).collect();
            PlayerSpec {
                partition,
                cutoffs: CutoffVector(cutoffs),
                lambda: None,
            }
        })
        .collect();
    let spec = ModifiedSpec {
        s0,
        lambda,
        per_player,
    };
    spec.check(game).expect("random spec matches its game");
    spec
}
