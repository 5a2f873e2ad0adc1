//! The worked example games, constructed in code.

use crate::game::{GameBuilder, StochasticGame};
use crate::modified::{ModifiedSpec, Partition};

/// One player, four states. `s0` pays `y` and moves to `s1`; at `s1` action
/// `T` pays 0 and `B` pays -1, each absorbing with probability `p` (into
/// `s2` worth 2, resp. `s3` worth 3).
pub fn example1(p: f64, y: f64) -> StochasticGame {
    GameBuilder::new(&["1"])
        .state("s0", &[&["a"]])
        .state("s1", &[&["T", "B"]])
        .state("s2", &[&["a"]])
        .state("s3", &[&["a"]])
        .entry("s0", "a", &[y], &[("s1", 1.0)])
        .entry("s1", "T", &[0.0], &[("s1", 1.0 - p), ("s2", p)])
        .entry("s1", "B", &[-1.0], &[("s1", 1.0 - p), ("s3", p)])
        .entry("s2", "a", &[2.0], &[("s2", 1.0)])
        .entry("s3", "a", &[3.0], &[("s3", 1.0)])
        .build()
        .expect("example 1 is well formed")
}

/// The cutoff that makes the in-block payoff of `B` exactly zero from `s0`.
pub fn example1_y(lambda: f64, p: f64) -> f64 {
    lambda / (1.0 - lambda * (1.0 - p))
}

/// One player, two states, one action each; payoff alternates 0, 6.
pub fn example2() -> StochasticGame {
    GameBuilder::new(&["1"])
        .state("s0", &[&["a"]])
        .state("s1", &[&["a"]])
        .entry("s0", "a", &[0.0], &[("s1", 1.0)])
        .entry("s1", "a", &[6.0], &[("s0", 1.0)])
        .build()
        .expect("example 2 is well formed")
}

/// Big Match variant. At `s0` player 1 picks `T`/`B`, player 2 `L`/`R`;
/// `T` absorbs (`T|L` into `s2`, worth 1 to player 1; `T|R` into `s1`,
/// worth 0), `B` stays. Player 1 earns 1 under `R` and 0 under `L`.
pub fn big_match() -> StochasticGame {
    GameBuilder::new(&["1", "2"])
        .state("s0", &[&["T", "B"], &["L", "R"]])
        .state("s1", &[&["B"], &["L"]])
        .state("s2", &[&["B"], &["L"]])
        .entry("s0", "T|L", &[0.0, 1.0], &[("s2", 1.0)])
        .entry("s0", "T|R", &[1.0, 0.0], &[("s1", 1.0)])
        .entry("s0", "B|L", &[0.0, 1.0], &[("s0", 1.0)])
        .entry("s0", "B|R", &[1.0, 0.0], &[("s0", 1.0)])
        .entry("s1", "B|L", &[0.0, 1.0], &[("s1", 1.0)])
        .entry("s2", "B|L", &[1.0, 0.0], &[("s2", 1.0)])
        .build()
        .expect("big match is well formed")
}

/// Three singleton blocks in a chain. Player 2 alone can leave `s0`
/// (action `go`), player 1 alone can leave `s1` (action `go`), and `s2`
/// is absorbing with payoff (1, 1).
pub fn chain3() -> StochasticGame {
    GameBuilder::new(&["1", "2"])
        .state("s0", &[&["u", "d"], &["stay", "go"]])
        .state("s1", &[&["stay", "go"], &["l", "r"]])
        .state("s2", &[&["c"], &["c"]])
        .entry("s0", "u|stay", &[0.4, 0.1], &[("s0", 1.0)])
        .entry("s0", "d|stay", &[0.2, 0.3], &[("s0", 1.0)])
        .entry("s0", "u|go", &[0.4, 0.1], &[("s1", 1.0)])
        .entry("s0", "d|go", &[0.2, 0.3], &[("s1", 1.0)])
        .entry("s1", "stay|l", &[0.0, 0.5], &[("s1", 1.0)])
        .entry("s1", "stay|r", &[0.0, 0.2], &[("s1", 1.0)])
        .entry("s1", "go|l", &[0.0, 0.5], &[("s2", 1.0)])
        .entry("s1", "go|r", &[0.0, 0.2], &[("s2", 1.0)])
        .entry("s2", "c|c", &[1.0, 1.0], &[("s2", 1.0)])
        .build()
        .expect("chain game is well formed")
}

/// One player; `a` and `b` alternate deterministically under `stay` and
/// both can `exit` into the absorbing `c`. Exits happen from two states, so
/// the block `{a, b}` is neither closed nor strongly controllable.
pub fn two_exit() -> StochasticGame {
    GameBuilder::new(&["1"])
        .state("a", &[&["stay", "exit"]])
        .state("b", &[&["stay", "exit"]])
        .state("c", &[&["stay"]])
        .entry("a", "stay", &[0.0], &[("b", 1.0)])
        .entry("a", "exit", &[0.0], &[("c", 1.0)])
        .entry("b", "stay", &[0.0], &[("a", 1.0)])
        .entry("b", "exit", &[0.0], &[("c", 1.0)])
        .entry("c", "stay", &[1.0], &[("c", 1.0)])
        .build()
        .expect("two-exit game is well formed")
}

/// Single-state game with constant payoff `c` for every player.
pub fn constant(c: f64, players: usize) -> StochasticGame {
    let names: Vec<String> = (1..=players).map(|i| i.to_string()).collect();
    let acts: Vec<&[&str]> = (0..players).map(|_| &["a", "b"][..]).collect();
    let mut b = GameBuilder::new(&names).state("s", &acts);
    let mut profiles = vec![String::new()];
    for _ in 0..players {
        profiles = profiles
            .iter()
            .flat_map(|p| {
                ["a", "b"].map(|a| {
                    if p.is_empty() {
                        a.to_string()
                    } else {
                        format!("{p}|{a}")
                    }
                })
            })
            .collect();
    }
    for p in profiles {
        b = b.entry("s", &p, &vec![c; players], &[("s", 1.0)]);
    }
    b.build().expect("constant game is well formed")
}

/// Blocks `{s0, s1}`, `{s2}`, `{s3}` with cutoffs 0, 2, 3.
pub fn example1_spec(game: &StochasticGame, s0: usize, lambda: f64) -> ModifiedSpec {
    let part = Partition::new(4, vec![vec![0, 1], vec![2], vec![3]]).expect("valid partition");
    ModifiedSpec::shared(game, s0, lambda, part, &[vec![0.0, 2.0, 3.0]])
        .expect("example 1 spec is valid")
}

/// Singleton blocks, cutoff 4 on both.
pub fn example2_spec(game: &StochasticGame, lambda: f64) -> ModifiedSpec {
    ModifiedSpec::shared(game, 0, lambda, Partition::singletons(2), &[vec![4.0, 4.0]])
        .expect("example 2 spec is valid")
}

/// Singleton blocks; cutoffs are the uniform min-max values `(½, 0, 1)` for
/// player 1 and `(½, 1, 0)` for player 2.
pub fn big_match_spec(game: &StochasticGame, lambda: f64) -> ModifiedSpec {
    ModifiedSpec::shared(
        game,
        0,
        lambda,
        Partition::singletons(3),
        &[vec![0.5, 0.0, 1.0], vec![0.5, 1.0, 0.0]],
    )
    .expect("big match spec is valid")
}
