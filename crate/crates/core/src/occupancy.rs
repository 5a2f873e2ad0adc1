//! Discounted occupation measures and the payoffs derived from them.

use serde_json::{json, Map, Value};

use crate::automaton::AutomatonStrategy;
use crate::chain::ProductChain;
use crate::error::{Error, Result};
use crate::game::{StationaryProfile, StationaryStrategy, StochasticGame};
use crate::linalg;
use crate::modified::Partition;

/// Tolerance for the sum and balance checks.
pub const OCC_TOL: f64 = 1e-9;

/// Below this state time the extracted mixed action falls back to uniform.
pub const ZERO_TIME: f64 = 1e-15;

/// `t_λ(s₀, σ; s, a)` indexed as `entries[s][a]` (profile index).
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationVector {
    pub lambda: f64,
    pub s0: usize,
    pub entries: Vec<Vec<f64>>,
}

impl OccupationVector {
    pub fn total(&self) -> f64 {
        self.entries.iter().flatten().sum()
    }

    pub fn state_time(&self, s: usize) -> f64 {
        self.entries[s].iter().sum()
    }

    pub fn set_time(&self, set: &[usize]) -> f64 {
        set.iter().map(|&s| self.state_time(s)).sum()
    }

    /// Largest violation of normalization or of the balance equations.
    pub fn balance_error(&self, game: &StochasticGame) -> f64 {
        let n = game.num_states();
        let mut inflow = vec![0.0; n];
        inflow[self.s0] = 1.0 - self.lambda;
        for (s, row) in self.entries.iter().enumerate() {
            for (a, &t) in row.iter().enumerate() {
                for &(next, q) in game.transition(s, a) {
                    inflow[next] += self.lambda * t * q;
                }
            }
        }
        let mut err = (self.total() - 1.0).abs();
        for (s, want) in inflow.iter().enumerate() {
            err = err.max((self.state_time(s) - want).abs());
        }
        err
    }

    pub fn check(&self, game: &StochasticGame) -> Result<()> {
        if self.entries.len() != game.num_states()
            || self
                .entries
                .iter()
                .enumerate()
                .any(|(s, r)| r.len() != game.num_profiles(s))
        {
            return Err(Error::Invalid(
                "occupation vector does not match the game".into(),
            ));
        }
        if self.entries.iter().flatten().any(|t| *t < -OCC_TOL) {
            return Err(Error::Invalid("negative occupation entry".into()));
        }
        let err = self.balance_error(game);
        if err > OCC_TOL {
            return Err(Error::Numerical(format!(
                "occupation balance violated by {err:e}"
            )));
        }
        Ok(())
    }

    /// Occupation of one player's own actions, other players marginalized.
    pub fn marginal(&self, game: &StochasticGame, player: usize) -> Vec<Vec<f64>> {
        (0..game.num_states())
            .map(|s| {
                let mut m = vec![0.0; game.num_actions(s, player)];
                for (a, &t) in self.entries[s].iter().enumerate() {
                    m[game.profile_action(s, a, player)] += t;
                }
                m
            })
            .collect()
    }

    /// Pointwise convex combination `α·self + (1−α)·other`.
    pub fn mix(&self, other: &Self, alpha: f64) -> Self {
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| alpha * x + (1.0 - alpha) * y)
                    .collect()
            })
            .collect();
        Self {
            lambda: self.lambda,
            s0: self.s0,
            entries,
        }
    }

    pub fn to_json(&self, game: &StochasticGame) -> Value {
        let mut entries = Map::new();
        for (s, row) in self.entries.iter().enumerate() {
            let mut m = Map::new();
            for (a, &t) in row.iter().enumerate() {
                m.insert(game.profile_name(s, a), json!(t));
            }
            entries.insert(game.state_name(s).to_string(), Value::Object(m));
        }
        json!({
            "lambda": self.lambda,
            "s0": game.state_name(self.s0),
            "entries": entries,
        })
    }

    /// CSV with columns `state,profile,t,ut_<player>...`.
    pub fn to_csv(&self, game: &StochasticGame) -> String {
        let mut out = String::from("state,profile,t");
        for p in game.players() {
            out.push_str(&format!(",ut_{p}"));
        }
        out.push('\n');
        for (s, row) in self.entries.iter().enumerate() {
            for (a, &t) in row.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{}",
                    game.state_name(s),
                    game.profile_name(s, a),
                    t
                ));
                for u in game.payoff(s, a) {
                    out.push_str(&format!(",{}", u * t));
                }
                out.push('\n');
            }
        }
        out
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::Invalid(format!(
            "discount factor {lambda} not in [0,1)"
        )));
    }
    Ok(())
}

pub fn occupation_stationary(
    game: &StochasticGame,
    s0: usize,
    lambda: f64,
    profile: &StationaryProfile,
) -> Result<OccupationVector> {
    check_lambda(lambda)?;
    profile.check(game)?;
    let p = profile.kernel(game);
    let mut e = vec![0.0; game.num_states()];
    e[s0] = 1.0;
    let d = linalg::discounted_visits(&p, &e, lambda)?;
    let entries = (0..game.num_states())
        .map(|s| {
            profile
                .joint(game, s)
                .into_iter()
                .map(|w| w * d[s])
                .collect()
        })
        .collect();
    Ok(OccupationVector {
        lambda,
        s0,
        entries,
    })
}

pub fn occupation_automaton(
    game: &StochasticGame,
    s0: usize,
    lambda: f64,
    automata: &[AutomatonStrategy],
    cap: usize,
) -> Result<OccupationVector> {
    check_lambda(lambda)?;
    let chain = ProductChain::build(game, automata, s0, cap)?;
    let entries = chain.occupation(game, lambda)?;
    Ok(OccupationVector {
        lambda,
        s0,
        entries,
    })
}

/// `Σ_{s,a} t(s,a)·u(s,a)`.
pub fn discounted_payoff(game: &StochasticGame, occ: &OccupationVector) -> Vec<f64> {
    let mut g = vec![0.0; game.num_players()];
    for (s, row) in occ.entries.iter().enumerate() {
        for (a, &t) in row.iter().enumerate() {
            for (x, u) in g.iter_mut().zip(game.payoff(s, a)) {
                *x += t * u;
            }
        }
    }
    g
}

/// Exact expected average of the first `n` stage payoffs.
pub fn n_stage_payoff(
    game: &StochasticGame,
    s0: usize,
    profile: &StationaryProfile,
    n: usize,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Invalid("horizon must be at least 1".into()));
    }
    profile.check(game)?;
    let p = profile.kernel(game);
    let r = profile.stage_payoffs(game);
    let mut dist = vec![0.0; game.num_states()];
    dist[s0] = 1.0;
    let mut total = vec![0.0; game.num_players()];
    for _ in 0..n {
        let mut next = vec![0.0; dist.len()];
        for (s, &w) in dist.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (x, u) in total.iter_mut().zip(&r[s]) {
                *x += w * u;
            }
            for (t, q) in p[s].iter().enumerate() {
                next[t] += w * q;
            }
        }
        dist = next;
    }
    Ok(total.into_iter().map(|x| x / n as f64).collect())
}

pub fn n_stage_payoff_automaton(
    game: &StochasticGame,
    s0: usize,
    automata: &[AutomatonStrategy],
    n: usize,
    cap: usize,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Invalid("horizon must be at least 1".into()));
    }
    let chain = ProductChain::build(game, automata, s0, cap)?;
    Ok(chain.n_stage(&[n]).remove(0))
}

/// Per block: discounted time and unnormalized payoff vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockBreakdown {
    pub times: Vec<f64>,
    pub payoffs: Vec<Vec<f64>>,
}

impl BlockBreakdown {
    pub fn to_json(&self, game: &StochasticGame, partition: &Partition) -> Value {
        let blocks: Vec<Value> = partition
            .blocks()
            .iter()
            .enumerate()
            .map(|(k, b)| {
                json!({
                    "block": b.iter().map(|&s| game.state_name(s)).collect::<Vec<_>>(),
                    "t": self.times[k],
                    "U": self.payoffs[k],
                })
            })
            .collect();
        Value::Array(blocks)
    }
}

pub fn block_breakdown(
    game: &StochasticGame,
    occ: &OccupationVector,
    partition: &Partition,
) -> Result<BlockBreakdown> {
    if partition.num_states() != game.num_states() {
        return Err(Error::Invalid(
            "partition does not cover the game's states".into(),
        ));
    }
    let k = partition.len();
    let mut times = vec![0.0; k];
    let mut payoffs = vec![vec![0.0; game.num_players()]; k];
    for (s, row) in occ.entries.iter().enumerate() {
        let b = partition.block_of(s);
        for (a, &t) in row.iter().enumerate() {
            times[b] += t;
            for (x, u) in payoffs[b].iter_mut().zip(game.payoff(s, a)) {
                *x += t * u;
            }
        }
    }
    Ok(BlockBreakdown { times, payoffs })
}

/// Extracts `x(s, a) = t(s, a) / t(s)` for `player`; uniform where the
/// state is (numerically) never visited.
pub fn equivalent_stationary(
    game: &StochasticGame,
    occ: &OccupationVector,
    player: usize,
) -> StationaryStrategy {
    let marg = occ.marginal(game, player);
    StationaryStrategy(
        marg.into_iter()
            .map(|m| {
                let total: f64 = m.iter().sum();
                if total < ZERO_TIME {
                    vec![1.0 / m.len() as f64; m.len()]
                } else {
                    m.iter().map(|t| t / total).collect()
                }
            })
            .collect(),
    )
}

/// Stationary strategy for `player` whose occupation vector (others fixed
/// by `base`) is `α·t(x) + (1−α)·t(x')`.
pub fn mixture_stationary(
    game: &StochasticGame,
    s0: usize,
    lambda: f64,
    base: &StationaryProfile,
    player: usize,
    x: &StationaryStrategy,
    x2: &StationaryStrategy,
    alpha: f64,
) -> Result<StationaryStrategy> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Invalid(format!(
            "mixing weight {alpha} not in [0,1]"
        )));
    }
    let t1 = occupation_stationary(game, s0, lambda, &base.with_player(player, x.clone()))?;
    let t2 = occupation_stationary(game, s0, lambda, &base.with_player(player, x2.clone()))?;
    Ok(equivalent_stationary(game, &t1.mix(&t2, alpha), player))
}

/// Summation-by-parts split of `Σ_{n≤L} λⁿ xₙ` at stage `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct AbelTerms {
    /// `Σ_{n<M} (λⁿ − λᴹ) xₙ`
    pub head: f64,
    /// Weight on the running average `avg_l`, for `l = M..=L`.
    pub tail_weights: Vec<f64>,
    pub tail_averages: Vec<f64>,
}

impl AbelTerms {
    pub fn total(&self) -> f64 {
        self.head
            + self
                .tail_weights
                .iter()
                .zip(&self.tail_averages)
                .map(|(w, a)| w * a)
                .sum::<f64>()
    }
}

pub fn abel_decompose(x: &[f64], lambda: f64, m: usize, l: usize) -> Result<AbelTerms> {
    if m > l || x.len() <= l {
        return Err(Error::Invalid(format!(
            "need M ≤ L < len, got M={m}, L={l}, len={}",
            x.len()
        )));
    }
    let lm = lambda.powi(m as i32);
    let head = (0..m).map(|n| (lambda.powi(n as i32) - lm) * x[n]).sum();
    let mut prefix = x[..m].iter().sum::<f64>();
    let mut tail_weights = Vec::with_capacity(l - m + 1);
    let mut tail_averages = Vec::with_capacity(l - m + 1);
    for k in m..=l {
        prefix += x[k];
        let lk = lambda.powi(k as i32);
        let w = if k < l {
            (k + 1) as f64 * (lk - lk * lambda)
        } else {
            (l + 1) as f64 * lk
        };
        tail_weights.push(w);
        tail_averages.push(prefix / (k + 1) as f64);
    }
    Ok(AbelTerms {
        head,
        tail_weights,
        tail_averages,
    })
}

/// Share of the total discount weight carried by the head term.
pub fn abel_head_weight(lambda: f64, m: usize) -> f64 {
    let lm = lambda.powi(m as i32);
    let head: f64 = (0..m).map(|n| lambda.powi(n as i32) - lm).sum();
    head * (1.0 - lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn example2_closed_form() {
        let g = fixtures::example2();
        let x = StationaryProfile::uniform(&g);
        let occ = occupation_stationary(&g, 0, 0.5, &x).unwrap();
        occ.check(&g).unwrap();
        close(occ.state_time(0), 2.0 / 3.0, 1e-12);
        close(occ.state_time(1), 1.0 / 3.0, 1e-12);
        close(discounted_payoff(&g, &occ)[0], 2.0, 1e-12);
        close(n_stage_payoff(&g, 0, &x, 2).unwrap()[0], 3.0, 1e-12);
        close(n_stage_payoff(&g, 0, &x, 2000).unwrap()[0], 3.0, 2e-3);
    }

    #[test]
    fn big_match_time_in_start_state() {
        let g = fixtures::big_match();
        for &(lambda, p) in &[(0.5, 0.3), (0.9, 0.5), (0.99, 0.01)] {
            let x = StationaryProfile(vec![
                StationaryStrategy(vec![vec![p, 1.0 - p], vec![1.0], vec![1.0]]),
                StationaryStrategy(vec![vec![1.0, 0.0], vec![1.0], vec![1.0]]),
            ]);
            let occ = occupation_stationary(&g, 0, lambda, &x).unwrap();
            close(
                occ.state_time(0),
                (1.0 - lambda) / (1.0 - lambda * (1.0 - p)),
                1e-12,
            );
        }
    }

    #[test]
    fn a_then_b_automaton() {
        let g = crate::game::GameBuilder::new(&["1"])
            .state("s", &[&["a", "b"]])
            .entry("s", "a", &[1.0], &[("s", 1.0)])
            .entry("s", "b", &[0.0], &[("s", 1.0)])
            .build()
            .unwrap();
        let x = AutomatonStrategy::from_fn(
            &g,
            0,
            2,
            0,
            |m, _| {
                if m == 0 {
                    vec![1.0, 0.0]
                } else {
                    vec![0.0, 1.0]
                }
            },
            |_, _, _, _| 1,
        );
        let occ = occupation_automaton(&g, 0, 0.7, &[x], 100).unwrap();
        close(occ.entries[0][0], 0.3, 1e-12);
        close(occ.entries[0][1], 0.7, 1e-12);
        let e = equivalent_stationary(&g, &occ, 0);
        close(e.at(0)[0], 0.3, 1e-12);
    }

    #[test]
    fn singleton_memory_matches_stationary() {
        let g = fixtures::chain3();
        let x = StationaryProfile::uniform(&g);
        let a = occupation_stationary(&g, 0, 0.9, &x).unwrap();
        let autos = crate::automaton::stationary_profile(&g, &x);
        let b = occupation_automaton(&g, 0, 0.9, &autos, 1000).unwrap();
        for (ra, rb) in a.entries.iter().zip(&b.entries) {
            for (p, q) in ra.iter().zip(rb) {
                close(*p, *q, 1e-12);
            }
        }
    }

    #[test]
    fn breakdown_of_example2() {
        let g = fixtures::example2();
        let x = StationaryProfile::uniform(&g);
        let occ = occupation_stationary(&g, 0, 0.5, &x).unwrap();
        let part = Partition::singletons(2);
        let b = block_breakdown(&g, &occ, &part).unwrap();
        close(b.times[0], 2.0 / 3.0, 1e-12);
        close(b.payoffs[0][0], 0.0, 1e-12);
        close(b.payoffs[1][0], 2.0, 1e-12);
        let whole = block_breakdown(&g, &occ, &Partition::trivial(2)).unwrap();
        close(whole.times[0], 1.0, 1e-12);
        close(whole.payoffs[0][0], 2.0, 1e-12);
    }

    #[test]
    fn abel_constant_sequence() {
        let x = vec![1.0; 21];
        let lambda: f64 = 0.8;
        for m in [0, 3, 20] {
            let a = abel_decompose(&x, lambda, m, 20).unwrap();
            close(a.total(), (1.0 - lambda.powi(21)) / (1.0 - lambda), 1e-12);
        }
        assert!(abel_decompose(&x, lambda, 5, 3).is_err());
    }

    #[test]
    fn abel_head_share_vanishes() {
        let grid = [0.9, 0.99, 0.999, 0.9999];
        let w: Vec<f64> = grid.iter().map(|&l| abel_head_weight(l, 5)).collect();
        assert!(w.windows(2).all(|p| p[1] < p[0]));
        assert!(w[3] < 1e-6);
    }

    #[test]
    fn csv_and_json_shapes() {
        let g = fixtures::example2();
        let occ = occupation_stationary(&g, 0, 0.5, &StationaryProfile::uniform(&g)).unwrap();
        let csv = occ.to_csv(&g);
        assert_eq!(csv.lines().next().unwrap(), "state,profile,t,ut_1");
        assert_eq!(csv.lines().count(), 3);
        let j = occ.to_json(&g);
        assert_eq!(j["s0"], "s0");
        assert!(j["entries"]["s1"]["a"].as_f64().unwrap() > 0.3);
    }
}
