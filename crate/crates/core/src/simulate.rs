//! Seeded play simulation, run segmentation, restart wrappers and Monte
//! Carlo estimates.
//!
//! Randomness: every play draws from its own ChaCha8 stream. Play `k` of a
//! batch seeded with `seed` uses `ChaCha8Rng::seed_from_u64(seed)` moved to
//! stream `k`; within a play, draws are consumed stage by stage (one per
//! player for the actions, then one for the transition).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::automaton::AutomatonStrategy;
use crate::error::{Error, Result};
use crate::game::StochasticGame;
use crate::modified::Partition;

/// `s₀, a₀, s₁, a₁, …, s_N` with the stage payoffs.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayRecord {
    pub states: Vec<usize>,
    /// Joint profile index per stage.
    pub actions: Vec<usize>,
    pub payoffs: Vec<Vec<f64>>,
}

impl PlayRecord {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn average(&self) -> Vec<f64> {
        let n = self.payoffs.len().max(1) as f64;
        let k = self.payoffs.first().map_or(0, Vec::len);
        (0..k)
            .map(|i| self.payoffs.iter().map(|u| u[i]).sum::<f64>() / n)
            .collect()
    }

    /// One JSON object per stage.
    pub fn to_jsonl(&self, game: &StochasticGame) -> String {
        let mut out = String::new();
        for n in 0..self.horizon() {
            let s = self.states[n];
            let line = json!({
                "stage": n,
                "state": game.state_name(s),
                "profile": game.profile_name(s, self.actions[n]),
                "payoffs": self.payoffs[n],
                "next": game.state_name(self.states[n + 1]),
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

fn sample(rng: &mut impl Rng, dist: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in dist.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = k;
        if u < acc {
            return k;
        }
    }
    last
}

fn play_with(
    game: &StochasticGame,
    automata: &[AutomatonStrategy],
    s0: usize,
    horizon: usize,
    rng: &mut impl Rng,
) -> PlayRecord {
    let mut mem: Vec<usize> = automata.iter().map(|x| x.initial()).collect();
    let mut s = s0;
    let mut rec = PlayRecord {
        states: vec![s0],
        actions: Vec::with_capacity(horizon),
        payoffs: Vec::with_capacity(horizon),
    };
    for _ in 0..horizon {
        let acts: Vec<usize> = automata
            .iter()
            .zip(&mem)
            .map(|(x, &m)| sample(rng, x.emit(m, s)))
            .collect();
        let a = game.encode_profile(s, &acts);
        let row = game.transition(s, a);
        let k = sample(rng, &row.iter().map(|&(_, q)| q).collect::<Vec<_>>());
        let t = row[k].0;
        for (m, x) in mem.iter_mut().zip(automata) {
            *m = x.next(*m, s, a, t);
        }
        rec.actions.push(a);
        rec.payoffs.push(game.payoff(s, a).to_vec());
        rec.states.push(t);
        s = t;
    }
    rec
}

fn play_rng(seed: u64, play: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(play);
    rng
}

pub fn simulate(
    game: &StochasticGame,
    automata: &[AutomatonStrategy],
    s0: usize,
    horizon: usize,
    seed: u64,
) -> Result<PlayRecord> {
    if horizon == 0 {
        return Err(Error::Invalid("horizon must be at least 1".into()));
    }
    if automata.len() != game.num_players() {
        return Err(Error::Invalid(
            "one automaton per player is required".into(),
        ));
    }
    Ok(play_with(
        game,
        automata,
        s0,
        horizon,
        &mut play_rng(seed, 0),
    ))
}

/// Play `k` of a seeded batch.
pub fn simulate_play(
    game: &StochasticGame,
    automata: &[AutomatonStrategy],
    s0: usize,
    horizon: usize,
    seed: u64,
    k: u64,
) -> PlayRecord {
    play_with(game, automata, s0, horizon, &mut play_rng(seed, k))
}

/// Stages at which the play changes block, and the run index of each stage.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSegmentation {
    /// `τ₀ = 0 < τ₁ < …`
    pub taus: Vec<usize>,
    /// `k(D; n)` for every stage `n < horizon`.
    pub run_index: Vec<usize>,
    /// `Z`: number of switches.
    pub switches: usize,
}

impl RunSegmentation {
    pub fn run_lengths(&self) -> Vec<usize> {
        let n = self.run_index.len();
        let mut out: Vec<usize> = self.taus.windows(2).map(|w| w[1] - w[0]).collect();
        if let Some(&last) = self.taus.last() {
            out.push(n - last);
        }
        out
    }

    pub fn to_csv(
        &self,
        game: &StochasticGame,
        play: &PlayRecord,
        partition: &Partition,
    ) -> String {
        let mut out = String::from("stage,state,block,run\n");
        for (n, &k) in self.run_index.iter().enumerate() {
            let s = play.states[n];
            out.push_str(&format!(
                "{n},{},{},{k}\n",
                game.state_name(s),
                partition.block_of(s)
            ));
        }
        out
    }
}

/// Splits the stages `0..horizon` of a play into maximal single-block runs.
pub fn segment_runs(play: &PlayRecord, partition: &Partition) -> RunSegmentation {
    let n = play.horizon();
    let mut taus = vec![0];
    let mut run_index = Vec::with_capacity(n);
    let mut k = 0;
    for stage in 0..n {
        if stage > 0
            && partition.block_of(play.states[stage]) != partition.block_of(play.states[stage - 1])
        {
            k += 1;
            taus.push(stage);
        }
        run_index.push(k);
    }
    RunSegmentation {
        switches: taus.len() - 1,
        taus,
        run_index,
    }
}

/// The automaton that restarts from its initial memory whenever the play
/// moves to a different block.
pub fn restart_wrapper(
    game: &StochasticGame,
    sigma: &AutomatonStrategy,
    partition: &Partition,
) -> AutomatonStrategy {
    let init = sigma.initial();
    sigma.map_update(game, |_, s, _, t, next| {
        if partition.block_of(s) != partition.block_of(t) {
            init
        } else {
            next
        }
    })
}

/// `M = ⌈2ζN/ε⌉`, `L₀ = ⌈2ζM/ε⌉`.
pub fn run_length_constants(eps: f64, n: u64, zeta: f64) -> Result<(u64, u64)> {
    if !(eps > 0.0 && eps <= 1.0) || n < 1 || zeta < 1.0 {
        return Err(Error::Invalid("need ε ∈ (0,1], N ≥ 1 and ζ ≥ 1".into()));
    }
    let m = (2.0 * zeta * n as f64 / eps).ceil() as u64;
    let l0 = (2.0 * zeta * m as f64 / eps).ceil() as u64;
    Ok((m, l0))
}

/// Two-sided 99% normal quantile.
const Z99: f64 = 2.575_829_303_549_7;

#[derive(Debug, Clone, PartialEq)]
pub struct CoinReport {
    pub p: f64,
    pub samples: usize,
    pub mean: f64,
    /// Half-width of the 99% confidence interval.
    pub ci: f64,
    /// `p/(1−p)`: mean of `P(k*=k) = (1−p)pᵏ`.
    pub pmf_mean: f64,
    /// `1/(1−p)`: the expectation stated alongside that pmf.
    pub stated_mean: f64,
    pub matches_pmf: bool,
    pub matches_stated: bool,
}

impl CoinReport {
    pub fn verdict(&self) -> &'static str {
        match (self.matches_pmf, self.matches_stated) {
            (true, false) => "p/(1-p)",
            (false, true) => "1/(1-p)",
            (true, true) => "both",
            (false, false) => "neither",
        }
    }
}

/// Empirical mean of `k*`, the number of heads before the first tail of a
/// coin showing heads with probability `p`.
pub fn coin_run_oracle(p: f64, samples: usize, seed: u64) -> Result<CoinReport> {
    if !(0.0..1.0).contains(&p) || samples < 2 {
        return Err(Error::Invalid(
            "need p ∈ [0,1) and at least two samples".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut mean, mut m2) = (0.0, 0.0);
    for k in 0..samples {
        let mut heads = 0u64;
        while rng.gen::<f64>() < p {
            heads += 1;
        }
        let x = heads as f64;
        let d = x - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (x - mean);
    }
    let sd = (m2 / (samples - 1) as f64).sqrt();
    let ci = Z99 * sd / (samples as f64).sqrt();
    let pmf_mean = p / (1.0 - p);
    let stated_mean = 1.0 / (1.0 - p);
    // a zero-variance sample still has to hit the candidate exactly
    let slack = ci.max(1e-12);
    Ok(CoinReport {
        p,
        samples,
        mean,
        ci,
        pmf_mean,
        stated_mean,
        matches_pmf: (mean - pmf_mean).abs() <= slack,
        matches_stated: (mean - stated_mean).abs() <= slack,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub mean: Vec<f64>,
    /// 99% half-width from batch means, plus the truncation tail `λᵀR`.
    pub ci: Vec<f64>,
    pub horizon: usize,
    pub plays: usize,
    pub batches: usize,
}

/// Monte Carlo estimate of the normalized discounted payoff. Plays are
/// truncated at the smallest `T` with `λᵀR ≤ target/10`.
pub fn mc_discounted_payoff(
    game: &StochasticGame,
    automata: &[AutomatonStrategy],
    s0: usize,
    lambda: f64,
    plays: usize,
    seed: u64,
    target: f64,
) -> Result<McEstimate> {
    if plays < 100 {
        return Err(Error::Invalid("at least 100 plays are required".into()));
    }
    if !(0.0..1.0).contains(&lambda) || target <= 0.0 {
        return Err(Error::Invalid(
            "need λ ∈ [0,1) and a positive CI target".into(),
        ));
    }
    let r = game.payoff_bound();
    let horizon = if r == 0.0 || lambda == 0.0 {
        1
    } else {
        ((target / (10.0 * r)).ln() / lambda.ln()).ceil().max(1.0) as usize
    };
    let tail = lambda.powi(horizon as i32) * r;
    let batches = 20;
    let k = game.num_players();
    let mut batch_sum = vec![vec![0.0; k]; batches];
    let mut batch_n = vec![0usize; batches];
    for p in 0..plays {
        let rec = simulate_play(game, automata, s0, horizon, seed, p as u64);
        let mut w = 1.0 - lambda;
        let mut g = vec![0.0; k];
        for u in &rec.payoffs {
            for (x, y) in g.iter_mut().zip(u) {
                *x += w * y;
            }
            w *= lambda;
        }
        let b = p % batches;
        for (x, y) in batch_sum[b].iter_mut().zip(&g) {
            *x += y;
        }
        batch_n[b] += 1;
    }
    let mut mean = vec![0.0; k];
    let mut ci = vec![0.0; k];
    for i in 0..k {
        let means: Vec<f64> = (0..batches)
            .map(|b| batch_sum[b][i] / batch_n[b] as f64)
            .collect();
        let m = batch_sum.iter().map(|b| b[i]).sum::<f64>() / plays as f64;
        let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
        // t quantile, 19 degrees of freedom
        ci[i] = 2.861 * (var / batches as f64).sqrt() + tail;
        mean[i] = m;
    }
    Ok(McEstimate {
        mean,
        ci,
        horizon,
        plays,
        batches,
    })
}
