//! Discounted and uniform min-max / max-min values, modified best responses,
//! stationary equilibria of the modified game, and the stationary-restricted
//! values of the modified game.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::game::{profile_to_doc, StationaryProfile, StationaryStrategy, StochasticGame};
use crate::linalg;
use crate::lp::{self, LinearProgram, Relation};
use crate::modified::{self, ModifiedSpec};
use crate::occupancy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    MinMax,
    MaxMin,
}

impl ValueKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueKind::MinMax => "minmax",
            ValueKind::MaxMin => "maxmin",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "minmax" => Ok(ValueKind::MinMax),
            "maxmin" => Ok(ValueKind::MaxMin),
            other => Err(Error::Invalid(format!("unknown value kind `{other}`"))),
        }
    }
}

/// Player `i` against a single adversary that controls every opponent.
/// `cell[s][ai][b]` is the profile index for own action `ai` and joint
/// opponent action `b`.
struct Folded {
    cell: Vec<Vec<Vec<usize>>>,
    /// Opponent action indices for each joint `b`.
    joint: Vec<Vec<Vec<usize>>>,
}

fn fold(game: &StochasticGame, i: usize) -> Folded {
    let n = game.num_players();
    let mut cell = Vec::with_capacity(game.num_states());
    let mut joint = Vec::with_capacity(game.num_states());
    for s in 0..game.num_states() {
        let nb: usize = (0..n)
            .filter(|&j| j != i)
            .map(|j| game.num_actions(s, j))
            .product();
        let mut m = vec![vec![0; nb]; game.num_actions(s, i)];
        let mut jt = vec![Vec::new(); nb];
        for a in 0..game.num_profiles(s) {
            let acts = game.decode_profile(s, a);
            let mut b = 0;
            for j in (0..n).filter(|&j| j != i) {
                b = b * game.num_actions(s, j) + acts[j];
            }
            m[acts[i]][b] = a;
            jt[b] = acts
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &x)| x)
                .collect();
        }
        cell.push(m);
        joint.push(jt);
    }
    Folded { cell, joint }
}

/// Discounted min-max or max-min values of one player at every state.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueReport {
    pub player: usize,
    pub kind: ValueKind,
    pub lambda: f64,
    pub values: Vec<f64>,
    pub iterations: usize,
    /// Sup-norm Shapley residual of the iterate the values were taken from.
    pub residual: f64,
    pub tol: f64,
    /// Optimal stationary strategy of the player.
    pub strategy: StationaryStrategy,
    /// Optimal stationary strategy of the coordinated adversary, per state a
    /// distribution over joint opponent actions.
    pub adversary: Vec<Vec<f64>>,
    adversary_marginals: Vec<StationaryStrategy>,
}

impl ValueReport {
    /// The player's optimal strategy together with the adversary's
    /// per-opponent marginals (exact for two players).
    pub fn profile(&self) -> StationaryProfile {
        let mut out = self.adversary_marginals.clone();
        out[self.player] = self.strategy.clone();
        StationaryProfile(out)
    }

    pub fn to_json(&self, game: &StochasticGame) -> Value {
        json!({
            "player": game.players()[self.player],
            "kind": self.kind.as_str(),
            "lambda": self.lambda,
            "values": game.state_names().iter().cloned().zip(self.values.iter().copied())
                .collect::<indexmap::IndexMap<String, f64>>(),
            "iterations": self.iterations,
            "residual": self.residual,
            "tol": self.tol,
            "strategies": profile_to_doc(game, &self.profile()),
        })
    }
}

fn shapley_matrix(
    game: &StochasticGame,
    f: &Folded,
    i: usize,
    s: usize,
    lambda: f64,
    v: &[f64],
) -> Vec<Vec<f64>> {
    f.cell[s]
        .iter()
        .map(|row| {
            row.iter()
                .map(|&a| {
                    let cont: f64 = game.transition(s, a).iter().map(|&(t, q)| q * v[t]).sum();
                    (1.0 - lambda) * game.payoff(s, a)[i] + lambda * cont
                })
                .collect()
        })
        .collect()
}

/// Exact best reply of the coordinated adversary against stationary `x`,
/// by policy iteration started from the greedy policy for `v`.
fn adversary_reply(
    game: &StochasticGame,
    f: &Folded,
    i: usize,
    lambda: f64,
    x: &[Vec<f64>],
    v: &[f64],
) -> Result<Vec<f64>> {
    let n = game.num_states();
    // reward and transition of each (s, b) under x
    let mut reward: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut trans: Vec<Vec<Vec<(usize, f64)>>> = Vec::with_capacity(n);
    for s in 0..n {
        let nb = f.cell[s][0].len();
        let mut r = vec![0.0; nb];
        let mut tr = vec![Vec::new(); nb];
        for b in 0..nb {
            for (ai, &w) in x[s].iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let a = f.cell[s][ai][b];
                r[b] += w * game.payoff(s, a)[i];
                for &(t, q) in game.transition(s, a) {
                    tr[b].push((t, w * q));
                }
            }
        }
        reward.push(r);
        trans.push(tr);
    }
    let q_value = |s: usize, b: usize, w: &[f64]| -> f64 {
        (1.0 - lambda) * reward[s][b]
            + lambda * trans[s][b].iter().map(|&(t, q)| q * w[t]).sum::<f64>()
    };
    let mut policy: Vec<usize> = (0..n)
        .map(|s| {
            let mut best = 0;
            for b in 1..reward[s].len() {
                if q_value(s, b, v) < q_value(s, best, v) {
                    best = b;
                }
            }
            best
        })
        .collect();
    let eps = 1e-12 * game.scale();
    for _ in 0..10_000 {
        let mut p = vec![vec![0.0; n]; n];
        let mut r = vec![0.0; n];
        for s in 0..n {
            r[s] = reward[s][policy[s]];
            for &(t, q) in &trans[s][policy[s]] {
                p[s][t] += q;
            }
        }
        let w = linalg::discounted_values(&p, &r, lambda)?;
        let mut changed = false;
        for s in 0..n {
            let cur = q_value(s, policy[s], &w);
            for b in 0..reward[s].len() {
                if q_value(s, b, &w) < cur - eps {
                    policy[s] = b;
                    changed = true;
                    break;
                }
            }
        }
        if !changed {
            return Ok(w);
        }
    }
    Err(Error::Numerical(
        "adversary policy iteration did not terminate".into(),
    ))
}

fn discounted_value(
    game: &StochasticGame,
    i: usize,
    lambda: f64,
    tol: f64,
    kind: ValueKind,
) -> Result<ValueReport> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::Invalid(format!(
            "discount factor {lambda} not in [0,1)"
        )));
    }
    if i >= game.num_players() {
        return Err(Error::UnknownPlayer(i.to_string()));
    }
    let f = fold(game, i);
    let n = game.num_states();
    let threshold = if lambda == 0.0 {
        f64::INFINITY
    } else {
        tol * (1.0 - lambda) / (2.0 * lambda)
    };
    let mut v = vec![0.0; n];
    for iter in 1..=100_000 {
        let mut tv = vec![0.0; n];
        let mut rows = Vec::with_capacity(n);
        let mut cols = Vec::with_capacity(n);
        for s in 0..n {
            let m = shapley_matrix(game, &f, i, s, lambda, &v);
            let sol = lp::solve_matrix_game(&m).map_err(|e| {
                Error::Numerical(format!(
                    "matrix game at state `{}`: {e}",
                    game.state_name(s)
                ))
            })?;
            tv[s] = sol.value;
            rows.push(sol.row);
            cols.push(sol.col);
        }
        let residual = tv
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if residual <= threshold {
            let marginals = adversary_marginals(game, &f, i, &cols);
            return Ok(ValueReport {
                player: i,
                kind,
                lambda,
                values: tv,
                iterations: iter,
                residual,
                tol,
                strategy: StationaryStrategy(rows),
                adversary: cols,
                adversary_marginals: marginals,
            });
        }
        // Hoffman-Karp step: keep the maximizer's greedy strategy, let the
        // adversary answer it exactly.
        let next = adversary_reply(game, &f, i, lambda, &rows, &v)?;
        // a Shapley step is a safe fallback if round-off stalls the reply
        v = if next
            .iter()
            .zip(&v)
            .all(|(a, b)| (a - b).abs() <= threshold * 1e-3)
        {
            tv
        } else {
            next
        };
    }
    Err(Error::Numerical("value iteration did not converge".into()))
}

fn adversary_marginals(
    game: &StochasticGame,
    f: &Folded,
    i: usize,
    cols: &[Vec<f64>],
) -> Vec<StationaryStrategy> {
    (0..game.num_players())
        .map(|j| {
            StationaryStrategy(
                (0..game.num_states())
                    .map(|s| {
                        let mut m = vec![0.0; game.num_actions(s, j)];
                        if j == i {
                            let k = m.len() as f64;
                            m.iter_mut().for_each(|x| *x = 1.0 / k);
                            return m;
                        }
                        let pos = (0..j).filter(|&k| k != i).count();
                        for (b, &w) in cols[s].iter().enumerate() {
                            m[f.joint[s][b][pos]] += w;
                        }
                        m
                    })
                    .collect(),
            )
        })
        .collect()
}

/// `v̄ⁱ_λ`: what the opponents, acting as one, can hold player `i` to.
pub fn discounted_minmax(
    game: &StochasticGame,
    i: usize,
    lambda: f64,
    tol: f64,
) -> Result<ValueReport> {
    discounted_value(game, i, lambda, tol, ValueKind::MinMax)
}

/// `v̲ⁱ_λ`: what player `i` can guarantee. Coincides with the min-max
/// value against a coordinated adversary; the reported strategy is the
/// player's own optimal one.
pub fn discounted_maxmin(
    game: &StochasticGame,
    i: usize,
    lambda: f64,
    tol: f64,
) -> Result<ValueReport> {
    discounted_value(game, i, lambda, tol, ValueKind::MaxMin)
}

/// `1 − 2^{-k}` for `k = 4..=11`.
pub fn default_grid() -> Vec<f64> {
    (4..=11).map(|k| 1.0 - 0.5f64.powi(k)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformValueEstimate {
    pub player: usize,
    pub kind: ValueKind,
    pub grid: Vec<f64>,
    /// `per_lambda[k][s]`: discounted value at `grid[k]`.
    pub per_lambda: Vec<Vec<f64>>,
    pub limits: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Set where the fit was rejected and the last grid value used instead.
    pub fallback: Vec<bool>,
}

impl UniformValueEstimate {
    pub fn to_json(&self, game: &StochasticGame) -> Value {
        let states: Vec<Value> = (0..game.num_states())
            .map(|s| {
                json!({
                    "state": game.state_name(s),
                    "limit": self.limits[s],
                    "residual": self.residuals[s],
                    "fallback": self.fallback[s],
                    "values": self.per_lambda.iter().map(|v| v[s]).collect::<Vec<_>>(),
                })
            })
            .collect();
        json!({
            "player": game.players()[self.player],
            "kind": self.kind.as_str(),
            "grid": self.grid,
            "states": states,
        })
    }
}

/// Fits `c₀ + c₁√(1−λ) + c₂(1−λ)` to a value curve; returns `(c₀, max
/// residual)`. Each row is scaled by `1/(1−λ)` so that the points nearest
/// the limit dominate; the residual is reported unscaled.
pub fn puiseux_fit(grid: &[f64], values: &[f64]) -> Result<(f64, f64)> {
    let basis = |l: f64| [1.0, (1.0 - l).sqrt(), 1.0 - l];
    let design: Vec<Vec<f64>> = grid
        .iter()
        .map(|&l| basis(l).iter().map(|b| b / (1.0 - l)).collect())
        .collect();
    let scaled: Vec<f64> = grid
        .iter()
        .zip(values)
        .map(|(l, v)| v / (1.0 - l))
        .collect();
    let (c, _) = linalg::least_squares(&design, &scaled)?;
    let resid = grid
        .iter()
        .zip(values)
        .map(|(&l, v)| (basis(l).iter().zip(&c).map(|(b, k)| b * k).sum::<f64>() - v).abs())
        .fold(0.0, f64::max);
    Ok((c[0], resid))
}

pub fn uniform_value(
    game: &StochasticGame,
    i: usize,
    kind: ValueKind,
    grid: &[f64],
) -> Result<UniformValueEstimate> {
    if grid.len() < 3
        || grid.windows(2).any(|w| w[1] <= w[0])
        || grid.iter().any(|l| !(0.0..1.0).contains(l))
    {
        return Err(Error::Invalid(
            "λ-grid must hold at least 3 strictly increasing values in [0,1)".into(),
        ));
    }
    let tol = 1e-9 * game.scale();
    let per_lambda = grid
        .iter()
        .map(|&l| discounted_value(game, i, l, tol, kind).map(|r| r.values))
        .collect::<Result<Vec<_>>>()?;
    let n = game.num_states();
    let (mut limits, mut residuals, mut fallback) = (Vec::new(), Vec::new(), Vec::new());
    for s in 0..n {
        let ys: Vec<f64> = per_lambda.iter().map(|v| v[s]).collect();
        let (c0, resid) = puiseux_fit(grid, &ys)?;
        let bad = resid > 1e-2 * game.scale() || !c0.is_finite();
        limits.push(if bad { *ys.last().unwrap() } else { c0 });
        residuals.push(resid);
        fallback.push(bad);
    }
    Ok(UniformValueEstimate {
        player: i,
        kind,
        grid: grid.to_vec(),
        per_lambda,
        limits,
        residuals,
        fallback,
    })
}

/// Uniform min-max value of every player at every state: `out[i][s]`.
pub fn uniform_minmax_all(game: &StochasticGame, grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    (0..game.num_players())
        .map(|i| uniform_value(game, i, ValueKind::MinMax, grid).map(|u| u.limits))
        .collect()
}

/// Result of the best-response LP.
#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    pub strategy: StationaryStrategy,
    /// Optimal LP objective.
    pub value: f64,
    /// Modified payoff of the recovered stationary strategy.
    pub achieved: f64,
    /// Optimal occupation `τ(s, aⁱ)` of the player's own actions.
    pub occupation: Vec<Vec<f64>>,
}

/// Best reply of player `i` in the modified game against stationary
/// opponents (player `i`'s entry in `opponents` is ignored).
pub fn modified_best_response(
    game: &StochasticGame,
    spec: &ModifiedSpec,
    i: usize,
    opponents: &StationaryProfile,
) -> Result<BestResponse> {
    spec.check(game)?;
    opponents.check(game)?;
    let lambda = spec.lambda_for(i);
    let ps = &spec.per_player[i];
    let n = game.num_states();
    // variable layout: τ(s, aⁱ) then z_D
    let mut offset = Vec::with_capacity(n);
    let mut nv = 0;
    for s in 0..n {
        offset.push(nv);
        nv += game.num_actions(s, i);
    }
    let z0 = nv;
    let nblocks = ps.partition.len();
    let mut lp = LinearProgram::new(nv + nblocks);
    // induced MDP
    let mut reward = vec![Vec::new(); n];
    let mut inflow: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for s in 0..n {
        let mut mixed: Vec<Vec<f64>> = opponents.0.iter().map(|x| x.at(s).to_vec()).collect();
        let k = game.num_actions(s, i);
        reward[s] = vec![0.0; k];
        for ai in 0..k {
            let mut e = vec![0.0; k];
            e[ai] = 1.0;
            mixed[i] = e;
            let (pay, dist) = game.mixed_extend(s, &mixed)?;
            reward[s][ai] = pay[i];
            for (t, &q) in dist.iter().enumerate() {
                if q != 0.0 {
                    inflow[t].push((offset[s] + ai, q));
                }
            }
        }
    }
    for t in 0..n {
        let mut coeffs: Vec<(usize, f64)> = (0..game.num_actions(t, i))
            .map(|ai| (offset[t] + ai, 1.0))
            .collect();
        for &(var, q) in &inflow[t] {
            coeffs.push((var, -lambda * q));
        }
        let rhs = if t == spec.s0 { 1.0 - lambda } else { 0.0 };
        lp.add_row(coeffs, Relation::Eq, rhs);
    }
    for (k, block) in ps.partition.blocks().iter().enumerate() {
        let z = z0 + k;
        lp.set_free(z);
        lp.set_objective(z, 1.0);
        let c = ps.cutoffs.0[k];
        let mut by_payoff = vec![(z, 1.0)];
        let mut by_cutoff = vec![(z, 1.0)];
        for &s in block {
            for ai in 0..game.num_actions(s, i) {
                by_payoff.push((offset[s] + ai, -reward[s][ai]));
                by_cutoff.push((offset[s] + ai, -c));
            }
        }
        lp.add_row(by_payoff, Relation::Le, 0.0);
        lp.add_row(by_cutoff, Relation::Le, 0.0);
    }
    let sol = lp
        .maximize()
        .map_err(|e| Error::Numerical(format!("best-response LP: {e}")))?;
    let occupation: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            (0..game.num_actions(s, i))
                .map(|ai| sol.x[offset[s] + ai].max(0.0))
                .collect()
        })
        .collect();
    let strategy = StationaryStrategy(
        occupation
            .iter()
            .map(|tau| {
                let total: f64 = tau.iter().sum();
                if total < occupancy::ZERO_TIME {
                    vec![1.0 / tau.len() as f64; tau.len()]
                } else {
                    tau.iter().map(|x| x / total).collect()
                }
            })
            .collect(),
    );
    let achieved =
        modified::modified_payoff_profile(game, spec, &opponents.with_player(i, strategy.clone()))?
            [i];
    Ok(BestResponse {
        strategy,
        value: sol.objective,
        achieved,
        occupation,
    })
}

fn player_payoffs(
    game: &StochasticGame,
    spec: &ModifiedSpec,
    x: &StationaryProfile,
) -> Result<Vec<f64>> {
    modified::modified_payoff_profile(game, spec, x)
}

/// Per-player best-response gaps of a profile.
pub fn equilibrium_gaps(
    game: &StochasticGame,
    spec: &ModifiedSpec,
    x: &StationaryProfile,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let pay = player_payoffs(game, spec, x)?;
    let gaps = (0..game.num_players())
        .map(|i| modified_best_response(game, spec, i, x).map(|br| (br.value - pay[i]).max(0.0)))
        .collect::<Result<Vec<_>>>()?;
    Ok((pay, gaps))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub lambda: f64,
    pub s0: usize,
    pub profile: StationaryProfile,
    pub payoffs: Vec<f64>,
    pub gaps: Vec<f64>,
    /// Threshold the gaps were checked against (`ε·R`).
    pub threshold: f64,
    pub certified: bool,
    pub restarts: usize,
}

impl EquilibriumResult {
    pub fn max_gap(&self) -> f64 {
        self.gaps.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_json(&self, game: &StochasticGame) -> Value {
        json!({
            "lambda": self.lambda,
            "s0": game.state_name(self.s0),
            "certified": self.certified,
            "threshold": self.threshold,
            "payoffs": self.payoffs,
            "gaps": self.gaps,
            "restarts": self.restarts,
            "profile": profile_to_doc(game, &self.profile),
        })
    }
}

/// Blocks of free coordinates: each entry is (player, state) whose mixed
/// action has at least two actions.
fn free_blocks(game: &StochasticGame, players: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for &j in players {
        for s in 0..game.num_states() {
            if game.num_actions(s, j) > 1 {
                out.push((j, s));
            }
        }
    }
    out
}

/// Opportunistic compass search over products of simplices: moves shift
/// mass `step` between two actions of one (player, state); the step halves
/// when no move improves.
fn pattern_search(
    x0: StationaryProfile,
    blocks: &[(usize, usize)],
    start_step: f64,
    min_step: f64,
    budget: usize,
    mut f: impl FnMut(&StationaryProfile) -> Result<f64>,
) -> Result<(StationaryProfile, f64, usize)> {
    let mut x = x0;
    let mut fx = f(&x)?;
    let mut evals = 1;
    let mut step = start_step;
    while step >= min_step && evals < budget {
        let mut improved = false;
        'poll: for &(j, s) in blocks {
            let k = x.0[j].0[s].len();
            for a in 0..k {
                for b in 0..k {
                    if a == b {
                        continue;
                    }
                    let d = step.min(x.0[j].0[s][a]);
                    if d <= 0.0 {
                        continue;
                    }
                    let mut y = x.clone();
                    y.0[j].0[s][a] -= d;
                    y.0[j].0[s][b] += d;
                    let fy = f(&y)?;
                    evals += 1;
                    if fy < fx - 1e-15 {
                        x = y;
                        fx = fy;
                        improved = true;
                        break 'poll;
                    }
                    if evals >= budget {
                        break 'poll;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok((x, fx, evals))
}

/// Golden-section refinement of each (player, state) mixed action along the
/// segment towards each pure action.
fn line_refine(
    x0: StationaryProfile,
    blocks: &[(usize, usize)],
    mut f: impl FnMut(&StationaryProfile) -> Result<f64>,
) -> Result<(StationaryProfile, f64)> {
    let mut x = x0;
    let mut fx = f(&x)?;
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for &(j, s) in blocks {
        let k = x.0[j].0[s].len();
        for a in 0..k {
            let base = x.0[j].0[s].clone();
            let at = |t: f64| -> Vec<f64> {
                base.iter()
                    .enumerate()
                    .map(|(b, &p)| (1.0 - t) * p + if a == b { t } else { 0.0 })
                    .collect()
            };
            let mut eval = |t: f64, x: &StationaryProfile| -> Result<(f64, StationaryProfile)> {
                let mut y = x.clone();
                y.0[j].0[s] = at(t);
                Ok((f(&y)?, y))
            };
            let (mut lo, mut hi) = (0.0, 1.0);
            let mut c = hi - phi * (hi - lo);
            let mut d = lo + phi * (hi - lo);
            let mut fc = eval(c, &x)?;
            let mut fd = eval(d, &x)?;
            for _ in 0..60 {
                if fc.0 < fd.0 {
                    hi = d;
                    d = c;
                    fd = fc;
                    c = hi - phi * (hi - lo);
                    fc = eval(c, &x)?;
                } else {
                    lo = c;
                    c = d;
                    fc = fd;
                    d = lo + phi * (hi - lo);
                    fd = eval(d, &x)?;
                }
            }
            let best = if fc.0 < fd.0 { fc } else { fd };
            if best.0 < fx - 1e-15 {
                fx = best.0;
                x = best.1;
            }
        }
    }
    Ok((x, fx))
}

fn random_profile(game: &StochasticGame, rng: &mut ChaCha8Rng) -> StationaryProfile {
    StationaryProfile(
        (0..game.num_players())
            .map(|i| {
                StationaryStrategy(
                    (0..game.num_states())
                        .map(|s| {
                            // normalized exponentials: uniform on the simplex
                            let w: Vec<f64> = (0..game.num_actions(s, i))
                                .map(|_| -(1.0 - rng.gen::<f64>()).ln())
                                .collect();
                            let t: f64 = w.iter().sum();
                            w.into_iter().map(|x| x / t).collect()
                        })
                        .collect(),
                )
            })
            .collect(),
    )
}

/// All pure stationary profiles of `players` (others fixed from `base`),
/// or `None` if there are more than `limit`.
fn pure_profiles(
    game: &StochasticGame,
    base: &StationaryProfile,
    players: &[usize],
    limit: usize,
) -> Option<Vec<StationaryProfile>> {
    let slots: Vec<(usize, usize)> = players
        .iter()
        .flat_map(|&j| (0..game.num_states()).map(move |s| (j, s)))
        .collect();
    let mut count: usize = 1;
    for &(j, s) in &slots {
        count = count.checked_mul(game.num_actions(s, j))?;
        if count > limit {
            return None;
        }
    }
    let mut out = Vec::with_capacity(count);
    let mut digits = vec![0usize; slots.len()];
    loop {
        let mut x = base.clone();
        for (k, &(j, s)) in slots.iter().enumerate() {
            let mut v = vec![0.0; game.num_actions(s, j)];
            v[digits[k]] = 1.0;
            x.0[j].0[s] = v;
        }
        out.push(x);
        // odometer, last slot fastest
        let mut k = slots.len();
        loop {
            if k == 0 {
                return Some(out);
            }
            k -= 1;
            let (j, s) = slots[k];
            digits[k] += 1;
            if digits[k] < game.num_actions(s, j) {
                break;
            }
            digits[k] = 0;
        }
    }
}

/// Damped best-response iteration in occupation space, then a pattern
/// search on the sum of best-response gaps.
fn local_equilibrium(
    game: &StochasticGame,
    spec: &ModifiedSpec,
    start: StationaryProfile,
    threshold: f64,
    iterations: usize,
    budget: usize,
) -> Result<(StationaryProfile, Vec<f64>, Vec<f64>)> {
    let n = game.num_players();
    let mut x = start;
    let (mut pay, mut gaps) = equilibrium_gaps(game, spec, &x)?;
    let mut best = (x.clone(), pay.clone(), gaps.clone());
    let total = |g: &[f64]| g.iter().sum::<f64>();
    for k in 0..iterations {
        if gaps.iter().all(|g| *g <= threshold) {
            return Ok((x, pay, gaps));
        }
        let eta = 1.0 / (k as f64 + 2.0);
        let mut next = x.clone();
        for i in 0..n {
            let br = modified_best_response(game, spec, i, &x)?;
            next.0[i] = occupancy::mixture_stationary(
                game,
                spec.s0,
                spec.lambda_for(i),
                &x,
                i,
                &br.strategy,
                x.player(i),
                eta,
            )?;
        }
        x = next;
        (pay, gaps) = equilibrium_gaps(game, spec, &x)?;
        if total(&gaps) < total(&best.2) {
            best = (x.clone(), pay.clone(), gaps.clone());
        }
    }
    if best.2.iter().all(|g| *g <= threshold) {
        return Ok(best);
    }
    let players: Vec<usize> = (0..n).collect();
    let blocks = free_blocks(game, &players);
    let (x, _, _) = pattern_search(best.0, &blocks, 0.25, 1e-10, budget, |y| {
        equilibrium_gaps(game, spec, y).map(|(_, g)| total(&g))
    })?;
    let (pay, gaps) = equilibrium_gaps(game, spec, &x)?;
    Ok((x, pay, gaps))
}

fn lex_less(a: &StationaryProfile, b: &StationaryProfile) -> bool {
    let q = |v: f64| (v * 1e9).round() as i64;
    let (fa, fb) = (a.flat(), b.flat());
    fa.iter().map(|&v| q(v)).lt(fb.iter().map(|&v| q(v)))
}

/// Options for the equilibrium search.
#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    /// Gap tolerance relative to `R`.
    pub eps: f64,
    /// Random restarts after the uniform start.
    pub restarts: usize,
    pub seed: u64,
    /// Damped best-response steps per start.
    pub iterations: usize,
    /// Gap evaluations allowed in the pattern search per start.
    pub budget: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            eps: 1e-4,
            restarts: 4,
            seed: 0,
            iterations: 200,
            budget: 4000,
        }
    }
}

/// Multistart search for a stationary equilibrium of the modified game.
/// Among certified candidates the lexicographically smallest profile wins;
/// if none is certified the profile with the smallest total gap is returned
/// unflagged.
pub fn stationary_equilibrium(
    game: &StochasticGame,
    spec: &ModifiedSpec,
    opts: &SearchOptions,
) -> Result<EquilibriumResult> {
    search_equilibrium(game, spec, opts, None)
}

fn search_equilibrium(
    game: &StochasticGame,
    spec: &ModifiedSpec,
    opts: &SearchOptions,
    warm: Option<&StationaryProfile>,
) -> Result<EquilibriumResult> {
    spec.check(game)?;
    let threshold = opts.eps * game.scale();
    let finish =
        |profile: StationaryProfile, payoffs: Vec<f64>, gaps: Vec<f64>, restarts: usize| {
            let certified = gaps.iter().all(|g| *g <= threshold);
            EquilibriumResult {
                lambda: spec.lambda,
                s0: spec.s0,
                profile,
                payoffs,
                gaps,
                threshold,
                certified,
                restarts,
            }
        };
    if let Some(w) = warm {
        let (x, pay, gaps) = local_equilibrium(
            game,
            spec,
            w.clone(),
            threshold,
            opts.iterations,
            opts.budget,
        )?;
        if gaps.iter().all(|g| *g <= threshold) {
            return Ok(finish(x, pay, gaps, 0));
        }
    }
    let mut certified: Option<(StationaryProfile, Vec<f64>, Vec<f64>)> = None;
    let mut fallback: Option<(StationaryProfile, Vec<f64>, Vec<f64>)> = None;
    let mut consider = |x: StationaryProfile, pay: Vec<f64>, gaps: Vec<f64>| {
        if gaps.iter().all(|g| *g <= threshold) {
            if certified.as_ref().map_or(true, |c| lex_less(&x, &c.0)) {
                certified = Some((x, pay, gaps));
            }
        } else if fallback
            .as_ref()
            .map_or(true, |f| gaps.iter().sum::<f64>() < f.2.iter().sum::<f64>())
        {
            fallback = Some((x, pay, gaps));
        }
    };
    let players: Vec<usize> = (0..game.num_players()).collect();
    let base = StationaryProfile::uniform(game);
    if let Some(pure) = pure_profiles(game, &base, &players, 4096) {
        for x in pure {
            let (pay, gaps) = equilibrium_gaps(game, spec, &x)?;
            consider(x, pay, gaps);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![base];
    for _ in 0..opts.restarts {
        starts.push(random_profile(game, &mut rng));
    }
    let used = starts.len();
    for x in starts {
        let (x, pay, gaps) =
            local_equilibrium(game, spec, x, threshold, opts.iterations, opts.budget)?;
        consider(x, pay, gaps);
    }
    let (x, pay, gaps) = certified.or(fallback).expect("at least one start");
    Ok(finish(x, pay, gaps, used))
}

/// Equilibria along an increasing λ-grid, each warm-started from the
/// previous point. The spec's λ is replaced by each grid value.
pub fn trace_equilibria(
    game: &StochasticGame,
    spec: &ModifiedSpec,
    grid: &[f64],
    opts: &SearchOptions,
) -> Result<Vec<EquilibriumResult>> {
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid("λ-grid must be strictly increasing".into()));
    }
    let mut out: Vec<EquilibriumResult> = Vec::with_capacity(grid.len());
    for &l in grid {
        let sp = spec.with_lambda(l);
        let warm = out.last().map(|r| r.profile.clone());
        out.push(search_equilibrium(game, &sp, opts, warm.as_ref())?);
    }
    Ok(out)
}

/// Outcome of a heuristic stationary min-max or max-min search.
#[derive(Debug, Clone, PartialEq)]
pub struct StatValue {
    pub value: f64,
    /// For min-max: the minimizing opponents with the player's best reply.
    /// For max-min: the maximizing strategy with a minimizing pure reply.
    pub profile: StationaryProfile,
    pub evaluations: usize,
    /// Always set: the outer optimization is a heuristic search.
    pub heuristic: bool,
}

/// Budget for the stationary-restricted searches.
#[derive(Debug, Clone, Copy)]
pub struct StatOptions {
    pub budget: usize,
    /// Pure seeds that are refined by pattern search.
    pub refine_seeds: usize,
    pub pure_limit: usize,
}

impl Default for StatOptions {
    fn default() -> Self {
        Self {
            budget: 20_000,
            refine_seeds: 3,
            pure_limit: 10_000,
        }
    }
}

/// `min_{x⁻ⁱ stationary} max_{xⁱ}` modified payoff of player `i`. The inner
/// max is the exact LP; the outer min is a pattern search seeded with all
/// pure opponent profiles and the opponents' discounted min-max strategy.
pub fn modified_minmax_stat(
    game: &StochasticGame,
    spec: &ModifiedSpec,
    i: usize,
    opts: &StatOptions,
) -> Result<StatValue> {
    spec.check(game)?;
    let opponents: Vec<usize> = (0..game.num_players()).filter(|&j| j != i).collect();
    let base = StationaryProfile::uniform(game);
    let br = |y: &StationaryProfile| modified_best_response(game, spec, i, y).map(|b| b.value);
    let pure = pure_profiles(game, &base, &opponents, opts.pure_limit)
        .ok_or_else(|| Error::Invalid("too many pure opponent profiles".into()))?;
    let mut scored: Vec<(f64, StationaryProfile)> = Vec::with_capacity(pure.len() + 2);
    for y in pure {
        scored.push((br(&y)?, y));
    }
    let shapley = discounted_minmax(game, i, spec.lambda_for(i), 1e-10 * game.scale())?;
    let mut seed = shapley.profile();
    seed.0[i] = base.0[i].clone();
    scored.push((br(&seed)?, seed.clone()));
    let mut evals = scored.len();
    // stable sort keeps enumeration order on ties
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let blocks = free_blocks(game, &opponents);
    let mut best = scored[0].clone();
    let mut seeds: Vec<StationaryProfile> = scored
        .iter()
        .take(opts.refine_seeds)
        .map(|s| s.1.clone())
        .collect();
    seeds.push(seed);
    seeds.push(base.clone());
    for s in seeds {
        if evals >= opts.budget {
            break;
        }
        let (y, fy, used) = pattern_search(s, &blocks, 0.25, 1e-10, opts.budget - evals, br)?;
        evals += used;
        if fy < best.0 {
            best = (fy, y);
        }
    }
    let reply = modified_best_response(game, spec, i, &best.1)?;
    Ok(StatValue {
        value: best.0,
        profile: best.1.with_player(i, reply.strategy),
        evaluations: evals,
        heuristic: true,
    })
}

/// `max_{xⁱ stationary} min_{x⁻ⁱ pure stationary}` modified payoff of
/// player `i`. Pure replies suffice for the inner minimum.
pub fn modified_maxmin_stat(
    game: &StochasticGame,
    spec: &ModifiedSpec,
    i: usize,
    opts: &StatOptions,
) -> Result<StatValue> {
    spec.check(game)?;
    let opponents: Vec<usize> = (0..game.num_players()).filter(|&j| j != i).collect();
    let base = StationaryProfile::uniform(game);
    let replies = pure_profiles(game, &base, &opponents, opts.pure_limit)
        .ok_or_else(|| Error::Invalid("too many pure opponent profiles".into()))?;
    let worst = |x: &StationaryProfile| -> Result<(f64, usize)> {
        let mut best = (f64::INFINITY, 0);
        for (k, y) in replies.iter().enumerate() {
            let mut z = y.clone();
            z.0[i] = x.0[i].clone();
            let v = modified::modified_payoff_profile(game, spec, &z)?[i];
            if v < best.0 {
                best = (v, k);
            }
        }
        Ok(best)
    };
    let neg = |x: &StationaryProfile| worst(x).map(|w| -w.0);
    let mine = [i];
    let mut seeds = pure_profiles(game, &base, &mine, opts.pure_limit).unwrap_or_default();
    seeds.push(base.clone());
    let maxmin = discounted_maxmin(game, i, spec.lambda_for(i), 1e-10 * game.scale())?;
    seeds.push(base.with_player(i, maxmin.strategy.clone()));
    let mut scored: Vec<(f64, StationaryProfile)> = Vec::new();
    for s in seeds {
        scored.push((neg(&s)?, s));
    }
    let mut evals = scored.len();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let blocks = free_blocks(game, &mine);
    let mut best = scored[0].clone();
    let mut starts: Vec<StationaryProfile> = scored
        .iter()
        .take(opts.refine_seeds)
        .map(|s| s.1.clone())
        .collect();
    starts.push(base.clone());
    starts.push(base.with_player(i, maxmin.strategy));
    for s in starts {
        if evals >= opts.budget {
            break;
        }
        let (y, fy, used) = pattern_search(s, &blocks, 0.25, 1e-12, opts.budget - evals, neg)?;
        evals += used;
        if fy < best.0 {
            best = (fy, y);
        }
    }
    let (x, fx) = line_refine(best.1.clone(), &blocks, neg)?;
    if fx < best.0 {
        best = (fx, x);
    }
    let (value, k) = worst(&best.1)?;
    let mut profile = replies[k].clone();
    profile.0[i] = best.1 .0[i].clone();
    Ok(StatValue {
        value,
        profile,
        evaluations: evals,
        heuristic: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::modified::Partition;

    fn big_match_spec(lambda: f64) -> ModifiedSpec {
        let g = fixtures::big_match();
        ModifiedSpec::shared(
            &g,
            0,
            lambda,
            Partition::singletons(3),
            &[vec![0.5, 0.0, 1.0], vec![0.5, 1.0, 0.0]],
        )
        .unwrap()
    }

    #[test]
    fn big_match_discounted_value_is_half() {
        let g = fixtures::big_match();
        for lambda in [0.5, 0.9, 0.99] {
            let r = discounted_maxmin(&g, 0, lambda, 1e-10).unwrap();
            assert!((r.values[0] - 0.5).abs() < 1e-9, "{:?}", r.values);
            assert_eq!(r.values[1], 0.0);
            assert!((r.values[2] - 1.0).abs() < 1e-12);
            let x = (1.0 - lambda) / lambda;
            assert!((r.strategy.at(0)[0] - x).abs() < 1e-7);
            // player 2 mixes evenly (uniquely so once λ > 1/2)
            if lambda > 0.5 {
                assert!((r.profile().player(1).at(0)[0] - 0.5).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn single_player_value_is_mdp_optimum() {
        let g = fixtures::example1(0.5, 1.0);
        let lambda: f64 = 0.6;
        let r = discounted_minmax(&g, 0, lambda, 1e-12).unwrap();
        let w = lambda * 0.5 / (1.0 - lambda * 0.5);
        assert!((r.values[1] - 2.0 * w).abs() < 1e-10);
    }

    #[test]
    fn example2_uniform_value() {
        let g = fixtures::example2();
        let u = uniform_value(&g, 0, ValueKind::MaxMin, &default_grid()).unwrap();
        assert!((u.limits[0] - 3.0).abs() < 1e-2, "{:?}", u.limits);
        assert!(!u.fallback[0]);
        let c = uniform_value(
            &fixtures::constant(0.7, 2),
            1,
            ValueKind::MinMax,
            &default_grid(),
        )
        .unwrap();
        assert!((c.limits[0] - 0.7).abs() < 1e-9);
    }

    #[test]
    fn example1_best_response_depends_on_start() {
        let (lambda, p) = (0.6, 0.5);
        let g = fixtures::example1(p, fixtures::example1_y(lambda, p));
        let part = Partition::new(4, vec![vec![0, 1], vec![2], vec![3]]).unwrap();
        let cut = [vec![0.0, 2.0, 3.0]];
        let from = |s0| {
            let spec = ModifiedSpec::shared(&g, s0, lambda, part.clone(), &cut).unwrap();
            let br = modified_best_response(&g, &spec, 0, &StationaryProfile::uniform(&g)).unwrap();
            assert!((br.value - br.achieved).abs() < 1e-9);
            br.strategy.at(1).to_vec()
        };
        assert_eq!(from(1), vec![1.0, 0.0]);
        assert_eq!(from(0), vec![0.0, 1.0]);
    }

    #[test]
    fn big_match_stationary_values() {
        let g = fixtures::big_match();
        let spec = big_match_spec(0.9);
        let mm = modified_maxmin_stat(&g, &spec, 0, &StatOptions::default()).unwrap();
        assert!((mm.value - 1.0 / 3.0).abs() < 1e-3, "{}", mm.value);
        let p = mm.profile.player(0).at(0)[0];
        let alpha = 0.1 / (1.0 - 0.9 * (1.0 - p));
        assert!((alpha - 2.0 / 3.0).abs() < 1e-2, "{alpha}");
        let mx = modified_minmax_stat(&g, &spec, 0, &StatOptions::default()).unwrap();
        assert!((mx.value - 0.5).abs() < 1e-3, "{}", mx.value);
    }

    #[test]
    fn pure_profile_enumeration() {
        let g = fixtures::chain3();
        let base = StationaryProfile::uniform(&g);
        let all = pure_profiles(&g, &base, &[0, 1], 100).unwrap();
        assert_eq!(all.len(), 16);
        assert!(pure_profiles(&g, &base, &[0, 1], 10).is_none());
    }

    #[test]
    fn example1_equilibrium_plays_b() {
        let (lambda, p) = (0.6, 0.5);
        let g = fixtures::example1(p, fixtures::example1_y(lambda, p));
        let part = Partition::new(4, vec![vec![0, 1], vec![2], vec![3]]).unwrap();
        let spec = ModifiedSpec::shared(&g, 0, lambda, part, &[vec![0.0, 2.0, 3.0]]).unwrap();
        let eq = stationary_equilibrium(&g, &spec, &SearchOptions::default()).unwrap();
        assert!(eq.certified);
        assert_eq!(eq.profile.player(0).at(1), &[0.0, 1.0]);
    }
}
