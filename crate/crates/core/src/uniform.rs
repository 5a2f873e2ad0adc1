//! Synthesis of a uniform ε-equilibrium candidate for strongly
//! controllable games, and an exact probe-based verifier.
//!
//! The pipeline works block by block on the sibling partition `D*`:
//! restrict the game to the block, trace stationary equilibria of the
//! block's modified game as λ → 1, and decide whether play stays in the
//! block (branch A1, cycle through recurrent classes) or leaves it
//! (branch A2, controlled exit). A dispatcher glues the block automata
//! together and adds punishment states for observable deviations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::automaton::AutomatonStrategy;
use crate::chain::{DeviationMdp, ProductChain, DEFAULT_CAP};
use crate::error::{Error, Result};
use crate::game::{profile_key, StationaryProfile, StochasticGame};
use crate::linalg;
use crate::modified::{CutoffVector, ModifiedSpec, Partition, PlayerSpec};
use crate::occupancy::{block_breakdown, occupation_stationary};
use crate::simulate::PlayRecord;
use crate::structure::{
    classify, reach_with_profile, strongly_controllable_witness, ClassificationReport, Control,
};
use crate::values::{
    default_grid, discounted_maxmin, discounted_minmax, puiseux_fit, trace_equilibria,
    uniform_minmax_all, EquilibriumResult, SearchOptions,
};

/// Default threshold on `1 − t₁(D)` separating the two branches.
pub const BRANCH_TOL: f64 = 1e-3;
/// Transition weights below this are ignored when finding recurrent classes.
pub const SUPPORT_TOL: f64 = 1e-6;

/// The game with every state outside `block` made absorbing, with a single
/// action per player and constant payoff `v̄₁(s)`.
#[derive(Debug, Clone)]
pub struct RestrictedGame {
    pub game: StochasticGame,
    pub block: Vec<usize>,
}

pub fn restrict(
    game: &StochasticGame,
    block: &[usize],
    vbar: &[Vec<f64>],
) -> Result<RestrictedGame> {
    if block.is_empty() {
        return Err(Error::Invalid("block must be nonempty".into()));
    }
    let mut def = game.to_def();
    for s in 0..game.num_states() {
        if block.contains(&s) {
            continue;
        }
        let name = game.state_name(s).to_string();
        let first: Vec<String> = (0..game.num_players())
            .map(|i| game.actions(s, i)[0].clone())
            .collect();
        let st = &mut def.states[s];
        for (k, acts) in st.actions.values_mut().enumerate() {
            *acts = vec![first[k].clone()];
        }
        let key = profile_key(&first);
        let pay: Vec<f64> = (0..game.num_players()).map(|i| vbar[i][s]).collect();
        def.payoffs
            .insert(name.clone(), [(key.clone(), pay)].into_iter().collect());
        def.transitions.insert(
            name.clone(),
            [(key, [(name, 1.0)].into_iter().collect())]
                .into_iter()
                .collect(),
        );
    }
    Ok(RestrictedGame {
        game: StochasticGame::from_def(&def)?,
        block: block.to_vec(),
    })
}

/// The state play is steered to in `block`: the exit state of a strongly
/// controllable block, or the first state of a closed one.
pub fn block_anchor(game: &StochasticGame, block: &[usize]) -> Result<(usize, Control)> {
    match strongly_controllable_witness(game, block) {
        Control::Closed => Ok((block[0], Control::Closed)),
        c @ Control::Controllable { state, .. } => Ok((state, c)),
        Control::Neither => Err(Error::Invalid(
            "block is neither closed nor strongly controllable".into(),
        )),
    }
}

/// Partition `{D} ∪ singletons`, cutoffs `v̄(s_D)` on `D` and `v̄(s)` on the
/// singletons, start at `s_D`.
pub fn step1_spec(
    game: &StochasticGame,
    block: &[usize],
    vbar: &[Vec<f64>],
) -> Result<ModifiedSpec> {
    let (s_d, _) = block_anchor(game, block)?;
    let n = game.num_states();
    let mut blocks = vec![block.to_vec()];
    blocks.extend((0..n).filter(|s| !block.contains(s)).map(|s| vec![s]));
    let partition = Partition::new(n, blocks)?;
    let per_player = (0..game.num_players())
        .map(|i| {
            let cut = partition
                .blocks()
                .iter()
                .map(|b| {
                    if b.contains(&s_d) {
                        vbar[i][s_d]
                    } else {
                        vbar[i][b[0]]
                    }
                })
                .collect();
            PlayerSpec {
                partition: partition.clone(),
                cutoffs: CutoffVector(cut),
                lambda: None,
            }
        })
        .collect();
    let spec = ModifiedSpec {
        s0: s_d,
        lambda: 0.5,
        per_player,
    };
    spec.check(game)?;
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Play stays in the block.
    A1,
    /// Play leaves the block.
    A2,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::A1 => "A1",
            Branch::A2 => "A2",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DichotomyResult {
    pub block: Vec<usize>,
    pub s_d: usize,
    pub grid: Vec<f64>,
    /// `t_λ(s_D, x_λ; D)` per grid point.
    pub times: Vec<f64>,
    /// `U^i_λ(s_D, x_λ; D)` per grid point and player.
    pub in_block: Vec<Vec<f64>>,
    /// Exit value `Σ_{s∉D} t(s) v̄(s) / (1 − t(D))` per grid point and
    /// player; `None` when the block is never left.
    pub exit_values: Vec<Option<Vec<f64>>>,
    pub t1: f64,
    pub branch: Branch,
    /// A1 payoff condition `lim U^i ≥ v̄^i(s_D) − tol`, per player.
    pub a1_condition: Vec<bool>,
    /// A2 exit condition `lim exit value ≥ v̄^i(s_D) − tol`, per player.
    pub a2_condition: Vec<bool>,
    /// `|x_λ − x_λ'|∞ < 1e-3` between the last two grid points.
    pub stabilized: bool,
    pub trace: Vec<EquilibriumResult>,
}

impl DichotomyResult {
    pub fn x1(&self) -> &StationaryProfile {
        &self.trace.last().expect("nonempty trace").profile
    }

    pub fn to_json(&self, game: &StochasticGame) -> Value {
        json!({
            "block": self.block.iter().map(|&s| game.state_name(s)).collect::<Vec<_>>(),
            "s_D": game.state_name(self.s_d),
            "branch": self.branch.as_str(),
            "t1": self.t1,
            "per_lambda": self.grid.iter().enumerate().map(|(k, l)| json!({
                "lambda": l,
                "t": self.times[k],
                "in_block": self.in_block[k],
                "exit_value": self.exit_values[k],
                "certified": self.trace[k].certified,
                "max_gap": self.trace[k].max_gap(),
            })).collect::<Vec<_>>(),
            "a1_condition": self.a1_condition,
            "a2_condition": self.a2_condition,
            "stabilized": self.stabilized,
        })
    }
}

fn extrapolate(grid: &[f64], ys: &[f64], scale: f64) -> f64 {
    let last = *ys.last().expect("nonempty");
    if grid.len() < 3 {
        return last;
    }
    match puiseux_fit(grid, ys) {
        Ok((c0, resid)) if c0.is_finite() && resid <= 1e-2 * scale => c0,
        _ => last,
    }
}

/// Traces equilibria of the block's modified game along `grid` and decides
/// the branch: A1 iff the extrapolated time in the block is at least
/// `1 − branch_tol`.
pub fn dichotomy(
    restricted: &RestrictedGame,
    spec: &ModifiedSpec,
    grid: &[f64],
    vbar: &[Vec<f64>],
    opts: &SearchOptions,
    branch_tol: f64,
) -> Result<DichotomyResult> {
    let game = &restricted.game;
    let block = &restricted.block;
    let s_d = spec.s0;
    let trace = trace_equilibria(game, spec, grid, opts)?;
    let n = game.num_states();
    let np = game.num_players();
    let mut labels = vec![1usize; n];
    for &s in block {
        labels[s] = 0;
    }
    let two = Partition::from_labels(&labels);
    let inside = two.block_of(block[0]);
    let (mut times, mut in_block, mut exit_values) = (Vec::new(), Vec::new(), Vec::new());
    for r in &trace {
        let occ = occupation_stationary(game, s_d, r.lambda, &r.profile)?;
        let bd = block_breakdown(game, &occ, &two)?;
        let t = bd.times[inside];
        times.push(t);
        in_block.push(bd.payoffs[inside].clone());
        let out = 1.0 - t;
        exit_values.push((out > 1e-12).then(|| -> Vec<f64> {
            (0..np)
                .map(|i| {
                    (0..n)
                        .filter(|s| !block.contains(s))
                        .map(|s| occ.state_time(s) * vbar[i][s])
                        .sum::<f64>()
                        / out
                })
                .collect()
        }));
    }
    let scale = game.scale();
    let t1 = extrapolate(grid, &times, 1.0).clamp(0.0, 1.0);
    let branch = if t1 >= 1.0 - branch_tol {
        Branch::A1
    } else {
        Branch::A2
    };
    let tol = 1e-2 * scale;
    let a1_condition = (0..np)
        .map(|i| {
            let ys: Vec<f64> = in_block.iter().map(|u| u[i]).collect();
            extrapolate(grid, &ys, scale) >= vbar[i][s_d] - tol
        })
        .collect();
    let a2_condition = (0..np)
        .map(|i| match exit_values.last().cloned().flatten() {
            Some(v) => v[i] >= vbar[i][s_d] - tol,
            None => false,
        })
        .collect();
    let stabilized = trace.len() < 2 || {
        let k = trace.len();
        trace[k - 1].profile.distance(&trace[k - 2].profile) < 1e-3
    };
    Ok(DichotomyResult {
        block: block.clone(),
        s_d,
        grid: grid.to_vec(),
        times,
        in_block,
        exit_values,
        t1,
        branch,
        a1_condition,
        a2_condition,
        stabilized,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrreducibleSet {
    pub states: Vec<usize>,
    /// Probability that play from the anchor is eventually absorbed here.
    pub beta: f64,
    /// Long-run average payoff inside the class.
    pub payoff: Vec<f64>,
}

fn support_graph(kernel: &[Vec<f64>]) -> Vec<Vec<usize>> {
    kernel
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|(_, &q)| q > SUPPORT_TOL)
                .map(|(t, _)| t)
                .collect()
        })
        .collect()
}

fn reachable(graph: &[Vec<usize>], s: usize) -> Vec<bool> {
    let mut seen = vec![false; graph.len()];
    let mut stack = vec![s];
    seen[s] = true;
    while let Some(u) = stack.pop() {
        for &v in &graph[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

/// Recurrent classes of the chain induced by `x` (edges below
/// [`SUPPORT_TOL`] dropped), in order of their smallest state.
pub fn recurrent_classes(game: &StochasticGame, x: &StationaryProfile) -> Vec<Vec<usize>> {
    let graph = support_graph(&x.kernel(game));
    let n = graph.len();
    let reach: Vec<Vec<bool>> = (0..n).map(|s| reachable(&graph, s)).collect();
    let mut taken = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        if taken[s] || !(0..n).all(|t| !reach[s][t] || reach[t][s]) {
            continue;
        }
        let class: Vec<usize> = (0..n).filter(|&t| reach[s][t]).collect();
        for &t in &class {
            taken[t] = true;
        }
        out.push(class);
    }
    out
}

/// Average payoff of `x` on a recurrent class, from its stationary law.
pub fn class_payoff(
    game: &StochasticGame,
    x: &StationaryProfile,
    class: &[usize],
) -> Result<Vec<f64>> {
    let p = x.kernel(game);
    let k = class.len();
    // πᵀ(P − I) = 0 with the last equation replaced by Σπ = 1
    let mut a = vec![vec![0.0; k]; k];
    let mut b = vec![0.0; k];
    for r in 0..k {
        for c in 0..k {
            a[r][c] = p[class[c]][class[r]] - if r == c { 1.0 } else { 0.0 };
        }
    }
    a[k - 1] = vec![1.0; k];
    b[k - 1] = 1.0;
    let pi = linalg::solve(&a, &b)?;
    let stage = x.stage_payoffs(game);
    Ok((0..game.num_players())
        .map(|i| class.iter().zip(&pi).map(|(&s, w)| w * stage[s][i]).sum())
        .collect())
}

/// Probability of being absorbed in each of `classes` from `s`.
pub fn absorption_probabilities(
    game: &StochasticGame,
    x: &StationaryProfile,
    s: usize,
    classes: &[Vec<usize>],
) -> Result<Vec<f64>> {
    let p = x.kernel(game);
    let n = p.len();
    let all = recurrent_classes(game, x);
    let mut recurrent = vec![false; n];
    for c in all.iter().chain(classes) {
        for &t in c {
            recurrent[t] = true;
        }
    }
    let transient: Vec<usize> = (0..n).filter(|&t| !recurrent[t]).collect();
    let mut pos = vec![usize::MAX; n];
    for (k, &t) in transient.iter().enumerate() {
        pos[t] = k;
    }
    let m = transient.len();
    classes
        .iter()
        .map(|c| {
            if c.contains(&s) {
                return Ok(1.0);
            }
            if recurrent[s] {
                return Ok(0.0);
            }
            let mut a = vec![vec![0.0; m]; m];
            let mut b = vec![0.0; m];
            for (r, &u) in transient.iter().enumerate() {
                a[r][r] = 1.0;
                for (v, &q) in p[u].iter().enumerate() {
                    if pos[v] != usize::MAX {
                        a[r][pos[v]] -= q;
                    } else if c.contains(&v) {
                        b[r] += q;
                    }
                }
            }
            Ok(linalg::solve(&a, &b)?[pos[s]])
        })
        .collect()
}

/// Recurrent classes of `x₁` inside `block` with their absorption weights
/// from `s_d`.
pub fn irreducible_sets(
    game: &StochasticGame,
    block: &[usize],
    x1: &StationaryProfile,
    s_d: usize,
) -> Result<Vec<IrreducibleSet>> {
    let classes: Vec<Vec<usize>> = recurrent_classes(game, x1)
        .into_iter()
        .filter(|c| c.iter().all(|s| block.contains(s)))
        .collect();
    let betas = absorption_probabilities(game, x1, s_d, &classes)?;
    classes
        .into_iter()
        .zip(betas)
        .map(|(states, beta)| {
            let payoff = class_payoff(game, x1, &states)?;
            Ok(IrreducibleSet {
                states,
                beta,
                payoff,
            })
        })
        .collect()
}

fn pure_choice(game: &StochasticGame, s: usize, a: usize, player: usize) -> Vec<f64> {
    let mut v = vec![0.0; game.num_actions(s, player)];
    v[game.profile_action(s, a, player)] = 1.0;
    v
}

fn point_mass(len: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[k] = 1.0;
    v
}

/// True iff under `y` every state of `block` outside `target` stays in
/// `block` and can reach `target`, so `target` is reached almost surely.
fn surely_reaches(
    game: &StochasticGame,
    y: &StationaryProfile,
    block: &[usize],
    target: &[usize],
) -> bool {
    let graph: Vec<Vec<usize>> = y
        .kernel(game)
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|(_, &q)| q > 0.0)
                .map(|(t, _)| t)
                .collect()
        })
        .collect();
    block.iter().filter(|s| !target.contains(s)).all(|&s| {
        graph[s].iter().all(|t| block.contains(t)) && {
            let r = reachable(&graph, s);
            target.iter().any(|&t| r[t])
        }
    })
}

/// A perturbation of `x1` within `delta` that reaches `target` almost surely
/// from anywhere in `block`; falls back to the pure reach profile.
fn perturbation(
    game: &StochasticGame,
    block: &[usize],
    x1: &StationaryProfile,
    target: &[usize],
    delta: f64,
) -> Result<(StationaryProfile, bool)> {
    let (set, choice) = reach_with_profile(game, block, target);
    if !block.iter().all(|s| set.contains(s)) {
        return Err(Error::Invalid(
            "no valid perturbation: class not reachable inside the block".into(),
        ));
    }
    let build = |w: f64| {
        let mut y = x1.clone();
        for &s in block {
            if let Some(a) = choice[s] {
                for i in 0..game.num_players() {
                    let e = pure_choice(game, s, a, i);
                    y.0[i].0[s] = x1.0[i].0[s]
                        .iter()
                        .zip(&e)
                        .map(|(p, q)| (1.0 - w) * p + w * q)
                        .collect();
                }
            }
        }
        y
    };
    let y = build(delta);
    if surely_reaches(game, &y, block, target) {
        return Ok((y, true));
    }
    let y = build(1.0);
    if surely_reaches(game, &y, block, target) {
        return Ok((y, false));
    }
    Err(Error::Invalid("no valid perturbation found".into()))
}

/// A block-local plan: one automaton per player over a shared memory, and
/// the memories that hand over to punishing a player.
#[derive(Debug, Clone)]
pub struct LocalPlan {
    pub automata: Vec<AutomatonStrategy>,
    pub punish_at: Vec<Option<usize>>,
}

impl LocalPlan {
    pub fn num_memory(&self) -> usize {
        self.automata[0].num_memory()
    }
}

fn plan_from_tables(
    game: &StochasticGame,
    emit: &[Vec<Vec<Vec<f64>>>],
    labels: Vec<String>,
    punish_at: Vec<Option<usize>>,
    update: impl Fn(usize, usize, usize, usize) -> usize,
) -> LocalPlan {
    let automata = (0..game.num_players())
        .map(|i| {
            AutomatonStrategy::from_fn(
                game,
                i,
                emit.len(),
                0,
                |m, s| emit[m][i][s].clone(),
                &update,
            )
            .with_labels(labels.clone())
        })
        .collect();
    LocalPlan {
        automata,
        punish_at,
    }
}

/// `x` on `block`, uniform elsewhere (the profile may come from a restricted
/// game with fewer actions outside the block).
fn local_mix(
    game: &StochasticGame,
    x: &StationaryProfile,
    block: &[usize],
    i: usize,
    s: usize,
) -> Vec<f64> {
    if block.contains(&s) {
        x.0[i].at(s).to_vec()
    } else {
        let k = game.num_actions(s, i);
        vec![1.0 / k as f64; k]
    }
}

fn profile_emit(
    game: &StochasticGame,
    x: &StationaryProfile,
    block: &[usize],
) -> Vec<Vec<Vec<f64>>> {
    (0..game.num_players())
        .map(|i| {
            (0..game.num_states())
                .map(|s| local_mix(game, x, block, i, s))
                .collect()
        })
        .collect()
}

/// `σ_K`: for each class `C_l` with positive weight, travel to it by a
/// perturbation of `x₁`, play `x₁` for `⌈β(C_l)K⌉` stages, move on, cycle.
pub fn build_sigma_k(
    game: &StochasticGame,
    block: &[usize],
    classes: &[IrreducibleSet],
    x1: &StationaryProfile,
    delta: f64,
    k: usize,
) -> Result<LocalPlan> {
    let used: Vec<&IrreducibleSet> = classes.iter().filter(|c| c.beta > 1e-9).collect();
    if used.is_empty() {
        return Err(Error::Invalid(
            "no irreducible set with positive weight".into(),
        ));
    }
    let base = profile_emit(game, x1, block);
    if used.len() == 1 {
        return Ok(plan_from_tables(
            game,
            &[base],
            vec!["play".into()],
            vec![None],
            |_, _, _, _| 0,
        ));
    }
    let total: f64 = used.iter().map(|c| c.beta).sum();
    let lens: Vec<usize> = used
        .iter()
        .map(|c| ((c.beta / total) * k as f64).ceil().max(1.0) as usize)
        .collect();
    let l = used.len();
    // memory: travel_l for l < L, then play_l(j) for j in 1..len_l
    let mut offset = vec![l; l];
    for c in 1..l {
        offset[c] = offset[c - 1] + lens[c - 1] - 1;
    }
    let total_mem = offset[l - 1] + lens[l - 1] - 1;
    let mut emit = Vec::with_capacity(total_mem);
    let mut labels = Vec::with_capacity(total_mem);
    for (c, class) in used.iter().enumerate() {
        let (y, _) = perturbation(game, block, x1, &class.states, delta)?;
        let mut e = profile_emit(game, &y, block);
        for i in 0..game.num_players() {
            for &s in &class.states {
                e[i][s] = base[i][s].clone();
            }
        }
        emit.push(e);
        labels.push(format!("travel:{c}"));
    }
    for (c, &len) in lens.iter().enumerate() {
        for j in 1..len {
            emit.push(base.clone());
            labels.push(format!("play:{c}:{j}"));
        }
    }
    let members: Vec<Vec<usize>> = used.iter().map(|c| c.states.clone()).collect();
    let offsets = offset.clone();
    let after = move |c: usize, done: usize| {
        if done < lens[c] {
            offsets[c] + done - 1
        } else {
            (c + 1) % l
        }
    };
    let decode = move |m: usize| -> (usize, Option<usize>) {
        if m < l {
            return (m, None);
        }
        let c = (0..l)
            .rev()
            .find(|&c| m >= offset[c])
            .expect("memory in range");
        (c, Some(m - offset[c] + 1))
    };
    let n_mem = emit.len();
    Ok(plan_from_tables(
        game,
        &emit,
        labels,
        vec![None; n_mem],
        move |m, s, _, _| match decode(m) {
            (c, None) if members[c].contains(&s) => after(c, 1),
            (_, None) => m,
            (c, Some(j)) => after(c, j + 1),
        },
    ))
}

/// Exit-probability-driven mixing weight: the largest `η = 2^{-k} ≤ ½`
/// with `(1 − η·r)^{⌈1/η²⌉} ≤ δ`, where `r` is the exit probability of `ã`.
pub fn choose_eta(r: f64, delta: f64) -> Result<(f64, usize)> {
    if r <= 0.0 {
        return Err(Error::Invalid("exit action never leaves the block".into()));
    }
    for k in 1..=10 {
        let eta = 0.5f64.powi(k);
        let g = (1.0 / (eta * eta)).ceil() as usize;
        if (1.0 - eta * r).powi(g as i32) <= delta {
            return Ok((eta, g));
        }
    }
    Err(Error::Invalid("no η ≥ 2^-10 meets the exit bound".into()))
}

/// Exit distribution at `s_d` when `player` plays `action` and the others
/// follow `x`: (probability of leaving, expected `v̄` after leaving).
pub fn exit_law(
    game: &StochasticGame,
    block: &[usize],
    s_d: usize,
    player: usize,
    action: usize,
    x: &StationaryProfile,
    vbar: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    let mut alpha: Vec<Vec<f64>> = (0..game.num_players())
        .map(|i| x.0[i].at(s_d).to_vec())
        .collect();
    alpha[player] = point_mass(game.num_actions(s_d, player), action);
    let (_, dist) = game.mixed_extend(s_d, &alpha)?;
    let out: f64 = dist
        .iter()
        .enumerate()
        .filter(|(t, _)| !block.contains(t))
        .map(|(_, q)| q)
        .sum();
    let value = (0..game.num_players())
        .map(|i| {
            if out <= 0.0 {
                return f64::NAN;
            }
            dist.iter()
                .enumerate()
                .filter(|(t, _)| !block.contains(t))
                .map(|(t, q)| q * vbar[i][t])
                .sum::<f64>()
                / out
        })
        .collect();
    Ok((out, value))
}

/// Exit plan artifacts.
#[derive(Debug, Clone)]
pub struct ExitPlan {
    pub plan: LocalPlan,
    pub eta: f64,
    /// Visits to `s_D` before giving up.
    pub visits: usize,
    /// Per-visit exit probability `η·q(S∖D | s_D, ã, x^{-i}_{λ₀})`.
    pub q_exit: f64,
}

/// Reach `s_D` by a pure profile; there the exiting player mixes
/// `(1−η)â + ηã` while the others play `x`; after `⌈1/η²⌉` visits without
/// leaving, switch to punishing the exiting player.
pub fn build_exit_strategy(
    game: &StochasticGame,
    block: &[usize],
    witness: &Control,
    x: &StationaryProfile,
    eta: f64,
) -> Result<ExitPlan> {
    let Control::Controllable {
        player,
        state: s_d,
        action,
    } = *witness
    else {
        return Err(Error::Invalid(
            "exit strategy needs a strongly controllable block".into(),
        ));
    };
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Invalid("η must lie in (0, 1]".into()));
    }
    let visits = (1.0 / (eta * eta)).ceil() as usize;
    let (_, choice) = reach_with_profile(game, block, &[s_d]);
    let n_act = game.num_actions(s_d, player);
    let hat = (0..n_act).find(|&b| b != action).unwrap_or(action);
    let mut mix = vec![0.0; n_act];
    mix[hat] += 1.0 - eta;
    mix[action] += eta;
    let np = game.num_players();
    let counting: Vec<Vec<Vec<f64>>> = (0..np)
        .map(|i| {
            (0..game.num_states())
                .map(|s| {
                    if s == s_d {
                        if i == player {
                            mix.clone()
                        } else {
                            x.0[i].at(s).to_vec()
                        }
                    } else if let (true, Some(a)) = (block.contains(&s), choice[s]) {
                        pure_choice(game, s, a, i)
                    } else {
                        local_mix(game, x, block, i, s)
                    }
                })
                .collect()
        })
        .collect();
    let mut emit = vec![counting; visits];
    emit.push(profile_emit(game, x, block));
    let mut labels: Vec<String> = (0..visits).map(|c| format!("visit:{c}")).collect();
    labels.push(format!("punish:{player}"));
    let mut punish_at = vec![None; visits];
    punish_at.push(Some(player));
    let inside = block.to_vec();
    let plan = plan_from_tables(game, &emit, labels, punish_at, move |m, s, _, t| {
        if m == visits || s != s_d {
            return m;
        }
        if !inside.contains(&t) {
            return m;
        }
        if m + 1 >= visits {
            visits
        } else {
            m + 1
        }
    });
    let (r, _) = exit_law(
        game,
        block,
        s_d,
        player,
        action,
        x,
        &vec![vec![0.0; game.num_states()]; np],
    )?;
    Ok(ExitPlan {
        plan,
        eta,
        visits,
        q_exit: eta * r,
    })
}

#[derive(Debug, Clone)]
pub enum BlockArtifact {
    Stay {
        k0: usize,
        classes: Vec<IrreducibleSet>,
        target: Vec<f64>,
        k0_met: bool,
    },
    Exit {
        eta: f64,
        visits: usize,
        q_exit: f64,
        lambda0: f64,
        exit_value: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct BlockPlan {
    pub block: Vec<usize>,
    pub control: Control,
    pub s_d: usize,
    pub dichotomy: DichotomyResult,
    pub artifact: BlockArtifact,
    pub local: LocalPlan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Mem {
    Start,
    Local(usize, usize),
    Punish(usize),
}

/// The assembled profile: one automaton per player over a shared memory of
/// (block, block-local memory) pairs, a start memory and one punishment
/// memory per player.
#[derive(Debug, Clone)]
pub struct SigmaStar {
    pub partition: Partition,
    pub plans: Vec<BlockPlan>,
    pub automata: Vec<AutomatonStrategy>,
    /// Stationary punishment profile against each player.
    pub punishments: Vec<StationaryProfile>,
    pub total_memory: usize,
}

impl SigmaStar {
    fn layout(&self) -> Vec<Mem> {
        layout(&self.plans, self.punishments.len())
    }

    /// Human-readable name of a global memory index.
    pub fn describe(&self, m: usize) -> String {
        match self.layout()[m] {
            Mem::Start => "start".into(),
            Mem::Local(k, l) => format!("block{k}:{}", self.plans[k].local.automata[0].label(l)),
            Mem::Punish(j) => format!("punish:{j}"),
        }
    }

    /// Empirical action frequencies of the non-exiting players at each exit
    /// state. This is the statistical test's input; nothing acts on it.
    pub fn exit_frequencies(&self, game: &StochasticGame, play: &PlayRecord) -> Vec<Value> {
        let mut out = Vec::new();
        for plan in &self.plans {
            let Control::Controllable { player, state, .. } = plan.control else {
                continue;
            };
            if !matches!(plan.artifact, BlockArtifact::Exit { .. }) {
                continue;
            }
            let mut counts: Vec<Vec<f64>> = (0..game.num_players())
                .map(|i| vec![0.0; game.num_actions(state, i)])
                .collect();
            let mut visits = 0usize;
            for n in 0..play.horizon() {
                if play.states[n] == state {
                    visits += 1;
                    for (i, c) in counts.iter_mut().enumerate() {
                        c[game.profile_action(state, play.actions[n], i)] += 1.0;
                    }
                }
            }
            for c in counts.iter_mut() {
                for x in c.iter_mut() {
                    *x /= visits.max(1) as f64;
                }
            }
            out.push(json!({
                "state": game.state_name(state),
                "exiting_player": game.players()[player],
                "visits": visits,
                "frequencies": counts,
            }));
        }
        out
    }

    pub fn to_json(&self, game: &StochasticGame) -> Value {
        json!({
            "total_memory": self.total_memory,
            "blocks": self.plans.iter().map(|p| {
                let artifact = match &p.artifact {
                    BlockArtifact::Stay { k0, classes, target, k0_met } => json!({
                        "kind": "stay",
                        "K0": k0,
                        "K0_met": k0_met,
                        "target_payoff": target,
                        "classes": classes.iter().map(|c| json!({
                            "states": c.states.iter().map(|&s| game.state_name(s)).collect::<Vec<_>>(),
                            "beta": c.beta,
                            "payoff": c.payoff,
                        })).collect::<Vec<_>>(),
                    }),
                    BlockArtifact::Exit { eta, visits, q_exit, lambda0, exit_value } => json!({
                        "kind": "exit",
                        "eta": eta,
                        "visits": visits,
                        "q_exit": q_exit,
                        "lambda0": lambda0,
                        "exit_value": exit_value,
                    }),
                };
                json!({
                    "block": p.block.iter().map(|&s| game.state_name(s)).collect::<Vec<_>>(),
                    "control": p.control.to_json(game),
                    "memory": p.local.num_memory(),
                    "dichotomy": p.dichotomy.to_json(game),
                    "artifact": artifact,
                })
            }).collect::<Vec<_>>(),
        })
    }
}

fn layout(plans: &[BlockPlan], players: usize) -> Vec<Mem> {
    let mut mems = vec![Mem::Start];
    for (k, p) in plans.iter().enumerate() {
        mems.extend((0..p.local.num_memory()).map(|m| Mem::Local(k, m)));
    }
    mems.extend((0..players).map(Mem::Punish));
    mems
}

/// Glues block plans into `σ*`. On entering a new block the block's plan
/// starts from its initial memory; an action outside the current support
/// switches everybody to punishing the first such player for good.
pub fn assemble_sigma_star(
    game: &StochasticGame,
    partition: &Partition,
    plans: Vec<BlockPlan>,
    punishments: Vec<StationaryProfile>,
) -> Result<SigmaStar> {
    if plans.len() != partition.len() {
        return Err(Error::Invalid("every block needs a plan".into()));
    }
    for (k, p) in plans.iter().enumerate() {
        if p.block != partition.block(k) {
            return Err(Error::Invalid(format!("plan {k} does not match block {k}")));
        }
    }
    let np = game.num_players();
    let mems = layout(&plans, np);
    let mut index = std::collections::HashMap::new();
    for (g, m) in mems.iter().enumerate() {
        index.insert(*m, g);
    }
    let resolve = |m: Mem, s: usize| match m {
        Mem::Start => Mem::Local(partition.block_of(s), 0),
        other => other,
    };
    let emit_of = |m: Mem, i: usize, s: usize| -> Vec<f64> {
        match resolve(m, s) {
            Mem::Local(k, l) => plans[k].local.automata[i].emit(l, s).to_vec(),
            Mem::Punish(j) => punishments[j].0[i].at(s).to_vec(),
            Mem::Start => unreachable!(),
        }
    };
    let step = |m: Mem, s: usize, a: usize, t: usize| -> Mem {
        let m = resolve(m, s);
        let Mem::Local(k, l) = m else { return m };
        for j in 0..np {
            let d = plans[k].local.automata[j].emit(l, s);
            if d[game.profile_action(s, a, j)] == 0.0 {
                return Mem::Punish(j);
            }
        }
        let kt = partition.block_of(t);
        if kt != k {
            return Mem::Local(kt, 0);
        }
        let l2 = plans[k].local.automata[0].next(l, s, a, t);
        match plans[k].local.punish_at[l2] {
            Some(j) => Mem::Punish(j),
            None => Mem::Local(k, l2),
        }
    };
    let labels: Vec<String> = mems
        .iter()
        .map(|m| match *m {
            Mem::Start => "start".to_string(),
            Mem::Local(k, l) => format!("block{k}:{}", plans[k].local.automata[0].label(l)),
            Mem::Punish(j) => format!("punish:{j}"),
        })
        .collect();
    let automata = (0..np)
        .map(|i| {
            AutomatonStrategy::from_fn(
                game,
                i,
                mems.len(),
                0,
                |g, s| emit_of(mems[g], i, s),
                |g, s, a, t| index[&step(mems[g], s, a, t)],
            )
            .with_labels(labels.clone())
        })
        .collect();
    let total_memory = mems.len();
    Ok(SigmaStar {
        partition: partition.clone(),
        plans,
        automata,
        punishments,
        total_memory,
    })
}

/// Tuning of the synthesis.
#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub grid: Vec<f64>,
    pub search: SearchOptions,
    pub branch_tol: f64,
    /// Grouping tolerance relative to `R`.
    pub group_tol: f64,
    /// Largest `K` tried when doubling.
    pub max_k: usize,
    pub cap: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            grid: default_grid(),
            search: SearchOptions::default(),
            branch_tol: BRANCH_TOL,
            group_tol: 1e-4,
            max_k: 1024,
            cap: DEFAULT_CAP,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub eps: f64,
    /// `v̄[i][s]`: uniform min-max values.
    pub vbar: Vec<Vec<f64>>,
    pub classification: ClassificationReport,
    /// `None` when the game is not strongly controllable.
    pub sigma: Option<SigmaStar>,
}

impl PipelineResult {
    pub fn to_json(&self, game: &StochasticGame) -> Value {
        json!({
            "eps": self.eps,
            "uniform_minmax": self.vbar,
            "classification": self.classification.to_json(game),
            "sigma_star": self.sigma.as_ref().map(|s| s.to_json(game)),
        })
    }
}

/// Long-run average of `σ_K` from `s_d` (by a long finite horizon) and its
/// discounted payoff close to 1.
fn sigma_k_payoffs(
    game: &StochasticGame,
    plan: &LocalPlan,
    s_d: usize,
    cap: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let chain = ProductChain::build(game, &plan.automata, s_d, cap)?;
    let avg = chain.n_stage(&[20_000]).remove(0);
    let disc = chain.discounted(0.9995)?;
    Ok((avg, disc))
}

fn plan_block(
    game: &StochasticGame,
    block: &[usize],
    vbar: &[Vec<f64>],
    eps: f64,
    opts: &PipelineOptions,
) -> Result<BlockPlan> {
    let (s_d, control) = block_anchor(game, block)?;
    let restricted = restrict(game, block, vbar)?;
    let spec = step1_spec(&restricted.game, block, vbar)?;
    let dich = dichotomy(
        &restricted,
        &spec,
        &opts.grid,
        vbar,
        &opts.search,
        opts.branch_tol,
    )?;
    let scale = game.scale();
    let (artifact, local) = match dich.branch {
        Branch::A1 => {
            let x1 = dich.x1().clone();
            let classes = irreducible_sets(&restricted.game, block, &x1, s_d)?;
            let np = game.num_players();
            let target: Vec<f64> = (0..np)
                .map(|i| classes.iter().map(|c| c.beta * c.payoff[i]).sum())
                .collect();
            let mut k = 8;
            let (plan, k0, met) = loop {
                let plan = build_sigma_k(game, block, &classes, &x1, eps, k)?;
                let (avg, disc) = sigma_k_payoffs(&restricted.game, &plan, s_d, opts.cap)?;
                let ok = (0..np).all(|i| {
                    (avg[i] - target[i]).abs() <= eps * scale
                        && (disc[i] - target[i]).abs() <= eps * scale
                });
                if ok || k >= opts.max_k || classes.iter().filter(|c| c.beta > 1e-9).count() < 2 {
                    break (plan, k, ok);
                }
                k *= 2;
            };
            (
                BlockArtifact::Stay {
                    k0,
                    classes,
                    target,
                    k0_met: met,
                },
                plan,
            )
        }
        Branch::A2 => {
            let Control::Controllable { player, action, .. } = control else {
                return Err(Error::Invalid("a closed block cannot be left".into()));
            };
            let delta = eps / 4.0;
            let mut chosen = None;
            for r in dich.trace.iter().rev() {
                let (out, value) = exit_law(
                    &restricted.game,
                    block,
                    s_d,
                    player,
                    action,
                    &r.profile,
                    vbar,
                )?;
                if out > 0.0
                    && (0..game.num_players()).all(|i| value[i] >= vbar[i][s_d] - delta * scale)
                {
                    chosen = Some((r, out, value));
                    break;
                }
            }
            let Some((r, out, value)) = chosen else {
                return Err(Error::Invalid(
                    "no λ₀ on the grid satisfies the exit-value inequality".into(),
                ));
            };
            let (eta, _) = choose_eta(out, delta)?;
            let exit = build_exit_strategy(game, block, &control, &r.profile, eta)?;
            (
                BlockArtifact::Exit {
                    eta,
                    visits: exit.visits,
                    q_exit: exit.q_exit,
                    lambda0: r.lambda,
                    exit_value: value,
                },
                exit.plan,
            )
        }
    };
    Ok(BlockPlan {
        block: block.to_vec(),
        control,
        s_d,
        dichotomy: dich,
        artifact,
        local,
    })
}

/// Stationary punishment against every player: the others play their part
/// of the min-max profile, the punished player its max-min strategy.
pub fn punishment_profiles(game: &StochasticGame, lambda: f64) -> Result<Vec<StationaryProfile>> {
    let tol = 1e-9 * game.scale();
    (0..game.num_players())
        .map(|j| {
            let mut x = discounted_minmax(game, j, lambda, tol)?.profile();
            x.0[j] = discounted_maxmin(game, j, lambda, tol)?.strategy;
            Ok(x)
        })
        .collect()
}

/// Runs the whole synthesis. Stops after classification when some block is
/// neither closed nor strongly controllable.
pub fn uniform_pipeline(
    game: &StochasticGame,
    eps: f64,
    opts: &PipelineOptions,
) -> Result<PipelineResult> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Invalid("ε must lie in (0, 1)".into()));
    }
    let vbar = uniform_minmax_all(game, &opts.grid)?;
    let classification = classify(game, &vbar, opts.group_tol * game.scale());
    if !classification.strongly_controllable {
        return Ok(PipelineResult {
            eps,
            vbar,
            classification,
            sigma: None,
        });
    }
    let partition = classification.sibling_partition.clone();
    let plans = partition
        .blocks()
        .iter()
        .map(|b| plan_block(game, b, &vbar, eps, opts))
        .collect::<Result<Vec<_>>>()?;
    let lambda_p = *opts.grid.last().expect("nonempty grid");
    let punish = punishment_profiles(game, lambda_p)?;
    let sigma = assemble_sigma_star(game, &partition, plans, punish)?;
    Ok(PipelineResult {
        eps,
        vbar,
        classification,
        sigma: Some(sigma),
    })
}

/// Probe settings for [`verify_uniform_eq`].
#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub horizons: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub random_deviations: usize,
    pub seed: u64,
    pub cap: usize,
    /// Initial states to check; all states when `None`.
    pub states: Option<Vec<usize>>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            horizons: vec![1000, 10_000],
            lambdas: vec![0.99, 0.999],
            random_deviations: 8,
            seed: 0,
            cap: DEFAULT_CAP,
            states: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationGains {
    pub best_response: f64,
    pub one_shot: f64,
    pub random: f64,
}

impl DeviationGains {
    pub fn max(&self) -> f64 {
        self.best_response.max(self.one_shot).max(self.random)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateCheck {
    pub s0: usize,
    /// `[horizon][player]`
    pub n_stage: Vec<Vec<f64>>,
    /// `[λ][player]`
    pub discounted: Vec<Vec<f64>>,
    pub floors: Vec<f64>,
    /// Smallest `payoff − floor` over horizons, per player.
    pub floor_margin: Vec<f64>,
    pub gains: Vec<DeviationGains>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformReport {
    pub eps: f64,
    pub threshold: f64,
    pub states: Vec<StateCheck>,
    pub max_gain: f64,
    pub pass: bool,
}

impl UniformReport {
    pub fn to_json(&self, game: &StochasticGame) -> Value {
        json!({
            "eps": self.eps,
            "gain_threshold": self.threshold,
            "max_gain": self.max_gain,
            "pass": self.pass,
            "states": self.states.iter().map(|c| json!({
                "s0": game.state_name(c.s0),
                "n_stage": c.n_stage,
                "discounted": c.discounted,
                "floors": c.floors,
                "floor_margin": c.floor_margin,
                "gains": c.gains.iter().map(|g| json!({
                    "best_response": g.best_response,
                    "one_shot": g.one_shot,
                    "random_automata": g.random,
                })).collect::<Vec<_>>(),
                "pass": c.pass,
            })).collect::<Vec<_>>(),
        })
    }

    pub fn summary(&self, game: &StochasticGame) -> String {
        let mut out = format!(
            "uniform equilibrium check at eps={}: {} (max gain {:.4e}, threshold {:.4e})\n",
            self.eps,
            if self.pass { "PASS" } else { "FAIL" },
            self.max_gain,
            self.threshold
        );
        for c in &self.states {
            out.push_str(&format!(
                "  {}: margins {:?} gains {:?} {}\n",
                game.state_name(c.s0),
                c.floor_margin,
                c.gains.iter().map(DeviationGains::max).collect::<Vec<_>>(),
                if c.pass { "ok" } else { "FAIL" }
            ));
        }
        out
    }
}

fn evaluate(
    game: &StochasticGame,
    automata: &[AutomatonStrategy],
    s0: usize,
    opts: &VerifyOptions,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let chain = ProductChain::build(game, automata, s0, opts.cap)?;
    let n = chain.n_stage(&opts.horizons);
    let d = opts
        .lambdas
        .iter()
        .map(|&l| chain.discounted(l))
        .collect::<Result<Vec<_>>>()?;
    Ok((n, d))
}

/// Follows `base` but plays `action` at the first visit to `state`.
fn one_shot(
    game: &StochasticGame,
    base: &AutomatonStrategy,
    state: usize,
    action: usize,
) -> AutomatonStrategy {
    let m = base.num_memory();
    let player = base.player();
    AutomatonStrategy::from_fn(
        game,
        player,
        2 * m,
        base.initial(),
        |g, s| {
            if g < m && s == state {
                point_mass(game.num_actions(s, player), action)
            } else {
                base.emit(g % m, s).to_vec()
            }
        },
        |g, s, a, t| {
            let next = base.next(g % m, s, a, t);
            if g >= m || s == state {
                next + m
            } else {
                next
            }
        },
    )
}

fn random_automaton(
    game: &StochasticGame,
    player: usize,
    rng: &mut ChaCha8Rng,
) -> AutomatonStrategy {
    let mem = rng.gen_range(1..=3);
    let n = game.num_states();
    let emits: Vec<Vec<Vec<f64>>> = (0..mem)
        .map(|_| {
            (0..n)
                .map(|s| {
                    let k = game.num_actions(s, player);
                    if rng.gen_bool(0.5) {
                        point_mass(k, rng.gen_range(0..k))
                    } else {
                        let w: Vec<f64> =
                            (0..k).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
                        let tot: f64 = w.iter().sum();
                        w.into_iter().map(|x| x / tot).collect()
                    }
                })
                .collect()
        })
        .collect();
    let table: Vec<usize> = (0..mem * n * n).map(|_| rng.gen_range(0..mem)).collect();
    AutomatonStrategy::from_fn(
        game,
        player,
        mem,
        0,
        |m, s| emits[m][s].clone(),
        |m, s, _, t| table[(m * n + s) * n + t],
    )
}

/// Exact probe-based check of `σ*`: payoff floors `v̄^i(s₀) − 3εR` over the
/// finite horizons, and deviation gains against the exact best response
/// (discounted and finite-horizon), every one-shot deviation and random
/// finite automata. Passes iff every gain is at most `εR` and every floor
/// holds.
pub fn verify_uniform_eq(
    game: &StochasticGame,
    sigma: &SigmaStar,
    vbar: &[Vec<f64>],
    eps: f64,
    opts: &VerifyOptions,
) -> Result<UniformReport> {
    let scale = game.scale();
    let threshold = eps * scale;
    let np = game.num_players();
    let states = opts
        .states
        .clone()
        .unwrap_or_else(|| (0..game.num_states()).collect());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut checks = Vec::new();
    for &s0 in &states {
        let (n_stage, discounted) = evaluate(game, &sigma.automata, s0, opts)?;
        let floors: Vec<f64> = (0..np).map(|i| vbar[i][s0] - 3.0 * eps * scale).collect();
        let floor_margin: Vec<f64> = (0..np)
            .map(|i| {
                n_stage
                    .iter()
                    .map(|u| u[i] - floors[i])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let mut gains = Vec::new();
        for j in 0..np {
            let base_gain = |dev_n: &[Vec<f64>], dev_d: &[Vec<f64>]| {
                let a = dev_n.iter().zip(&n_stage).map(|(d, b)| d[j] - b[j]);
                let b = dev_d.iter().zip(&discounted).map(|(d, b)| d[j] - b[j]);
                a.chain(b).fold(f64::NEG_INFINITY, f64::max)
            };
            let mdp = DeviationMdp::build(game, &sigma.automata, j, s0, opts.cap)?;
            let best_n = mdp.best_n_stage(&opts.horizons);
            let mut best_response = f64::NEG_INFINITY;
            for (h, v) in best_n.iter().enumerate() {
                best_response = best_response.max(v - n_stage[h][j]);
            }
            for (k, &l) in opts.lambdas.iter().enumerate() {
                best_response =
                    best_response.max(mdp.best_discounted(l, 1e-9 * scale) - discounted[k][j]);
            }
            let mut one = f64::NEG_INFINITY;
            for s in 0..game.num_states() {
                for a in 0..game.num_actions(s, j) {
                    let mut dev = sigma.automata.clone();
                    dev[j] = one_shot(game, &sigma.automata[j], s, a);
                    let (dn, dd) = evaluate(game, &dev, s0, opts)?;
                    one = one.max(base_gain(&dn, &dd));
                }
            }
            let mut random = f64::NEG_INFINITY;
            for _ in 0..opts.random_deviations {
                let mut dev = sigma.automata.clone();
                dev[j] = random_automaton(game, j, &mut rng);
                let (dn, dd) = evaluate(game, &dev, s0, opts)?;
                random = random.max(base_gain(&dn, &dd));
            }
            gains.push(DeviationGains {
                best_response,
                one_shot: one,
                random,
            });
        }
        let pass = floor_margin.iter().all(|m| *m >= 0.0)
            && gains.iter().all(|g| g.max() <= threshold + 1e-9);
        checks.push(StateCheck {
            s0,
            n_stage,
            discounted,
            floors,
            floor_margin,
            gains,
            pass,
        });
    }
    let max_gain = checks
        .iter()
        .flat_map(|c| c.gains.iter().map(DeviationGains::max))
        .fold(f64::NEG_INFINITY, f64::max);
    let pass = checks.iter().all(|c| c.pass);
    Ok(UniformReport {
        eps,
        threshold,
        states: checks,
        max_gain,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::game::{GameBuilder, StationaryStrategy};

    fn vbar_of(game: &StochasticGame) -> Vec<Vec<f64>> {
        uniform_minmax_all(game, &default_grid()).unwrap()
    }

    #[test]
    fn restrict_big_match() {
        let g = fixtures::big_match();
        let v = vbar_of(&g);
        let r = restrict(&g, &[0], &v).unwrap();
        assert_eq!(r.game.num_profiles(0), 4);
        assert!((r.game.payoff(1, 0)[0] - 0.0).abs() < 1e-9);
        assert!((r.game.payoff(2, 0)[0] - 1.0).abs() < 1e-9);
        let spec = step1_spec(&r.game, &[0], &v).unwrap();
        let c = &spec.per_player[0].cutoffs.0;
        assert!(
            (c[0] - 0.5).abs() < 1e-6 && c[1].abs() < 1e-6 && (c[2] - 1.0).abs() < 1e-6,
            "{c:?}"
        );
    }

    #[test]
    fn closed_block_is_a1() {
        let g = fixtures::example2();
        let v = vbar_of(&g);
        let r = restrict(&g, &[0, 1], &v).unwrap();
        let spec = step1_spec(&r.game, &[0, 1], &v).unwrap();
        assert!((spec.per_player[0].cutoffs.0[0] - 3.0).abs() < 1e-3);
        let grid = default_grid();
        let d = dichotomy(&r, &spec, &grid, &v, &SearchOptions::default(), BRANCH_TOL).unwrap();
        assert_eq!(d.branch, Branch::A1);
        assert!((d.t1 - 1.0).abs() < 1e-9);
        let sets = irreducible_sets(&r.game, &[0, 1], d.x1(), 0).unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].states, vec![0, 1]);
        assert!((sets[0].beta - 1.0).abs() < 1e-12);
        assert!((sets[0].payoff[0] - 3.0).abs() < 1e-9);
    }

    fn split_game() -> StochasticGame {
        // from s0 a coin sends play to s1 or s2, both self-looping
        GameBuilder::new(&["1"])
            .state("s0", &[&["a"]])
            .state("s1", &[&["a"]])
            .state("s2", &[&["a"]])
            .entry("s0", "a", &[0.0], &[("s1", 0.5), ("s2", 0.5)])
            .entry("s1", "a", &[1.0], &[("s1", 1.0)])
            .entry("s2", "a", &[0.0], &[("s2", 1.0)])
            .build()
            .unwrap()
    }

    #[test]
    fn two_classes_half_half() {
        let g = split_game();
        let x = StationaryProfile::uniform(&g);
        let sets = irreducible_sets(&g, &[0, 1, 2], &x, 0).unwrap();
        assert_eq!(sets.len(), 2);
        assert!((sets[0].beta - 0.5).abs() < 1e-12 && (sets[1].beta - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sigma_k_alternates_between_classes() {
        // two absorbing-under-x₁ states joined by a switch action
        let g = GameBuilder::new(&["1"])
            .state("p", &[&["stay", "move"]])
            .state("q", &[&["stay", "move"]])
            .entry("p", "stay", &[1.0], &[("p", 1.0)])
            .entry("p", "move", &[1.0], &[("q", 1.0)])
            .entry("q", "stay", &[0.0], &[("q", 1.0)])
            .entry("q", "move", &[0.0], &[("p", 1.0)])
            .build()
            .unwrap();
        let x1 = StationaryProfile(vec![StationaryStrategy::pure(&g, 0, &[0, 0])]);
        let classes = vec![
            IrreducibleSet {
                states: vec![0],
                beta: 0.7,
                payoff: vec![1.0],
            },
            IrreducibleSet {
                states: vec![1],
                beta: 0.3,
                payoff: vec![0.0],
            },
        ];
        let mut gaps = Vec::new();
        for k in [25, 50, 100] {
            let plan = build_sigma_k(&g, &[0, 1], &classes, &x1, 1.0, k).unwrap();
            let chain = ProductChain::build(&g, &plan.automata, 0, DEFAULT_CAP).unwrap();
            let avg = chain.n_stage(&[100_000])[0][0];
            gaps.push((avg - 0.7).abs());
            assert!((avg - 0.7).abs() <= 2.0 / k as f64, "K={k}: {avg}");
        }
        assert!(gaps[1] < gaps[0] && gaps[2] <= gaps[0] / 2.0, "{gaps:?}");
    }

    #[test]
    fn exit_probability_closed_form() {
        let g = fixtures::big_match();
        let w = strongly_controllable_witness(&g, &[0]);
        assert_eq!(
            w,
            Control::Controllable {
                player: 0,
                state: 0,
                action: 0
            }
        );
        let x = StationaryProfile::uniform(&g);
        let exit = build_exit_strategy(&g, &[0], &w, &x, 0.1).unwrap();
        assert_eq!(exit.visits, 100);
        let chain = ProductChain::build(&g, &exit.plan.automata, 0, DEFAULT_CAP).unwrap();
        let dist = chain.distribution_after(100);
        let out: f64 = (0..chain.len())
            .filter(|&k| chain.node_state(k) != 0)
            .map(|k| dist[k])
            .sum();
        let closed = 1.0 - 0.9f64.powi(100);
        assert!((out - closed).abs() < 1e-9, "{out} vs {closed}");
        let exit = build_exit_strategy(&g, &[0], &w, &x, 1.0).unwrap();
        assert_eq!(exit.visits, 1);
        let chain = ProductChain::build(&g, &exit.plan.automata, 0, DEFAULT_CAP).unwrap();
        let dist = chain.distribution_after(1);
        assert!((0..chain.len())
            .filter(|&k| chain.node_state(k) == 0)
            .all(|k| dist[k] == 0.0));
        assert!(build_exit_strategy(&g, &[0], &Control::Closed, &x, 0.1).is_err());
    }

    #[test]
    fn eta_choice() {
        let (eta, g) = choose_eta(1.0, 0.025).unwrap();
        assert_eq!((eta, g), (0.25, 16));
        assert!(choose_eta(0.0, 0.1).is_err());
    }

    #[test]
    fn example2_pipeline_passes() {
        let g = fixtures::example2();
        let res = uniform_pipeline(&g, 0.1, &PipelineOptions::default()).unwrap();
        let sigma = res.sigma.as_ref().unwrap();
        assert_eq!(sigma.plans.len(), 1);
        let rep = verify_uniform_eq(&g, sigma, &res.vbar, 0.1, &VerifyOptions::default()).unwrap();
        assert!(rep.pass, "{}", rep.summary(&g));
        assert!((rep.states[0].n_stage[1][0] - 3.0).abs() < 1e-3);
    }

    #[test]
    fn chain_pipeline_passes() {
        let g = fixtures::chain3();
        let res = uniform_pipeline(&g, 0.1, &PipelineOptions::default()).unwrap();
        let sigma = res.sigma.as_ref().unwrap();
        let kinds: Vec<bool> = sigma
            .plans
            .iter()
            .map(|p| matches!(p.artifact, BlockArtifact::Exit { .. }))
            .collect();
        assert_eq!(kinds, vec![true, true, false]);
        if let BlockArtifact::Exit { eta, visits, .. } = sigma.plans[0].artifact {
            assert_eq!((eta, visits), (0.25, 16));
        }
        let rep = verify_uniform_eq(&g, sigma, &res.vbar, 0.1, &VerifyOptions::default()).unwrap();
        assert!(rep.pass, "{}", rep.summary(&g));
    }

    #[test]
    fn dispatcher_restarts_on_entry() {
        let g = fixtures::chain3();
        let res = uniform_pipeline(&g, 0.1, &PipelineOptions::default()).unwrap();
        let sigma = res.sigma.unwrap();
        let x = &sigma.automata[0];
        // two different histories in s0 lead to the same memory on entering s1
        let go = g.encode_profile(0, &[0, 1]);
        let stay = g.encode_profile(0, &[0, 0]);
        let m1 = x.next(x.initial(), 0, go, 1);
        let m_mid = x.next(x.initial(), 0, stay, 0);
        let m2 = x.next(m_mid, 0, go, 1);
        assert_ne!(x.initial(), m_mid);
        assert_eq!(m1, m2);
        assert!(sigma.describe(m1).starts_with("block1:"));
    }
}
