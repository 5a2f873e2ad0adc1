//! Exact evaluation of automaton profiles on the product chain
//! (memory tuple × state), restricted to pairs reachable from the start.

use std::collections::HashMap;

use crate::automaton::AutomatonStrategy;
use crate::error::{Error, Result};
use crate::game::StochasticGame;
use crate::linalg;

/// Default bound on the number of reachable (memory, state) pairs.
pub const DEFAULT_CAP: usize = 1_000_000;

/// Largest chain solved by dense LU; bigger ones are iterated.
const DENSE_LIMIT: usize = 600;

type Key = (Vec<u32>, usize);

#[derive(Debug, Clone)]
struct Move {
    profile: usize,
    weight: f64,
    next: Vec<(usize, f64)>,
}

/// Reachable product chain of a full automaton profile.
#[derive(Debug, Clone)]
pub struct ProductChain {
    nodes: Vec<Key>,
    moves: Vec<Vec<Move>>,
    /// Aggregated one-step transitions per node.
    step: Vec<Vec<(usize, f64)>>,
    /// Expected stage payoff vector per node.
    reward: Vec<Vec<f64>>,
}

fn successor(
    automata: &[AutomatonStrategy],
    mem: &[u32],
    s: usize,
    a: usize,
    t: usize,
    skip: Option<usize>,
) -> Vec<u32> {
    automata
        .iter()
        .enumerate()
        .map(|(i, x)| {
            if Some(i) == skip {
                0
            } else {
                x.next(mem[i] as usize, s, a, t) as u32
            }
        })
        .collect()
}

fn intern(
    key: Key,
    nodes: &mut Vec<Key>,
    index: &mut HashMap<Key, usize>,
    cap: usize,
) -> Result<usize> {
    if let Some(&k) = index.get(&key) {
        return Ok(k);
    }
    if nodes.len() >= cap {
        return Err(Error::CapExceeded { cap });
    }
    let k = nodes.len();
    nodes.push(key.clone());
    index.insert(key, k);
    Ok(k)
}

impl ProductChain {
    pub fn build(
        game: &StochasticGame,
        automata: &[AutomatonStrategy],
        s0: usize,
        cap: usize,
    ) -> Result<Self> {
        if automata.len() != game.num_players() {
            return Err(Error::Invalid(format!(
                "expected {} automata, got {}",
                game.num_players(),
                automata.len()
            )));
        }
        let start: Vec<u32> = automata.iter().map(|x| x.initial() as u32).collect();
        let mut nodes = Vec::new();
        let mut index = HashMap::new();
        intern((start, s0), &mut nodes, &mut index, cap)?;
        let mut moves: Vec<Vec<Move>> = Vec::new();
        let mut k = 0;
        while k < nodes.len() {
            let (mem, s) = nodes[k].clone();
            let mixed: Vec<&[f64]> = automata
                .iter()
                .zip(&mem)
                .map(|(x, &m)| x.emit(m as usize, s))
                .collect();
            let weights = game.joint_weights(s, &mixed);
            let mut out = Vec::new();
            for (a, &w) in weights.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let mut next = Vec::new();
                for &(t, q) in game.transition(s, a) {
                    let m2 = successor(automata, &mem, s, a, t, None);
                    next.push((intern((m2, t), &mut nodes, &mut index, cap)?, q));
                }
                out.push(Move {
                    profile: a,
                    weight: w,
                    next,
                });
            }
            moves.push(out);
            k += 1;
        }
        let n_players = game.num_players();
        let mut step = Vec::with_capacity(nodes.len());
        let mut reward = Vec::with_capacity(nodes.len());
        for (k, mv) in moves.iter().enumerate() {
            let s = nodes[k].1;
            let mut acc: HashMap<usize, f64> = HashMap::new();
            let mut r = vec![0.0; n_players];
            for m in mv {
                for (x, u) in r.iter_mut().zip(game.payoff(s, m.profile)) {
                    *x += m.weight * u;
                }
                for &(t, q) in &m.next {
                    *acc.entry(t).or_default() += m.weight * q;
                }
            }
            let mut row: Vec<(usize, f64)> = acc.into_iter().collect();
            row.sort_by_key(|&(t, _)| t);
            step.push(row);
            reward.push(r);
        }
        Ok(Self {
            nodes,
            moves,
            step,
            reward,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_state(&self, k: usize) -> usize {
        self.nodes[k].1
    }

    pub fn node_memory(&self, k: usize) -> &[u32] {
        &self.nodes[k].0
    }

    /// Normalized discounted visit weight of every node, from node 0.
    pub fn visits(&self, lambda: f64) -> Result<Vec<f64>> {
        let n = self.len();
        if n <= DENSE_LIMIT {
            let mut p = vec![vec![0.0; n]; n];
            for (k, row) in self.step.iter().enumerate() {
                for &(t, q) in row {
                    p[k][t] += q;
                }
            }
            let mut e = vec![0.0; n];
            e[0] = 1.0;
            return linalg::discounted_visits(&p, &e, lambda);
        }
        // Jacobi sweeps on d = (1-λ)e + λ Pᵀ d; error shrinks by λ per sweep
        let mut d = vec![0.0; n];
        let mut mass = 1.0 - lambda;
        let mut layer = vec![0.0; n];
        layer[0] = 1.0 - lambda;
        let mut remaining = 1.0;
        while remaining > 1e-14 {
            let mut next = vec![0.0; n];
            for (k, &w) in layer.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                d[k] += w;
                for &(t, q) in &self.step[k] {
                    next[t] += lambda * w * q;
                }
            }
            layer = next;
            remaining -= mass;
            mass *= lambda;
        }
        Ok(d)
    }

    /// Occupation `t(s, a)` aggregated over memories.
    pub fn occupation(&self, game: &StochasticGame, lambda: f64) -> Result<Vec<Vec<f64>>> {
        let d = self.visits(lambda)?;
        let mut t: Vec<Vec<f64>> = (0..game.num_states())
            .map(|s| vec![0.0; game.num_profiles(s)])
            .collect();
        for (k, mv) in self.moves.iter().enumerate() {
            let s = self.nodes[k].1;
            for m in mv {
                t[s][m.profile] += d[k] * m.weight;
            }
        }
        Ok(t)
    }

    /// Exact expected average payoff over the first `h` stages, for each
    /// horizon in `horizons` (ascending).
    pub fn n_stage(&self, horizons: &[usize]) -> Vec<Vec<f64>> {
        let n_players = self.reward.first().map_or(0, Vec::len);
        let mut dist = vec![0.0; self.len()];
        dist[0] = 1.0;
        let mut total = vec![0.0; n_players];
        let mut out = Vec::with_capacity(horizons.len());
        let mut stage = 0;
        for &h in horizons {
            while stage < h {
                let mut next = vec![0.0; self.len()];
                for (k, &w) in dist.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    for (x, r) in total.iter_mut().zip(&self.reward[k]) {
                        *x += w * r;
                    }
                    for &(t, q) in &self.step[k] {
                        next[t] += w * q;
                    }
                }
                dist = next;
                stage += 1;
            }
            out.push(total.iter().map(|x| x / h as f64).collect());
        }
        out
    }

    /// Probability mass on each node after exactly `n` stages.
    pub fn distribution_after(&self, n: usize) -> Vec<f64> {
        let mut dist = vec![0.0; self.len()];
        dist[0] = 1.0;
        for _ in 0..n {
            let mut next = vec![0.0; self.len()];
            for (k, &w) in dist.iter().enumerate() {
                for &(t, q) in &self.step[k] {
                    next[t] += w * q;
                }
            }
            dist = next;
        }
        dist
    }

    /// Normalized discounted payoff vector from node 0.
    pub fn discounted(&self, lambda: f64) -> Result<Vec<f64>> {
        let d = self.visits(lambda)?;
        let n_players = self.reward.first().map_or(0, Vec::len);
        let mut g = vec![0.0; n_players];
        for (k, w) in d.iter().enumerate() {
            for (x, r) in g.iter_mut().zip(&self.reward[k]) {
                *x += w * r;
            }
        }
        Ok(g)
    }
}

/// The Markov decision problem faced by one player when everybody else
/// follows fixed automata. Nodes are (others' memories, state).
#[derive(Debug, Clone)]
pub struct DeviationMdp {
    nodes: Vec<Key>,
    /// `choices[k][d]`: expected stage payoff and successor law when the
    /// deviator plays own action `d`.
    choices: Vec<Vec<(f64, Vec<(usize, f64)>)>>,
}

impl DeviationMdp {
    pub fn build(
        game: &StochasticGame,
        automata: &[AutomatonStrategy],
        deviator: usize,
        s0: usize,
        cap: usize,
    ) -> Result<Self> {
        let mut start: Vec<u32> = automata.iter().map(|x| x.initial() as u32).collect();
        start[deviator] = 0;
        let mut nodes = Vec::new();
        let mut index = HashMap::new();
        intern((start, s0), &mut nodes, &mut index, cap)?;
        let mut choices = Vec::new();
        let mut k = 0;
        while k < nodes.len() {
            let (mem, s) = nodes[k].clone();
            let n_own = game.num_actions(s, deviator);
            let mut per_action = Vec::with_capacity(n_own);
            for d in 0..n_own {
                let mixed: Vec<Vec<f64>> = automata
                    .iter()
                    .zip(&mem)
                    .enumerate()
                    .map(|(i, (x, &m))| {
                        if i == deviator {
                            let mut v = vec![0.0; n_own];
                            v[d] = 1.0;
                            v
                        } else {
                            x.emit(m as usize, s).to_vec()
                        }
                    })
                    .collect();
                let refs: Vec<&[f64]> = mixed.iter().map(Vec::as_slice).collect();
                let weights = game.joint_weights(s, &refs);
                let mut acc: HashMap<usize, f64> = HashMap::new();
                let mut r = 0.0;
                for (a, &w) in weights.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    r += w * game.payoff(s, a)[deviator];
                    for &(t, q) in game.transition(s, a) {
                        let m2 = successor(automata, &mem, s, a, t, Some(deviator));
                        let node = intern((m2, t), &mut nodes, &mut index, cap)?;
                        *acc.entry(node).or_default() += w * q;
                    }
                }
                let mut row: Vec<(usize, f64)> = acc.into_iter().collect();
                row.sort_by_key(|&(t, _)| t);
                per_action.push((r, row));
            }
            choices.push(per_action);
            k += 1;
        }
        Ok(Self { nodes, choices })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Optimal normalized discounted payoff from the start node, within
    /// `tol` (Gauss–Seidel value iteration).
    pub fn best_discounted(&self, lambda: f64, tol: f64) -> f64 {
        let n = self.len();
        let mut v = vec![0.0; n];
        let threshold = tol * (1.0 - lambda) / lambda.max(1e-12);
        for _ in 0..10_000_000 {
            let mut delta: f64 = 0.0;
            for k in 0..n {
                let best = self.choices[k]
                    .iter()
                    .map(|(r, next)| {
                        (1.0 - lambda) * r
                            + lambda * next.iter().map(|&(t, q)| q * v[t]).sum::<f64>()
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                delta = delta.max((best - v[k]).abs());
                v[k] = best;
            }
            if delta <= threshold {
                break;
            }
        }
        v[0]
    }

    /// Optimal expected average payoff over `h` stages for each horizon
    /// (backward induction).
    pub fn best_n_stage(&self, horizons: &[usize]) -> Vec<f64> {
        let n = self.len();
        let max_h = horizons.iter().copied().max().unwrap_or(0);
        let mut v = vec![0.0; n];
        let mut out = vec![0.0; horizons.len()];
        for h in 1..=max_h {
            let next: Vec<f64> = (0..n)
                .map(|k| {
                    self.choices[k]
                        .iter()
                        .map(|(r, nx)| r + nx.iter().map(|&(t, q)| q * v[t]).sum::<f64>())
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            v = next;
            for (o, &hh) in out.iter_mut().zip(horizons) {
                if hh == h {
                    *o = v[0] / h as f64;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::game::StationaryProfile;

    #[test]
    fn iterative_and_dense_visits_agree() {
        let g = fixtures::example2();
        // a counter automaton with many memories forces the iterative path
        let n = 700;
        let x = AutomatonStrategy::from_fn(&g, 0, n, 0, |_, _| vec![1.0], |m, _, _, _| (m + 1) % n);
        let chain = ProductChain::build(&g, &[x], 0, DEFAULT_CAP).unwrap();
        assert!(chain.len() > DENSE_LIMIT);
        let d = chain.visits(0.9).unwrap();
        let occ = chain.occupation(&g, 0.9).unwrap();
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((occ[0][0] - 0.1 / (1.0 - 0.81)).abs() < 1e-12);
    }

    #[test]
    fn cap_is_enforced() {
        let g = fixtures::example2();
        let x =
            AutomatonStrategy::from_fn(&g, 0, 50, 0, |_, _| vec![1.0], |m, _, _, _| (m + 1) % 50);
        assert!(matches!(
            ProductChain::build(&g, &[x], 0, 10),
            Err(Error::CapExceeded { cap: 10 })
        ));
    }

    #[test]
    fn deviation_mdp_matches_mdp_value() {
        // single player: best response is just the MDP optimum
        let g = fixtures::example1(0.5, 6.0 / 7.0);
        let x = StationaryProfile::uniform(&g);
        let autos = crate::automaton::stationary_profile(&g, &x);
        let mdp = DeviationMdp::build(&g, &autos, 0, 1, DEFAULT_CAP).unwrap();
        let lambda = 0.6;
        let v = mdp.best_discounted(lambda, 1e-12);
        // from s1, T is optimal since λ(1+p) < 1
        let w = lambda * 0.5 / (1.0 - lambda * 0.5);
        assert!((v - 2.0 * w).abs() < 1e-9, "{v}");
    }
}
