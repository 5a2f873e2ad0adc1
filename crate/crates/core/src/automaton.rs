//! Finite-memory behavior strategies.
//!
//! Memory is updated after every stage from the publicly observed tuple
//! (current state, action profile, next state). The update table is dense;
//! the games handled here are small enough for that to be cheap.

use crate::game::{StationaryStrategy, StochasticGame};

#[derive(Debug, Clone, PartialEq)]
pub struct AutomatonStrategy {
    player: usize,
    num_states: usize,
    max_profiles: usize,
    initial: usize,
    labels: Vec<String>,
    /// `emit[m][s]` is a distribution over the player's actions at `s`.
    emit: Vec<Vec<Vec<f64>>>,
    update: Vec<u32>,
}

impl AutomatonStrategy {
    /// Tabulates an automaton from closures. `emit(m, s)` must return a
    /// distribution over `A^i(s)`; `update(m, s, a, s')` the next memory.
    pub fn from_fn(
        game: &StochasticGame,
        player: usize,
        num_memory: usize,
        initial: usize,
        mut emit: impl FnMut(usize, usize) -> Vec<f64>,
        mut update: impl FnMut(usize, usize, usize, usize) -> usize,
    ) -> Self {
        let n = game.num_states();
        let max_profiles = (0..n).map(|s| game.num_profiles(s)).max().unwrap_or(1);
        let mut table = vec![0u32; num_memory * n * max_profiles * n];
        let mut emits = Vec::with_capacity(num_memory);
        for m in 0..num_memory {
            let mut row = Vec::with_capacity(n);
            for s in 0..n {
                let d = emit(m, s);
                debug_assert_eq!(d.len(), game.num_actions(s, player));
                row.push(d);
                for a in 0..game.num_profiles(s) {
                    for t in 0..n {
                        let next = update(m, s, a, t);
                        assert!(next < num_memory, "memory update out of range");
                        table[((m * n + s) * max_profiles + a) * n + t] = next as u32;
                    }
                }
            }
            emits.push(row);
        }
        Self {
            player,
            num_states: n,
            max_profiles,
            initial,
            labels: (0..num_memory).map(|m| m.to_string()).collect(),
            emit: emits,
            update: table,
        }
    }

    /// Singleton-memory wrapper of a stationary strategy.
    pub fn stationary(game: &StochasticGame, player: usize, x: &StationaryStrategy) -> Self {
        Self::from_fn(game, player, 1, 0, |_, s| x.at(s).to_vec(), |_, _, _, _| 0)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        assert_eq!(labels.len(), self.emit.len());
        self.labels = labels;
        self
    }

    pub fn player(&self) -> usize {
        self.player
    }

    pub fn num_memory(&self) -> usize {
        self.emit.len()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn label(&self, m: usize) -> &str {
        &self.labels[m]
    }

    pub fn emit(&self, m: usize, s: usize) -> &[f64] {
        &self.emit[m][s]
    }

    pub fn next(&self, m: usize, s: usize, a: usize, t: usize) -> usize {
        self.update[((m * self.num_states + s) * self.max_profiles + a) * self.num_states + t]
            as usize
    }

    /// Rebuilds the automaton with a transformed update rule.
    pub fn map_update(
        &self,
        game: &StochasticGame,
        f: impl Fn(usize, usize, usize, usize, usize) -> usize,
    ) -> Self {
        let labels = self.labels.clone();
        Self::from_fn(
            game,
            self.player,
            self.num_memory(),
            self.initial,
            |m, s| self.emit[m][s].clone(),
            |m, s, a, t| f(m, s, a, t, self.next(m, s, a, t)),
        )
        .with_labels(labels)
    }

    /// Checks that every emitted distribution sums to one.
    pub fn check(&self, game: &StochasticGame) -> Result<(), String> {
        for (m, row) in self.emit.iter().enumerate() {
            for (s, d) in row.iter().enumerate() {
                if d.len() != game.num_actions(s, self.player) {
                    return Err(format!("memory {m}, state {s}: wrong arity"));
                }
                let sum: f64 = d.iter().sum();
                if (sum - 1.0).abs() > 1e-12 || d.iter().any(|p| *p < 0.0) {
                    return Err(format!("memory {m}, state {s}: not a distribution"));
                }
            }
        }
        Ok(())
    }
}

/// Wraps every player's stationary strategy as a singleton-memory automaton.
pub fn stationary_profile(
    game: &StochasticGame,
    x: &crate::game::StationaryProfile,
) -> Vec<AutomatonStrategy> {
    x.0.iter()
        .enumerate()
        .map(|(i, xi)| AutomatonStrategy::stationary(game, i, xi))
        .collect()
}
