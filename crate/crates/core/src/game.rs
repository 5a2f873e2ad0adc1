//! Finite multiplayer stochastic games and stationary strategies.
//!
//! A game is loaded from (or saved to) the canonical JSON document
//! [`GameDef`]. Validation reports every broken invariant instead of
//! stopping at the first one; a [`StochasticGame`] only exists once the
//! document is clean.
//!
//! Action profiles at a state are indexed in mixed radix over the players'
//! action lists, first player most significant. That order is used for
//! every iteration in the crate, which keeps results reproducible.

use std::fmt;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on transition row sums and mixed-action sums.
pub const PROB_TOL: f64 = 1e-12;

/// Canonical JSON form of a game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameDef {
    pub players: Vec<String>,
    pub states: Vec<StateDef>,
    pub payoffs: IndexMap<String, IndexMap<String, Vec<f64>>>,
    pub transitions: IndexMap<String, IndexMap<String, IndexMap<String, f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDef {
    pub name: String,
    pub actions: IndexMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    NoPlayers,
    DuplicatePlayer,
    NoStates,
    DuplicateState,
    MissingActions,
    EmptyActions,
    DuplicateAction,
    UnknownPlayer,
    UnknownState,
    UnknownProfile,
    MissingPayoff,
    PayoffArity,
    NonFinitePayoff,
    MissingTransition,
    NegativeProbability,
    RowSum,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::NoPlayers => "no-players",
            Rule::DuplicatePlayer => "duplicate-player",
            Rule::NoStates => "no-states",
            Rule::DuplicateState => "duplicate-state",
            Rule::MissingActions => "missing-actions",
            Rule::EmptyActions => "empty-actions",
            Rule::DuplicateAction => "duplicate-action",
            Rule::UnknownPlayer => "unknown-player",
            Rule::UnknownState => "unknown-state",
            Rule::UnknownProfile => "unknown-profile",
            Rule::MissingPayoff => "missing-payoff",
            Rule::PayoffArity => "payoff-arity",
            Rule::NonFinitePayoff => "non-finite-payoff",
            Rule::MissingTransition => "missing-transition",
            Rule::NegativeProbability => "negative-probability",
            Rule::RowSum => "row-sum",
        }
    }
}

/// One broken invariant, located by state and action profile when relevant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    pub state: Option<String>,
    pub profile: Option<String>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.rule.as_str())?;
        if let Some(s) = &self.state {
            write!(f, " state `{s}`")?;
        }
        if let Some(p) = &self.profile {
            write!(f, " profile `{p}`")?;
        }
        write!(f, ": {}", self.detail)
    }
}

fn violation(rule: Rule, state: Option<&str>, profile: Option<&str>, detail: String) -> Violation {
    Violation {
        rule,
        state: state.map(str::to_owned),
        profile: profile.map(str::to_owned),
        detail,
    }
}

/// Joins action ids into the `a1|a2|...` key used by the JSON format.
pub fn profile_key<S: AsRef<str>>(actions: &[S]) -> String {
    actions
        .iter()
        .map(|a| a.as_ref())
        .collect::<Vec<_>>()
        .join("|")
}

/// Enumerates every action profile of `lists` in mixed-radix order.
fn enumerate_profiles(lists: &[&Vec<String>]) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = vec![Vec::new()];
    for list in lists {
        let mut next = Vec::with_capacity(out.len() * list.len());
        for prefix in &out {
            for a in list.iter() {
                let mut p = prefix.clone();
                p.push(a.clone());
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Checks every invariant of the canonical document. Never fails; an empty
/// list means the document describes a valid game.
pub fn validate(def: &GameDef) -> Vec<Violation> {
    let mut out = Vec::new();
    if def.players.is_empty() {
        out.push(violation(
            Rule::NoPlayers,
            None,
            None,
            "player list is empty".into(),
        ));
    }
    let mut seen = std::collections::BTreeSet::new();
    for p in &def.players {
        if !seen.insert(p.as_str()) {
            out.push(violation(
                Rule::DuplicatePlayer,
                None,
                None,
                format!("player `{p}` listed twice"),
            ));
        }
    }
    if def.states.is_empty() {
        out.push(violation(
            Rule::NoStates,
            None,
            None,
            "state list is empty".into(),
        ));
    }
    let state_names: std::collections::BTreeSet<&str> =
        def.states.iter().map(|s| s.name.as_str()).collect();
    if state_names.len() != def.states.len() {
        out.push(violation(
            Rule::DuplicateState,
            None,
            None,
            "state names are not unique".into(),
        ));
    }
    for key in def.payoffs.keys().chain(def.transitions.keys()) {
        if !state_names.contains(key.as_str()) {
            out.push(violation(
                Rule::UnknownState,
                Some(key),
                None,
                "table entry for undeclared state".into(),
            ));
        }
    }

    for st in &def.states {
        let sname = st.name.as_str();
        let mut lists = Vec::new();
        let mut ok = true;
        for p in &def.players {
            match st.actions.get(p) {
                None => {
                    ok = false;
                    out.push(violation(
                        Rule::MissingActions,
                        Some(sname),
                        None,
                        format!("no action list for player `{p}`"),
                    ));
                }
                Some(l) if l.is_empty() => {
                    ok = false;
                    out.push(violation(
                        Rule::EmptyActions,
                        Some(sname),
                        None,
                        format!("player `{p}` has no actions"),
                    ));
                }
                Some(l) => {
                    let uniq: std::collections::BTreeSet<&String> = l.iter().collect();
                    if uniq.len() != l.len() {
                        ok = false;
                        out.push(violation(
                            Rule::DuplicateAction,
                            Some(sname),
                            None,
                            format!("player `{p}` repeats an action id"),
                        ));
                    }
                    lists.push(l);
                }
            }
        }
        for p in st.actions.keys() {
            if !def.players.contains(p) {
                out.push(violation(
                    Rule::UnknownPlayer,
                    Some(sname),
                    None,
                    format!("actions given for undeclared player `{p}`"),
                ));
            }
        }
        if !ok {
            continue;
        }
        let profiles = enumerate_profiles(&lists);
        let keys: Vec<String> = profiles.iter().map(|p| profile_key(p)).collect();
        let payoff_row = def.payoffs.get(sname);
        let trans_row = def.transitions.get(sname);
        for key in &keys {
            match payoff_row.and_then(|r| r.get(key)) {
                None => out.push(violation(
                    Rule::MissingPayoff,
                    Some(sname),
                    Some(key),
                    "no payoff entry".into(),
                )),
                Some(u) => {
                    if u.len() != def.players.len() {
                        out.push(violation(
                            Rule::PayoffArity,
                            Some(sname),
                            Some(key),
                            format!("expected {} payoffs, found {}", def.players.len(), u.len()),
                        ));
                    }
                    if u.iter().any(|x| !x.is_finite()) {
                        out.push(violation(
                            Rule::NonFinitePayoff,
                            Some(sname),
                            Some(key),
                            "payoff is not finite".into(),
                        ));
                    }
                }
            }
            match trans_row.and_then(|r| r.get(key)) {
                None => out.push(violation(
                    Rule::MissingTransition,
                    Some(sname),
                    Some(key),
                    "no transition entry".into(),
                )),
                Some(dist) => {
                    let mut sum = 0.0;
                    for (target, &p) in dist {
                        if !state_names.contains(target.as_str()) {
                            out.push(violation(
                                Rule::UnknownState,
                                Some(sname),
                                Some(key),
                                format!("transition to undeclared state `{target}`"),
                            ));
                        }
                        if !(p >= 0.0) || !p.is_finite() {
                            out.push(violation(
                                Rule::NegativeProbability,
                                Some(sname),
                                Some(key),
                                format!("probability {p} to `{target}`"),
                            ));
                        }
                        sum += p;
                    }
                    if (sum - 1.0).abs() > PROB_TOL {
                        out.push(violation(
                            Rule::RowSum,
                            Some(sname),
                            Some(key),
                            format!("probabilities sum to {sum}"),
                        ));
                    }
                }
            }
        }
        for (table, row) in [
            ("payoff", payoff_row.map(|r| r.keys().collect::<Vec<_>>())),
            (
                "transition",
                trans_row.map(|r| r.keys().collect::<Vec<_>>()),
            ),
        ] {
            for key in row.unwrap_or_default() {
                if !keys.contains(key) {
                    out.push(violation(
                        Rule::UnknownProfile,
                        Some(sname),
                        Some(key),
                        format!("{table} entry for an undeclared action profile"),
                    ));
                }
            }
        }
    }
    out
}

/// A validated, immutable stochastic game.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticGame {
    players: Vec<String>,
    states: Vec<String>,
    /// `actions[s][i]` lists player i's action ids at state s.
    actions: Vec<Vec<Vec<String>>>,
    /// Mixed-radix strides, `strides[s][i]`.
    strides: Vec<Vec<usize>>,
    payoffs: Vec<Vec<Vec<f64>>>,
    /// Normalized sparse kernel, targets ascending.
    kernel: Vec<Vec<Vec<(usize, f64)>>>,
    /// Probabilities exactly as loaded; used when saving.
    source: Vec<Vec<Vec<(usize, f64)>>>,
    payoff_bound: f64,
}

impl StochasticGame {
    /// Builds a game from its canonical document, validating first and
    /// renormalizing each transition row once.
    pub fn from_def(def: &GameDef) -> Result<Self> {
        let violations = validate(def);
        if !violations.is_empty() {
            return Err(Error::Validation(violations));
        }
        let players = def.players.clone();
        let states: Vec<String> = def.states.iter().map(|s| s.name.clone()).collect();
        let index_of = |name: &str| states.iter().position(|s| s == name).expect("validated");
        let mut actions = Vec::new();
        let mut strides = Vec::new();
        let mut payoffs = Vec::new();
        let mut kernel = Vec::new();
        let mut source = Vec::new();
        let mut bound: f64 = 0.0;
        for st in &def.states {
            let lists: Vec<&Vec<String>> = players.iter().map(|p| &st.actions[p]).collect();
            let mut stride = vec![1usize; players.len()];
            for i in (0..players.len().saturating_sub(1)).rev() {
                stride[i] = stride[i + 1] * lists[i + 1].len();
            }
            let mut pay_s = Vec::new();
            let mut ker_s = Vec::new();
            let mut src_s = Vec::new();
            for prof in enumerate_profiles(&lists) {
                let key = profile_key(&prof);
                let u = def.payoffs[&st.name][&key].clone();
                bound = u.iter().fold(bound, |m, x| m.max(x.abs()));
                pay_s.push(u);
                let mut row: Vec<(usize, f64)> = def.transitions[&st.name][&key]
                    .iter()
                    .map(|(t, &p)| (index_of(t), p))
                    .collect();
                row.sort_by_key(|&(t, _)| t);
                src_s.push(row.clone());
                let sum: f64 = row.iter().map(|&(_, p)| p).sum();
                if sum != 1.0 {
                    for e in row.iter_mut() {
                        e.1 /= sum;
                    }
                }
                row.retain(|&(_, p)| p > 0.0);
                ker_s.push(row);
            }
            actions.push(lists.into_iter().cloned().collect());
            strides.push(stride);
            payoffs.push(pay_s);
            kernel.push(ker_s);
            source.push(src_s);
        }
        Ok(Self {
            players,
            states,
            actions,
            strides,
            payoffs,
            kernel,
            source,
            payoff_bound: bound,
        })
    }

    pub fn to_def(&self) -> GameDef {
        let mut states = Vec::new();
        let mut payoffs = IndexMap::new();
        let mut transitions = IndexMap::new();
        for s in 0..self.num_states() {
            let mut acts = IndexMap::new();
            for (i, p) in self.players.iter().enumerate() {
                acts.insert(p.clone(), self.actions[s][i].clone());
            }
            states.push(StateDef {
                name: self.states[s].clone(),
                actions: acts,
            });
            let mut prow = IndexMap::new();
            let mut trow = IndexMap::new();
            for a in 0..self.num_profiles(s) {
                let key = self.profile_name(s, a);
                prow.insert(key.clone(), self.payoffs[s][a].clone());
                let dist: IndexMap<String, f64> = self.source[s][a]
                    .iter()
                    .map(|&(t, p)| (self.states[t].clone(), p))
                    .collect();
                trow.insert(key, dist);
            }
            payoffs.insert(self.states[s].clone(), prow);
            transitions.insert(self.states[s].clone(), trow);
        }
        GameDef {
            players: self.players.clone(),
            states,
            payoffs,
            transitions,
        }
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn players(&self) -> &[String] {
        &self.players
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn state_name(&self, s: usize) -> &str {
        &self.states[s]
    }

    pub fn state_index(&self, name: &str) -> Result<usize> {
        self.states
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::UnknownState(name.to_owned()))
    }

    /// Resolves a player by id, or by 1-based position when no id matches.
    pub fn player_index(&self, name: &str) -> Result<usize> {
        if let Some(i) = self.players.iter().position(|p| p == name) {
            return Ok(i);
        }
        match name.parse::<usize>() {
            Ok(k) if k >= 1 && k <= self.players.len() => Ok(k - 1),
            _ => Err(Error::UnknownPlayer(name.to_owned())),
        }
    }

    pub fn actions(&self, s: usize, player: usize) -> &[String] {
        &self.actions[s][player]
    }

    pub fn num_actions(&self, s: usize, player: usize) -> usize {
        self.actions[s][player].len()
    }

    pub fn action_index(&self, s: usize, player: usize, action: &str) -> Result<usize> {
        self.actions[s][player]
            .iter()
            .position(|a| a == action)
            .ok_or_else(|| Error::UnknownAction {
                state: self.states[s].clone(),
                player: self.players[player].clone(),
                action: action.to_owned(),
            })
    }

    pub fn num_profiles(&self, s: usize) -> usize {
        self.payoffs[s].len()
    }

    /// Action index of `player` inside profile `a` at state `s`.
    pub fn profile_action(&self, s: usize, a: usize, player: usize) -> usize {
        (a / self.strides[s][player]) % self.actions[s][player].len()
    }

    pub fn decode_profile(&self, s: usize, a: usize) -> Vec<usize> {
        (0..self.num_players())
            .map(|i| self.profile_action(s, a, i))
            .collect()
    }

    pub fn encode_profile(&self, s: usize, actions: &[usize]) -> usize {
        actions
            .iter()
            .zip(&self.strides[s])
            .map(|(a, st)| a * st)
            .sum()
    }

    pub fn profile_name(&self, s: usize, a: usize) -> String {
        let names: Vec<&str> = (0..self.num_players())
            .map(|i| self.actions[s][i][self.profile_action(s, a, i)].as_str())
            .collect();
        profile_key(&names)
    }

    pub fn payoff(&self, s: usize, a: usize) -> &[f64] {
        &self.payoffs[s][a]
    }

    /// Normalized transition row `q(.|s,a)` as (target, probability) pairs.
    pub fn transition(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.kernel[s][a]
    }

    pub fn prob(&self, s: usize, a: usize, target: usize) -> f64 {
        self.kernel[s][a]
            .iter()
            .find(|&&(t, _)| t == target)
            .map_or(0.0, |&(_, p)| p)
    }

    /// R = max |u^i(s,a)|.
    pub fn payoff_bound(&self) -> f64 {
        self.payoff_bound
    }

    /// R, but never below 1; used to scale tolerances.
    pub fn scale(&self) -> f64 {
        self.payoff_bound.max(1.0)
    }

    pub fn is_absorbing(&self, s: usize) -> bool {
        (0..self.num_profiles(s)).all(|a| self.kernel[s][a] == [(s, 1.0)])
    }

    /// Probability of each joint profile at `s` when players mix independently.
    pub fn joint_weights(&self, s: usize, mixed: &[&[f64]]) -> Vec<f64> {
        (0..self.num_profiles(s))
            .map(|a| {
                (0..self.num_players())
                    .map(|i| mixed[i][self.profile_action(s, a, i)])
                    .product()
            })
            .collect()
    }

    /// Multilinear extension of payoff and transition to mixed actions.
    /// Returns the expected payoff vector and a dense distribution over states.
    pub fn mixed_extend(&self, s: usize, alpha: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
        if s >= self.num_states() {
            return Err(Error::Invalid(format!("state index {s} out of range")));
        }
        if alpha.len() != self.num_players() {
            return Err(Error::Invalid(format!(
                "expected {} mixed actions, got {}",
                self.num_players(),
                alpha.len()
            )));
        }
        for (i, a) in alpha.iter().enumerate() {
            check_distribution(a, self.num_actions(s, i)).map_err(|e| {
                Error::Invalid(format!(
                    "mixed action of player `{}` at `{}`: {e}",
                    self.players[i], self.states[s]
                ))
            })?;
        }
        let refs: Vec<&[f64]> = alpha.iter().map(Vec::as_slice).collect();
        let w = self.joint_weights(s, &refs);
        let mut pay = vec![0.0; self.num_players()];
        let mut dist = vec![0.0; self.num_states()];
        for (a, &wa) in w.iter().enumerate() {
            if wa == 0.0 {
                continue;
            }
            for (p, u) in pay.iter_mut().zip(&self.payoffs[s][a]) {
                *p += wa * u;
            }
            for &(t, q) in &self.kernel[s][a] {
                dist[t] += wa * q;
            }
        }
        Ok((pay, dist))
    }

    /// Same as [`mixed_extend`](Self::mixed_extend) with actions named by id.
    pub fn mixed_extend_named(
        &self,
        s: usize,
        alpha: &[IndexMap<String, f64>],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if alpha.len() != self.num_players() {
            return Err(Error::Invalid(format!(
                "expected {} mixed actions, got {}",
                self.num_players(),
                alpha.len()
            )));
        }
        let mut dense = Vec::new();
        for (i, m) in alpha.iter().enumerate() {
            let mut v = vec![0.0; self.num_actions(s, i)];
            for (name, &p) in m {
                v[self.action_index(s, i, name)?] += p;
            }
            dense.push(v);
        }
        self.mixed_extend(s, &dense)
    }

    /// Re-checks the invariants of a constructed game.
    pub fn validate(&self) -> Vec<Violation> {
        validate(&self.to_def())
    }
}

fn check_distribution(p: &[f64], len: usize) -> std::result::Result<(), String> {
    if p.len() != len {
        return Err(format!("expected {len} entries, found {}", p.len()));
    }
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err("entries must be finite and nonnegative".into());
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(format!("entries sum to {sum}"));
    }
    Ok(())
}

pub fn load_game(path: impl AsRef<Path>) -> Result<StochasticGame> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_game(&text)
}

pub fn parse_game(text: &str) -> Result<StochasticGame> {
    let def: GameDef = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    StochasticGame::from_def(&def)
}

pub fn game_to_json(game: &StochasticGame) -> String {
    serde_json::to_string_pretty(&game.to_def()).expect("game documents always serialize")
}

pub fn save_game(game: &StochasticGame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, game_to_json(game) + "\n").map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Incremental construction of a [`GameDef`] from code.
#[derive(Debug, Clone)]
pub struct GameBuilder {
    def: GameDef,
}

impl GameBuilder {
    pub fn new<S: AsRef<str>>(players: &[S]) -> Self {
        Self {
            def: GameDef {
                players: players.iter().map(|p| p.as_ref().to_owned()).collect(),
                states: Vec::new(),
                payoffs: IndexMap::new(),
                transitions: IndexMap::new(),
            },
        }
    }

    /// Declares a state with one action list per player.
    pub fn state(mut self, name: &str, actions: &[&[&str]]) -> Self {
        let acts = self
            .def
            .players
            .iter()
            .zip(actions)
            .map(|(p, a)| (p.clone(), a.iter().map(|x| x.to_string()).collect()))
            .collect();
        self.def.states.push(StateDef {
            name: name.to_owned(),
            actions: acts,
        });
        self
    }

    /// Sets payoff and transition for one profile (`"a1|a2"`).
    pub fn entry(
        mut self,
        state: &str,
        profile: &str,
        payoff: &[f64],
        transition: &[(&str, f64)],
    ) -> Self {
        self.def
            .payoffs
            .entry(state.to_owned())
            .or_default()
            .insert(profile.to_owned(), payoff.to_vec());
        self.def
            .transitions
            .entry(state.to_owned())
            .or_default()
            .insert(
                profile.to_owned(),
                transition
                    .iter()
                    .map(|(t, p)| (t.to_string(), *p))
                    .collect(),
            );
        self
    }

    pub fn def(&self) -> &GameDef {
        &self.def
    }

    pub fn into_def(self) -> GameDef {
        self.def
    }

    pub fn build(self) -> Result<StochasticGame> {
        StochasticGame::from_def(&self.def)
    }
}

/// Per-state mixed actions of one player.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryStrategy(pub Vec<Vec<f64>>);

impl StationaryStrategy {
    pub fn uniform(game: &StochasticGame, player: usize) -> Self {
        Self(
            (0..game.num_states())
                .map(|s| {
                    let n = game.num_actions(s, player);
                    vec![1.0 / n as f64; n]
                })
                .collect(),
        )
    }

    /// Pure strategy choosing `choice[s]` at every state.
    pub fn pure(game: &StochasticGame, player: usize, choice: &[usize]) -> Self {
        Self(
            (0..game.num_states())
                .map(|s| {
                    let mut v = vec![0.0; game.num_actions(s, player)];
                    v[choice[s]] = 1.0;
                    v
                })
                .collect(),
        )
    }

    pub fn at(&self, s: usize) -> &[f64] {
        &self.0[s]
    }

    pub fn check(&self, game: &StochasticGame, player: usize) -> Result<()> {
        if self.0.len() != game.num_states() {
            return Err(Error::Invalid(format!(
                "strategy has {} states, game has {}",
                self.0.len(),
                game.num_states()
            )));
        }
        for (s, d) in self.0.iter().enumerate() {
            check_distribution(d, game.num_actions(s, player)).map_err(|e| {
                Error::Invalid(format!(
                    "player `{}` at `{}`: {e}",
                    game.players()[player],
                    game.state_name(s)
                ))
            })?;
        }
        Ok(())
    }

    /// Sup-norm distance between two strategies of the same player.
    pub fn distance(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// Index of the most likely action at `s` (first on ties).
    pub fn mode(&self, s: usize) -> usize {
        let d = &self.0[s];
        let mut best = 0;
        for (k, &p) in d.iter().enumerate() {
            if p > d[best] {
                best = k;
            }
        }
        best
    }
}

/// One stationary strategy per player.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryProfile(pub Vec<StationaryStrategy>);

impl StationaryProfile {
    pub fn uniform(game: &StochasticGame) -> Self {
        Self(
            (0..game.num_players())
                .map(|i| StationaryStrategy::uniform(game, i))
                .collect(),
        )
    }

    pub fn player(&self, i: usize) -> &StationaryStrategy {
        &self.0[i]
    }

    pub fn with_player(&self, i: usize, x: StationaryStrategy) -> Self {
        let mut out = self.clone();
        out.0[i] = x;
        out
    }

    pub fn check(&self, game: &StochasticGame) -> Result<()> {
        if self.0.len() != game.num_players() {
            return Err(Error::Invalid(format!(
                "profile has {} players, game has {}",
                self.0.len(),
                game.num_players()
            )));
        }
        for (i, x) in self.0.iter().enumerate() {
            x.check(game, i)?;
        }
        Ok(())
    }

    /// Joint distribution over action profiles at state `s`.
    pub fn joint(&self, game: &StochasticGame, s: usize) -> Vec<f64> {
        let refs: Vec<&[f64]> = self.0.iter().map(|x| x.at(s)).collect();
        game.joint_weights(s, &refs)
    }

    /// One-step state transition matrix (row-stochastic, dense).
    pub fn kernel(&self, game: &StochasticGame) -> Vec<Vec<f64>> {
        let n = game.num_states();
        let mut p = vec![vec![0.0; n]; n];
        for s in 0..n {
            for (a, w) in self.joint(game, s).into_iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for &(t, q) in game.transition(s, a) {
                    p[s][t] += w * q;
                }
            }
        }
        p
    }

    /// Expected stage payoff vector per state.
    pub fn stage_payoffs(&self, game: &StochasticGame) -> Vec<Vec<f64>> {
        (0..game.num_states())
            .map(|s| {
                let mut u = vec![0.0; game.num_players()];
                for (a, w) in self.joint(game, s).into_iter().enumerate() {
                    for (x, y) in u.iter_mut().zip(game.payoff(s, a)) {
                        *x += w * y;
                    }
                }
                u
            })
            .collect()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.distance(b))
            .fold(0.0, f64::max)
    }

    /// Flattened probabilities, used for lexicographic tie-breaking.
    pub fn flat(&self) -> Vec<f64> {
        self.0
            .iter()
            .flat_map(|x| x.0.iter().flatten().copied())
            .collect()
    }
}

/// JSON form of a profile: `{player: {state: {action: prob}}}`.
pub type ProfileDoc = IndexMap<String, IndexMap<String, IndexMap<String, f64>>>;

pub fn profile_to_doc(game: &StochasticGame, profile: &StationaryProfile) -> ProfileDoc {
    let mut doc = IndexMap::new();
    for (i, x) in profile.0.iter().enumerate() {
        let mut per_state = IndexMap::new();
        for s in 0..game.num_states() {
            let m: IndexMap<String, f64> = game
                .actions(s, i)
                .iter()
                .cloned()
                .zip(x.at(s).iter().copied())
                .collect();
            per_state.insert(game.state_name(s).to_owned(), m);
        }
        doc.insert(game.players()[i].clone(), per_state);
    }
    doc
}

/// Reads a profile document. Missing players or states default to uniform
/// play; unknown ids are errors. Each mixed action is renormalized once.
pub fn profile_from_doc(game: &StochasticGame, doc: &ProfileDoc) -> Result<StationaryProfile> {
    for p in doc.keys() {
        game.player_index(p)?;
    }
    let mut out = StationaryProfile::uniform(game);
    for (pname, per_state) in doc {
        let i = game.player_index(pname)?;
        for (sname, mix) in per_state {
            let s = game.state_index(sname)?;
            let mut v = vec![0.0; game.num_actions(s, i)];
            for (aname, &p) in mix {
                v[game.action_index(s, i, aname)?] += p;
            }
            let sum: f64 = v.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || v.iter().any(|x| *x < 0.0) {
                return Err(Error::Invalid(format!(
                    "mixed action of `{pname}` at `{sname}` is not a distribution (sum {sum})"
                )));
            }
            v.iter_mut().for_each(|x| *x /= sum);
            out.0[i].0[s] = v;
        }
    }
    Ok(out)
}
