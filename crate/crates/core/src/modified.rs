//! Partitions, cutoffs and the modified payoff
//! `γ̂ⁱ = Σ_D min{ Uⁱ(D), t(D)·cⁱ(D) }`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::automaton::AutomatonStrategy;
use crate::error::{Error, Result};
use crate::game::{StationaryProfile, StochasticGame};
use crate::occupancy::{self, OccupationVector};

/// Disjoint cover of the state set, with blocks in canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
    index: Vec<usize>,
}

impl Partition {
    pub fn new(num_states: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut index = vec![usize::MAX; num_states];
        for (k, b) in blocks.iter().enumerate() {
            if b.is_empty() {
                return Err(Error::Invalid(format!("block {k} is empty")));
            }
            for &s in b {
                if s >= num_states {
                    return Err(Error::Invalid(format!("state index {s} out of range")));
                }
                if index[s] != usize::MAX {
                    return Err(Error::Invalid(format!("state {s} appears in two blocks")));
                }
                index[s] = k;
            }
        }
        if let Some(s) = index.iter().position(|&k| k == usize::MAX) {
            return Err(Error::Invalid(format!("state {s} is in no block")));
        }
        let blocks = blocks
            .into_iter()
            .map(|mut b| {
                b.sort_unstable();
                b
            })
            .collect();
        Ok(Self { blocks, index })
    }

    /// Builds a partition from a block label per state; blocks are ordered
    /// by their first state.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut order: Vec<usize> = Vec::new();
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for (s, &l) in labels.iter().enumerate() {
            match order.iter().position(|&x| x == l) {
                Some(k) => blocks[k].push(s),
                None => {
                    order.push(l);
                    blocks.push(vec![s]);
                }
            }
        }
        Self::new(labels.len(), blocks).expect("labels always give a partition")
    }

    pub fn trivial(num_states: usize) -> Self {
        Self::new(num_states, vec![(0..num_states).collect()]).unwrap()
    }

    pub fn singletons(num_states: usize) -> Self {
        Self::new(num_states, (0..num_states).map(|s| vec![s]).collect()).unwrap()
    }

    pub fn from_names(game: &StochasticGame, blocks: &[Vec<String>]) -> Result<Self> {
        let idx = blocks
            .iter()
            .map(|b| {
                b.iter()
                    .map(|n| game.state_index(n))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(game.num_states(), idx)
    }

    pub fn to_names(&self, game: &StochasticGame) -> Vec<Vec<String>> {
        self.blocks
            .iter()
            .map(|b| b.iter().map(|&s| game.state_name(s).to_owned()).collect())
            .collect()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, k: usize) -> &[usize] {
        &self.blocks[k]
    }

    pub fn block_of(&self, s: usize) -> usize {
        self.index[s]
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn num_states(&self) -> usize {
        self.index.len()
    }

    /// True if every block of `self` lies inside a block of `coarse`.
    pub fn refines(&self, coarse: &Partition) -> bool {
        self.blocks.iter().all(|b| {
            b.iter()
                .all(|&s| coarse.block_of(s) == coarse.block_of(b[0]))
        })
    }
}

/// One cutoff per block of the paired partition.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffVector(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct PlayerSpec {
    pub partition: Partition,
    pub cutoffs: CutoffVector,
    /// Overrides the shared discount factor for this player.
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedSpec {
    pub s0: usize,
    pub lambda: f64,
    pub per_player: Vec<PlayerSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PlayerSpecDoc {
    partition: Vec<Vec<String>>,
    cutoffs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpecDoc {
    s0: String,
    lambda: f64,
    per_player: Vec<PlayerSpecDoc>,
}

impl ModifiedSpec {
    /// Same partition and cutoffs for every player.
    pub fn shared(
        game: &StochasticGame,
        s0: usize,
        lambda: f64,
        partition: Partition,
        cutoffs: &[Vec<f64>],
    ) -> Result<Self> {
        let per_player = cutoffs
            .iter()
            .map(|c| PlayerSpec {
                partition: partition.clone(),
                cutoffs: CutoffVector(c.clone()),
                lambda: None,
            })
            .collect();
        let spec = Self {
            s0,
            lambda,
            per_player,
        };
        spec.check(game)?;
        Ok(spec)
    }

    /// A spec whose cutoffs never bind: trivial partition, c = R.
    pub fn unconstrained(game: &StochasticGame, s0: usize, lambda: f64) -> Self {
        let r = game.payoff_bound();
        Self {
            s0,
            lambda,
            per_player: (0..game.num_players())
                .map(|_| PlayerSpec {
                    partition: Partition::trivial(game.num_states()),
                    cutoffs: CutoffVector(vec![r]),
                    lambda: None,
                })
                .collect(),
        }
    }

    pub fn lambda_for(&self, player: usize) -> f64 {
        self.per_player[player].lambda.unwrap_or(self.lambda)
    }

    pub fn with_s0(&self, s0: usize) -> Self {
        Self { s0, ..self.clone() }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    pub fn check(&self, game: &StochasticGame) -> Result<()> {
        if self.s0 >= game.num_states() {
            return Err(Error::Invalid("initial state out of range".into()));
        }
        if self.per_player.len() != game.num_players() {
            return Err(Error::Invalid(format!(
                "spec has {} players, game has {}",
                self.per_player.len(),
                game.num_players()
            )));
        }
        for (i, p) in self.per_player.iter().enumerate() {
            if p.partition.num_states() != game.num_states() {
                return Err(Error::Invalid(format!(
                    "partition of player {i} does not match the game"
                )));
            }
            if p.cutoffs.0.len() != p.partition.len() {
                return Err(Error::Invalid(format!(
                    "player {i}: {} cutoffs for {} blocks",
                    p.cutoffs.0.len(),
                    p.partition.len()
                )));
            }
            let l = p.lambda.unwrap_or(self.lambda);
            if !(0.0..1.0).contains(&l) {
                return Err(Error::Invalid(format!("discount factor {l} not in [0,1)")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self, game: &StochasticGame) -> String {
        let doc = SpecDoc {
            s0: game.state_name(self.s0).to_owned(),
            lambda: self.lambda,
            per_player: self
                .per_player
                .iter()
                .map(|p| PlayerSpecDoc {
                    partition: p.partition.to_names(game),
                    cutoffs: p.cutoffs.0.clone(),
                    lambda: p.lambda,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("spec serializes")
    }

    pub fn from_json(game: &StochasticGame, text: &str) -> Result<Self> {
        let doc: SpecDoc = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let per_player = doc
            .per_player
            .iter()
            .map(|p| {
                Ok(PlayerSpec {
                    partition: Partition::from_names(game, &p.partition)?,
                    cutoffs: CutoffVector(p.cutoffs.clone()),
                    lambda: p.lambda,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = Self {
            s0: game.state_index(&doc.s0)?,
            lambda: doc.lambda,
            per_player,
        };
        spec.check(game)?;
        Ok(spec)
    }
}

/// Modified payoff of `player` given the occupation vector at the spec's
/// initial state and that player's discount factor.
pub fn modified_payoff(
    game: &StochasticGame,
    spec: &ModifiedSpec,
    occ: &OccupationVector,
    player: usize,
) -> Result<f64> {
    let ps = spec
        .per_player
        .get(player)
        .ok_or_else(|| Error::Invalid(format!("no spec for player {player}")))?;
    if occ.s0 != spec.s0 || occ.lambda != spec.lambda_for(player) {
        return Err(Error::Invalid(
            "occupation vector was computed at a different (s0, λ)".into(),
        ));
    }
    let b = occupancy::block_breakdown(game, occ, &ps.partition)?;
    Ok(block_sum(
        &b.times,
        b.payoffs.iter().map(|u| u[player]),
        &ps.cutoffs.0,
    ))
}

/// `Σ_D min{U_D, t_D·c_D}`; unvisited blocks contribute exactly 0.
pub(crate) fn block_sum(times: &[f64], payoffs: impl Iterator<Item = f64>, cutoffs: &[f64]) -> f64 {
    times
        .iter()
        .zip(payoffs)
        .zip(cutoffs)
        .map(|((&t, u), &c)| if t == 0.0 { 0.0 } else { u.min(t * c) })
        .sum()
}

pub fn modified_payoff_profile(
    game: &StochasticGame,
    spec: &ModifiedSpec,
    profile: &StationaryProfile,
) -> Result<Vec<f64>> {
    spec.check(game)?;
    let mut cache: Vec<(f64, OccupationVector)> = Vec::new();
    let mut out = Vec::with_capacity(game.num_players());
    for i in 0..game.num_players() {
        let l = spec.lambda_for(i);
        let occ = match cache.iter().find(|(x, _)| *x == l) {
            Some((_, o)) => o.clone(),
            None => {
                let o = occupancy::occupation_stationary(game, spec.s0, l, profile)?;
                cache.push((l, o.clone()));
                o
            }
        };
        out.push(modified_payoff(game, spec, &occ, i)?);
    }
    Ok(out)
}

pub fn modified_payoff_automaton(
    game: &StochasticGame,
    spec: &ModifiedSpec,
    automata: &[AutomatonStrategy],
    cap: usize,
) -> Result<Vec<f64>> {
    spec.check(game)?;
    (0..game.num_players())
        .map(|i| {
            let occ =
                occupancy::occupation_automaton(game, spec.s0, spec.lambda_for(i), automata, cap)?;
            modified_payoff(game, spec, &occ, i)
        })
        .collect()
}

/// `min{a₁,b₁} + min{a₂,b₂} ≤ min{a₁+a₂, b₁+b₂}` on every sample.
pub fn check_min_superadditivity(samples: &[((f64, f64), (f64, f64))]) -> bool {
    samples.iter().all(|&((a1, b1), (a2, b2))| {
        a1.min(b1) + a2.min(b2)
            <= (a1 + a2).min(b1 + b2) + 1e-12 * (1.0 + a1.abs() + a2.abs() + b1.abs() + b2.abs())
    })
}

/// Uniform random pairs in `[-r, r]`, for exercising the inequality.
pub fn random_min_samples(rng: &mut impl Rng, n: usize, r: f64) -> Vec<((f64, f64), (f64, f64))> {
    (0..n)
        .map(|_| {
            let mut d = || rng.gen_range(-r..=r);
            ((d(), d()), (d(), d()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::game::StationaryStrategy;
    use crate::occupancy::occupation_stationary;

    #[test]
    fn partition_rejects_overlap_and_gaps() {
        assert!(Partition::new(3, vec![vec![0, 1], vec![1, 2]]).is_err());
        assert!(Partition::new(3, vec![vec![0, 1]]).is_err());
        assert!(Partition::new(2, vec![vec![0], vec![]]).is_err());
        let p = Partition::from_labels(&[7, 3, 7]);
        assert_eq!(p.blocks(), &[vec![0, 2], vec![1]]);
        assert!(Partition::singletons(3).refines(&p));
        assert!(!p.refines(&Partition::singletons(3)));
    }

    #[test]
    fn example2_cutoff_four() {
        let g = fixtures::example2();
        let x = StationaryProfile::uniform(&g);
        for &(lambda, want, tol) in &[(0.5, 4.0 / 3.0, 1e-12), (0.999, 2.0, 5e-3)] {
            let spec =
                ModifiedSpec::shared(&g, 0, lambda, Partition::singletons(2), &[vec![4.0, 4.0]])
                    .unwrap();
            let v = modified_payoff_profile(&g, &spec, &x).unwrap()[0];
            assert!((v - want).abs() < tol, "{v}");
        }
    }

    #[test]
    fn example1_block_contributes_nothing() {
        let (lambda, p) = (0.6, 0.5);
        let g = fixtures::example1(p, fixtures::example1_y(lambda, p));
        let part = Partition::new(4, vec![vec![0, 1], vec![2], vec![3]]).unwrap();
        let spec =
            ModifiedSpec::shared(&g, 0, lambda, part.clone(), &[vec![0.0, 2.0, 3.0]]).unwrap();
        for choice in [0, 1] {
            let x = StationaryProfile(vec![StationaryStrategy::pure(&g, 0, &[0, choice, 0, 0])]);
            let occ = occupation_stationary(&g, 0, lambda, &x).unwrap();
            let b = occupancy::block_breakdown(&g, &occ, &part).unwrap();
            let contrib = b.payoffs[0][0].min(0.0 * b.times[0]);
            assert!(contrib.abs() < 1e-9, "{contrib}");
            assert!(modified_payoff(&g, &spec, &occ, 0).is_ok());
        }
    }

    #[test]
    fn unvisited_block_is_zero() {
        assert_eq!(
            block_sum(&[0.0, 1.0], [5.0, 2.0].into_iter(), &[-10.0, 1.0]),
            1.0
        );
    }

    #[test]
    fn superadditivity_examples() {
        assert!(check_min_superadditivity(&[((1.0, 2.0), (3.0, 0.0))]));
        assert!(check_min_superadditivity(&[((1.0, 1.0), (1.0, 1.0))]));
    }

    #[test]
    fn spec_json_round_trip() {
        let g = fixtures::big_match();
        let spec = ModifiedSpec::shared(
            &g,
            0,
            0.9,
            Partition::singletons(3),
            &[vec![0.5, 0.0, 1.0], vec![1.0, 1.0, 1.0]],
        )
        .unwrap();
        let text = spec.to_json(&g);
        assert!(text.contains("\"per_player\""));
        assert_eq!(ModifiedSpec::from_json(&g, &text).unwrap(), spec);
        assert!(ModifiedSpec::from_json(
            &g,
            "{\"s0\": \"zz\", \"lambda\": 0.5, \"per_player\": []}"
        )
        .is_err());
    }
}
