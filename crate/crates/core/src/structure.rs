//! Closed and strongly controllable sets, cooperative almost-sure
//! reachability, sibling partitions and the strongly-controllable test.

use serde_json::{json, Value};

use crate::game::StochasticGame;
use crate::modified::Partition;

fn membership(n: usize, set: &[usize]) -> Vec<bool> {
    let mut m = vec![false; n];
    for &s in set {
        m[s] = true;
    }
    m
}

fn support_within(game: &StochasticGame, s: usize, a: usize, inside: &[bool]) -> bool {
    game.transition(s, a)
        .iter()
        .all(|&(t, q)| q == 0.0 || inside[t])
}

/// True iff no action profile can lead out of `set`.
pub fn is_closed(game: &StochasticGame, set: &[usize]) -> bool {
    let inside = membership(game.num_states(), set);
    set.iter()
        .all(|&s| (0..game.num_profiles(s)).all(|a| support_within(game, s, a, &inside)))
}

/// How a set can be left.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Control {
    Closed,
    /// Exits only at `state`, and only when `player` plays `action`.
    Controllable {
        player: usize,
        state: usize,
        action: usize,
    },
    Neither,
}

impl Control {
    pub fn is_ok(&self) -> bool {
        !matches!(self, Control::Neither)
    }

    pub fn to_json(&self, game: &StochasticGame) -> Value {
        match *self {
            Control::Closed => json!({"tag": "closed"}),
            Control::Neither => json!({"tag": "neither"}),
            Control::Controllable {
                player,
                state,
                action,
            } => json!({
                "tag": "strongly_controllable",
                "player": game.players()[player],
                "state": game.state_name(state),
                "action": game.actions(state, player)[action],
            }),
        }
    }
}

/// Witness `(i_D, s_D, ã)` of strong controllability; the first player in
/// canonical order is reported when several qualify.
pub fn strongly_controllable_witness(game: &StochasticGame, set: &[usize]) -> Control {
    let inside = membership(game.num_states(), set);
    let mut exits: Vec<(usize, usize)> = Vec::new();
    for &s in set {
        for a in 0..game.num_profiles(s) {
            if !support_within(game, s, a, &inside) {
                exits.push((s, a));
            }
        }
    }
    let Some(&(state, first)) = exits.first() else {
        return Control::Closed;
    };
    if exits.iter().any(|&(s, _)| s != state) {
        return Control::Neither;
    }
    for player in 0..game.num_players() {
        let action = game.profile_action(state, first, player);
        if exits
            .iter()
            .all(|&(_, a)| game.profile_action(state, a, player) == action)
        {
            return Control::Controllable {
                player,
                state,
                action,
            };
        }
    }
    Control::Neither
}

/// States from which some profile reaches `target` with probability one
/// without leaving `allowed`. Uses supports only.
pub fn almost_sure_reach(game: &StochasticGame, allowed: &[usize], target: &[usize]) -> Vec<usize> {
    let (set, _) = reach_with_profile(game, allowed, target);
    set
}

/// Same as [`almost_sure_reach`], plus a pure stationary profile (index per
/// state; `None` on target states and outside the result) that achieves it.
pub fn reach_with_profile(
    game: &StochasticGame,
    allowed: &[usize],
    target: &[usize],
) -> (Vec<usize>, Vec<Option<usize>>) {
    let n = game.num_states();
    let is_target = membership(n, target);
    let mut region = membership(n, allowed);
    for &t in target {
        region[t] = true;
    }
    loop {
        let mut hit: Vec<bool> = (0..n).map(|s| is_target[s] && region[s]).collect();
        let mut choice: Vec<Option<usize>> = vec![None; n];
        loop {
            let mut grew = false;
            for s in 0..n {
                if !region[s] || hit[s] {
                    continue;
                }
                let found = (0..game.num_profiles(s)).find(|&a| {
                    support_within(game, s, a, &region)
                        && game
                            .transition(s, a)
                            .iter()
                            .any(|&(t, q)| q > 0.0 && hit[t])
                });
                if let Some(a) = found {
                    hit[s] = true;
                    choice[s] = Some(a);
                    grew = true;
                }
            }
            if !grew {
                break;
            }
        }
        if hit == region {
            let set = (0..n).filter(|&s| region[s]).collect();
            return (set, choice);
        }
        region = hit;
    }
}

/// Splits every block into classes of states that reach each other almost
/// surely without leaving the block.
pub fn sibling_partition(game: &StochasticGame, coarse: &Partition) -> Partition {
    let n = game.num_states();
    let mut labels = vec![usize::MAX; n];
    let mut next = 0;
    for block in coarse.blocks() {
        // reaches[x][y]: y is reachable from x
        let mut reaches = vec![vec![false; block.len()]; block.len()];
        for (yk, &y) in block.iter().enumerate() {
            let from = membership(n, &almost_sure_reach(game, block, &[y]));
            for (xk, &x) in block.iter().enumerate() {
                reaches[xk][yk] = from[x];
            }
        }
        for (xk, &x) in block.iter().enumerate() {
            if labels[x] != usize::MAX {
                continue;
            }
            labels[x] = next;
            for (yk, &y) in block.iter().enumerate().skip(xk + 1) {
                if labels[y] == usize::MAX && reaches[xk][yk] && reaches[yk][xk] {
                    labels[y] = next;
                }
            }
            next += 1;
        }
    }
    Partition::from_labels(&labels)
}

/// Groups states whose value vectors agree within `tol` in every
/// coordinate (transitively closed). Returns the partition and the pairs
/// whose largest gap lies within a factor ten of `tol` on either side.
pub fn group_by_values(
    values: &[Vec<f64>],
    num_states: usize,
    tol: f64,
) -> (Partition, Vec<(usize, usize)>) {
    let gap = |s: usize, t: usize| {
        values
            .iter()
            .map(|v| (v[s] - v[t]).abs())
            .fold(0.0, f64::max)
    };
    let mut parent: Vec<usize> = (0..num_states).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    let mut borderline = Vec::new();
    for s in 0..num_states {
        for t in s + 1..num_states {
            let g = gap(s, t);
            if g <= tol {
                let (a, b) = (find(&mut parent, s), find(&mut parent, t));
                parent[a.max(b)] = a.min(b);
            }
            if g > tol / 10.0 && g <= tol * 10.0 {
                borderline.push((s, t));
            }
        }
    }
    let labels: Vec<usize> = (0..num_states).map(|s| find(&mut parent, s)).collect();
    (Partition::from_labels(&labels), borderline)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport {
    /// `D`: states grouped by uniform min-max vectors.
    pub minmax_partition: Partition,
    /// `D*`: siblings within each block of `D`.
    pub sibling_partition: Partition,
    /// One tag per block of `D*`.
    pub tags: Vec<Control>,
    pub borderline: Vec<(usize, usize)>,
    pub strongly_controllable: bool,
}

impl ClassificationReport {
    pub fn to_json(&self, game: &StochasticGame) -> Value {
        let blocks: Vec<Value> = self
            .sibling_partition
            .blocks()
            .iter()
            .zip(&self.tags)
            .map(|(b, tag)| {
                let mut v = tag.to_json(game);
                v["states"] = json!(b.iter().map(|&s| game.state_name(s)).collect::<Vec<_>>());
                v
            })
            .collect();
        json!({
            "strongly_controllable": self.strongly_controllable,
            "minmax_partition": self.minmax_partition.to_names(game),
            "blocks": blocks,
            "borderline": self.borderline.iter()
                .map(|&(s, t)| [game.state_name(s), game.state_name(t)])
                .collect::<Vec<_>>(),
        })
    }

    pub fn table(&self, game: &StochasticGame) -> String {
        let mut out = format!("strongly controllable: {}\n", self.strongly_controllable);
        for (b, tag) in self.sibling_partition.blocks().iter().zip(&self.tags) {
            let names: Vec<&str> = b.iter().map(|&s| game.state_name(s)).collect();
            let desc = match *tag {
                Control::Closed => "closed".to_string(),
                Control::Neither => "neither".to_string(),
                Control::Controllable {
                    player,
                    state,
                    action,
                } => format!(
                    "controllable by {} at {} via {}",
                    game.players()[player],
                    game.state_name(state),
                    game.actions(state, player)[action]
                ),
            };
            out.push_str(&format!("  {{{}}}  {}\n", names.join(", "), desc));
        }
        for &(s, t) in &self.borderline {
            out.push_str(&format!(
                "  borderline: {} ~ {}\n",
                game.state_name(s),
                game.state_name(t)
            ));
        }
        out
    }
}

/// `uniform_minmax[i][s]` are the players' uniform min-max values.
pub fn classify(
    game: &StochasticGame,
    uniform_minmax: &[Vec<f64>],
    tol: f64,
) -> ClassificationReport {
    let (minmax_partition, borderline) = group_by_values(uniform_minmax, game.num_states(), tol);
    let sibling = sibling_partition(game, &minmax_partition);
    let tags: Vec<Control> = sibling
        .blocks()
        .iter()
        .map(|b| strongly_controllable_witness(game, b))
        .collect();
    let strongly_controllable = tags.iter().all(Control::is_ok);
    ClassificationReport {
        minmax_partition,
        sibling_partition: sibling,
        tags,
        borderline,
        strongly_controllable,
    }
}

/// Syntactic sufficient conditions for Property P: either the game is
/// absorbing (every non-absorbing state leads only to itself or absorbing
/// states), or the partition is one block plus singletons and every state
/// outside that block is absorbing.
pub fn check_property_sufficient(game: &StochasticGame, partition: &Partition) -> bool {
    let n = game.num_states();
    let absorbing: Vec<bool> = (0..n).map(|s| game.is_absorbing(s)).collect();
    let absorbing_game = (0..n).all(|s| {
        absorbing[s]
            || (0..game.num_profiles(s)).all(|a| {
                game.transition(s, a)
                    .iter()
                    .all(|&(t, q)| q == 0.0 || t == s || absorbing[t])
            })
    });
    if absorbing_game {
        return true;
    }
    let big: Vec<&Vec<usize>> = partition.blocks().iter().filter(|b| b.len() > 1).collect();
    match big.len() {
        0 => (0..n).filter(|&s| !absorbing[s]).count() <= 1,
        1 => (0..n).all(|s| big[0].contains(&s) || absorbing[s]),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn closed_sets() {
        let bm = fixtures::big_match();
        assert!(is_closed(&bm, &[1]));
        assert!(!is_closed(&bm, &[0]));
        assert!(is_closed(&fixtures::example2(), &[0, 1]));
    }

    #[test]
    fn witnesses() {
        let bm = fixtures::big_match();
        assert_eq!(
            strongly_controllable_witness(&bm, &[0]),
            Control::Controllable {
                player: 0,
                state: 0,
                action: 0
            }
        );
        assert_eq!(strongly_controllable_witness(&bm, &[2]), Control::Closed);
        assert_eq!(
            strongly_controllable_witness(&fixtures::two_exit(), &[0, 1]),
            Control::Neither
        );
        let c3 = fixtures::chain3();
        assert_eq!(
            strongly_controllable_witness(&c3, &[0]),
            Control::Controllable {
                player: 1,
                state: 0,
                action: 1
            }
        );
        assert_eq!(
            strongly_controllable_witness(&c3, &[1]),
            Control::Controllable {
                player: 0,
                state: 1,
                action: 1
            }
        );
    }

    #[test]
    fn reach_basics() {
        let g = fixtures::example2();
        assert_eq!(almost_sure_reach(&g, &[0, 1], &[0]), vec![0, 1]);
        assert_eq!(almost_sure_reach(&g, &[0, 1], &[1]), vec![0, 1]);
        // every profile at s0 can leave {s0, s1}
        let e1 = fixtures::example1(0.5, 1.0);
        assert_eq!(almost_sure_reach(&e1, &[0, 1], &[0]), vec![0]);
        let (set, choice) = reach_with_profile(&fixtures::big_match(), &[0, 2], &[2]);
        assert_eq!(set, vec![0, 2]);
        assert_eq!(choice[0], Some(0)); // T|L
    }

    #[test]
    fn siblings() {
        let g = fixtures::two_exit();
        let p = sibling_partition(&g, &Partition::trivial(3));
        assert_eq!(p.blocks(), &[vec![0, 1], vec![2]]);
        assert_eq!(sibling_partition(&g, &p), p);
    }

    #[test]
    fn classification() {
        let bm = fixtures::big_match();
        let r = classify(&bm, &[vec![0.5, 0.0, 1.0], vec![0.5, 1.0, 0.0]], 1e-4);
        assert!(r.strongly_controllable);
        assert_eq!(r.sibling_partition, Partition::singletons(3));
        let e2 = fixtures::example2();
        let r = classify(&e2, &[vec![3.0, 3.0 + 1e-4]], 6e-4);
        assert_eq!(r.tags, vec![Control::Closed]);
        assert_eq!(r.borderline, vec![(0, 1)]);
        let r = classify(&fixtures::two_exit(), &[vec![1.0, 1.0, 1.0]], 1e-4);
        assert!(!r.strongly_controllable);
    }

    #[test]
    fn property_rules() {
        let bm = fixtures::big_match();
        assert!(check_property_sufficient(&bm, &Partition::singletons(3)));
        let c3 = fixtures::chain3();
        assert!(!check_property_sufficient(&c3, &Partition::singletons(3)));
        let restricted = crate::game::GameBuilder::new(&["1"])
            .state("a", &[&["x", "y"]])
            .state("b", &[&["x"]])
            .state("c", &[&["x"]])
            .entry("a", "x", &[0.0], &[("b", 1.0)])
            .entry("a", "y", &[0.0], &[("c", 1.0)])
            .entry("b", "x", &[0.0], &[("a", 0.5), ("c", 0.5)])
            .entry("c", "x", &[1.0], &[("c", 1.0)])
            .build()
            .unwrap();
        assert!(check_property_sufficient(
            &restricted,
            &Partition::new(3, vec![vec![0, 1], vec![2]]).unwrap()
        ));
        assert!(!check_property_sufficient(
            &restricted,
            &Partition::singletons(3)
        ));
    }
}
