//! Dense two-phase simplex with Bland's rule, and matrix-game values.
//!
//! Problems in this crate have at most a few hundred columns, so the full
//! tableau is kept in memory and reduced costs are recomputed every pivot.

use thiserror::Error;

/// Pivot and feasibility tolerance.
pub const LP_TOL: f64 = 1e-9;

const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LpError {
    #[error("infeasible")]
    Infeasible,
    #[error("unbounded")]
    Unbounded,
    #[error("pivot limit reached")]
    PivotLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<(usize, f64)>,
    rel: Relation,
    rhs: f64,
}

/// `maximize cᵀx` subject to linear rows; variables are nonnegative unless
/// marked free.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    free: Vec<bool>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub objective: f64,
    pub x: Vec<f64>,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        Self {
            objective: vec![0.0; num_vars],
            free: vec![false; num_vars],
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn set_free(&mut self, var: usize) {
        self.free[var] = true;
    }

    pub fn set_objective(&mut self, var: usize, c: f64) {
        self.objective[var] = c;
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, rel: Relation, rhs: f64) {
        self.rows.push(Row { coeffs, rel, rhs });
    }

    pub fn maximize(&self) -> Result<LpSolution, LpError> {
        // expanded columns: x+ (and x- for free vars), then slacks, then artificials
        let n = self.objective.len();
        let mut pos = vec![0usize; n];
        let mut neg = vec![None; n];
        let mut ncol = 0;
        for j in 0..n {
            pos[j] = ncol;
            ncol += 1;
            if self.free[j] {
                neg[j] = Some(ncol);
                ncol += 1;
            }
        }
        let structural = ncol;
        let m = self.rows.len();
        let mut dense: Vec<(Vec<f64>, Relation, f64)> = Vec::with_capacity(m);
        for row in &self.rows {
            let mut r = vec![0.0; structural];
            for &(j, a) in &row.coeffs {
                r[pos[j]] += a;
                if let Some(k) = neg[j] {
                    r[k] -= a;
                }
            }
            let (mut rel, mut rhs) = (row.rel, row.rhs);
            if rhs < 0.0 {
                r.iter_mut().for_each(|x| *x = -*x);
                rhs = -rhs;
                rel = match rel {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
            dense.push((r, rel, rhs));
        }
        let slacks = dense.iter().filter(|d| d.1 != Relation::Eq).count();
        let artificials = dense.iter().filter(|d| d.1 != Relation::Le).count();
        let width = structural + slacks + artificials;
        let first_art = structural + slacks;
        let mut tab = vec![vec![0.0; width + 1]; m];
        let mut basis = vec![0usize; m];
        let (mut sk, mut ak) = (structural, first_art);
        for (i, (r, rel, rhs)) in dense.into_iter().enumerate() {
            tab[i][..structural].copy_from_slice(&r);
            tab[i][width] = rhs;
            match rel {
                Relation::Le => {
                    tab[i][sk] = 1.0;
                    basis[i] = sk;
                    sk += 1;
                }
                Relation::Ge => {
                    tab[i][sk] = -1.0;
                    sk += 1;
                    tab[i][ak] = 1.0;
                    basis[i] = ak;
                    ak += 1;
                }
                Relation::Eq => {
                    tab[i][ak] = 1.0;
                    basis[i] = ak;
                    ak += 1;
                }
            }
        }

        let mut t = Tableau {
            tab,
            basis,
            width,
            pivots: 0,
        };
        if artificials > 0 {
            let mut cost = vec![0.0; width];
            cost[first_art..].iter_mut().for_each(|c| *c = -1.0);
            t.optimize(&cost, width)?;
            let infeas: f64 = (0..m)
                .filter(|&i| t.basis[i] >= first_art)
                .map(|i| t.tab[i][width])
                .sum();
            let scale = 1.0 + self.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
            if infeas > LP_TOL * scale {
                return Err(LpError::Infeasible);
            }
            // drive remaining (zero-level) artificials out, dropping redundant rows
            let mut i = 0;
            while i < t.tab.len() {
                if t.basis[i] >= first_art {
                    match (0..first_art).find(|&j| t.tab[i][j].abs() > LP_TOL) {
                        Some(j) => {
                            t.pivot(i, j);
                            i += 1;
                        }
                        None => {
                            t.tab.remove(i);
                            t.basis.remove(i);
                        }
                    }
                } else {
                    i += 1;
                }
            }
        }
        let mut cost = vec![0.0; width];
        for j in 0..n {
            cost[pos[j]] = self.objective[j];
            if let Some(k) = neg[j] {
                cost[k] = -self.objective[j];
            }
        }
        t.optimize(&cost, first_art)?;

        let mut val = vec![0.0; width];
        for (i, &b) in t.basis.iter().enumerate() {
            val[b] = t.tab[i][width];
        }
        let x: Vec<f64> = (0..n)
            .map(|j| val[pos[j]] - neg[j].map_or(0.0, |k| val[k]))
            .collect();
        let objective = x.iter().zip(&self.objective).map(|(a, b)| a * b).sum();
        Ok(LpSolution { objective, x })
    }
}

struct Tableau {
    tab: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
    pivots: usize,
}

impl Tableau {
    /// Maximizes `cost` using only columns below `allowed` as entering.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> Result<(), LpError> {
        loop {
            let entering = (0..allowed).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let d = cost[j]
                    - self
                        .tab
                        .iter()
                        .zip(&self.basis)
                        .map(|(r, &b)| cost[b] * r[j])
                        .sum::<f64>();
                d > LP_TOL
            });
            let Some(j) = entering else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for (i, r) in self.tab.iter().enumerate() {
                if r[j] > LP_TOL {
                    let ratio = r[self.width] / r[j];
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            if ratio < best - LP_TOL
                                || (ratio <= best + LP_TOL && self.basis[i] < self.basis[k])
                            {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            let Some((i, _)) = leave else {
                return Err(LpError::Unbounded);
            };
            self.pivot(i, j);
            self.pivots += 1;
            if self.pivots > MAX_PIVOTS {
                return Err(LpError::PivotLimit);
            }
        }
    }

    fn pivot(&mut self, i: usize, j: usize) {
        let p = self.tab[i][j];
        self.tab[i].iter_mut().for_each(|x| *x /= p);
        let pivot_row = self.tab[i].clone();
        for (k, r) in self.tab.iter_mut().enumerate() {
            if k == i {
                continue;
            }
            let f = r[j];
            if f != 0.0 {
                for (x, y) in r.iter_mut().zip(&pivot_row) {
                    *x -= f * y;
                }
                r[j] = 0.0;
            }
        }
        self.basis[i] = j;
    }
}

/// Value and optimal mixed strategies of a zero-sum matrix game where the
/// row player maximizes.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGameSolution {
    pub value: f64,
    pub row: Vec<f64>,
    pub col: Vec<f64>,
}

pub fn solve_matrix_game(m: &[Vec<f64>]) -> Result<MatrixGameSolution, LpError> {
    let rows = m.len();
    let cols = m[0].len();
    if cols == 1 {
        let r = argbest(m.iter().map(|r| r[0]), |a, b| a > b);
        return Ok(MatrixGameSolution {
            value: m[r][0],
            row: unit(rows, r),
            col: vec![1.0],
        });
    }
    if rows == 1 {
        let c = argbest(m[0].iter().copied(), |a, b| a < b);
        return Ok(MatrixGameSolution {
            value: m[0][c],
            row: vec![1.0],
            col: unit(cols, c),
        });
    }
    // row player: max v s.t. xᵀ M ≥ v, Σx = 1
    let mut lp = LinearProgram::new(rows + 1);
    lp.set_free(rows);
    lp.set_objective(rows, 1.0);
    for c in 0..cols {
        let mut coeffs: Vec<(usize, f64)> = (0..rows).map(|r| (r, m[r][c])).collect();
        coeffs.push((rows, -1.0));
        lp.add_row(coeffs, Relation::Ge, 0.0);
    }
    lp.add_row((0..rows).map(|r| (r, 1.0)).collect(), Relation::Eq, 1.0);
    let primal = lp.maximize()?;

    // column player: min w s.t. M y ≤ w, Σy = 1
    let mut lp = LinearProgram::new(cols + 1);
    lp.set_free(cols);
    lp.set_objective(cols, -1.0);
    for (r, row) in m.iter().enumerate() {
        let _ = r;
        let mut coeffs: Vec<(usize, f64)> = (0..cols).map(|c| (c, row[c])).collect();
        coeffs.push((cols, -1.0));
        lp.add_row(coeffs, Relation::Le, 0.0);
    }
    lp.add_row((0..cols).map(|c| (c, 1.0)).collect(), Relation::Eq, 1.0);
    let dual = lp.maximize()?;

    Ok(MatrixGameSolution {
        value: primal.x[rows],
        row: clean_distribution(&primal.x[..rows]),
        col: clean_distribution(&dual.x[..cols]),
    })
}

fn argbest(it: impl Iterator<Item = f64>, better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = (0, f64::NAN);
    for (k, v) in it.enumerate() {
        if k == 0 || better(v, best.1) {
            best = (k, v);
        }
    }
    best.0
}

fn unit(n: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    v
}

/// Clips round-off negatives and renormalizes.
pub fn clean_distribution(x: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = x.iter().map(|&p| if p < 0.0 { 0.0 } else { p }).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|p| *p /= s);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_lp() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36
        let mut lp = LinearProgram::new(2);
        lp.set_objective(0, 3.0);
        lp.set_objective(1, 5.0);
        lp.add_row(vec![(0, 1.0)], Relation::Le, 4.0);
        lp.add_row(vec![(1, 2.0)], Relation::Le, 12.0);
        lp.add_row(vec![(0, 3.0), (1, 2.0)], Relation::Le, 18.0);
        let s = lp.maximize().unwrap();
        assert!((s.objective - 36.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge_rows() {
        // max -x - y, x + y = 2, x ≥ 0.5 → objective -2
        let mut lp = LinearProgram::new(2);
        lp.set_objective(0, -1.0);
        lp.set_objective(1, -1.0);
        lp.add_row(vec![(0, 1.0), (1, 1.0)], Relation::Eq, 2.0);
        lp.add_row(vec![(0, 1.0)], Relation::Ge, 0.5);
        let s = lp.maximize().unwrap();
        assert!((s.objective + 2.0).abs() < 1e-9);
        assert!(s.x[0] >= 0.5 - 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.add_row(vec![(0, 1.0)], Relation::Le, 1.0);
        lp.add_row(vec![(0, 1.0)], Relation::Ge, 2.0);
        assert_eq!(lp.maximize(), Err(LpError::Infeasible));
        let mut lp = LinearProgram::new(1);
        lp.set_objective(0, 1.0);
        assert_eq!(lp.maximize(), Err(LpError::Unbounded));
    }

    #[test]
    fn free_variable_goes_negative() {
        // max z, z ≤ -3, z free
        let mut lp = LinearProgram::new(1);
        lp.set_free(0);
        lp.set_objective(0, 1.0);
        lp.add_row(vec![(0, 1.0)], Relation::Le, -3.0);
        let s = lp.maximize().unwrap();
        assert!((s.x[0] + 3.0).abs() < 1e-9);
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new(2);
        lp.set_objective(0, 1.0);
        lp.add_row(vec![(0, 1.0), (1, 1.0)], Relation::Eq, 1.0);
        lp.add_row(vec![(0, 2.0), (1, 2.0)], Relation::Eq, 2.0);
        let s = lp.maximize().unwrap();
        assert!((s.objective - 1.0).abs() < 1e-9);
    }

    #[test]
    fn matching_pennies() {
        let s = solve_matrix_game(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        assert!(s.value.abs() < 1e-9);
        assert!((s.row[0] - 0.5).abs() < 1e-9 && (s.col[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn saddle_point_and_degenerate_shapes() {
        let s = solve_matrix_game(&[vec![3.0, 1.0], vec![4.0, 2.0]]).unwrap();
        assert!((s.value - 2.0).abs() < 1e-9);
        assert_eq!(
            solve_matrix_game(&[vec![1.0], vec![5.0]]).unwrap().value,
            5.0
        );
        assert_eq!(
            solve_matrix_game(&[vec![1.0, 5.0, -2.0]]).unwrap().value,
            -2.0
        );
    }

    #[test]
    fn brute_force_matrix_values() {
        // 2x2 games: compare with a fine grid over the row mixture
        let games = [
            [[0.3, -1.2], [0.7, 0.9]],
            [[2.0, -1.0], [-3.0, 4.0]],
            [[0.0, 1.0], [1.0, 0.0]],
        ];
        for g in games {
            let m: Vec<Vec<f64>> = g.iter().map(|r| r.to_vec()).collect();
            let s = solve_matrix_game(&m).unwrap();
            let mut best = f64::NEG_INFINITY;
            for k in 0..=100_000 {
                let p = k as f64 / 100_000.0;
                let v = (0..2)
                    .map(|c| p * m[0][c] + (1.0 - p) * m[1][c])
                    .fold(f64::INFINITY, f64::min);
                best = best.max(v);
            }
            assert!((s.value - best).abs() < 1e-4, "{} vs {}", s.value, best);
        }
    }
}
