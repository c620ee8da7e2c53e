//! Small dense two-phase simplex with Bland's rule.
//!
//! Meant for the handful of variables and at most a few thousand rows that
//! payoff polytopes produce. All variables are non-negative.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-12;
const MAX_PIVOTS: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `maximize objective · x` subject to `constraints`, `x ≥ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

impl LinearProgram {
    pub fn new(vars: usize) -> Self {
        LinearProgram {
            objective: vec![0.0; vars],
            constraints: Vec::new(),
        }
    }

    pub fn vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.vars());
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        Tableau::build(self)?.run(self)
    }
}

struct Tableau {
    /// `rows × (cols + 1)`; the last column is the right-hand side.
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    vars: usize,
    /// First artificial column; artificials occupy `artificial..cols`.
    artificial: usize,
    cols: usize,
    scale: f64,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Result<Self> {
        let vars = lp.vars();
        let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::with_capacity(lp.constraints.len());
        for c in &lp.constraints {
            if c.coeffs.len() != vars {
                return Err(Error::Domain(format!(
                    "constraint has {} coefficients for {vars} variables",
                    c.coeffs.len()
                )));
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain("non-finite linear program data".into()));
            }
            // keep every right-hand side non-negative
            if c.rhs < 0.0 {
                let flipped = match c.relation {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
                rows.push((c.coeffs.iter().map(|v| -v).collect(), flipped, -c.rhs));
            } else {
                rows.push((c.coeffs.clone(), c.relation, c.rhs));
            }
        }
        let slacks = rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let artificials = rows.iter().filter(|r| r.1 != Relation::Le).count();
        let artificial = vars + slacks;
        let cols = artificial + artificials;
        let scale = rows
            .iter()
            .flat_map(|r| r.0.iter().copied().chain(std::iter::once(r.2)))
            .fold(1.0f64, |m, v| m.max(v.abs()));

        let mut a = Vec::with_capacity(rows.len());
        let mut basis = Vec::with_capacity(rows.len());
        let (mut s, mut t) = (vars, artificial);
        for (coeffs, rel, rhs) in rows {
            let mut row = vec![0.0; cols + 1];
            row[..vars].copy_from_slice(&coeffs);
            row[cols] = rhs;
            match rel {
                Relation::Le => {
                    row[s] = 1.0;
                    basis.push(s);
                    s += 1;
                }
                Relation::Ge => {
                    row[s] = -1.0;
                    s += 1;
                    row[t] = 1.0;
                    basis.push(t);
                    t += 1;
                }
                Relation::Eq => {
                    row[t] = 1.0;
                    basis.push(t);
                    t += 1;
                }
            }
            a.push(row);
        }
        Ok(Tableau {
            a,
            basis,
            vars,
            artificial,
            cols,
            scale,
        })
    }

    fn pivot(&mut self, r: usize, c: usize, cost: &mut [f64]) {
        let p = self.a[r][c];
        for v in self.a[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.a[r].clone();
        for (i, row) in self.a.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, &pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        let f = cost[c];
        if f != 0.0 {
            for (v, &pv) in cost.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            cost[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Minimises the reduced-cost row `cost` (length `cols + 1`, last entry is
    /// minus the objective value) over columns `< limit`.
    fn optimise(&mut self, cost: &mut [f64], limit: usize) -> Result<bool> {
        let tol = PIVOT_TOL * self.scale;
        for _ in 0..MAX_PIVOTS {
            // Bland: lowest-index improving column, lowest-index basic variable on ratio ties
            let Some(enter) = (0..limit).find(|&j| cost[j] < -tol) else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.a.iter().enumerate() {
                if row[enter] > tol {
                    let ratio = row[self.cols] / row[enter];
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - tol * lr.abs().max(1.0) * 1e-3
                                || (ratio <= lr + tol * lr.abs().max(1.0) * 1e-3
                                    && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Ok(false);
            };
            self.pivot(r, enter, cost);
        }
        Err(Error::NonConvergence {
            method: "simplex",
            iterations: MAX_PIVOTS,
            residual: f64::NAN,
        })
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpOutcome> {
        let cols = self.cols;
        let feas_tol = 1e-9 * self.scale;

        // phase one: minimise the sum of artificials
        let mut cost = vec![0.0; cols + 1];
        cost[self.artificial..cols].fill(1.0);
        for (i, &b) in self.basis.clone().iter().enumerate() {
            if b >= self.artificial {
                for (c, v) in cost.iter_mut().zip(&self.a[i]) {
                    *c -= v;
                }
            }
        }
        self.optimise(&mut cost, cols)?;
        if -cost[cols] > feas_tol {
            return Ok(LpOutcome::Infeasible);
        }
        // drive zero-level artificials out of the basis; drop redundant rows
        let mut i = 0;
        while i < self.a.len() {
            if self.basis[i] >= self.artificial {
                let tol = PIVOT_TOL * self.scale;
                match (0..self.artificial).find(|&j| self.a[i][j].abs() > tol) {
                    Some(j) => {
                        self.pivot(i, j, &mut cost);
                        i += 1;
                    }
                    None => {
                        self.a.remove(i);
                        self.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }

        // phase two: maximise the objective, i.e. minimise its negation
        let mut cost = vec![0.0; cols + 1];
        for (j, &c) in lp.objective.iter().enumerate() {
            cost[j] = -c;
        }
        for (i, &b) in self.basis.clone().iter().enumerate() {
            let f = cost[b];
            if f != 0.0 {
                for (c, v) in cost.iter_mut().zip(&self.a[i]) {
                    *c -= f * v;
                }
            }
        }
        if !self.optimise(&mut cost, self.artificial)? {
            return Ok(LpOutcome::Unbounded);
        }
        let mut x = vec![0.0; self.vars];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.vars {
                x[b] = self.a[i][cols].max(0.0);
            }
        }
        let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpOutcome::Optimal { x, value })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimal(o: LpOutcome) -> (Vec<f64>, f64) {
        match o {
            LpOutcome::Optimal { x, value } => (x, value),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_maximum() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![3.0, 5.0];
        lp.add(vec![1.0, 0.0], Relation::Le, 4.0);
        lp.add(vec![0.0, 2.0], Relation::Le, 12.0);
        lp.add(vec![3.0, 2.0], Relation::Le, 18.0);
        let (x, v) = optimal(lp.solve().unwrap());
        assert!((v - 36.0).abs() < 1e-9);
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + y  s.t. x + y = 3, x ≥ 1, y ≥ 0.5  → value 3
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-1.0, -2.0];
        lp.add(vec![1.0, 1.0], Relation::Eq, 3.0);
        lp.add(vec![1.0, 0.0], Relation::Ge, 1.0);
        lp.add(vec![0.0, 1.0], Relation::Ge, 0.5);
        let (x, v) = optimal(lp.solve().unwrap());
        assert!((x[0] - 2.5).abs() < 1e-9 && (x[1] - 0.5).abs() < 1e-9);
        assert!((v + 3.5).abs() < 1e-9);
    }

    #[test]
    fn infeasible_detected() {
        let mut lp = LinearProgram::new(1);
        lp.add(vec![1.0], Relation::Ge, 2.0);
        lp.add(vec![1.0], Relation::Le, 1.0);
        assert_eq!(lp.solve().unwrap(), LpOutcome::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 0.0];
        lp.add(vec![1.0, -1.0], Relation::Le, 1.0);
        assert_eq!(lp.solve().unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn negative_rhs_and_redundant_equalities() {
        // -x ≥ -2 means x ≤ 2; duplicated equality x + y = 1
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 0.0];
        lp.add(vec![-1.0, 0.0], Relation::Ge, -2.0);
        lp.add(vec![1.0, 1.0], Relation::Eq, 1.0);
        lp.add(vec![2.0, 2.0], Relation::Eq, 2.0);
        let (x, v) = optimal(lp.solve().unwrap());
        assert!((v - 1.0).abs() < 1e-9 && x[1].abs() < 1e-9);
    }

    #[test]
    fn degenerate_cycle_prone_program_terminates() {
        // Beale's example, which cycles under the largest-coefficient rule
        let mut lp = LinearProgram::new(4);
        lp.objective = vec![0.75, -20.0, 0.5, -6.0];
        lp.add(vec![0.25, -8.0, -1.0, 9.0], Relation::Le, 0.0);
        lp.add(vec![0.5, -12.0, -0.5, 3.0], Relation::Le, 0.0);
        lp.add(vec![0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0);
        let (x, v) = optimal(lp.solve().unwrap());
        assert!((v - 1.25).abs() < 1e-9, "{v}");
        assert!((x[0] - 1.0).abs() < 1e-9 && (x[2] - 1.0).abs() < 1e-9);
    }
}
