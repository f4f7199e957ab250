//! Dense two-phase simplex for small linear programs.
//!
//! Solves `maximize c.x subject to A x <= b, x >= 0`. Pivoting follows Bland's
//! rule (lowest eligible index for both the entering and the leaving variable),
//! so the method terminates and its result is deterministic. Intended for the
//! handful of variables and at most a few dozen rows of a certificate search.

use thiserror::Error;

const PIVOT_EPS: f64 = 1e-12;
const COST_EPS: f64 = 1e-11;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("constraint {row} has {got} coefficients, expected {expected}")]
    Shape { row: usize, expected: usize, got: usize },
    #[error("non-finite coefficient in linear program")]
    NonFinite,
    #[error("simplex iteration limit ({0}) reached")]
    IterationLimit(usize),
}

#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    objective: Vec<f64>,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

impl LinearProgram {
    pub fn maximize(objective: Vec<f64>) -> Self {
        LinearProgram { objective, rows: Vec::new(), rhs: Vec::new() }
    }

    /// Add `coeffs . x <= bound`.
    pub fn less_eq(mut self, coeffs: Vec<f64>, bound: f64) -> Self {
        self.rows.push(coeffs);
        self.rhs.push(bound);
        self
    }

    /// Add `coeffs . x >= bound`.
    pub fn greater_eq(self, coeffs: Vec<f64>, bound: f64) -> Self {
        self.less_eq(coeffs.into_iter().map(|v| -v).collect(), -bound)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn solve(&self) -> Result<LpOutcome, LpError> {
        let nv = self.num_vars();
        for (row, coeffs) in self.rows.iter().enumerate() {
            if coeffs.len() != nv {
                return Err(LpError::Shape { row, expected: nv, got: coeffs.len() });
            }
        }
        let finite = self
            .objective
            .iter()
            .chain(self.rows.iter().flatten())
            .chain(&self.rhs)
            .all(|v| v.is_finite());
        if !finite {
            return Err(LpError::NonFinite);
        }
        Tableau::build(self).solve(&self.objective)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    /// `m` rows of `cols + 1` entries; the last entry is the right-hand side.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    nv: usize,
    /// First artificial column; artificials occupy `first_art..cols`.
    first_art: usize,
    cols: usize,
}

enum Status {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Tableau {
        let m = lp.rows.len();
        let nv = lp.num_vars();
        let n_art = lp.rhs.iter().filter(|b| **b < 0.0).count();
        let first_art = nv + m;
        let cols = first_art + n_art;
        let mut t = vec![vec![0.0; cols + 1]; m];
        let mut basis = vec![0; m];
        let mut art = first_art;
        for i in 0..m {
            let flip = lp.rhs[i] < 0.0;
            let sign = if flip { -1.0 } else { 1.0 };
            for j in 0..nv {
                t[i][j] = sign * lp.rows[i][j];
            }
            t[i][nv + i] = sign;
            t[i][cols] = sign * lp.rhs[i];
            if flip {
                t[i][art] = 1.0;
                basis[i] = art;
                art += 1;
            } else {
                basis[i] = nv + i;
            }
        }
        Tableau { t, basis, nv, first_art, cols }
    }

    fn solve(mut self, objective: &[f64]) -> Result<LpOutcome, LpError> {
        let limit = 10_000 + 100 * (self.cols + self.t.len());
        let scale = 1.0 + self.t.iter().map(|r| r[self.cols].abs()).fold(0.0, f64::max);

        if self.first_art < self.cols {
            let mut cost = vec![0.0; self.cols];
            for c in &mut cost[self.first_art..] {
                *c = -1.0;
            }
            self.run(&cost, self.cols, limit)?;
            let infeasibility: f64 = self
                .basis
                .iter()
                .zip(&self.t)
                .filter(|(b, _)| **b >= self.first_art)
                .map(|(_, row)| row[self.cols])
                .sum();
            if infeasibility > 1e-9 * scale {
                return Ok(LpOutcome::Infeasible);
            }
            self.expel_artificials();
        }

        let mut cost = vec![0.0; self.cols];
        cost[..self.nv].copy_from_slice(objective);
        match self.run(&cost, self.first_art, limit)? {
            Status::Unbounded => Ok(LpOutcome::Unbounded),
            Status::Optimal => {
                let mut x = vec![0.0; self.nv];
                for (row, &b) in self.t.iter().zip(&self.basis) {
                    if b < self.nv {
                        x[b] = row[self.cols].max(0.0);
                    }
                }
                let value = x.iter().zip(objective).map(|(a, b)| a * b).sum();
                Ok(LpOutcome::Optimal { x, value })
            }
        }
    }

    /// Primal simplex over columns `0..allowed`, maximizing `cost`.
    fn run(&mut self, cost: &[f64], allowed: usize, limit: usize) -> Result<Status, LpError> {
        for _ in 0..limit {
            let entering = (0..allowed).find(|&j| {
                !self.basis.contains(&j) && self.reduced_cost(cost, j) > COST_EPS
            });
            let Some(j) = entering else {
                return Ok(Status::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.t.iter().enumerate() {
                if row[j] > PIVOT_EPS {
                    let ratio = row[self.cols] / row[j];
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            if ratio < best - 1e-14 * best.abs().max(1.0)
                                || (ratio <= best + 1e-14 * best.abs().max(1.0)
                                    && self.basis[i] < self.basis[k])
                            {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Ok(Status::Unbounded),
                Some((i, _)) => self.pivot(i, j),
            }
        }
        Err(LpError::IterationLimit(limit))
    }

    fn reduced_cost(&self, cost: &[f64], j: usize) -> f64 {
        cost[j]
            - self
                .t
                .iter()
                .zip(&self.basis)
                .map(|(row, &b)| cost[b] * row[j])
                .sum::<f64>()
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let p = self.t[r][j];
        for v in &mut self.t[r] {
            *v /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let factor = row[j];
            if factor != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * pv;
                }
                row[j] = 0.0;
            }
        }
        self.basis[r] = j;
    }

    /// After phase one, pivot zero-level artificials out of the basis; rows
    /// where that is impossible are redundant and dropped.
    fn expel_artificials(&mut self) {
        let mut i = 0;
        while i < self.t.len() {
            if self.basis[i] >= self.first_art {
                let col = (0..self.first_art).find(|&j| self.t[i][j].abs() > 1e-9);
                match col {
                    Some(j) => {
                        self.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        self.t.remove(i);
                        self.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
    }
}
