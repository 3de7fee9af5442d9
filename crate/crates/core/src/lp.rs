//! Dense linear programs and a two-phase tableau simplex with Bland's rule.
//!
//! The solver converts the program to standard form (nonnegative columns,
//! nonnegative right-hand sides), runs phase one on artificial variables for
//! `>=` and `=` rows, drops redundant rows, then optimizes the real objective.
//! Entering and leaving variables are always chosen by lowest index among
//! eligible candidates, which rules out cycling on degenerate vertices.

use std::fmt::{self, Write as _};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

impl RowSense {
    fn symbol(self) -> &'static str {
        match self {
            RowSense::Le => "<=",
            RowSense::Ge => ">=",
            RowSense::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub sense: RowSense,
    pub rhs: f64,
}

/// `direction c^T x` subject to constraint rows and per-variable lower bounds
/// (`None` marks a free variable).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub direction: Direction,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower_bounds: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Largest constraint or bound violation of `x` in the original program.
    pub max_violation: f64,
    /// Smallest phase-two reduced cost (minimization form) at termination.
    pub min_reduced_cost: f64,
}

const PIVOT_EPS: f64 = 1e-11;
const REDUCED_COST_EPS: f64 = 1e-11;
const FEASIBILITY_EPS: f64 = 1e-9;
const ITERATION_LIMIT: usize = 200_000;

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower_bounds.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} lower bounds for {n} variables",
                self.lower_bounds.len()
            )));
        }
        for (i, row) in self.constraints.iter().enumerate() {
            if row.coeffs.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "constraint {i} has {} coefficients, expected {n}",
                    row.coeffs.len()
                )));
            }
            if !row.rhs.is_finite() || row.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidConfig(format!("constraint {i} is not finite")));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig("objective is not finite".into()));
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Signed slack of each row at `x`: `lhs - rhs` for `>=` and `=`, `rhs - lhs` for `<=`.
    pub fn slacks(&self, x: &[f64]) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|row| {
                let lhs: f64 = row.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
                match row.sense {
                    RowSense::Le => row.rhs - lhs,
                    RowSense::Ge | RowSense::Eq => lhs - row.rhs,
                }
            })
            .collect()
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .constraints
            .iter()
            .zip(self.slacks(x))
            .map(|(row, s)| match row.sense {
                RowSense::Eq => s.abs(),
                _ => (-s).max(0.0),
            });
        let bounds = self
            .lower_bounds
            .iter()
            .zip(x)
            .map(|(lb, v)| lb.map_or(0.0, |l| (l - v).max(0.0)));
        rows.chain(bounds).fold(0.0, f64::max)
    }
}

/// Plain-text canonical dump: objective row, one line per constraint, then bounds.
impl fmt::Display for LinearProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64]| {
            let mut s = String::new();
            for (i, c) in v.iter().enumerate() {
                if i > 0 {
                    s.push(' ');
                }
                let _ = write!(s, "{c:.17e}");
            }
            s
        };
        let dir = match self.direction {
            Direction::Minimize => "min",
            Direction::Maximize => "max",
        };
        writeln!(f, "{dir} {}", join(&self.objective))?;
        for row in &self.constraints {
            writeln!(f, "row {} {} {:.17e}", join(&row.coeffs), row.sense.symbol(), row.rhs)?;
        }
        let bounds: Vec<String> = self
            .lower_bounds
            .iter()
            .map(|b| b.map_or_else(|| "free".to_string(), |l| format!("{l:.17e}")))
            .collect();
        writeln!(f, "lower {}", bounds.join(" "))
    }
}

/// How an original variable maps onto standard-form columns.
#[derive(Debug, Clone, Copy)]
enum ColumnMap {
    Shifted { col: usize, lower: f64 },
    Split { pos: usize, neg: usize },
}

struct Tableau {
    /// `rows x (cols + 1)`, last entry of each row is the right-hand side.
    rows: Vec<Vec<f64>>,
    /// Reduced-cost row; last entry is minus the current objective.
    cost: Vec<f64>,
    basis: Vec<usize>,
    cols: usize,
    iterations: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let width = self.cols + 1;
        let p = self.rows[r][c];
        for j in 0..width {
            self.rows[r][j] /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for j in 0..width {
                    row[j] -= f * pivot_row[j];
                }
                row[c] = 0.0;
            }
        }
        let f = self.cost[c];
        if f != 0.0 {
            for j in 0..width {
                self.cost[j] -= f * pivot_row[j];
            }
            self.cost[c] = 0.0;
        }
        self.basis[r] = c;
        self.iterations += 1;
    }

    /// Installs `costs` as the objective and prices out the current basis.
    fn set_costs(&mut self, costs: &[f64]) {
        self.cost = costs.to_vec();
        self.cost.push(0.0);
        for i in 0..self.rows.len() {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..=self.cols {
                    self.cost[j] -= cb * self.rows[i][j];
                }
            }
        }
    }

    /// Bland's rule iterations over columns in `eligible`.
    fn optimize(&mut self, eligible: &[bool]) -> Result<()> {
        loop {
            if self.iterations > ITERATION_LIMIT {
                return Err(Error::IterationLimit(ITERATION_LIMIT));
            }
            let Some(enter) = (0..self.cols)
                .find(|&j| eligible[j] && self.cost[j] < -REDUCED_COST_EPS)
            else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][enter];
                if a > PIVOT_EPS {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((best, br)) => {
                            if ratio < br - 1e-14
                                || (ratio <= br + 1e-14 && self.basis[i] < self.basis[best])
                            {
                                Some((i, ratio))
                            } else {
                                Some((best, br))
                            }
                        }
                    };
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, enter),
                None => return Err(Error::Unbounded(enter)),
            }
        }
    }
}

/// Solves `lp` to optimality.
///
/// Returns [`Error::Infeasible`] with the phase-one objective when no feasible
/// point exists and [`Error::Unbounded`] with the offending original variable.
pub fn simplex_solve(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let n = lp.num_vars();

    let mut maps = Vec::with_capacity(n);
    let mut struct_cols = 0usize;
    for lb in &lp.lower_bounds {
        match lb {
            Some(l) => {
                maps.push(ColumnMap::Shifted { col: struct_cols, lower: *l });
                struct_cols += 1;
            }
            None => {
                maps.push(ColumnMap::Split { pos: struct_cols, neg: struct_cols + 1 });
                struct_cols += 2;
            }
        }
    }

    // Standard-form rows with nonnegative right-hand sides.
    let mut std_rows: Vec<(Vec<f64>, RowSense, f64)> = Vec::with_capacity(lp.constraints.len());
    for row in &lp.constraints {
        let mut coeffs = vec![0.0; struct_cols];
        let mut rhs = row.rhs;
        for (j, &a) in row.coeffs.iter().enumerate() {
            match maps[j] {
                ColumnMap::Shifted { col, lower } => {
                    coeffs[col] = a;
                    rhs -= a * lower;
                }
                ColumnMap::Split { pos, neg } => {
                    coeffs[pos] = a;
                    coeffs[neg] = -a;
                }
            }
        }
        let mut sense = row.sense;
        if rhs < 0.0 {
            coeffs.iter_mut().for_each(|c| *c = -*c);
            rhs = -rhs;
            sense = match sense {
                RowSense::Le => RowSense::Ge,
                RowSense::Ge => RowSense::Le,
                RowSense::Eq => RowSense::Eq,
            };
        }
        std_rows.push((coeffs, sense, rhs));
    }

    let num_slack = std_rows.iter().filter(|r| r.1 != RowSense::Eq).count();
    let num_art = std_rows.iter().filter(|r| r.1 != RowSense::Le).count();
    let cols = struct_cols + num_slack + num_art;
    let art_start = struct_cols + num_slack;

    let mut rows = Vec::with_capacity(std_rows.len());
    let mut basis = Vec::with_capacity(std_rows.len());
    let (mut next_slack, mut next_art) = (struct_cols, art_start);
    for (coeffs, sense, rhs) in std_rows {
        let mut row = vec![0.0; cols + 1];
        row[..struct_cols].copy_from_slice(&coeffs);
        row[cols] = rhs;
        match sense {
            RowSense::Le => {
                row[next_slack] = 1.0;
                basis.push(next_slack);
                next_slack += 1;
            }
            RowSense::Ge => {
                row[next_slack] = -1.0;
                next_slack += 1;
                row[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            }
            RowSense::Eq => {
                row[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            }
        }
        rows.push(row);
    }

    let mut tab = Tableau {
        rows,
        cost: Vec::new(),
        basis,
        cols,
        iterations: 0,
    };

    // Phase one.
    if num_art > 0 {
        let mut phase_one = vec![0.0; cols];
        phase_one[art_start..].iter_mut().for_each(|c| *c = 1.0);
        tab.set_costs(&phase_one);
        tab.optimize(&vec![true; cols])?;
        let infeasibility = -tab.cost[cols];
        if infeasibility > FEASIBILITY_EPS {
            return Err(Error::Infeasible(infeasibility));
        }
        // Drive remaining artificials out of the basis; rows with no
        // replacement column are redundant and dropped.
        let mut i = 0;
        while i < tab.rows.len() {
            if tab.basis[i] >= art_start {
                match (0..art_start).find(|&j| tab.rows[i][j].abs() > 1e-9) {
                    Some(j) => {
                        tab.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        tab.rows.remove(i);
                        tab.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
    }

    // Phase two in minimization form.
    let sign = match lp.direction {
        Direction::Minimize => 1.0,
        Direction::Maximize => -1.0,
    };
    let mut costs = vec![0.0; cols];
    for (j, map) in maps.iter().enumerate() {
        let c = sign * lp.objective[j];
        match *map {
            ColumnMap::Shifted { col, .. } => costs[col] = c,
            ColumnMap::Split { pos, neg } => {
                costs[pos] = c;
                costs[neg] = -c;
            }
        }
    }
    tab.set_costs(&costs);
    let eligible: Vec<bool> = (0..cols).map(|j| j < art_start).collect();
    tab.optimize(&eligible).map_err(|e| match e {
        Error::Unbounded(col) => Error::Unbounded(original_column(&maps, col)),
        other => other,
    })?;

    let mut values = vec![0.0; cols];
    for (i, &b) in tab.basis.iter().enumerate() {
        values[b] = tab.rhs(i);
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|map| match *map {
            ColumnMap::Shifted { col, lower } => lower + values[col],
            ColumnMap::Split { pos, neg } => values[pos] - values[neg],
        })
        .collect();
    let min_reduced_cost = (0..art_start)
        .map(|j| tab.cost[j])
        .fold(f64::INFINITY, f64::min);
    Ok(LpSolution {
        objective: lp.evaluate(&x),
        max_violation: lp.max_violation(&x),
        iterations: tab.iterations,
        min_reduced_cost,
        x,
    })
}

/// Maps a standard-form column back to the original variable it came from
/// (slack columns map past the last variable).
fn original_column(maps: &[ColumnMap], col: usize) -> usize {
    maps.iter()
        .position(|m| match *m {
            ColumnMap::Shifted { col: c, .. } => c == col,
            ColumnMap::Split { pos, neg } => pos == col || neg == col,
        })
        .unwrap_or(maps.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn row(coeffs: &[f64], sense: RowSense, rhs: f64) -> Constraint {
        Constraint {
            coeffs: coeffs.to_vec(),
            sense,
            rhs,
        }
    }

    #[test]
    fn box_lp() {
        let lp = LinearProgram {
            direction: Direction::Maximize,
            objective: vec![1.0],
            constraints: vec![row(&[1.0], RowSense::Le, 1.0)],
            lower_bounds: vec![Some(0.0)],
        };
        let sol = simplex_solve(&lp).unwrap();
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.objective, 1.0, epsilon = 1e-12);
        assert!(sol.min_reduced_cost >= -1e-9);
    }

    #[test]
    fn redundant_equalities_terminate() {
        // x + y = 1 stated three times, max x + 2y with y <= 0.5.
        let lp = LinearProgram {
            direction: Direction::Maximize,
            objective: vec![1.0, 2.0],
            constraints: vec![
                row(&[1.0, 1.0], RowSense::Eq, 1.0),
                row(&[2.0, 2.0], RowSense::Eq, 2.0),
                row(&[1.0, 1.0], RowSense::Eq, 1.0),
                row(&[0.0, 1.0], RowSense::Le, 0.5),
            ],
            lower_bounds: vec![Some(0.0), Some(0.0)],
        };
        let sol = simplex_solve(&lp).unwrap();
        assert_abs_diff_eq!(sol.objective, 1.5, epsilon = 1e-12);
        assert!(sol.max_violation <= 1e-9);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example cycles under the textbook largest-coefficient rule.
        let lp = LinearProgram {
            direction: Direction::Minimize,
            objective: vec![-0.75, 150.0, -0.02, 6.0],
            constraints: vec![
                row(&[0.25, -60.0, -0.04, 9.0], RowSense::Le, 0.0),
                row(&[0.5, -90.0, -0.02, 3.0], RowSense::Le, 0.0),
                row(&[0.0, 0.0, 1.0, 0.0], RowSense::Le, 1.0),
            ],
            lower_bounds: vec![Some(0.0); 4],
        };
        let sol = simplex_solve(&lp).unwrap();
        assert_abs_diff_eq!(sol.objective, -0.05, epsilon = 1e-12);
    }

    #[test]
    fn free_and_shifted_variables() {
        // min x + y, x >= 2 (bound), y free with y >= -3 as a row.
        let lp = LinearProgram {
            direction: Direction::Minimize,
            objective: vec![1.0, 1.0],
            constraints: vec![row(&[0.0, 1.0], RowSense::Ge, -3.0)],
            lower_bounds: vec![Some(2.0), None],
        };
        let sol = simplex_solve(&lp).unwrap();
        assert_abs_diff_eq!(sol.x[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.x[1], -3.0, epsilon = 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let infeasible = LinearProgram {
            direction: Direction::Maximize,
            objective: vec![1.0],
            constraints: vec![
                row(&[1.0], RowSense::Le, 1.0),
                row(&[1.0], RowSense::Ge, 2.0),
            ],
            lower_bounds: vec![Some(0.0)],
        };
        assert!(matches!(simplex_solve(&infeasible), Err(Error::Infeasible(v)) if v > 0.5));
        let unbounded = LinearProgram {
            direction: Direction::Maximize,
            objective: vec![0.0, 1.0],
            constraints: vec![row(&[1.0, 0.0], RowSense::Le, 1.0)],
            lower_bounds: vec![Some(0.0), Some(0.0)],
        };
        assert_eq!(simplex_solve(&unbounded).unwrap_err(), Error::Unbounded(1));
    }

    #[test]
    fn canonical_dump_lists_rows() {
        let lp = LinearProgram {
            direction: Direction::Minimize,
            objective: vec![1.0],
            constraints: vec![row(&[0.5], RowSense::Ge, 1.0)],
            lower_bounds: vec![None],
        };
        let text = lp.to_string();
        assert!(text.starts_with("min 1.00000000000000000e0"));
        assert!(text.contains(">= 1.00000000000000000e0"));
        assert!(text.ends_with("lower free\n"));
    }
}
