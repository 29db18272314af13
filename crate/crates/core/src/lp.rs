//! Dense revised simplex for `min c·z  s.t.  E z = d,  z ≥ 0`.
//!
//! The solver is stateful so a column-generation master can append columns
//! and re-solve from the previous optimal basis without refactoring. The basis
//! inverse is kept explicitly (column-major) and updated by rank-one pivots; it
//! is rebuilt only when the primal residual drifts past tolerance.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("problem is infeasible")]
    Infeasible,
    #[error("problem is unbounded")]
    Unbounded,
    #[error("iteration limit of {0} reached")]
    IterationLimit(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Sparse column: (row, value) pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseColumn {
    pub entries: Vec<(usize, f64)>,
}

impl SparseColumn {
    pub fn new(mut entries: Vec<(usize, f64)>) -> Self {
        entries.retain(|&(_, v)| v != 0.0);
        entries.sort_by_key(|&(r, _)| r);
        SparseColumn { entries }
    }

    pub fn dot(&self, y: &[f64]) -> f64 {
        self.entries.iter().map(|&(r, v)| v * y[r]).sum()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SimplexOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Consecutive degenerate pivots (per row) before switching to Bland's rule.
    pub bland_after_per_row: usize,
    /// Pivots between residual checks.
    pub check_every: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions { tol: 1e-9, max_iter: 200_000, bland_after_per_row: 10, check_every: 50 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// Row duals `y` with `c_j − y·E_j ≥ 0` for every column at optimality.
    pub duals: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// What a master needs from an LP engine.
pub trait LpSolver {
    fn num_rows(&self) -> usize;
    fn num_cols(&self) -> usize;
    fn add_column(&mut self, col: SparseColumn, cost: f64) -> usize;
    /// Suggests a starting basis (one column index per row). Ignored if singular or infeasible.
    fn set_basis(&mut self, basis: Vec<usize>);
    fn solve(&mut self) -> Result<LpSolution, LpError>;
}

/// Basis entries at or above this value are artificial variables.
const ART: usize = usize::MAX / 2;

pub struct DenseSimplex {
    rows: usize,
    rhs: Vec<f64>,
    cols: Vec<SparseColumn>,
    cost: Vec<f64>,
    opts: SimplexOptions,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    /// Column-major basis inverse.
    binv: Vec<f64>,
    xb: Vec<f64>,
    factored: bool,
    hint: Option<Vec<usize>>,
}

impl DenseSimplex {
    pub fn new(rhs: Vec<f64>) -> Self {
        Self::with_options(rhs, SimplexOptions::default())
    }

    pub fn with_options(rhs: Vec<f64>, opts: SimplexOptions) -> Self {
        DenseSimplex {
            rows: rhs.len(),
            rhs,
            cols: Vec::new(),
            cost: Vec::new(),
            opts,
            basis: Vec::new(),
            in_basis: Vec::new(),
            binv: Vec::new(),
            xb: Vec::new(),
            factored: false,
            hint: None,
        }
    }

    pub fn column(&self, j: usize) -> &SparseColumn {
        &self.cols[j]
    }

    pub fn cost(&self, j: usize) -> f64 {
        self.cost[j]
    }

    pub fn basis(&self) -> &[usize] {
        &self.basis
    }

    fn art_sign(&self, r: usize) -> f64 {
        if self.rhs[r] < 0.0 {
            -1.0
        } else {
            1.0
        }
    }

    /// Dense copy of a basis column.
    fn dense_col(&self, j: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.rows];
        if j >= ART {
            let r = j - ART;
            v[r] = self.art_sign(r);
        } else {
            for &(r, a) in &self.cols[j].entries {
                v[r] = a;
            }
        }
        v
    }

    /// `B⁻¹ a_j`.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.rows;
        let mut d = vec![0.0; m];
        let mut axpy = |k: usize, a: f64| {
            let col = &self.binv[k * m..(k + 1) * m];
            for (di, bi) in d.iter_mut().zip(col) {
                *di += a * bi;
            }
        };
        if j >= ART {
            let r = j - ART;
            axpy(r, self.art_sign(r));
        } else {
            for &(r, a) in &self.cols[j].entries {
                axpy(r, a);
            }
        }
        d
    }

    /// `c_B B⁻¹`.
    fn duals(&self, cb: &[f64]) -> Vec<f64> {
        let m = self.rows;
        (0..m)
            .map(|k| {
                let col = &self.binv[k * m..(k + 1) * m];
                cb.iter().zip(col).map(|(c, b)| c * b).sum()
            })
            .collect()
    }

    /// Inverts the current basis by Gauss-Jordan with partial pivoting.
    fn factor(&mut self) -> Result<(), LpError> {
        let m = self.rows;
        // Row-major working copy of B, augmented with the identity.
        let mut a = vec![0.0; m * m];
        for (i, &j) in self.basis.iter().enumerate() {
            for (r, v) in self.dense_col(j).into_iter().enumerate() {
                a[r * m + i] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let (p, best) = (c..m)
                .map(|r| (r, a[r * m + c].abs()))
                .fold((c, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best < 1e-11 {
                return Err(LpError::Numerical("singular basis".into()));
            }
            if p != c {
                for k in 0..m {
                    a.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            let piv = a[c * m + c];
            for k in 0..m {
                a[c * m + k] /= piv;
                inv[c * m + k] /= piv;
            }
            let (prow_a, prow_i): (Vec<f64>, Vec<f64>) =
                (a[c * m..(c + 1) * m].to_vec(), inv[c * m..(c + 1) * m].to_vec());
            for r in 0..m {
                if r == c {
                    continue;
                }
                let f = a[r * m + c];
                if f == 0.0 {
                    continue;
                }
                for k in 0..m {
                    if prow_a[k] != 0.0 {
                        a[r * m + k] -= f * prow_a[k];
                    }
                    if prow_i[k] != 0.0 {
                        inv[r * m + k] -= f * prow_i[k];
                    }
                }
            }
        }
        // inv is row-major B⁻¹; store column-major.
        self.binv = vec![0.0; m * m];
        for r in 0..m {
            for k in 0..m {
                self.binv[k * m + r] = inv[r * m + k];
            }
        }
        self.xb = (0..m)
            .map(|r| (0..m).map(|k| self.binv[k * m + r] * self.rhs[k]).sum())
            .collect();
        self.factored = true;
        Ok(())
    }

    fn residual(&self) -> f64 {
        let mut res = self.rhs.clone();
        for (i, &j) in self.basis.iter().enumerate() {
            let x = self.xb[i];
            if j >= ART {
                let r = j - ART;
                res[r] -= self.art_sign(r) * x;
            } else {
                for &(r, a) in &self.cols[j].entries {
                    res[r] -= a * x;
                }
            }
        }
        res.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    fn pivot(&mut self, leave: usize, enter: usize, d: &[f64]) {
        let m = self.rows;
        let dr = d[leave];
        let theta = self.xb[leave] / dr;
        for i in 0..m {
            if i != leave {
                self.xb[i] -= theta * d[i];
            }
        }
        self.xb[leave] = theta;
        for k in 0..m {
            let col = &mut self.binv[k * m..(k + 1) * m];
            let t = col[leave] / dr;
            if t != 0.0 {
                for (ci, di) in col.iter_mut().zip(d) {
                    *ci -= di * t;
                }
            }
            col[leave] = t;
        }
        let old = self.basis[leave];
        if old < ART {
            self.in_basis[old] = false;
        }
        self.basis[leave] = enter;
        self.in_basis[enter] = true;
    }

    /// Runs simplex iterations with the given objective over basis variables.
    /// `phase_cost(j)` gives the cost of any variable, artificial or not.
    fn iterate(
        &mut self,
        phase_cost: &dyn Fn(usize) -> f64,
        iters: &mut usize,
    ) -> Result<(), LpError> {
        let m = self.rows;
        let tol = self.opts.tol;
        let mut degenerate = 0usize;
        let mut since_check = 0usize;
        // Duals are updated in place after each pivot and recomputed at every
        // residual check.
        let mut y: Option<Vec<f64>> = None;
        loop {
            if *iters >= self.opts.max_iter {
                return Err(LpError::IterationLimit(self.opts.max_iter));
            }
            let mut yv = match y.take() {
                Some(v) => v,
                None => {
                    let cb: Vec<f64> = self.basis.iter().map(|&j| phase_cost(j)).collect();
                    self.duals(&cb)
                }
            };
            let bland = degenerate >= self.opts.bland_after_per_row * m.max(1);
            let mut enter = None;
            let mut best = -tol;
            for j in 0..self.cols.len() {
                if self.in_basis[j] {
                    continue;
                }
                let rc = phase_cost(j) - self.cols[j].dot(&yv);
                if rc < best {
                    enter = Some(j);
                    best = rc;
                    if bland {
                        break;
                    }
                }
            }
            let Some(q) = enter else { return Ok(()) };
            let d = self.ftran(q);
            let mut leave: Option<usize> = None;
            let mut ratio = f64::INFINITY;
            for i in 0..m {
                if d[i] > tol {
                    let r = self.xb[i].max(0.0) / d[i];
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            if r < ratio - tol {
                                true
                            } else if r <= ratio + tol {
                                if bland {
                                    self.basis[i] < self.basis[l]
                                } else {
                                    d[i] > d[l]
                                }
                            } else {
                                false
                            }
                        }
                    };
                    if better {
                        leave = Some(i);
                        ratio = ratio.min(r);
                    }
                }
            }
            let Some(r) = leave else { return Err(LpError::Unbounded) };
            if ratio <= tol {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            let step = best / d[r];
            for (k, yk) in yv.iter_mut().enumerate() {
                *yk += step * self.binv[k * m + r];
            }
            self.pivot(r, q, &d);
            *iters += 1;
            since_check += 1;
            if since_check >= self.opts.check_every {
                since_check = 0;
                if self.residual() > 1e-9 * (1.0 + self.rhs.iter().map(|v| v.abs()).sum::<f64>()) {
                    self.factor()?;
                }
            } else {
                y = Some(yv);
            }
        }
    }

    fn try_hint(&mut self) -> bool {
        let Some(hint) = self.hint.take() else { return false };
        if hint.len() != self.rows || hint.iter().any(|&j| j >= self.cols.len()) {
            return false;
        }
        self.basis = hint;
        self.in_basis = vec![false; self.cols.len()];
        for &j in &self.basis {
            if self.in_basis[j] {
                return false;
            }
            self.in_basis[j] = true;
        }
        if self.factor().is_err() {
            self.factored = false;
            return false;
        }
        if self.xb.iter().any(|&v| v < -self.opts.tol) {
            self.factored = false;
            return false;
        }
        true
    }

    fn phase_one(&mut self, iters: &mut usize) -> Result<(), LpError> {
        let m = self.rows;
        self.basis = (0..m).map(|r| ART + r).collect();
        self.in_basis = vec![false; self.cols.len()];
        self.factor()?;
        let cost = |j: usize| if j >= ART { 1.0 } else { 0.0 };
        self.iterate(&cost, iters)?;
        let infeas: f64 = self
            .basis
            .iter()
            .zip(&self.xb)
            .filter(|(j, _)| **j >= ART)
            .map(|(_, x)| *x)
            .sum();
        if infeas > 1e-7 * (1.0 + self.rhs.iter().map(|v| v.abs()).sum::<f64>()) {
            return Err(LpError::Infeasible);
        }
        // Drive zero-valued artificials out where a structural column can replace them.
        for i in 0..m {
            if self.basis[i] < ART {
                continue;
            }
            let mut replacement = None;
            for j in 0..self.cols.len() {
                if self.in_basis[j] {
                    continue;
                }
                let d = self.ftran(j);
                if d[i].abs() > 1e-7 {
                    replacement = Some((j, d));
                    break;
                }
            }
            if let Some((j, d)) = replacement {
                self.pivot(i, j, &d);
                *iters += 1;
            }
        }
        Ok(())
    }

    /// Writes the problem in a free-format MPS-like text form. Floats use the
    /// shortest round-trip representation, so the dump is bit-exact.
    pub fn dump_mps(&self, name: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "NAME {name}");
        let _ = writeln!(out, "ROWS");
        let _ = writeln!(out, " N OBJ");
        for r in 0..self.rows {
            let _ = writeln!(out, " E R{r}");
        }
        let _ = writeln!(out, "COLUMNS");
        for (j, col) in self.cols.iter().enumerate() {
            if self.cost[j] != 0.0 {
                let _ = writeln!(out, " X{j} OBJ {:?}", self.cost[j]);
            }
            for &(r, v) in &col.entries {
                let _ = writeln!(out, " X{j} R{r} {v:?}");
            }
        }
        let _ = writeln!(out, "RHS");
        for (r, v) in self.rhs.iter().enumerate() {
            if *v != 0.0 {
                let _ = writeln!(out, " RHS R{r} {v:?}");
            }
        }
        let _ = writeln!(out, "ENDATA");
        out
    }
}

impl LpSolver for DenseSimplex {
    fn num_rows(&self) -> usize {
        self.rows
    }

    fn num_cols(&self) -> usize {
        self.cols.len()
    }

    fn add_column(&mut self, col: SparseColumn, cost: f64) -> usize {
        debug_assert!(col.entries.iter().all(|&(r, _)| r < self.rows));
        self.cols.push(col);
        self.cost.push(cost);
        self.in_basis.push(false);
        self.cols.len() - 1
    }

    fn set_basis(&mut self, basis: Vec<usize>) {
        self.hint = Some(basis);
        self.factored = false;
    }

    fn solve(&mut self) -> Result<LpSolution, LpError> {
        let mut iters = 0;
        let warm = self.factored && self.xb.iter().all(|&v| v >= -self.opts.tol);
        if !warm && !self.try_hint() {
            self.phase_one(&mut iters)?;
        }
        let cost = self.cost.clone();
        let phase_two = move |j: usize| if j >= ART { 0.0 } else { cost[j] };
        let result = self.iterate(&phase_two, &mut iters);
        if let Err(e) = result {
            self.factored = false;
            return Err(e);
        }
        if self.residual() > 1e-8 * (1.0 + self.rhs.iter().map(|v| v.abs()).sum::<f64>()) {
            self.factor()?;
            self.iterate(&phase_two, &mut iters)?;
        }
        let mut x = vec![0.0; self.cols.len()];
        for (i, &j) in self.basis.iter().enumerate() {
            if j < ART {
                x[j] = self.xb[i].max(0.0);
            }
        }
        let cb: Vec<f64> = self.basis.iter().map(|&j| phase_two(j)).collect();
        let duals = self.duals(&cb);
        let objective = x.iter().zip(&self.cost).map(|(a, b)| a * b).sum();
        Ok(LpSolution { x, duals, objective, iterations: iters })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(e: &[(usize, f64)]) -> SparseColumn {
        SparseColumn::new(e.to_vec())
    }

    #[test]
    fn solves_small_standard_form() {
        // min -x1 - 2x2  s.t. x1 + x2 + s1 = 4, x1 + 3x2 + s2 = 6
        let mut lp = DenseSimplex::new(vec![4.0, 6.0]);
        lp.add_column(col(&[(0, 1.0), (1, 1.0)]), -1.0);
        lp.add_column(col(&[(0, 1.0), (1, 3.0)]), -2.0);
        lp.add_column(col(&[(0, 1.0)]), 0.0);
        lp.add_column(col(&[(1, 1.0)]), 0.0);
        let sol = lp.solve().unwrap();
        assert!((sol.objective + 5.0).abs() < 1e-9);
        assert!((sol.x[0] - 3.0).abs() < 1e-9 && (sol.x[1] - 1.0).abs() < 1e-9);
        // Strong duality and dual feasibility.
        let dual_obj: f64 = sol.duals[0] * 4.0 + sol.duals[1] * 6.0;
        assert!((dual_obj - sol.objective).abs() < 1e-9);
        for j in 0..lp.num_cols() {
            assert!(lp.cost(j) - lp.column(j).dot(&sol.duals) >= -1e-9);
        }
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = DenseSimplex::new(vec![1.0]);
        lp.add_column(col(&[(0, -1.0)]), 0.0);
        assert_eq!(lp.solve(), Err(LpError::Infeasible));

        let mut lp = DenseSimplex::new(vec![1.0]);
        lp.add_column(col(&[(0, 1.0)]), 0.0);
        lp.add_column(col(&[(0, 1.0), ]), 1.0);
        lp.add_column(col(&[(0, -1.0)]), -1.0);
        assert_eq!(lp.solve(), Err(LpError::Unbounded));
    }

    #[test]
    fn warm_start_after_adding_columns() {
        // min e1 + e2 s.t. x + e1 - e2 = 0.5, x <= 1 via slack
        let mut lp = DenseSimplex::new(vec![0.5, 1.0]);
        let e1 = lp.add_column(col(&[(0, 1.0)]), 1.0);
        lp.add_column(col(&[(0, -1.0)]), 1.0);
        let s = lp.add_column(col(&[(1, 1.0)]), 0.0);
        lp.set_basis(vec![e1, s]);
        let first = lp.solve().unwrap();
        assert!((first.objective - 0.5).abs() < 1e-12);
        lp.add_column(col(&[(0, 1.0), (1, 1.0)]), 0.0);
        let second = lp.solve().unwrap();
        assert!(second.objective.abs() < 1e-12);
        assert_eq!(second.iterations, 1);
    }

    #[test]
    fn handles_redundant_rows() {
        let mut lp = DenseSimplex::new(vec![1.0, 1.0]);
        lp.add_column(col(&[(0, 1.0), (1, 1.0)]), 2.0);
        lp.add_column(col(&[(0, 1.0), (1, 1.0)]), 1.0);
        let sol = lp.solve().unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mps_dump_is_stable() {
        let mut lp = DenseSimplex::new(vec![0.1]);
        lp.add_column(col(&[(0, 1.0)]), 0.3);
        let dump = lp.dump_mps("t");
        assert!(dump.contains(" X0 OBJ 0.3\n"));
        assert!(dump.contains(" RHS R0 0.1\n"));
        assert!(dump.ends_with("ENDATA\n"));
    }
}
