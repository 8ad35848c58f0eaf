//! Dense two-phase primal simplex with Bland's anti-cycling rule.
//!
//! Problems here are small (a few hundred variables at most), so a full
//! tableau is the simplest thing that is exactly reproducible: pivot choices
//! depend only on the input, never on hashing or timing.

use thiserror::Error;

/// Hard cap on pivots across both phases.
pub const MAX_PIVOTS: usize = 10_000;

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex exceeded {0} pivots")]
    IterationLimit(usize),
    #[error("malformed linear program: {0}")]
    Malformed(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    /// Sparse `(variable, coefficient)` terms.
    pub terms: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `minimize c·x` subject to linear constraints and `lower <= x <= upper`.
#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

impl LinearProgram {
    /// `n` variables, each bounded below by zero, with a zero objective.
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            constraints: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![None; n],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_var(&mut self, cost: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(0.0);
        self.upper.push(None);
        self.objective.len() - 1
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: Option<f64>) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    pub fn constrain(&mut self, terms: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint { terms, relation, rhs });
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        lp_solve(self)
    }
}

struct Tableau {
    /// `rows x (cols + 1)`, last column is the right-hand side.
    a: Vec<f64>,
    rows: usize,
    cols: usize,
    basis: Vec<usize>,
    /// Reduced-cost row, length `cols + 1` (last entry is `-objective`).
    cost: Vec<f64>,
    pivots: usize,
}

impl Tableau {
    fn width(&self) -> usize {
        self.cols + 1
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.width() + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) -> Result<(), LpError> {
        self.pivots += 1;
        if self.pivots > MAX_PIVOTS {
            return Err(LpError::IterationLimit(MAX_PIVOTS));
        }
        let w = self.width();
        let inv = 1.0 / self.a[pr * w + pc];
        for v in &mut self.a[pr * w..(pr + 1) * w] {
            *v *= inv;
        }
        self.a[pr * w + pc] = 1.0;
        let (before, rest) = self.a.split_at_mut(pr * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[pc];
            if f != 0.0 {
                for (x, p) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * p;
                }
                row[pc] = 0.0;
            }
        }
        let f = self.cost[pc];
        if f != 0.0 {
            for (x, p) in self.cost.iter_mut().zip(prow.iter()) {
                *x -= f * p;
            }
            self.cost[pc] = 0.0;
        }
        self.basis[pr] = pc;
        Ok(())
    }

    /// Bland's rule: lowest-index improving column, lowest-index basic
    /// variable among tied ratios.
    fn run(&mut self, allowed: impl Fn(usize) -> bool) -> Result<(), LpError> {
        loop {
            let Some(pc) = (0..self.cols).find(|&j| allowed(j) && self.cost[j] < -COST_TOL) else {
                return Ok(());
            };
            let mut best: Option<(f64, usize, usize)> = None;
            for r in 0..self.rows {
                let v = self.at(r, pc);
                if v > PIVOT_TOL {
                    let ratio = self.rhs(r) / v;
                    let better = match best {
                        None => true,
                        Some((br, _, bvar)) => {
                            ratio < br - 1e-12 || (ratio <= br + 1e-12 && self.basis[r] < bvar)
                        }
                    };
                    if better {
                        best = Some((ratio, r, self.basis[r]));
                    }
                }
            }
            match best {
                Some((_, pr, _)) => self.pivot(pr, pc)?,
                None => return Err(LpError::Unbounded),
            }
        }
    }

    fn set_cost(&mut self, c: &[f64]) {
        self.cost = c.to_vec();
        self.cost.push(0.0);
        for r in 0..self.rows {
            let cb = c[self.basis[r]];
            if cb != 0.0 {
                let w = self.width();
                for (x, a) in self.cost.iter_mut().zip(&self.a[r * w..(r + 1) * w]) {
                    *x -= cb * a;
                }
            }
        }
    }
}

pub fn lp_solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let n = lp.n_vars();
    if lp.lower.len() != n || lp.upper.len() != n {
        return Err(LpError::Malformed("bound vectors do not match variable count".into()));
    }
    for (j, (&lo, hi)) in lp.lower.iter().zip(&lp.upper).enumerate() {
        if !lo.is_finite() {
            return Err(LpError::Malformed(format!("variable {j} needs a finite lower bound")));
        }
        if let Some(hi) = hi {
            if *hi < lo - FEAS_TOL {
                return Err(LpError::Infeasible);
            }
        }
    }

    // Shift x = lower + x' so every structural variable is >= 0, and turn
    // finite upper bounds into rows.
    let mut rows: Vec<(Vec<(usize, f64)>, Relation, f64)> = Vec::new();
    for c in &lp.constraints {
        let mut rhs = c.rhs;
        for &(j, v) in &c.terms {
            if j >= n {
                return Err(LpError::Malformed(format!("term references variable {j}")));
            }
            rhs -= v * lp.lower[j];
        }
        rows.push((c.terms.clone(), c.relation, rhs));
    }
    for (j, hi) in lp.upper.iter().enumerate() {
        if let Some(hi) = hi {
            rows.push((vec![(j, 1.0)], Relation::Le, hi - lp.lower[j]));
        }
    }
    for row in &mut rows {
        if row.2 < 0.0 {
            for t in &mut row.0 {
                t.1 = -t.1;
            }
            row.2 = -row.2;
            row.1 = match row.1 {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
    let cols = n + n_slack + n_art;
    let art_start = n + n_slack;
    let w = cols + 1;
    let mut t = Tableau {
        a: vec![0.0; m * w],
        rows: m,
        cols,
        basis: vec![0; m],
        cost: Vec::new(),
        pivots: 0,
    };
    let (mut s, mut a) = (n, art_start);
    for (r, (terms, rel, rhs)) in rows.iter().enumerate() {
        for &(j, v) in terms {
            t.a[r * w + j] += v;
        }
        t.a[r * w + cols] = *rhs;
        match rel {
            Relation::Le => {
                t.a[r * w + s] = 1.0;
                t.basis[r] = s;
                s += 1;
            }
            Relation::Ge => {
                t.a[r * w + s] = -1.0;
                s += 1;
                t.a[r * w + a] = 1.0;
                t.basis[r] = a;
                a += 1;
            }
            Relation::Eq => {
                t.a[r * w + a] = 1.0;
                t.basis[r] = a;
                a += 1;
            }
        }
    }

    if n_art > 0 {
        let mut c1 = vec![0.0; cols];
        for c in &mut c1[art_start..] {
            *c = 1.0;
        }
        t.set_cost(&c1);
        t.run(|_| true)?;
        let infeasibility = -t.cost[cols];
        if infeasibility > FEAS_TOL * (1.0 + rows.iter().map(|r| r.2).fold(0.0, f64::max)) {
            return Err(LpError::Infeasible);
        }
        // Drive remaining (zero-valued) artificials out of the basis; rows
        // where that is impossible are redundant and dropped.
        let mut r = 0;
        while r < t.rows {
            if t.basis[r] >= art_start {
                match (0..art_start).find(|&j| t.at(r, j).abs() > PIVOT_TOL) {
                    Some(j) => {
                        t.pivot(r, j)?;
                        r += 1;
                    }
                    None => {
                        t.a.drain(r * w..(r + 1) * w);
                        t.basis.remove(r);
                        t.rows -= 1;
                    }
                }
            } else {
                r += 1;
            }
        }
    }

    let mut c2 = vec![0.0; cols];
    c2[..n].copy_from_slice(&lp.objective);
    t.set_cost(&c2);
    t.run(|j| j < art_start)?;

    let mut x = lp.lower.clone();
    for r in 0..t.rows {
        let j = t.basis[r];
        if j < n {
            x[j] += t.rhs(r);
        }
    }
    let objective = x.iter().zip(&lp.objective).map(|(x, c)| x * c).sum();
    Ok(LpSolution { x, objective, pivots: t.pivots })
}
