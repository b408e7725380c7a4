//! Exact two-phase simplex on a dense rational tableau.
//!
//! Pivoting follows Bland's rule, so the method terminates on degenerate
//! problems. Free variables are split into positive and negative parts.

use num_traits::{One, Signed, Zero};

use crate::rational::Rational;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<Rational>,
    pub relation: Relation,
    pub rhs: Rational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub value: Rational,
    pub x: Vec<Rational>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(Solution),
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(self) -> Option<Solution> {
        match self {
            LpOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    num_vars: usize,
    nonnegative: Vec<bool>,
    constraints: Vec<Constraint>,
}

impl LinearProgram {
    /// A program over `num_vars` free variables.
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            nonnegative: vec![false; num_vars],
            constraints: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn set_nonnegative(&mut self, var: usize) {
        self.nonnegative[var] = true;
    }

    pub fn set_all_nonnegative(&mut self) {
        self.nonnegative.iter_mut().for_each(|b| *b = true);
    }

    pub fn add(&mut self, coeffs: Vec<Rational>, relation: Relation, rhs: Rational) {
        assert_eq!(coeffs.len(), self.num_vars, "constraint width");
        self.constraints.push(Constraint { coeffs, relation, rhs });
    }

    pub fn le(&mut self, coeffs: Vec<Rational>, rhs: Rational) {
        self.add(coeffs, Relation::Le, rhs);
    }

    pub fn ge(&mut self, coeffs: Vec<Rational>, rhs: Rational) {
        self.add(coeffs, Relation::Ge, rhs);
    }

    pub fn eq(&mut self, coeffs: Vec<Rational>, rhs: Rational) {
        self.add(coeffs, Relation::Eq, rhs);
    }

    pub fn is_feasible_point(&self, x: &[Rational]) -> bool {
        x.len() == self.num_vars
            && self
                .nonnegative
                .iter()
                .zip(x)
                .all(|(&nn, v)| !nn || !v.is_negative())
            && self.constraints.iter().all(|c| {
                let lhs = crate::linalg::dot(&c.coeffs, x);
                match c.relation {
                    Relation::Le => lhs <= c.rhs,
                    Relation::Ge => lhs >= c.rhs,
                    Relation::Eq => lhs == c.rhs,
                }
            })
    }

    pub fn maximize(&self, objective: &[Rational]) -> LpOutcome {
        self.maximize_many(std::slice::from_ref(&objective.to_vec()))
            .pop()
            .expect("one objective")
    }

    pub fn minimize(&self, objective: &[Rational]) -> LpOutcome {
        let neg: Vec<Rational> = objective.iter().map(|c| -c).collect();
        match self.maximize(&neg) {
            LpOutcome::Optimal(s) => LpOutcome::Optimal(Solution { value: -s.value, x: s.x }),
            other => other,
        }
    }

    /// Maximizes each objective over the same feasible set, sharing phase one.
    pub fn maximize_many(&self, objectives: &[Vec<Rational>]) -> Vec<LpOutcome> {
        let Some(start) = Tableau::phase_one(self) else {
            return vec![LpOutcome::Infeasible; objectives.len()];
        };
        objectives
            .iter()
            .map(|obj| {
                assert_eq!(obj.len(), self.num_vars, "objective width");
                let mut t = start.clone();
                let cost = t.column_costs(obj);
                if !t.run(&cost) {
                    return LpOutcome::Unbounded;
                }
                let x = t.extract();
                let value = crate::linalg::dot(obj, &x);
                LpOutcome::Optimal(Solution { value, x })
            })
            .collect()
    }
}

#[derive(Clone)]
struct Tableau {
    rows: Vec<Vec<Rational>>,
    basis: Vec<usize>,
    // column index of the positive and (for free variables) negative part
    var_cols: Vec<(usize, Option<usize>)>,
    allowed: Vec<bool>,
    width: usize,
}

impl Tableau {
    fn phase_one(lp: &LinearProgram) -> Option<Tableau> {
        let mut var_cols = Vec::with_capacity(lp.num_vars);
        let mut width = 0;
        for &nn in &lp.nonnegative {
            if nn {
                var_cols.push((width, None));
                width += 1;
            } else {
                var_cols.push((width, Some(width + 1)));
                width += 2;
            }
        }
        let structural = width;
        let m = lp.constraints.len();
        let slack_count = lp
            .constraints
            .iter()
            .filter(|c| c.relation != Relation::Eq)
            .count();
        let mut art_needed = Vec::with_capacity(m);
        let mut normalized = Vec::with_capacity(m);
        for c in &lp.constraints {
            let flip = c.rhs.is_negative();
            let rel = match (c.relation, flip) {
                (Relation::Le, true) => Relation::Ge,
                (Relation::Ge, true) => Relation::Le,
                (r, _) => r,
            };
            art_needed.push(rel != Relation::Le);
            normalized.push((c, flip, rel));
        }
        let art_count = art_needed.iter().filter(|&&b| b).count();
        let total = structural + slack_count + art_count;
        let mut rows = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let mut slack = structural;
        let mut art = structural + slack_count;
        for (c, flip, rel) in normalized {
            let sign = if flip { -Rational::one() } else { Rational::one() };
            let mut row = vec![Rational::zero(); total + 1];
            for (v, coeff) in c.coeffs.iter().enumerate() {
                if coeff.is_zero() {
                    continue;
                }
                let val = coeff * &sign;
                let (p, n) = var_cols[v];
                if let Some(n) = n {
                    row[n] = -val.clone();
                }
                row[p] = val;
            }
            row[total] = &c.rhs * &sign;
            match rel {
                Relation::Le => {
                    row[slack] = Rational::one();
                    basis.push(slack);
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -Rational::one();
                    slack += 1;
                    row[art] = Rational::one();
                    basis.push(art);
                    art += 1;
                }
                Relation::Eq => {
                    row[art] = Rational::one();
                    basis.push(art);
                    art += 1;
                }
            }
            rows.push(row);
        }
        let art_start = structural + slack_count;
        let mut t = Tableau {
            rows,
            basis,
            var_cols,
            allowed: vec![true; total],
            width: total,
        };
        if art_count > 0 {
            let mut cost = vec![Rational::zero(); total];
            for c in cost.iter_mut().skip(art_start) {
                *c = -Rational::one();
            }
            let bounded = t.run(&cost);
            debug_assert!(bounded, "phase one is bounded");
            let infeasibility: Rational = t
                .basis
                .iter()
                .zip(&t.rows)
                .filter(|(&b, _)| b >= art_start)
                .map(|(_, r)| r[total].clone())
                .sum();
            if infeasibility.is_positive() {
                return None;
            }
            // Drive zero-level artificials out of the basis or drop redundant rows.
            let mut i = 0;
            while i < t.rows.len() {
                if t.basis[i] >= art_start {
                    match (0..art_start).find(|&j| !t.rows[i][j].is_zero()) {
                        Some(j) => {
                            t.pivot(i, j);
                            i += 1;
                        }
                        None => {
                            t.rows.remove(i);
                            t.basis.remove(i);
                        }
                    }
                } else {
                    i += 1;
                }
            }
            for a in t.allowed.iter_mut().skip(art_start) {
                *a = false;
            }
        }
        Some(t)
    }

    fn column_costs(&self, objective: &[Rational]) -> Vec<Rational> {
        let mut cost = vec![Rational::zero(); self.width];
        for (v, c) in objective.iter().enumerate() {
            let (p, n) = self.var_cols[v];
            cost[p] = c.clone();
            if let Some(n) = n {
                cost[n] = -c.clone();
            }
        }
        cost
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let inv = self.rows[r][c].recip();
        for x in self.rows[r].iter_mut() {
            if !x.is_zero() {
                *x *= &inv;
            }
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let f = row[c].clone();
            for (x, p) in row.iter_mut().zip(&pivot_row) {
                if !p.is_zero() {
                    *x -= &f * p;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Maximizes `cost · x`; returns false when unbounded.
    fn run(&mut self, cost: &[Rational]) -> bool {
        let rhs = self.width;
        loop {
            let mut entering = None;
            for j in 0..self.width {
                if !self.allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let mut reduced = cost[j].clone();
                for (row, &b) in self.rows.iter().zip(&self.basis) {
                    if !row[j].is_zero() && !cost[b].is_zero() {
                        reduced -= &cost[b] * &row[j];
                    }
                }
                if reduced.is_positive() {
                    entering = Some(j);
                    break;
                }
            }
            let Some(j) = entering else {
                return true;
            };
            let mut leave: Option<(usize, Rational)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if !row[j].is_positive() {
                    continue;
                }
                let ratio = &row[rhs] / &row[j];
                let better = match &leave {
                    None => true,
                    Some((li, lr)) => {
                        ratio < *lr || (ratio == *lr && self.basis[i] < self.basis[*li])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            let Some((i, _)) = leave else {
                return false;
            };
            self.pivot(i, j);
        }
    }

    fn extract(&self) -> Vec<Rational> {
        let mut col_value = vec![Rational::zero(); self.width];
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            col_value[b] = row[self.width].clone();
        }
        self.var_cols
            .iter()
            .map(|&(p, n)| match n {
                Some(n) => &col_value[p] - &col_value[n],
                None => col_value[p].clone(),
            })
            .collect()
    }
}
