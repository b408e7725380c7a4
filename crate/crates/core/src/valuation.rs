//! Monomial valuations, vertical ideals, and the ideal attached to a support function.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::complex::{format_face, ComponentId, DualComplex, Face, SkeletonPoint};
use crate::error::{Error, Result};
use crate::lp::LinearProgram;
use crate::rational::{format_rational, format_vector, from_bigint, parse_rational, Rational};
use crate::support::SupportFunction;

/// Exponent vector with zero entries omitted.
pub type Monomial = BTreeMap<ComponentId, u64>;

/// A polynomial in the local equations `z_i` with nonzero integer coefficients,
/// optionally truncated: omitted terms have `⟨s, α⟩ ≥ order` at every admissible `s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VPolynomial {
    terms: BTreeMap<Monomial, BigInt>,
    truncation: Option<Rational>,
}

impl VPolynomial {
    pub fn new(terms: BTreeMap<Monomial, BigInt>, truncation: Option<Rational>) -> Result<Self> {
        if terms.values().any(Zero::is_zero) {
            return Err(Error::Structural("zero coefficient stored in a polynomial".into()));
        }
        let terms = terms
            .into_iter()
            .map(|(m, c)| (m.into_iter().filter(|(_, k)| *k > 0).collect(), c))
            .collect();
        Ok(Self { terms, truncation })
    }

    pub fn zero() -> Self {
        Self {
            terms: BTreeMap::new(),
            truncation: None,
        }
    }

    pub fn one() -> Self {
        Self::monomial(Monomial::new())
    }

    pub fn monomial(exponents: Monomial) -> Self {
        let m = exponents.into_iter().filter(|(_, k)| *k > 0).collect();
        Self {
            terms: BTreeMap::from([(m, BigInt::one())]),
            truncation: None,
        }
    }

    pub fn with_truncation(mut self, order: Option<Rational>) -> Self {
        self.truncation = order;
        self
    }

    pub fn terms(&self) -> &BTreeMap<Monomial, BigInt> {
        &self.terms
    }

    pub fn truncation(&self) -> Option<&Rational> {
        self.truncation.as_ref()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty() && self.truncation.is_none()
    }

    fn combined_truncation(&self, other: &Self) -> Option<Rational> {
        match (&self.truncation, &other.truncation) {
            (Some(a), Some(b)) => Some(a.clone().min(b.clone())),
            (Some(a), None) | (None, Some(a)) => Some(a.clone()),
            (None, None) => None,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        for (m, c) in &other.terms {
            let e = terms.entry(m.clone()).or_insert_with(BigInt::zero);
            *e += c;
            if e.is_zero() {
                terms.remove(m);
            }
        }
        Self {
            terms,
            truncation: self.combined_truncation(other),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut terms: BTreeMap<Monomial, BigInt> = BTreeMap::new();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                let mut m = m1.clone();
                for (id, k) in m2 {
                    *m.entry(*id).or_insert(0) += k;
                }
                *terms.entry(m).or_insert_with(BigInt::zero) += c1 * c2;
            }
        }
        terms.retain(|_, c| !c.is_zero());
        Self {
            terms,
            truncation: self.combined_truncation(other),
        }
    }

    /// Exponents of the terms attaining the minimum of `⟨x, α⟩`.
    pub fn minimizing_terms(&self, complex: &DualComplex, x: &[Rational]) -> Result<Vec<Monomial>> {
        let mut best: Option<Rational> = None;
        let mut out = Vec::new();
        for m in self.terms.keys() {
            let v = pairing(complex, m, x)?;
            match best.as_ref().map(|b| v.cmp(b)) {
                None | Some(Ordering::Less) => {
                    best = Some(v);
                    out = vec![m.clone()];
                }
                Some(Ordering::Equal) => out.push(m.clone()),
                Some(Ordering::Greater) => {}
            }
        }
        Ok(out)
    }
}

fn pairing(complex: &DualComplex, m: &Monomial, x: &[Rational]) -> Result<Rational> {
    let mut v = Rational::zero();
    for (id, k) in m {
        let i = complex
            .index_of(*id)
            .ok_or_else(|| Error::Structural(format!("unknown component {}", id.0)))?;
        v += &x[i] * Rational::from_integer(BigInt::from(*k));
    }
    Ok(v)
}

impl fmt::Display for VPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        for (m, c) in &self.terms {
            let negative = c.is_negative();
            if out.is_empty() {
                if negative {
                    out.push('-');
                }
            } else {
                out.push_str(if negative { " - " } else { " + " });
            }
            let mag = c.abs();
            let mut factors: Vec<String> = Vec::new();
            if !mag.is_one() || m.is_empty() {
                factors.push(mag.to_string());
            }
            for (id, k) in m {
                factors.push(if *k == 1 {
                    format!("z{}", id.0)
                } else {
                    format!("z{}^{k}", id.0)
                });
            }
            out.push_str(&factors.join(" * "));
        }
        if let Some(o) = &self.truncation {
            if out.is_empty() {
                out = format!("O({})", format_rational(o));
            } else {
                out.push_str(&format!(" + O({})", format_rational(o)));
            }
        }
        if out.is_empty() {
            out.push('0');
        }
        f.write_str(&out)
    }
}

impl FromStr for VPolynomial {
    type Err = Error;

    /// Parses `"2 * z1^2 * z2 - z3 + 1 + O(3/2)"`.
    fn from_str(input: &str) -> Result<Self> {
        let bad = |why: &str| Error::Data(format!("cannot parse polynomial `{input}`: {why}"));
        let text: String = input.chars().filter(|c| !c.is_whitespace()).collect();
        if text.is_empty() {
            return Err(bad("empty"));
        }
        let mut pieces: Vec<(bool, String)> = Vec::new();
        let mut current = String::new();
        let mut negative = false;
        let mut depth = 0usize;
        for (i, ch) in text.chars().enumerate() {
            match ch {
                '(' => depth += 1,
                ')' => depth = depth.checked_sub(1).ok_or_else(|| bad("unbalanced parenthesis"))?,
                _ => {}
            }
            if (ch == '+' || ch == '-') && depth == 0 {
                if i > 0 {
                    if current.is_empty() {
                        return Err(bad("empty term"));
                    }
                    pieces.push((negative, std::mem::take(&mut current)));
                }
                negative = ch == '-';
                continue;
            }
            current.push(ch);
        }
        if current.is_empty() {
            return Err(bad("empty term"));
        }
        pieces.push((negative, current));

        let mut poly = VPolynomial::zero();
        for (negative, piece) in pieces {
            if let Some(inner) = piece.strip_prefix("O(").and_then(|r| r.strip_suffix(')')) {
                if negative || poly.truncation.is_some() {
                    return Err(bad("misplaced truncation order"));
                }
                poly.truncation = Some(parse_rational(inner).map_err(|e| bad(&e.to_string()))?);
                continue;
            }
            if piece == "0" {
                continue;
            }
            let mut coeff = BigInt::one();
            let mut mono = Monomial::new();
            for factor in piece.split('*') {
                if let Some(rest) = factor.strip_prefix('z') {
                    let (id, k) = match rest.split_once('^') {
                        Some((id, k)) => (id, k.parse::<u64>().map_err(|_| bad("bad exponent"))?),
                        None => (rest, 1),
                    };
                    let id: u32 = id.parse().map_err(|_| bad("bad component id"))?;
                    *mono.entry(ComponentId(id)).or_insert(0) += k;
                } else {
                    let c: BigInt = factor.parse().map_err(|_| bad("bad coefficient"))?;
                    coeff *= c;
                }
            }
            if negative {
                coeff = -coeff;
            }
            let term = VPolynomial::new(BTreeMap::from([(mono, coeff)]), None)
                .map_err(|_| bad("zero coefficient"))?;
            poly = poly.add(&term);
        }
        Ok(poly)
    }
}

/// A value of a valuation; the zero polynomial has value `+∞`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Valuation {
    Finite(Rational),
    Infinity,
}

impl Valuation {
    pub fn finite(&self) -> Option<&Rational> {
        match self {
            Valuation::Finite(v) => Some(v),
            Valuation::Infinity => None,
        }
    }
}

impl fmt::Display for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Valuation::Finite(v) => f.write_str(&format_rational(v)),
            Valuation::Infinity => f.write_str("inf"),
        }
    }
}

/// `v_s(f) = min{⟨s, α⟩ : f_α ≠ 0}` at dense coordinates `x`.
pub fn valuation_dense(complex: &DualComplex, x: &[Rational], f: &VPolynomial) -> Result<Valuation> {
    let mut best: Option<Rational> = None;
    for m in f.terms.keys() {
        let v = pairing(complex, m, x)?;
        if best.as_ref().is_none_or(|b| v < *b) {
            best = Some(v);
        }
    }
    match (best, &f.truncation) {
        (Some(v), Some(o)) if v >= *o => Err(Error::Truncation {
            value: Box::new(v),
            order: Box::new(o.clone()),
        }),
        (None, Some(o)) => Err(Error::Truncation {
            value: Box::new(o.clone()),
            order: Box::new(o.clone()),
        }),
        (Some(v), _) => Ok(Valuation::Finite(v)),
        (None, None) => Ok(Valuation::Infinity),
    }
}

pub fn monomial_valuation(complex: &DualComplex, s: &SkeletonPoint, f: &VPolynomial) -> Result<Valuation> {
    valuation_dense(complex, &complex.dense(s)?, f)
}

/// The fractional ideal `ϖ^{-twist} · (generators)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerticalIdeal {
    generators: Vec<VPolynomial>,
    twist: BigInt,
}

impl VerticalIdeal {
    pub fn new(generators: Vec<VPolynomial>, twist: BigInt) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::Structural("an ideal needs at least one generator".into()));
        }
        if generators.iter().any(VPolynomial::is_zero) {
            return Err(Error::Structural("zero generator".into()));
        }
        Ok(Self { generators, twist })
    }

    pub fn generators(&self) -> &[VPolynomial] {
        &self.generators
    }

    pub fn twist(&self) -> &BigInt {
        &self.twist
    }

    pub fn is_monomial(&self) -> bool {
        self.generators.iter().all(|g| g.truncation.is_none() && g.terms.len() == 1)
    }

    /// Generator exponents as Laurent exponents `α − twist·b`.
    fn laurent_terms(&self, complex: &DualComplex) -> Result<Vec<Vec<BigInt>>> {
        let mut out = Vec::new();
        for g in &self.generators {
            for m in g.terms.keys() {
                let mut e: Vec<BigInt> = complex.multiplicities().iter().map(|b| -(b * &self.twist)).collect();
                for (id, k) in m {
                    let i = complex
                        .index_of(*id)
                        .ok_or_else(|| Error::Structural(format!("unknown component {}", id.0)))?;
                    e[i] += BigInt::from(*k);
                }
                out.push(e);
            }
        }
        Ok(out)
    }
}

/// `log|a|(x) = twist + max_g (−v_x(g))`.
pub fn log_abs_dense(complex: &DualComplex, a: &VerticalIdeal, x: &[Rational]) -> Result<Rational> {
    let mut best: Option<Rational> = None;
    for g in &a.generators {
        if let Valuation::Finite(v) = valuation_dense(complex, x, g)? {
            let candidate = -v;
            if best.as_ref().is_none_or(|b| candidate > *b) {
                best = Some(candidate);
            }
        }
    }
    let best = best.expect("generators are nonzero");
    Ok(best + from_bigint(&a.twist))
}

pub fn log_abs_ideal(complex: &DualComplex, a: &VerticalIdeal, s: &SkeletonPoint) -> Result<Rational> {
    log_abs_dense(complex, a, &complex.dense(s)?)
}

/// Decides `a ⊆ b` for monomial `b`: every term of every generator of `a`
/// is a monomial multiple of some generator of `b`.
pub fn monomial_containment(complex: &DualComplex, a: &VerticalIdeal, b: &VerticalIdeal) -> Result<bool> {
    if !b.is_monomial() {
        return Err(Error::Precondition("containment is decided only for monomial ideals".into()));
    }
    let bt = b.laurent_terms(complex)?;
    Ok(a
        .laurent_terms(complex)?
        .iter()
        .all(|e| bt.iter().any(|f| e.iter().zip(f).all(|(x, y)| x >= y))))
}

/// Largest convex function below the vertex values of `sub` on `σ_J`, at `x`.
pub fn lower_convex_envelope(
    complex: &DualComplex,
    points: &[&Vec<Rational>],
    values: &[Rational],
    x: &[Rational],
) -> Result<Rational> {
    let mut lp = LinearProgram::new(points.len());
    lp.set_all_nonnegative();
    for a in 0..complex.len() {
        let row: Vec<Rational> = points.iter().map(|p| p[a].clone()).collect();
        lp.eq(row, x[a].clone());
    }
    lp.minimize(values)
        .optimal()
        .map(|s| s.value)
        .ok_or_else(|| Error::Precondition(format!("{} is outside the hull", format_vector(x))))
}

/// One vertical ideal per face of the complex, each computing `log|a_h|` on
/// the relative interior of that face.
#[derive(Debug, Clone)]
pub struct SupportIdeal {
    charts: BTreeMap<Face, VerticalIdeal>,
    certified_points: usize,
}

impl SupportIdeal {
    pub fn charts(&self) -> &BTreeMap<Face, VerticalIdeal> {
        &self.charts
    }

    pub fn chart(&self, face: &Face) -> Option<&VerticalIdeal> {
        self.charts.get(face)
    }

    /// Number of points at which the envelope comparison was carried out.
    pub fn certified_points(&self) -> usize {
        self.certified_points
    }

    pub fn log_abs(&self, complex: &DualComplex, x: &[Rational]) -> Result<Rational> {
        complex.check_dense(x)?;
        let face = complex.support(x);
        log_abs_dense(complex, &self.charts[&face], x)
    }
}

/// Builds `a_h` from the integer functionals lying below `h` on each face,
/// searching coefficients in `[−box_bound, box_bound]`, and certifies that
/// `log|a_h|` matches the lower convex envelope of `h` at every vertex and
/// face barycenter of the carrier.
pub fn ideal_from_support_function(h: &SupportFunction, box_bound: u64) -> Result<SupportIdeal> {
    let sub = h.subdivision();
    if sub.parent().is_some_and(|p| p.parent().is_some()) {
        return Err(Error::Precondition("support function must live on a subdivision of the complex itself".into()));
    }
    if !h.is_integral() {
        return Err(Error::Type("support function has non-integral gradients".into()));
    }
    let complex = sub.root().clone();
    let bound = BigInt::from(box_bound);
    for k in 0..sub.cells().len() {
        if let Some(g) = h.gradient(k).iter().find(|g| g.abs() > from_bigint(&bound)) {
            return Err(Error::Precondition(format!(
                "box bound {box_bound} is below the gradient coefficient {g}"
            )));
        }
    }
    let mut charts = BTreeMap::new();
    for face in complex.faces().iter().filter(|f| !f.is_empty()) {
        let axes = complex.axes(face);
        let verts = sub.vertices_in_face(face);
        let pts: Vec<&Vec<Rational>> = verts.iter().map(|&v| &sub.vertices()[v].coords).collect();
        let vals: Vec<Rational> = verts.iter().map(|&v| h.values()[v].clone()).collect();
        let maximal = pareto_maximal(&axes, &pts, &vals, &bound)?;
        if maximal.is_empty() {
            let bary = crate::polytope::average(&pts);
            return Err(Error::Certificate {
                point: format_vector(&bary),
                detail: format!("no functional in the box lies below h on {}", format_face(face)),
            });
        }
        let mut twist = BigInt::zero();
        for d in &maximal {
            for (dj, &a) in d.iter().zip(&axes) {
                twist = twist.max(dj.div_ceil(&complex.multiplicities()[a]));
            }
        }
        let mut generators = Vec::new();
        for d in &maximal {
            let mut mono = Monomial::new();
            for (dj, &a) in d.iter().zip(&axes) {
                let e = &twist * &complex.multiplicities()[a] - dj;
                let e = e
                    .to_u64()
                    .ok_or_else(|| Error::Structural("exponent overflow".into()))?;
                mono.insert(complex.ids()[a], e);
            }
            generators.push(VPolynomial::monomial(mono));
        }
        charts.insert(face.clone(), VerticalIdeal::new(generators, twist)?);
    }
    let ideal = SupportIdeal {
        charts,
        certified_points: 0,
    };

    let mut points: BTreeSet<Vec<Rational>> = BTreeSet::new();
    for f in sub.faces() {
        let pts = sub.cell_points(&f);
        points.extend(pts.iter().map(|p| (*p).clone()));
        points.insert(crate::polytope::average(&pts));
    }
    for x in &points {
        let face = complex.support(x);
        let verts = sub.vertices_in_face(&face);
        let pts: Vec<&Vec<Rational>> = verts.iter().map(|&v| &sub.vertices()[v].coords).collect();
        let vals: Vec<Rational> = verts.iter().map(|&v| h.values()[v].clone()).collect();
        let envelope = lower_convex_envelope(&complex, &pts, &vals, x)?;
        let value = ideal.log_abs(&complex, x)?;
        if value != envelope {
            return Err(Error::Certificate {
                point: format_vector(x),
                detail: format!(
                    "log|a_h| = {} but the convex envelope is {}",
                    format_rational(&value),
                    format_rational(&envelope)
                ),
            });
        }
    }
    Ok(SupportIdeal {
        certified_points: points.len(),
        ..ideal
    })
}

/// Largest box side product the Pareto search will tabulate.
const MAX_BOX_CELLS: usize = 1 << 27;

/// Pareto-maximal integer `d` in the box with `Σ_j d_j w_j ≤ h(w)` at every point.
fn pareto_maximal(axes: &[usize], pts: &[&Vec<Rational>], vals: &[Rational], bound: &BigInt) -> Result<Vec<Vec<BigInt>>> {
    let overflow = || Error::Precondition("box search exceeds the supported integer range".into());
    let k = axes.len();
    let b = bound.to_i64().filter(|b| *b < 1 << 40).ok_or_else(overflow)?;
    let side = usize::try_from(2 * b + 1).map_err(|_| overflow())?;
    let cells = (0..k - 1).try_fold(1usize, |acc, _| acc.checked_mul(side).filter(|c| *c <= MAX_BOX_CELLS));
    let cells = cells.ok_or_else(|| Error::Precondition(format!("coefficient box of side {side} is too large to search")))?;

    // Each constraint scaled to integers: Σ_j a_j d_j ≤ c.
    let mut rows: Vec<(Vec<i128>, i128)> = Vec::with_capacity(pts.len());
    for (p, v) in pts.iter().zip(vals) {
        let mut den = v.denom().clone();
        for &a in axes {
            den = den.lcm(p[a].denom());
        }
        let scale = Rational::from_integer(den);
        let conv = |r: &Rational| (r * &scale).to_integer().to_i128().filter(|x| x.abs() < 1 << 80);
        let a: Option<Vec<i128>> = axes.iter().map(|&ax| conv(&p[ax])).collect();
        rows.push((a.ok_or_else(overflow)?, conv(v).ok_or_else(overflow)?));
    }

    let column_max = |prefix: &[i64]| -> Option<i64> {
        let mut best = b as i128;
        for (a, c) in &rows {
            let rest: i128 = prefix.iter().zip(a).map(|(d, x)| *d as i128 * x).sum();
            let slack = c - rest;
            let last = a[k - 1];
            if last == 0 {
                if slack < 0 {
                    return None;
                }
            } else {
                best = best.min(slack.div_euclid(last));
            }
        }
        (best >= -(b as i128)).then_some(best as i64)
    };

    let index = |prefix: &[i64]| prefix.iter().rev().fold(0usize, |acc, d| acc * side + (d + b) as usize);
    let mut table: Vec<Option<i64>> = Vec::with_capacity(cells);
    let mut prefix = vec![-b; k - 1];
    loop {
        table.push(column_max(&prefix));
        if !advance(&mut prefix, b) {
            break;
        }
    }

    let mut keep = vec![false; cells];
    let mut prefix = vec![-b; k - 1];
    loop {
        let i = index(&prefix);
        if let Some(dl) = table[i] {
            keep[i] = (0..k - 1).all(|j| {
                if prefix[j] == b {
                    return true;
                }
                prefix[j] += 1;
                let up = table[index(&prefix)];
                prefix[j] -= 1;
                up.is_none_or(|m| m < dl)
            });
        }
        if !advance(&mut prefix, b) {
            break;
        }
    }

    // A point below a chord of the column graph along a lattice line is a
    // convex combination of feasible points and never needed as a generator.
    let mut directions: Vec<Vec<i64>> = Vec::new();
    for i in 0..k - 1 {
        let mut u = vec![0; k - 1];
        u[i] = 1;
        directions.push(u.clone());
        for j in i + 1..k - 1 {
            let mut v = u.clone();
            v[j] = 1;
            directions.push(v.clone());
            v[j] = -1;
            directions.push(v);
        }
    }
    let in_box = |p: &[i64]| p.iter().all(|d| d.abs() <= b);
    for u in &directions {
        let mut start = vec![-b; k - 1];
        loop {
            let before: Vec<i64> = start.iter().zip(u).map(|(d, x)| d - x).collect();
            if !in_box(&before) {
                let mut line: Vec<(i64, i64, usize)> = Vec::new();
                let mut p = start.clone();
                let mut t = 0;
                while in_box(&p) {
                    let i = index(&p);
                    match table[i] {
                        Some(f) => line.push((t, f, i)),
                        None => {
                            prune_line(&line, &mut keep);
                            line.clear();
                        }
                    }
                    p.iter_mut().zip(u).for_each(|(d, x)| *d += x);
                    t += 1;
                }
                prune_line(&line, &mut keep);
            }
            if !advance(&mut start, b) {
                break;
            }
        }
    }

    let mut out = Vec::new();
    let mut prefix = vec![-b; k - 1];
    loop {
        let i = index(&prefix);
        if keep[i] {
            let dl = table[i].expect("kept entries are feasible");
            out.push(prefix.iter().chain([&dl]).map(|&d| BigInt::from(d)).collect());
        }
        if !advance(&mut prefix, b) {
            return Ok(out);
        }
    }
}

/// Clears `keep` for points of `line` that are not vertices of its upper hull.
fn prune_line(line: &[(i64, i64, usize)], keep: &mut [bool]) {
    if line.len() < 3 {
        return;
    }
    let mut hull: Vec<usize> = Vec::new();
    for (n, &(t, f, _)) in line.iter().enumerate() {
        while hull.len() >= 2 {
            let (t1, f1, _) = line[hull[hull.len() - 2]];
            let (t2, f2, _) = line[hull[hull.len() - 1]];
            let cross = (t2 - t1) as i128 * (f - f1) as i128 - (f2 - f1) as i128 * (t - t1) as i128;
            if cross >= 0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(n);
    }
    let mut h = hull.iter().peekable();
    for (n, &(_, _, i)) in line.iter().enumerate() {
        if h.peek() == Some(&&n) {
            h.next();
        } else {
            keep[i] = false;
        }
    }
}

/// Steps `prefix` through `[−b, b]^n` with the first coordinate fastest.
fn advance(prefix: &mut [i64], b: i64) -> bool {
    for d in prefix.iter_mut() {
        if *d < b {
            *d += 1;
            return true;
        }
        *d = -b;
    }
    false
}

/// A family `m ↦ a_m` on a divisibility-closed finite index set.
#[derive(Debug, Clone)]
pub struct GradedSequence {
    ideals: BTreeMap<u64, VerticalIdeal>,
}

impl GradedSequence {
    pub fn new(ideals: BTreeMap<u64, VerticalIdeal>) -> Result<Self> {
        if ideals.is_empty() || ideals.contains_key(&0) {
            return Err(Error::Structural("indices must be positive and nonempty".into()));
        }
        for &m in ideals.keys() {
            if let Some(d) = (1..m).find(|d| m % d == 0 && !ideals.contains_key(d)) {
                return Err(Error::Structural(format!(
                    "index set is not closed under divisors: {d} divides {m}"
                )));
            }
        }
        Ok(Self { ideals })
    }

    pub fn ideals(&self) -> &BTreeMap<u64, VerticalIdeal> {
        &self.ideals
    }

    /// `φ_m(x) = log|a_m|(x) / m`.
    pub fn normalized(&self, complex: &DualComplex, m: u64, x: &[Rational]) -> Result<Rational> {
        let a = self
            .ideals
            .get(&m)
            .ok_or_else(|| Error::Structural(format!("no ideal at index {m}")))?;
        Ok(log_abs_dense(complex, a, x)? / Rational::from_integer(BigInt::from(m)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradedLimit {
    pub values: Vec<(u64, Rational)>,
    pub sup_estimate: Rational,
}

/// Values `φ_m(s)` after checking `m φ_m + l φ_l ≤ (m+l) φ_{m+l}` for all stored pairs.
pub fn graded_limit(complex: &DualComplex, seq: &GradedSequence, s: &SkeletonPoint) -> Result<GradedLimit> {
    let x = complex.dense(s)?;
    let mut raw: BTreeMap<u64, Rational> = BTreeMap::new();
    for (m, a) in &seq.ideals {
        raw.insert(*m, log_abs_dense(complex, a, &x)?);
    }
    for (&m, lm) in &raw {
        for (&l, ll) in raw.range(m..) {
            if let Some(lml) = raw.get(&(m + l)) {
                if lm + ll > *lml {
                    return Err(Error::Data(format!(
                        "superadditivity fails for (m, l) = ({m}, {l})"
                    )));
                }
            }
        }
    }
    let values: Vec<(u64, Rational)> = raw
        .into_iter()
        .map(|(m, v)| (m, v / Rational::from_integer(BigInt::from(m))))
        .collect();
    let sup_estimate = values.iter().map(|(_, v)| v.clone()).max().expect("nonempty");
    Ok(GradedLimit { values, sup_estimate })
}
