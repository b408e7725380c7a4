//! Polytopes given by vertex lists on an affine hyperplane missing the origin.
//!
//! All points handed to these routines lie on a slice `Σ b_i s_i = 1`, so
//! affine notions (dimension, facets, volume) reduce to linear notions on the
//! cone over the polytope.

use std::collections::BTreeSet;

use num_traits::{Signed, Zero};

use crate::linalg::{self, Matrix};
use crate::rational::Rational;

pub fn linear_rank(points: &[&Vec<Rational>]) -> usize {
    let m: Matrix = points.iter().map(|p| (*p).clone()).collect();
    linalg::rank(&m)
}

/// Coordinates of the points in a basis of their linear span.
struct SpanChart {
    coords: Vec<Vec<Rational>>,
    rank: usize,
}

impl SpanChart {
    fn new(points: &[&Vec<Rational>]) -> Self {
        let m: Matrix = points.iter().map(|p| (*p).clone()).collect();
        // Row-reduce the transpose-free way: pick a maximal independent subset.
        let mut basis: Vec<usize> = Vec::new();
        let mut acc: Matrix = Vec::new();
        for (i, p) in m.iter().enumerate() {
            acc.push(p.clone());
            if linalg::rank(&acc) > basis.len() {
                basis.push(i);
            } else {
                acc.pop();
            }
        }
        let rank = basis.len();
        // columns are basis vectors; solve B y = p for each point
        let bt: Matrix = linalg::transpose(&basis.iter().map(|&i| m[i].clone()).collect());
        let coords = m
            .iter()
            .map(|p| linalg::solve(&bt, p).expect("point lies in span"))
            .collect();
        SpanChart { coords, rank }
    }
}

/// Facets of the polytope as sorted lists of point indices.
pub fn facets(points: &[&Vec<Rational>]) -> Vec<Vec<usize>> {
    let chart = SpanChart::new(points);
    let r = chart.rank;
    if r <= 1 {
        return Vec::new();
    }
    let n = points.len();
    let mut found: BTreeSet<Vec<usize>> = BTreeSet::new();
    for subset in combinations(n, r - 1) {
        let rows: Matrix = subset.iter().map(|&i| chart.coords[i].clone()).collect();
        if linalg::rank(&rows) != r - 1 {
            continue;
        }
        let normal = linalg::nullspace(&rows, r).pop().expect("one-dimensional kernel");
        let values: Vec<Rational> = chart.coords.iter().map(|y| linalg::dot(&normal, y)).collect();
        let has_pos = values.iter().any(Signed::is_positive);
        let has_neg = values.iter().any(Signed::is_negative);
        if has_pos && has_neg {
            continue;
        }
        let on: Vec<usize> = (0..n).filter(|&i| values[i].is_zero()).collect();
        found.insert(on);
    }
    found.into_iter().collect()
}

pub fn is_simplex(points: &[&Vec<Rational>]) -> bool {
    linear_rank(points) == points.len()
}

/// All nonempty faces (including the polytope itself) as sorted index lists.
pub fn face_lattice(points: &[&Vec<Rational>]) -> Vec<Vec<usize>> {
    let mut out: BTreeSet<Vec<usize>> = BTreeSet::new();
    let all: Vec<usize> = (0..points.len()).collect();
    collect_faces(points, &all, &mut out);
    out.into_iter().collect()
}

fn collect_faces(points: &[&Vec<Rational>], face: &[usize], out: &mut BTreeSet<Vec<usize>>) {
    if !out.insert(face.to_vec()) {
        return;
    }
    let sub: Vec<&Vec<Rational>> = face.iter().map(|&i| points[i]).collect();
    for f in facets(&sub) {
        let mapped: Vec<usize> = f.iter().map(|&k| face[k]).collect();
        collect_faces(points, &mapped, out);
    }
}

/// Pulling triangulation: repeatedly cone from the vertex with the least key.
///
/// Using one global key order makes the triangulations of neighbouring
/// polytopes agree on shared faces.
pub fn pulling_triangulation(points: &[&Vec<Rational>], keys: &[usize]) -> Vec<Vec<usize>> {
    let all: Vec<usize> = (0..points.len()).collect();
    let mut out = Vec::new();
    pull(points, keys, &all, &mut out);
    out
}

fn pull(points: &[&Vec<Rational>], keys: &[usize], face: &[usize], out: &mut Vec<Vec<usize>>) {
    let sub: Vec<&Vec<Rational>> = face.iter().map(|&i| points[i]).collect();
    if is_simplex(&sub) {
        let mut s = face.to_vec();
        s.sort_unstable();
        out.push(s);
        return;
    }
    let apex = *face.iter().min_by_key(|&&i| keys[i]).expect("nonempty face");
    for f in facets(&sub) {
        let mapped: Vec<usize> = f.iter().map(|&k| face[k]).collect();
        if mapped.contains(&apex) {
            continue;
        }
        let mut inner = Vec::new();
        pull(points, keys, &mapped, &mut inner);
        for mut s in inner {
            s.push(apex);
            s.sort_unstable();
            out.push(s);
        }
    }
}

/// `|det|` of the simplex's coordinates on the chosen coordinate axes.
pub fn simplex_volume(simplex: &[&Vec<Rational>], axes: &[usize]) -> Rational {
    let m: Matrix = simplex
        .iter()
        .map(|p| axes.iter().map(|&a| p[a].clone()).collect())
        .collect();
    linalg::abs_det(&m)
}

pub fn volume(points: &[&Vec<Rational>], axes: &[usize]) -> Rational {
    let keys: Vec<usize> = (0..points.len()).collect();
    pulling_triangulation(points, &keys)
        .iter()
        .map(|s| {
            let pts: Vec<&Vec<Rational>> = s.iter().map(|&i| points[i]).collect();
            simplex_volume(&pts, axes)
        })
        .sum()
}

/// Vertices of `{λ ≥ 0, Σλ = 1, a_k·λ ≥ 0}` in `dim + 1` barycentric coordinates.
pub fn barycentric_region_vertices(dim: usize, cuts: &[Vec<Rational>]) -> Vec<Vec<Rational>> {
    let n = dim + 1;
    let mut rows: Vec<Vec<Rational>> = (0..n)
        .map(|i| {
            let mut r = vec![Rational::zero(); n];
            r[i] = Rational::from_integer(1.into());
            r
        })
        .collect();
    rows.extend(cuts.iter().cloned());
    let ones = vec![Rational::from_integer(1.into()); n];
    let mut out: BTreeSet<Vec<Rational>> = BTreeSet::new();
    for subset in combinations(rows.len(), dim) {
        let mut m: Matrix = subset.iter().map(|&i| rows[i].clone()).collect();
        m.push(ones.clone());
        let mut rhs = vec![Rational::zero(); dim];
        rhs.push(Rational::from_integer(1.into()));
        let Some(x) = linalg::solve_unique(&m, &rhs) else {
            continue;
        };
        if rows.iter().all(|r| !linalg::dot(r, &x).is_negative()) {
            out.insert(x);
        }
    }
    out.into_iter().collect()
}

pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Barycentric coordinates of `x` with respect to a simplex, computed on the given axes.
///
/// The simplex must be full-dimensional in the chart spanned by `axes`, i.e.
/// have `axes.len()` linearly independent vertices on the slice.
pub fn barycentric(simplex: &[&Vec<Rational>], axes: &[usize], x: &[Rational]) -> Option<Vec<Rational>> {
    let m: Matrix = axes
        .iter()
        .map(|&a| simplex.iter().map(|p| p[a].clone()).collect())
        .collect();
    let rhs: Vec<Rational> = axes.iter().map(|&a| x[a].clone()).collect();
    linalg::solve_unique(&m, &rhs)
}

/// Coordinates of `x` in a simplex that may be lower-dimensional than the
/// face spanned by `axes`; `None` when `x` is off its span.
pub fn barycentric_in_span(simplex: &[&Vec<Rational>], axes: &[usize], x: &[Rational]) -> Option<Vec<Rational>> {
    let m: Matrix = axes
        .iter()
        .map(|&a| simplex.iter().map(|p| p[a].clone()).collect())
        .collect();
    if m.is_empty() || linalg::rank(&m) != simplex.len() {
        return None;
    }
    let rhs: Vec<Rational> = axes.iter().map(|&a| x[a].clone()).collect();
    linalg::solve(&m, &rhs)
}

pub fn average(points: &[&Vec<Rational>]) -> Vec<Rational> {
    let n = points[0].len();
    let k = Rational::from_integer((points.len() as i64).into());
    (0..n)
        .map(|i| points.iter().map(|p| p[i].clone()).sum::<Rational>() / &k)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};

    fn p(xs: &[Rational]) -> Vec<Rational> {
        xs.to_vec()
    }

    #[test]
    fn quadrilateral_facets_and_triangulation() {
        // square in the slice s1+s2+s3 = 1 of a triangle: vertices with barycentric
        // coordinates forming a trapezoid
        let pts = [
            p(&[int(1), int(0), int(0)]),
            p(&[int(0), int(1), int(0)]),
            p(&[rat(1, 2), int(0), rat(1, 2)]),
            p(&[int(0), rat(1, 2), rat(1, 2)]),
        ];
        let refs: Vec<&Vec<Rational>> = pts.iter().collect();
        assert!(!is_simplex(&refs));
        let f = facets(&refs);
        assert_eq!(f.len(), 4);
        let tri = pulling_triangulation(&refs, &[0, 1, 2, 3]);
        assert_eq!(tri.len(), 2);
        let axes = [0, 1, 2];
        // trapezoid area = triangle minus top corner (1/4)
        assert_eq!(volume(&refs, &axes), rat(3, 4));
        assert_eq!(face_lattice(&refs).len(), 4 + 4 + 1);
    }

    #[test]
    fn region_vertices_of_half_segment() {
        // λ0 - λ1 >= 0 on a segment: vertices (1,0) and (1/2,1/2)
        let v = barycentric_region_vertices(1, &[vec![int(1), int(-1)]]);
        assert_eq!(v, vec![vec![rat(1, 2), rat(1, 2)], vec![int(1), int(0)]]);
    }

    #[test]
    fn combination_counts() {
        assert_eq!(combinations(5, 2).len(), 10);
        assert_eq!(combinations(3, 0), vec![Vec::<usize>::new()]);
    }
}
