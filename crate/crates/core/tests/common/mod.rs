//! Random instance generators and brute-force reference computations shared by
//! the integration suites. Nothing here calls the library's solvers.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use napsh_core::complex::{validate_complex, ComponentId, DualComplex, RawComplex};
use napsh_core::oracle::{GraphEdge, GraphVertex, MetricGraphModel};
use napsh_core::pa::PAFunction;
use napsh_core::subdivision::Subdivision;
use napsh_core::Rational;
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn q(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn z(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn small_rational(rng: &mut ChaCha8Rng, max: i64) -> Rational {
    let d = rng.gen_range(1..=6);
    q(rng.gen_range(-max * d..=max * d), d)
}

pub fn nonneg_rational(rng: &mut ChaCha8Rng, max: i64) -> Rational {
    let d = rng.gen_range(1..=6);
    q(rng.gen_range(0..=max * d), d)
}

fn subsets(face: &[u32]) -> Vec<Vec<u32>> {
    (1u32..(1 << face.len()))
        .map(|mask| {
            face.iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &c)| c)
                .collect()
        })
        .collect()
}

/// A complex of dimension at most `max_dim` built from a few random simplices.
pub fn random_complex(rng: &mut ChaCha8Rng, max_dim: usize, id: &str) -> DualComplex {
    let n = rng.gen_range(1..=6u32);
    let ids: Vec<u32> = (1..=n).collect();
    let mut faces: BTreeSet<Vec<u32>> = BTreeSet::new();
    for _ in 0..rng.gen_range(1..=3) {
        let size = rng.gen_range(1..=(max_dim + 1).min(n as usize));
        let mut pick: Vec<u32> = ids.choose_multiple(rng, size).copied().collect();
        pick.sort_unstable();
        faces.extend(subsets(&pick));
    }
    for &i in &ids {
        faces.insert(vec![i]);
    }
    validate_complex(&RawComplex {
        id: id.into(),
        components: ids.iter().map(|&i| (i, BigInt::from(rng.gen_range(1..=4)))).collect(),
        faces: faces.into_iter().collect(),
    })
    .expect("generated complex is valid")
}

/// The full simplex on `dim + 1` components with random multiplicities.
pub fn random_simplex(rng: &mut ChaCha8Rng, dim: usize, max_b: i64, id: &str) -> DualComplex {
    let ids: Vec<u32> = (1..=dim as u32 + 1).collect();
    validate_complex(&RawComplex {
        id: id.into(),
        components: ids.iter().map(|&i| (i, BigInt::from(rng.gen_range(1..=max_b)))).collect(),
        faces: subsets(&ids),
    })
    .expect("simplex is valid")
}

/// Random positive weights on `face`, normalized so that `Σ b_i s_i = 1`.
pub fn random_point_on(rng: &mut ChaCha8Rng, complex: &DualComplex, face: &[usize]) -> Vec<Rational> {
    let w: Vec<i64> = face.iter().map(|_| rng.gen_range(1..=12)).collect();
    let total: i64 = w.iter().sum();
    let mut x = vec![Rational::zero(); complex.len()];
    for (&a, wi) in face.iter().zip(w) {
        x[a] = q(wi, total) / Rational::from_integer(complex.multiplicities()[a].clone());
    }
    x
}

pub fn random_point(rng: &mut ChaCha8Rng, complex: &DualComplex) -> Vec<Rational> {
    let faces: Vec<_> = complex.faces().iter().filter(|f| !f.is_empty()).collect();
    let face = faces.choose(rng).expect("nonempty");
    random_point_on(rng, complex, &complex.axes(face))
}

pub fn random_interior_point(rng: &mut ChaCha8Rng, complex: &DualComplex) -> Vec<Rational> {
    let face = complex.maximal_faces().choose(rng).expect("nonempty").clone();
    random_point_on(rng, complex, &complex.axes(&face))
}

/// A connected graph: a random spanning tree plus a few extra edges.
pub fn random_graph(rng: &mut ChaCha8Rng, max_vertices: u32, id: &str) -> MetricGraphModel {
    let n = rng.gen_range(1..=max_vertices);
    let mut vertices: Vec<GraphVertex> = (1..=n)
        .map(|i| GraphVertex {
            id: i,
            multiplicity: rng.gen_range(1..=3).into(),
            theta: nonneg_rational(rng, 2),
        })
        .collect();
    if vertices.iter().all(|v| v.theta.is_zero()) {
        vertices[0].theta = Rational::one();
    }
    let mut pairs: BTreeSet<(u32, u32)> = BTreeSet::new();
    for i in 2..=n {
        let j = rng.gen_range(1..i);
        pairs.insert((j, i));
    }
    for _ in 0..rng.gen_range(0..=n) {
        let a = rng.gen_range(1..=n);
        let b = rng.gen_range(1..=n);
        if a != b {
            pairs.insert((a.min(b), a.max(b)));
        }
    }
    let edges = pairs
        .into_iter()
        .map(|(a, b)| GraphEdge {
            a,
            b,
            multiplicity: rng.gen_range(1..=2).into(),
        })
        .collect();
    MetricGraphModel::new(id, vertices, edges).expect("connected by construction")
}

/// Row reduction over the rationals; returns the rank.
pub fn rank(m: &[Vec<Rational>]) -> usize {
    let mut a: Vec<Vec<Rational>> = m.to_vec();
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows).find(|&i| !a[i][c].is_zero()) else {
            continue;
        };
        a.swap(r, p);
        for i in 0..rows {
            if i != r && !a[i][c].is_zero() {
                let f = &a[i][c] / &a[r][c];
                for k in c..cols {
                    let v = &f * &a[r][k];
                    a[i][k] -= v;
                }
            }
        }
        r += 1;
    }
    r
}

/// The unique solution of a square system, if any.
pub fn solve_square(m: &[Vec<Rational>], rhs: &[Rational]) -> Option<Vec<Rational>> {
    let n = m.len();
    let mut a: Vec<Vec<Rational>> = m
        .iter()
        .zip(rhs)
        .map(|(r, b)| r.iter().cloned().chain([b.clone()]).collect())
        .collect();
    for c in 0..n {
        let p = (c..n).find(|&i| !a[i][c].is_zero())?;
        a.swap(c, p);
        let pivot = a[c][c].clone();
        for k in c..=n {
            a[c][k] = &a[c][k] / &pivot;
        }
        for i in 0..n {
            if i != c && !a[i][c].is_zero() {
                let f = a[i][c].clone();
                for k in c..=n {
                    let v = &f * &a[c][k];
                    a[i][k] -= v;
                }
            }
        }
    }
    Some(a.into_iter().map(|r| r[n].clone()).collect())
}

/// Barycentric coordinates of `x` in a simplex with vertices `pts`, read on `axes`.
pub fn barycentric(pts: &[&Vec<Rational>], axes: &[usize], x: &[Rational]) -> Option<Vec<Rational>> {
    if pts.len() != axes.len() {
        return None;
    }
    let m: Vec<Vec<Rational>> = axes
        .iter()
        .map(|&a| pts.iter().map(|p| p[a].clone()).collect())
        .collect();
    let rhs: Vec<Rational> = axes.iter().map(|&a| x[a].clone()).collect();
    solve_square(&m, &rhs)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Lower convex envelope at `x` of the points `(p_k, v_k)` on the face with
/// `axes`, by enumerating every simplex spanned by the points that contains `x`.
pub fn brute_envelope(pts: &[&Vec<Rational>], vals: &[Rational], axes: &[usize], x: &[Rational]) -> Option<Rational> {
    let mut best: Option<Rational> = None;
    for subset in combinations(pts.len(), axes.len()) {
        let sp: Vec<&Vec<Rational>> = subset.iter().map(|&i| pts[i]).collect();
        let Some(l) = barycentric(&sp, axes, x) else {
            continue;
        };
        if l.iter().any(Signed::is_negative) {
            continue;
        }
        let v: Rational = subset.iter().zip(&l).map(|(&i, t)| t * &vals[i]).sum();
        best = Some(best.map_or(v.clone(), |b: Rational| b.min(v)));
    }
    best
}

/// Sum of `|det|` of the full cells on a maximal root face, in the coordinates
/// `t_a = b_a s_a`; a tiling gives exactly one.
pub fn normalized_volume(sub: &Subdivision, face_axes: &[usize], cells: &[Vec<usize>]) -> Rational {
    let b = sub.root().multiplicities();
    let mut total = Rational::zero();
    for c in cells {
        let m: Vec<Vec<Rational>> = c
            .iter()
            .map(|&v| {
                face_axes
                    .iter()
                    .map(|&a| &sub.vertices()[v].coords[a] * Rational::from_integer(b[a].clone()))
                    .collect()
            })
            .collect();
        total += det(&m).abs();
    }
    total
}

pub fn det(m: &[Vec<Rational>]) -> Rational {
    let n = m.len();
    let mut a = m.to_vec();
    let mut d = Rational::one();
    for c in 0..n {
        let Some(p) = (c..n).find(|&i| !a[i][c].is_zero()) else {
            return Rational::zero();
        };
        if p != c {
            a.swap(c, p);
            d = -d;
        }
        d *= &a[c][c];
        for i in c + 1..n {
            let f = &a[i][c] / &a[c][c];
            for k in c..n {
                let v = &f * &a[c][k];
                a[i][k] -= v;
            }
        }
    }
    d
}

/// Random convex function on a simplex: a maximum of random affine functionals,
/// built on the tie-refined carrier.
pub fn random_convex(rng: &mut ChaCha8Rng, complex: Arc<DualComplex>, id: &str) -> PAFunction {
    let root = Subdivision::trivial(complex.clone());
    let pieces: Vec<PAFunction> = (0..rng.gen_range(1..=3))
        .map(|_| {
            let c: Vec<Rational> = (0..complex.len()).map(|_| small_rational(rng, 3)).collect();
            PAFunction::from_functional(root.clone(), &c).expect("root is simplicial")
        })
        .collect();
    napsh_core::pa::max_of_pa(&pieces, id).expect("maximum of affine pieces")
}

/// Monomial valuation `min_α ⟨α, x⟩`, or `None` for the zero polynomial.
pub fn brute_valuation(
    complex: &DualComplex,
    terms: &BTreeMap<BTreeMap<ComponentId, u64>, BigInt>,
    x: &[Rational],
) -> Option<Rational> {
    terms
        .iter()
        .filter(|(_, c)| !c.is_zero())
        .map(|(m, _)| {
            m.iter()
                .map(|(id, k)| &x[complex.index_of(*id).expect("component")] * Rational::from_integer((*k).into()))
                .sum::<Rational>()
        })
        .min()
}
