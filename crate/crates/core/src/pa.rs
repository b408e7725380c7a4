//! Piecewise-affine functions on simplicial carriers and their convex calculus.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::complex::{ComponentId, Face, SkeletonPoint};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::polytope;
use crate::rational::{from_bigint, Rational};
use crate::subdivision::Subdivision;

/// A function given by its values at the vertices of a simplicial carrier,
/// interpolated affinely on each cell.
#[derive(Debug, Clone)]
pub struct PAFunction {
    carrier: Arc<Subdivision>,
    values: Vec<Rational>,
}

impl PAFunction {
    pub fn new(carrier: Arc<Subdivision>, values: Vec<Rational>) -> Result<Self> {
        carrier.require_simplicial()?;
        if values.len() != carrier.vertices().len() {
            return Err(Error::Structural(format!(
                "{} values for {} carrier vertices",
                values.len(),
                carrier.vertices().len()
            )));
        }
        Ok(Self { carrier, values })
    }

    /// The restriction of `φ_D` for a root functional `D` given densely.
    pub fn from_functional(carrier: Arc<Subdivision>, coefficients: &[Rational]) -> Result<Self> {
        let values = carrier
            .vertices()
            .iter()
            .map(|v| linalg::dot(coefficients, &v.coords))
            .collect();
        Self::new(carrier, values)
    }

    pub fn carrier(&self) -> &Arc<Subdivision> {
        &self.carrier
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    pub fn value_at(&self, id: ComponentId) -> Option<&Rational> {
        self.carrier.vertex_index(id).map(|i| &self.values[i])
    }

    /// Divisor coefficients `c_v = b'_v φ(v)` on the carrier's vertices.
    pub fn divisor_coefficients(&self) -> BTreeMap<ComponentId, Rational> {
        self.carrier
            .vertices()
            .iter()
            .zip(&self.values)
            .map(|(v, f)| (v.id, f * from_bigint(&v.multiplicity)))
            .collect()
    }

    pub fn eval_root(&self, x: &[Rational]) -> Result<Rational> {
        let (k, l) = self.carrier.locate(x).ok_or_else(|| {
            Error::Precondition(format!("point not located in `{}`", self.carrier.id()))
        })?;
        Ok(self.combine(&self.carrier.cells()[k].vertices, &l))
    }

    pub fn eval(&self, p: &SkeletonPoint) -> Result<Rational> {
        let x = to_root_any(&self.carrier, p)?;
        self.eval_root(&x)
    }

    fn combine(&self, cell: &[usize], l: &[Rational]) -> Rational {
        cell.iter()
            .zip(l)
            .fold(Rational::zero(), |acc, (&v, t)| acc + t * &self.values[v])
    }

    /// Value at `y` of the affine extension of `φ` from a cell of the face with `axes`.
    pub fn extension(&self, cell: &[usize], axes: &[usize], y: &[Rational]) -> Option<Rational> {
        let pts = self.carrier.cell_points(cell);
        polytope::barycentric(&pts, axes, y).map(|l| self.combine(cell, &l))
    }

    pub fn map_values(&self, f: impl Fn(&Rational) -> Rational) -> Self {
        Self {
            carrier: self.carrier.clone(),
            values: self.values.iter().map(f).collect(),
        }
    }

    /// Affine interpolation of the values at the root vertices of `face`.
    pub fn vertex_interpolation(&self, face: &Face, x: &[Rational]) -> Result<Rational> {
        let root = self.carrier.root();
        let mut total = Rational::zero();
        for i in root.axes(face) {
            let e = root.vertex(i);
            let v = self
                .carrier
                .vertex_by_coords(&e)
                .ok_or_else(|| Error::Structural("root vertex missing from carrier".into()))?;
            total += &x[i] * from_bigint(&root.multiplicities()[i]) * &self.values[v];
        }
        Ok(total)
    }
}

/// Root coordinates of a point on the carrier or on any of its ancestors.
pub fn to_root_any(carrier: &Subdivision, p: &SkeletonPoint) -> Result<Vec<Rational>> {
    let mut cur = Some(carrier);
    while let Some(s) = cur {
        if s.id() == p.complex {
            return s.to_root(p);
        }
        cur = s.parent().map(|a| a.as_ref());
    }
    Err(Error::Structural(format!(
        "point belongs to `{}`, which is not an ancestor of `{}`",
        p.complex,
        carrier.id()
    )))
}

/// A ridge across which a function fails the convexity inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityWitness {
    pub cells: (Vec<usize>, Vec<usize>),
    pub vertex: usize,
    pub excess: Rational,
}

/// Checks convexity on a family of full cells of one face by comparing, across
/// every interior ridge, the affine extension of one side with the other.
pub fn convexity_witness(
    phi: &PAFunction,
    cells: &[Vec<usize>],
    axes: &[usize],
) -> Option<ConvexityWitness> {
    let verts = phi.carrier.vertices();
    for (i, a) in cells.iter().enumerate() {
        for b in cells.iter().skip(i + 1) {
            let shared = a.iter().filter(|v| b.contains(v)).count();
            if shared + 1 != axes.len() {
                continue;
            }
            for (c1, c2) in [(a, b), (b, a)] {
                let w = *c2.iter().find(|v| !c1.contains(v)).expect("off-ridge vertex");
                let ext = phi
                    .extension(c1, axes, &verts[w].coords)
                    .expect("full cell");
                if ext > phi.values[w] {
                    return Some(ConvexityWitness {
                        cells: (c1.clone(), c2.clone()),
                        vertex: w,
                        excess: ext - &phi.values[w],
                    });
                }
            }
        }
    }
    None
}

/// True iff the function is convex on every face of the root complex.
pub fn is_convex_on_faces(phi: &PAFunction) -> bool {
    let mut groups: BTreeMap<&Face, Vec<Vec<usize>>> = BTreeMap::new();
    for c in phi.carrier.cells() {
        groups.entry(&c.root_face).or_default().push(c.vertices.clone());
    }
    groups.iter().all(|(face, cells)| {
        let axes = phi.carrier.axes(face);
        convexity_witness(phi, cells, &axes).is_none()
    })
}

pub fn is_convex_on_face(phi: &PAFunction, face: &Face) -> bool {
    let cells = phi.carrier.cells_in_face(face);
    convexity_witness(phi, &cells, &phi.carrier.axes(face)).is_none()
}

/// One-sided derivative of `t ↦ φ((1-t)v + tw)` at `t = 0⁺`.
pub fn directional_derivative(phi: &PAFunction, v: &[Rational], w: &[Rational]) -> Result<Rational> {
    if v == w {
        return Err(Error::Degenerate("direction from a point to itself".into()));
    }
    let root = phi.carrier.root();
    let mut span = root.support(v);
    span.extend(root.support(w));
    for c in phi.carrier.cells() {
        if !span.is_subset(&c.root_face) {
            continue;
        }
        let axes = root.axes(&c.root_face);
        let pts = phi.carrier.cell_points(&c.vertices);
        let (Some(lv), Some(lw)) = (
            polytope::barycentric(&pts, &axes, v),
            polytope::barycentric(&pts, &axes, w),
        ) else {
            continue;
        };
        let enters = lv
            .iter()
            .zip(&lw)
            .all(|(a, b)| a.is_positive() || (a.is_zero() && !b.is_negative()));
        if enters {
            return Ok(phi.combine(&c.vertices, &lw) - phi.combine(&c.vertices, &lv));
        }
    }
    Err(Error::Precondition(
        "no carrier cell contains an initial piece of the segment".into(),
    ))
}

/// A nondegenerate simplex in an affine space, given by its vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexRegion {
    vertices: Vec<Vec<Rational>>,
}

impl SimplexRegion {
    pub fn new(vertices: Vec<Vec<Rational>>) -> Result<Self> {
        let Some(first) = vertices.first() else {
            return Err(Error::Degenerate("simplex without vertices".into()));
        };
        if vertices.iter().any(|v| v.len() != first.len()) {
            return Err(Error::Degenerate("vertices of different dimensions".into()));
        }
        let lifted: Matrix = vertices
            .iter()
            .map(|v| {
                let mut r = v.clone();
                r.push(Rational::one());
                r
            })
            .collect();
        if linalg::rank(&lifted) != vertices.len() {
            return Err(Error::Degenerate("vertices are affinely dependent".into()));
        }
        Ok(Self { vertices })
    }

    pub fn dim(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn vertices(&self) -> &[Vec<Rational>] {
        &self.vertices
    }

    pub fn barycentric(&self, x: &[Rational]) -> Option<Vec<Rational>> {
        let n = x.len();
        let mut m: Matrix = (0..n)
            .map(|i| self.vertices.iter().map(|v| v[i].clone()).collect())
            .collect();
        m.push(vec![Rational::one(); self.vertices.len()]);
        let mut rhs = x.to_vec();
        rhs.push(Rational::one());
        linalg::solve(&m, &rhs)
    }
}

/// Exit parameter and exit point of the ray from vertex `e` through `v`.
pub fn boundary_projection(
    tau: &SimplexRegion,
    e: usize,
    v: &[Rational],
) -> Result<(Rational, Vec<Rational>)> {
    if e >= tau.vertices.len() {
        return Err(Error::Structural(format!("simplex has no vertex {e}")));
    }
    let l = tau
        .barycentric(v)
        .ok_or_else(|| Error::Precondition("point is not in the simplex's affine span".into()))?;
    if l.iter().any(Signed::is_negative) {
        return Err(Error::Precondition("point lies outside the simplex".into()));
    }
    if l[e].is_one() {
        return Err(Error::Degenerate("point coincides with the vertex".into()));
    }
    let t = (Rational::one() - &l[e]).recip();
    let base = &tau.vertices[e];
    let p = base
        .iter()
        .zip(v)
        .map(|(a, b)| a + &t * (b - a))
        .collect();
    Ok((t, p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    pub lhs: Rational,
    pub mid: Rational,
    pub rhs: Rational,
    pub constant: Rational,
    /// Sup norm plus Lipschitz constant.
    pub norm: Rational,
    pub lipschitz: Rational,
    pub sup_norm: Rational,
    pub boundary_sup: Rational,
    pub boundary_derivative_sup: Rational,
}

/// Dual norm of a gradient on directions `{x : Σ b_i x_i = 0}` with the max-norm.
pub fn dual_norm(gradient: &[Rational], b: &[Rational]) -> Rational {
    (0..b.len())
        .map(|j| {
            let alpha = &gradient[j] / &b[j];
            gradient
                .iter()
                .zip(b)
                .map(|(g, bi)| (g - &alpha * bi).abs())
                .sum::<Rational>()
        })
        .min()
        .unwrap_or_else(Rational::zero)
}

/// `max Σ |b_i x_i|` over `x` with `Σ b_i x_i = 0` and `|x_i| ≤ 1`.
pub fn direction_constant(b: &[Rational]) -> Rational {
    let n = b.len();
    let mut best = Rational::zero();
    for k in 0..n {
        for mask in 0u32..(1 << (n - 1)) {
            let mut x = vec![Rational::zero(); n];
            let mut bit = 0;
            for (i, xi) in x.iter_mut().enumerate() {
                if i == k {
                    continue;
                }
                *xi = if mask >> bit & 1 == 1 { -Rational::one() } else { Rational::one() };
                bit += 1;
            }
            let rest: Rational = (0..n).filter(|&i| i != k).map(|i| &b[i] * &x[i]).sum();
            x[k] = -rest / &b[k];
            if x[k].abs() > Rational::one() {
                continue;
            }
            let val: Rational = b.iter().zip(&x).map(|(bi, xi)| (bi * xi).abs()).sum();
            best = best.max(val);
        }
    }
    best
}

/// Largest `1/b_i`: the max-norm diameter of a face.
pub fn face_diameter(b: &[Rational]) -> Rational {
    b.iter().map(|bi| bi.recip()).max().unwrap_or_else(Rational::zero)
}

/// The constant `C` with `‖φ‖/C ≤ mid ≤ C‖φ‖` on a face with multiplicities `b`.
pub fn sandwich_constant(b: &[Rational]) -> Rational {
    let two = Rational::from_integer(BigInt::from(2));
    face_diameter(b)
        .max(Rational::one())
        .max(Rational::one() + two * direction_constant(b))
}

/// The two-sided comparison between the `C^{0,1}` norm of a convex function on a
/// root face and its boundary data (boundary sup plus inward derivatives).
pub fn lipschitz_sandwich(phi: &PAFunction, face: &Face) -> Result<SandwichReport> {
    let carrier = &phi.carrier;
    let root = carrier.root();
    if !root.is_face(face) || face.is_empty() {
        return Err(Error::Structural("not a face of the complex".into()));
    }
    let n = face.len();
    if n < 2 {
        return Err(Error::Degenerate("a vertex has no interior directions".into()));
    }
    let axes = root.axes(face);
    let cells = carrier.cells_in_face(face);
    if cells.is_empty() {
        return Err(Error::Structural("carrier has no cells on the face".into()));
    }
    if convexity_witness(phi, &cells, &axes).is_some() {
        return Err(Error::Precondition("function is not convex on the face".into()));
    }
    let b: Vec<Rational> = axes
        .iter()
        .map(|&i| from_bigint(&root.multiplicities()[i]))
        .collect();
    let verts = carrier.vertices();
    let mut lipschitz = Rational::zero();
    for c in &cells {
        let m: Matrix = c
            .iter()
            .map(|&v| axes.iter().map(|&a| verts[v].coords[a].clone()).collect())
            .collect();
        let rhs: Vec<Rational> = c.iter().map(|&v| phi.values[v].clone()).collect();
        let g = linalg::solve_unique(&m, &rhs).expect("full cell");
        lipschitz = lipschitz.max(dual_norm(&g, &b));
    }
    let in_face = carrier.vertices_in_face(face);
    let sup_norm = in_face
        .iter()
        .map(|&v| phi.values[v].abs())
        .max()
        .unwrap_or_else(Rational::zero);
    let boundary_sup = in_face
        .iter()
        .filter(|&&v| root.support(&verts[v].coords).len() < n)
        .map(|&v| phi.values[v].abs())
        .max()
        .unwrap_or_else(Rational::zero);
    let mut derivative_sup = Rational::zero();
    for k in 0..n {
        let e = root.vertex(axes[k]);
        let mut seen = false;
        for c in &cells {
            let pts = carrier.cell_points(c);
            let le = polytope::barycentric(&pts, &axes, &e).expect("full cell");
            let on_facet: Vec<usize> = (0..c.len())
                .filter(|&i| verts[c[i]].coords[axes[k]].is_zero())
                .collect();
            let ext_e = phi.combine(c, &le);
            for mask in 1u32..(1 << on_facet.len()) {
                let sub: Vec<usize> = on_facet
                    .iter()
                    .enumerate()
                    .filter(|(bit, _)| mask >> bit & 1 == 1)
                    .map(|(_, &i)| i)
                    .collect();
                let sub_pts: Vec<&Vec<Rational>> = sub.iter().map(|&i| pts[i]).collect();
                let center = polytope::average(&sub_pts);
                let interior = (0..n).filter(|&a| a != k).all(|a| center[axes[a]].is_positive());
                if !interior {
                    continue;
                }
                let inward = (0..c.len()).all(|i| sub.contains(&i) || !le[i].is_negative());
                if !inward {
                    continue;
                }
                seen = true;
                for &i in &sub {
                    derivative_sup = derivative_sup.max((&ext_e - &phi.values[c[i]]).abs());
                }
            }
        }
        if !seen {
            return Err(Error::Structural(format!(
                "no cell meets the facet opposite vertex {k} from inside"
            )));
        }
    }
    let mid = &boundary_sup + &derivative_sup;
    let constant = sandwich_constant(&b);
    let norm = &sup_norm + &lipschitz;
    Ok(SandwichReport {
        lhs: &norm / &constant,
        rhs: &constant * &norm,
        mid,
        constant,
        norm,
        lipschitz,
        sup_norm,
        boundary_sup,
        boundary_derivative_sup: derivative_sup,
    })
}

/// Pointwise maximum of PA functions on a common simplicial carrier, returned on
/// the carrier refined along the tie loci.
pub fn max_of_pa(pieces: &[PAFunction], id: impl Into<String>) -> Result<PAFunction> {
    let first = pieces
        .first()
        .ok_or_else(|| Error::Precondition("empty family".into()))?;
    let base = first.carrier.clone();
    if pieces.iter().any(|p| !Arc::ptr_eq(&p.carrier, &base)) {
        return Err(Error::Structural("pieces live on different carriers".into()));
    }
    let verts = base.vertices();
    // regions as (base cell, root coordinates of vertices)
    let mut regions: Vec<(usize, Vec<Vec<Rational>>)> = Vec::new();
    for (ci, c) in base.cells().iter().enumerate() {
        let d = c.vertices.len() - 1;
        let mut seen: BTreeSet<Vec<Vec<Rational>>> = BTreeSet::new();
        for (k, pk) in pieces.iter().enumerate() {
            let cuts: Vec<Vec<Rational>> = pieces
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .map(|(_, pj)| {
                    c.vertices
                        .iter()
                        .map(|&v| &pk.values[v] - &pj.values[v])
                        .collect()
                })
                .collect();
            let lams = polytope::barycentric_region_vertices(d, &cuts);
            if lams.len() < d + 1 {
                continue;
            }
            let mut pts: Vec<Vec<Rational>> = lams
                .iter()
                .map(|l| {
                    let mut x = vec![Rational::zero(); verts[0].coords.len()];
                    for (t, &v) in l.iter().zip(&c.vertices) {
                        for (xi, wi) in x.iter_mut().zip(&verts[v].coords) {
                            *xi += t * wi;
                        }
                    }
                    x
                })
                .collect();
            pts.sort();
            let refs: Vec<&Vec<Rational>> = pts.iter().collect();
            if polytope::linear_rank(&refs) != d + 1 {
                continue;
            }
            if seen.insert(pts.clone()) {
                regions.push((ci, pts));
            }
        }
    }
    let all: BTreeSet<Vec<Rational>> = regions.iter().flat_map(|(_, p)| p.iter().cloned()).collect();
    let global: Vec<Vec<Rational>> = all.into_iter().collect();
    let index: BTreeMap<&Vec<Rational>, usize> = global.iter().enumerate().map(|(i, p)| (p, i)).collect();
    let mut cells = Vec::new();
    for (ci, pts) in &regions {
        let refs: Vec<&Vec<Rational>> = pts.iter().collect();
        let keys: Vec<usize> = pts.iter().map(|p| index[p]).collect();
        for s in polytope::pulling_triangulation(&refs, &keys) {
            cells.push((s.iter().map(|&i| keys[i]).collect(), *ci));
        }
    }
    let sub = Subdivision::new(
        id,
        &base,
        global.iter().map(|p| (None, p.clone())).collect(),
        cells,
    )?;
    let values = global
        .iter()
        .map(|x| {
            pieces
                .iter()
                .map(|p| p.eval_root(x))
                .collect::<Result<Vec<_>>>()
                .map(|v| v.into_iter().max().expect("nonempty"))
        })
        .collect::<Result<Vec<_>>>()?;
    PAFunction::new(sub, values)
}
