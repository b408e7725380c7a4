//! Support functions, the star subdivision of a face, and simplicial refinement.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::complex::ComponentId;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::polytope;
use crate::rational::{from_bigint, lcm_denominators, Rational};
use crate::subdivision::Subdivision;

/// A function on a subdivision, affine on each (possibly non-simplicial) cell.
///
/// `values` are `multiplier` times the underlying function; after
/// [`SupportFunction::integral`] the gradients are integral.
#[derive(Debug, Clone)]
pub struct SupportFunction {
    subdivision: Arc<Subdivision>,
    values: Vec<Rational>,
    multiplier: BigInt,
}

impl SupportFunction {
    pub fn new(subdivision: Arc<Subdivision>, values: Vec<Rational>) -> Result<Self> {
        if subdivision.parent().is_none() {
            return Err(Error::Precondition(
                "a support function needs a subdivision with a parent".into(),
            ));
        }
        if values.len() != subdivision.vertices().len() {
            return Err(Error::Structural("one value per vertex is required".into()));
        }
        let h = Self {
            subdivision,
            values,
            multiplier: BigInt::one(),
        };
        for k in 0..h.subdivision.cells().len() {
            if h.try_gradient(k).is_none() {
                return Err(Error::Structural(format!("values are not affine on cell {k}")));
            }
        }
        Ok(h)
    }

    pub fn subdivision(&self) -> &Arc<Subdivision> {
        &self.subdivision
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    pub fn multiplier(&self) -> &BigInt {
        &self.multiplier
    }

    /// Values divided by the multiplier.
    pub fn unscaled_values(&self) -> Vec<Rational> {
        let m = from_bigint(&self.multiplier);
        self.values.iter().map(|v| v / &m).collect()
    }

    fn try_gradient(&self, k: usize) -> Option<Vec<Rational>> {
        let sub = &self.subdivision;
        let cell = &sub.cells()[k];
        let axes = sub.axes(&cell.root_face);
        let m: Matrix = cell
            .vertices
            .iter()
            .map(|&v| axes.iter().map(|&a| sub.vertices()[v].coords[a].clone()).collect())
            .collect();
        let rhs: Vec<Rational> = cell.vertices.iter().map(|&v| self.values[v].clone()).collect();
        let g = linalg::solve(&m, &rhs)?;
        let mut dense = vec![Rational::zero(); sub.root().len()];
        for (a, gi) in axes.iter().zip(g) {
            dense[*a] = gi;
        }
        Some(dense)
    }

    /// Gradient on cell `k` as a root functional (zero off the cell's root face).
    pub fn gradient(&self, k: usize) -> Vec<Rational> {
        self.try_gradient(k).expect("checked at construction")
    }

    /// Divisor coefficients of the cell's affine piece on the parent cell's vertices.
    pub fn parent_coefficients(&self, k: usize) -> Vec<(ComponentId, Rational)> {
        let parent = self.subdivision.parent().expect("checked at construction");
        let g = self.gradient(k);
        let pc = &parent.cells()[self.subdivision.cells()[k].parent_cell];
        pc.vertices
            .iter()
            .map(|&w| {
                let pv = &parent.vertices()[w];
                (pv.id, linalg::dot(&g, &pv.coords) * from_bigint(&pv.multiplicity))
            })
            .collect()
    }

    pub fn is_integral(&self) -> bool {
        (0..self.subdivision.cells().len())
            .all(|k| self.parent_coefficients(k).iter().all(|(_, c)| c.is_integer()))
    }

    /// The smallest positive integer multiple with integral gradients.
    pub fn integral(&self) -> Self {
        let coeffs: Vec<Rational> = (0..self.subdivision.cells().len())
            .flat_map(|k| self.parent_coefficients(k).into_iter().map(|(_, c)| c))
            .collect();
        let l = lcm_denominators(&coeffs);
        let lq = from_bigint(&l);
        Self {
            subdivision: self.subdivision.clone(),
            values: self.values.iter().map(|v| v * &lq).collect(),
            multiplier: &self.multiplier * l,
        }
    }

    pub fn eval_root(&self, x: &[Rational]) -> Result<Rational> {
        let sub = &self.subdivision;
        let supp = sub.root().support(x);
        for (k, c) in sub.cells().iter().enumerate() {
            if !supp.is_subset(&c.root_face) {
                continue;
            }
            let pts = sub.cell_points(&c.vertices);
            if contains(&pts, &sub.axes(&c.root_face), x) {
                return Ok(linalg::dot(&self.gradient(k), x));
            }
        }
        Err(Error::Precondition("point not in any cell".into()))
    }
}

fn contains(pts: &[&Vec<Rational>], axes: &[usize], x: &[Rational]) -> bool {
    let keys: Vec<usize> = (0..pts.len()).collect();
    polytope::pulling_triangulation(pts, &keys).iter().any(|s| {
        let sp: Vec<&Vec<Rational>> = s.iter().map(|&i| pts[i]).collect();
        polytope::barycentric(&sp, axes, x).is_some_and(|l| l.iter().all(|t| !t.is_negative()))
    })
}

/// Outcome of the projectivity certificate, with a description of the first failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportCertificate {
    pub certified: bool,
    pub failure: Option<String>,
}

/// Checks integrality, convexity on each parent cell, and that adjacent cells
/// inside one parent cell carry different gradients.
pub fn certify_support(h: &SupportFunction) -> Result<SupportCertificate> {
    if !h.is_integral() {
        return Err(Error::Type("support function has non-integral gradients".into()));
    }
    let sub = &h.subdivision;
    let cells = sub.cells();
    let grads: Vec<Vec<Rational>> = (0..cells.len()).map(|k| h.gradient(k)).collect();
    for i in 0..cells.len() {
        for j in i + 1..cells.len() {
            let (a, b) = (&cells[i], &cells[j]);
            if a.parent_cell != b.parent_cell || a.root_face != b.root_face {
                continue;
            }
            let shared: Vec<usize> = a.vertices.iter().copied().filter(|v| b.vertices.contains(v)).collect();
            if shared.is_empty()
                || polytope::linear_rank(&sub.cell_points(&shared)) + 1 != a.root_face.len()
            {
                continue;
            }
            for (gi, other) in [(i, b), (j, a)] {
                for &w in other.vertices.iter().filter(|w| !shared.contains(w)) {
                    let ext = linalg::dot(&grads[gi], &sub.vertices()[w].coords);
                    if ext > h.values[w] {
                        return Ok(SupportCertificate {
                            certified: false,
                            failure: Some(format!(
                                "not convex across the ridge between cells {i} and {j}"
                            )),
                        });
                    }
                }
            }
            if grads[i] == grads[j] {
                return Ok(SupportCertificate {
                    certified: false,
                    failure: Some(format!("cells {i} and {j} share a gradient across a ridge")),
                });
            }
        }
    }
    Ok(SupportCertificate {
        certified: true,
        failure: None,
    })
}

pub fn is_strictly_convex_support(h: &SupportFunction) -> Result<bool> {
    certify_support(h).map(|c| c.certified)
}

/// Star subdivision of `delta` at a rational point `v` in the relative interior
/// of the face `sigma`, with the shrunken copy of the star scaled by `eps`.
///
/// Returns the subdivision together with an integral multiple of its support function.
pub fn star_subdivision(
    delta: &Arc<Subdivision>,
    sigma: &[ComponentId],
    v: &[Rational],
    eps: &Rational,
) -> Result<(Arc<Subdivision>, SupportFunction)> {
    delta.require_simplicial()?;
    if !(eps.is_positive() && *eps < Rational::one()) {
        return Err(Error::Precondition(format!("eps = {eps} is not in (0,1)")));
    }
    let mut sig: Vec<usize> = sigma
        .iter()
        .map(|id| {
            delta
                .vertex_index(*id)
                .ok_or_else(|| Error::Structural(format!("unknown vertex {}", id.0)))
        })
        .collect::<Result<_>>()?;
    sig.sort_unstable();
    sig.dedup();
    let star: Vec<usize> = (0..delta.cells().len())
        .filter(|&k| sig.iter().all(|s| delta.cells()[k].vertices.contains(s)))
        .collect();
    if star.is_empty() {
        return Err(Error::Structural("sigma is not a face".into()));
    }
    if sig.len() < 2 {
        return Err(Error::Degenerate(
            "sigma is a vertex; its only interior point leaves nothing to subdivide".into(),
        ));
    }
    delta.root().check_dense(v)?;
    let root = delta.root();
    let mut sigma_face = BTreeSet::new();
    for &s in &sig {
        sigma_face.extend(root.support(&delta.vertices()[s].coords));
    }
    let sig_pts = delta.cell_points(&sig);
    let lam = polytope::barycentric_in_span(&sig_pts, &root.axes(&sigma_face), v)
        .filter(|l| {
            // must reproduce v exactly
            let mut y = vec![Rational::zero(); v.len()];
            for (t, p) in l.iter().zip(&sig_pts) {
                for (yi, pi) in y.iter_mut().zip(p.iter()) {
                    *yi += t * pi;
                }
            }
            y == v
        })
        .ok_or_else(|| Error::Degenerate("v does not lie in sigma".into()))?;
    if lam.iter().any(|t| !t.is_positive()) {
        return Err(Error::Degenerate("v lies on the boundary of sigma".into()));
    }
    let link: BTreeSet<usize> = star
        .iter()
        .flat_map(|&k| delta.cells()[k].vertices.iter().copied())
        .collect();
    let one_minus = Rational::one() - eps;
    let mut verts: Vec<(Option<ComponentId>, Vec<Rational>)> = delta
        .vertices()
        .iter()
        .map(|x| (Some(x.id), x.coords.clone()))
        .collect();
    let mut shrunk: BTreeMap<usize, usize> = BTreeMap::new();
    for &j in &link {
        let c: Vec<Rational> = delta.vertices()[j]
            .coords
            .iter()
            .zip(v)
            .map(|(w, vi)| eps * w + &one_minus * vi)
            .collect();
        shrunk.insert(j, verts.len());
        verts.push((None, c));
    }
    let mut cells: Vec<(Vec<usize>, usize)> = Vec::new();
    for (k, c) in delta.cells().iter().enumerate() {
        if !star.contains(&k) {
            cells.push((c.vertices.clone(), k));
            continue;
        }
        cells.push((c.vertices.iter().map(|w| shrunk[w]).collect(), k));
        for &j in &sig {
            let tau: Vec<usize> = c.vertices.iter().copied().filter(|&w| w != j).collect();
            let mut prism = tau.clone();
            prism.extend(tau.iter().map(|w| shrunk[w]));
            cells.push((prism, k));
        }
    }
    let n_old = delta.vertices().len();
    let id = format!("{}/star", delta.id());
    let sub = Subdivision::new(id, delta, verts, cells)?;
    let values = (0..sub.vertices().len())
        .map(|i| if i < n_old { Rational::zero() } else { -one_minus.clone() })
        .collect();
    let h = SupportFunction::new(sub.clone(), values)?.integral();
    Ok((sub, h))
}

/// Subdivides every non-simplicial face at its barycenter, in order of
/// increasing dimension, and re-certifies a perturbed support function.
pub fn barycentric_refine(
    sub: &Arc<Subdivision>,
    h: &SupportFunction,
    frozen: &[Vec<ComponentId>],
    depth_cap: u32,
) -> Result<(Arc<Subdivision>, SupportFunction)> {
    if !Arc::ptr_eq(h.subdivision(), sub) {
        return Err(Error::Structural("support function lives on another subdivision".into()));
    }
    let parent = sub
        .parent()
        .ok_or_else(|| Error::Precondition("nothing to refine on the root".into()))?
        .clone();
    let faces = sub.faces();
    for f in frozen {
        let mut idx: Vec<usize> = f
            .iter()
            .map(|id| {
                sub.vertex_index(*id)
                    .ok_or_else(|| Error::Structural(format!("unknown vertex {}", id.0)))
            })
            .collect::<Result<_>>()?;
        idx.sort_unstable();
        if !faces.contains(&idx) {
            return Err(Error::Structural("frozen set is not a face".into()));
        }
        if !polytope::is_simplex(&sub.cell_points(&idx)) {
            return Err(Error::Precondition("frozen face is not simplicial".into()));
        }
    }
    let mut ordered: Vec<(usize, Vec<usize>)> = faces
        .into_iter()
        .map(|f| (polytope::linear_rank(&sub.cell_points(&f)), f))
        .collect();
    ordered.sort();
    if ordered.iter().all(|(r, f)| *r == f.len()) {
        return Ok((sub.clone(), h.clone()));
    }
    let mut verts: Vec<(Option<ComponentId>, Vec<Rational>)> = sub
        .vertices()
        .iter()
        .map(|x| (Some(x.id), x.coords.clone()))
        .collect();
    let mut base_values: Vec<Rational> = h.values().to_vec();
    let mut centers: Vec<(usize, usize)> = Vec::new(); // (vertex, rank)
    let mut tri: BTreeMap<Vec<usize>, Vec<Vec<usize>>> = BTreeMap::new();
    for (rank, f) in &ordered {
        if *rank == f.len() {
            tri.insert(f.clone(), vec![f.clone()]);
            continue;
        }
        let pts: Vec<&Vec<Rational>> = f.iter().map(|&i| &verts[i].1).collect();
        let center = polytope::average(&pts);
        let local_facets = polytope::facets(&pts);
        let avg = f.iter().map(|&i| base_values[i].clone()).sum::<Rational>()
            / Rational::from_integer(BigInt::from(f.len()));
        let nb = verts.len();
        verts.push((None, center));
        base_values.push(avg);
        centers.push((nb, *rank));
        let mut pieces = Vec::new();
        for g in local_facets {
            let global: Vec<usize> = g.iter().map(|&k| f[k]).collect();
            for s in &tri[&global] {
                let mut s = s.clone();
                s.push(nb);
                s.sort_unstable();
                pieces.push(s);
            }
        }
        tri.insert(f.clone(), pieces);
    }
    let cells: Vec<(Vec<usize>, usize)> = sub
        .cells()
        .iter()
        .flat_map(|c| tri[&c.vertices].iter().map(move |s| (s.clone(), c.parent_cell)))
        .collect();
    let id = format!("{}/bary", sub.id());
    let refined = Subdivision::new(id, &parent, verts, cells)?;
    let max_rank = centers.iter().map(|(_, r)| *r).max().expect("some center");
    let mut delta = Rational::new(BigInt::one(), BigInt::from(4));
    let mut eta = Rational::new(BigInt::one(), BigInt::from(4));
    for _ in 0..=depth_cap {
        let mut values = base_values.clone();
        for (vtx, rank) in &centers {
            let mut drop = delta.clone();
            for _ in *rank..max_rank {
                drop *= &eta;
            }
            values[*vtx] -= drop;
        }
        let cand = SupportFunction::new(refined.clone(), values)?.integral();
        if is_strictly_convex_support(&cand)? {
            let mut cand = cand;
            cand.multiplier *= &h.multiplier;
            return Ok((refined, cand));
        }
        delta /= Rational::from_integer(BigInt::from(2));
        eta /= Rational::from_integer(BigInt::from(2));
    }
    Err(Error::Structural(format!(
        "refinement not certified within depth cap {depth_cap}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{validate_complex, RawComplex};
    use crate::rational::{int, rat};

    fn simplex(n: u32) -> Arc<Subdivision> {
        let ids: Vec<u32> = (1..=n).collect();
        let mut faces = Vec::new();
        for mask in 1u32..(1 << n) {
            faces.push(ids.iter().copied().filter(|i| mask >> (i - 1) & 1 == 1).collect());
        }
        let c = validate_complex(&RawComplex {
            id: format!("simplex{n}"),
            components: ids.iter().map(|&i| (i, 1.into())).collect(),
            faces,
        })
        .unwrap();
        Subdivision::trivial(Arc::new(c))
    }

    #[test]
    fn segment_star_matches_construction() {
        let root = simplex(2);
        let (sub, h) = star_subdivision(
            &root,
            &[ComponentId(1), ComponentId(2)],
            &[rat(1, 2), rat(1, 2)],
            &rat(1, 2),
        )
        .unwrap();
        let coords: Vec<&Vec<Rational>> = sub.vertices().iter().map(|v| &v.coords).collect();
        assert!(coords.contains(&&vec![rat(3, 4), rat(1, 4)]));
        assert!(coords.contains(&&vec![rat(1, 4), rat(3, 4)]));
        assert_eq!(sub.vertices().len(), 4);
        assert_eq!(sub.cells().len(), 3);
        assert_eq!(*h.multiplier(), BigInt::from(2));
        // h = max(-2 t1, -2 t2, -1/2)
        let hv = h.unscaled_values();
        for (v, val) in sub.vertices().iter().zip(&hv) {
            let t = &v.coords;
            let expect = (int(-2) * &t[0]).max(int(-2) * &t[1]).max(rat(-1, 2));
            assert_eq!(*val, expect);
        }
        assert!(is_strictly_convex_support(&h).unwrap());
        sub.check_tiling().unwrap();
    }

    #[test]
    fn star_errors() {
        let root = simplex(2);
        let both = [ComponentId(1), ComponentId(2)];
        assert!(matches!(
            star_subdivision(&root, &[ComponentId(1)], &[int(1), int(0)], &rat(1, 2)),
            Err(Error::Degenerate(_))
        ));
        assert!(star_subdivision(&root, &both, &[int(1), int(0)], &rat(1, 2)).is_err());
        assert!(star_subdivision(&root, &both, &[rat(1, 2), rat(1, 2)], &int(1)).is_err());
    }

    #[test]
    fn star_on_an_edge_inside_a_root_face() {
        let root = simplex(3);
        let all = [ComponentId(1), ComponentId(2), ComponentId(3)];
        let third = vec![rat(1, 3); 3];
        let (star, h) = star_subdivision(&root, &all, &third, &rat(1, 2)).unwrap();
        let (fine, _) = barycentric_refine(&star, &h, &[], 8).unwrap();
        // an edge from a root vertex to a shrunk vertex crosses the open triangle
        let inner = fine
            .vertices()
            .iter()
            .find(|v| v.coords == vec![rat(2, 3), rat(1, 6), rat(1, 6)])
            .expect("shrunk copy of e1")
            .id;
        let edge = [ComponentId(1), inner];
        let mid = vec![rat(5, 6), rat(1, 12), rat(1, 12)];
        let (again, g) = star_subdivision(&fine, &edge, &mid, &rat(1, 2)).unwrap();
        assert_eq!(again.vertices().len(), fine.vertices().len() + 4);
        let (done, _) = barycentric_refine(&again, &g, &[], 8).unwrap();
        done.check_tiling().unwrap();
    }

    #[test]
    fn flat_function_is_not_strict() {
        let root = simplex(2);
        let (sub, _) = star_subdivision(
            &root,
            &[ComponentId(1), ComponentId(2)],
            &[rat(1, 3), rat(2, 3)],
            &rat(1, 2),
        )
        .unwrap();
        let zero = SupportFunction::new(sub.clone(), vec![int(0); sub.vertices().len()]).unwrap();
        assert!(!is_strictly_convex_support(&zero).unwrap());
        let half = SupportFunction::new(
            sub.clone(),
            sub.vertices().iter().map(|v| rat(1, 2) * &v.coords[0]).collect(),
        )
        .unwrap();
        assert!(matches!(is_strictly_convex_support(&half), Err(Error::Type(_))));
    }

    #[test]
    fn triangle_edge_star_refines_quadrilaterals() {
        let root = simplex(3);
        let v = vec![rat(1, 3), rat(2, 3), int(0)];
        let (sub, h) =
            star_subdivision(&root, &[ComponentId(1), ComponentId(2)], &v, &rat(1, 2)).unwrap();
        assert_eq!(sub.cells().len(), 3);
        assert!(!sub.is_simplicial());
        assert!(is_strictly_convex_support(&h).unwrap());
        sub.check_tiling().unwrap();
        let inner: Vec<ComponentId> = sub.vertices()[3..].iter().map(|x| x.id).collect();
        let (refined, h2) = barycentric_refine(&sub, &h, &[inner.clone()], 8).unwrap();
        assert!(refined.is_simplicial());
        // two quadrilaterals split into four triangles each, plus the shrunken triangle
        assert_eq!(refined.cells().len(), 9);
        assert!(is_strictly_convex_support(&h2).unwrap());
        refined.check_tiling().unwrap();
        let mut frozen: Vec<usize> = inner.iter().map(|id| refined.vertex_index(*id).unwrap()).collect();
        frozen.sort_unstable();
        assert!(refined.cells().iter().any(|c| c.vertices == frozen));
        let (same, _) = barycentric_refine(&refined, &h2, &[], 8).unwrap();
        assert!(Arc::ptr_eq(&same, &refined));
    }

    #[test]
    fn tetrahedron_star_refines() {
        let root = simplex(4);
        let v = vec![rat(1, 4), rat(3, 4), int(0), int(0)];
        let (sub, h) =
            star_subdivision(&root, &[ComponentId(1), ComponentId(2)], &v, &rat(1, 3)).unwrap();
        assert!(is_strictly_convex_support(&h).unwrap());
        sub.check_tiling().unwrap();
        let (refined, h2) = barycentric_refine(&sub, &h, &[], 8).unwrap();
        assert!(refined.is_simplicial());
        assert!(is_strictly_convex_support(&h2).unwrap());
        refined.check_tiling().unwrap();
    }
}
