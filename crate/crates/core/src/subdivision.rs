//! Rational subdivisions of a dual complex and the retraction onto ancestors.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::complex::{format_face, ComponentId, DualComplex, Face, SkeletonPoint};
use crate::error::{Error, Result};
use crate::linalg;
use crate::polytope;
use crate::rational::{from_bigint, lcm_denominators, Rational};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubVertex {
    pub id: ComponentId,
    /// Coordinates in the root complex's component basis.
    pub coords: Vec<Rational>,
    /// Smallest positive integer clearing the denominators of `coords`.
    pub multiplicity: BigInt,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    /// Sorted indices into the subdivision's vertex list.
    pub vertices: Vec<usize>,
    /// Index of the parent cell containing this cell.
    pub parent_cell: usize,
    /// Smallest root face containing the cell.
    pub root_face: Face,
}

/// A subdivision of a parent (or the root complex itself when `parent` is absent).
#[derive(Debug, Clone)]
pub struct Subdivision {
    id: String,
    root: Arc<DualComplex>,
    parent: Option<Arc<Subdivision>>,
    vertices: Vec<SubVertex>,
    cells: Vec<Cell>,
}

pub fn vertex_multiplicity(coords: &[Rational]) -> BigInt {
    lcm_denominators(coords)
}

impl Subdivision {
    /// The root complex viewed as its own trivial subdivision.
    pub fn trivial(root: Arc<DualComplex>) -> Arc<Self> {
        let vertices = (0..root.len())
            .map(|i| SubVertex {
                id: root.ids()[i],
                coords: root.vertex(i),
                multiplicity: root.multiplicities()[i].clone(),
            })
            .collect();
        let cells = root
            .maximal_faces()
            .iter()
            .enumerate()
            .map(|(k, f)| Cell {
                vertices: root.axes(f),
                parent_cell: k,
                root_face: f.clone(),
            })
            .collect();
        Arc::new(Self {
            id: root.id().to_string(),
            root,
            parent: None,
            vertices,
            cells,
        })
    }

    /// Builds a subdivision of `parent`.
    ///
    /// Vertices with an explicit id keep it; otherwise a vertex coinciding with
    /// a parent vertex inherits the parent's id and the rest get fresh ids.
    pub fn new(
        id: impl Into<String>,
        parent: &Arc<Subdivision>,
        vertices: Vec<(Option<ComponentId>, Vec<Rational>)>,
        cells: Vec<(Vec<usize>, usize)>,
    ) -> Result<Arc<Self>> {
        let root = parent.root.clone();
        let by_coords: BTreeMap<&Vec<Rational>, ComponentId> =
            parent.vertices.iter().map(|v| (&v.coords, v.id)).collect();
        let mut used: BTreeSet<ComponentId> = vertices.iter().filter_map(|(i, _)| *i).collect();
        let mut next = parent
            .all_ids()
            .into_iter()
            .chain(used.iter().copied())
            .map(|c| c.0)
            .max()
            .map_or(0, |m| m + 1);
        let mut out = Vec::with_capacity(vertices.len());
        for (explicit, coords) in vertices {
            root.check_dense(&coords)?;
            let id = match explicit {
                Some(id) => id,
                None => match by_coords.get(&coords) {
                    Some(&id) if !used.contains(&id) => id,
                    _ => {
                        let id = ComponentId(next);
                        next += 1;
                        id
                    }
                },
            };
            used.insert(id);
            out.push(SubVertex {
                id,
                multiplicity: vertex_multiplicity(&coords),
                coords,
            });
        }
        let ids: BTreeSet<ComponentId> = out.iter().map(|v| v.id).collect();
        if ids.len() != out.len() {
            return Err(Error::Structural("duplicate vertex ids in subdivision".into()));
        }
        let mut built = Vec::with_capacity(cells.len());
        for (mut vs, parent_cell) in cells {
            vs.sort_unstable();
            vs.dedup();
            if vs.iter().any(|&v| v >= out.len()) {
                return Err(Error::Structural("cell references unknown vertex".into()));
            }
            if parent_cell >= parent.cells.len() {
                return Err(Error::Structural("cell references unknown parent cell".into()));
            }
            let mut root_face = Face::new();
            for &v in &vs {
                root_face.extend(root.support(&out[v].coords));
            }
            built.push(Cell {
                vertices: vs,
                parent_cell,
                root_face,
            });
        }
        Ok(Arc::new(Self {
            id: id.into(),
            root,
            parent: Some(parent.clone()),
            vertices: out,
            cells: built,
        }))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn root(&self) -> &Arc<DualComplex> {
        &self.root
    }

    pub fn parent(&self) -> Option<&Arc<Subdivision>> {
        self.parent.as_ref()
    }

    pub fn vertices(&self) -> &[SubVertex] {
        &self.vertices
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn vertex_index(&self, id: ComponentId) -> Option<usize> {
        self.vertices.iter().position(|v| v.id == id)
    }

    pub fn vertex_by_coords(&self, coords: &[Rational]) -> Option<usize> {
        self.vertices.iter().position(|v| v.coords == coords)
    }

    fn all_ids(&self) -> Vec<ComponentId> {
        let mut ids: Vec<ComponentId> = self.vertices.iter().map(|v| v.id).collect();
        if let Some(p) = &self.parent {
            ids.extend(p.all_ids());
        }
        ids
    }

    pub fn cell_points(&self, cell: &[usize]) -> Vec<&Vec<Rational>> {
        cell.iter().map(|&v| &self.vertices[v].coords).collect()
    }

    pub fn is_cell_simplicial(&self, cell: &Cell) -> bool {
        polytope::is_simplex(&self.cell_points(&cell.vertices))
    }

    pub fn is_simplicial(&self) -> bool {
        self.cells.iter().all(|c| self.is_cell_simplicial(c))
    }

    pub fn require_simplicial(&self) -> Result<()> {
        match self.cells.iter().position(|c| !self.is_cell_simplicial(c)) {
            None => Ok(()),
            Some(k) => Err(Error::Precondition(format!(
                "carrier `{}` is not simplicial (cell {k})",
                self.id
            ))),
        }
    }

    pub fn axes(&self, face: &Face) -> Vec<usize> {
        self.root.axes(face)
    }

    /// All faces of all cells, as sorted vertex-index lists.
    pub fn faces(&self) -> BTreeSet<Vec<usize>> {
        let mut out = BTreeSet::new();
        for c in &self.cells {
            let pts = self.cell_points(&c.vertices);
            for f in polytope::face_lattice(&pts) {
                out.insert(f.iter().map(|&k| c.vertices[k]).collect());
            }
        }
        out
    }

    /// Simplicial cells of the restriction to the root face `face`.
    pub fn cells_in_face(&self, face: &Face) -> Vec<Vec<usize>> {
        let want = face.len();
        let mut out: BTreeSet<Vec<usize>> = BTreeSet::new();
        for c in &self.cells {
            if !face.is_subset(&c.root_face) {
                continue;
            }
            let inside: Vec<usize> = c
                .vertices
                .iter()
                .copied()
                .filter(|&v| self.root.support(&self.vertices[v].coords).is_subset(face))
                .collect();
            if inside.len() == want && polytope::linear_rank(&self.cell_points(&inside)) == want {
                out.insert(inside);
            }
        }
        out.into_iter().collect()
    }

    /// Vertex indices whose coordinates are supported in `face`.
    pub fn vertices_in_face(&self, face: &Face) -> Vec<usize> {
        (0..self.vertices.len())
            .filter(|&v| self.root.support(&self.vertices[v].coords).is_subset(face))
            .collect()
    }

    /// Finds a simplicial cell containing the root point and its barycentric coordinates.
    pub fn locate(&self, x: &[Rational]) -> Option<(usize, Vec<Rational>)> {
        let supp = self.root.support(x);
        for (k, c) in self.cells.iter().enumerate() {
            if !supp.is_subset(&c.root_face) {
                continue;
            }
            let pts = self.cell_points(&c.vertices);
            if pts.len() != c.root_face.len() {
                continue;
            }
            let axes = self.axes(&c.root_face);
            if let Some(l) = polytope::barycentric(&pts, &axes, x) {
                if l.iter().all(|v| !v.is_negative()) {
                    return Some((k, l));
                }
            }
        }
        None
    }

    /// Root coordinates of a point given in this subdivision's vertex coordinates.
    pub fn to_root(&self, p: &SkeletonPoint) -> Result<Vec<Rational>> {
        if p.complex != self.id {
            return Err(Error::Structural(format!(
                "point belongs to `{}`, not `{}`",
                p.complex, self.id
            )));
        }
        if self.parent.is_none() {
            return self.root.dense(p);
        }
        let mut x = vec![Rational::zero(); self.root.len()];
        let mut total = Rational::zero();
        let mut support = Vec::new();
        for (id, s) in &p.coords {
            let v = self
                .vertex_index(*id)
                .ok_or_else(|| Error::Structural(format!("unknown vertex {}", id.0)))?;
            if s.is_negative() {
                return Err(Error::Structural(format!("coordinate of {id} is negative")));
            }
            if s.is_zero() {
                continue;
            }
            support.push(v);
            let t = s * from_bigint(&self.vertices[v].multiplicity);
            for (xi, ci) in x.iter_mut().zip(&self.vertices[v].coords) {
                *xi += &t * ci;
            }
            total += t;
        }
        if !total.is_one() {
            return Err(Error::Structural(format!(
                "normalization fails: sum of b'_v s_v is {total}, expected 1"
            )));
        }
        let is_face = self
            .cells
            .iter()
            .any(|c| support.iter().all(|v| c.vertices.contains(v)) && self.is_cell_simplicial(c));
        if !is_face {
            return Err(Error::Structural("support is not a face of the subdivision".into()));
        }
        Ok(x)
    }

    /// Expresses a root point in this subdivision's vertex coordinates.
    pub fn from_root(&self, x: &[Rational]) -> Result<SkeletonPoint> {
        self.root.check_dense(x)?;
        if self.parent.is_none() {
            return Ok(self.root.sparse(x));
        }
        let (k, l) = self
            .locate(x)
            .ok_or_else(|| Error::Precondition(format!("point not located in `{}`", self.id)))?;
        let coords = self.cells[k]
            .vertices
            .iter()
            .zip(&l)
            .filter(|(_, t)| !t.is_zero())
            .map(|(&v, t)| {
                let vx = &self.vertices[v];
                (vx.id, t / from_bigint(&vx.multiplicity))
            })
            .collect();
        Ok(SkeletonPoint {
            complex: self.id.clone(),
            coords,
        })
    }

    pub fn is_descendant_of(&self, target: &str) -> bool {
        self.id == target || self.parent.as_ref().is_some_and(|p| p.is_descendant_of(target))
    }

    fn ancestor(&self, target: &str) -> Option<&Subdivision> {
        if self.id == target {
            return Some(self);
        }
        self.parent.as_ref().and_then(|p| p.ancestor(target))
    }

    /// Checks that within every parent cell the child cells tile it exactly.
    ///
    /// The certificate combines containment, equality of normalized volumes, and
    /// a facet matching: every child facet either lies on the parent's boundary
    /// or is shared by exactly one other child lying on its other side.
    pub fn check_tiling(&self) -> Result<()> {
        let Some(parent) = &self.parent else {
            return Ok(());
        };
        for (pk, pc) in parent.cells.iter().enumerate() {
            let ppts = parent.cell_points(&pc.vertices);
            if !polytope::is_simplex(&ppts) {
                return Err(Error::Precondition(format!(
                    "parent cell {pk} is not simplicial; tiling is certified on simplicial parents"
                )));
            }
            let axes = self.axes(&pc.root_face);
            let children: Vec<&Cell> = self.cells.iter().filter(|c| c.parent_cell == pk).collect();
            if children.is_empty() {
                return Err(Error::Structural(format!("parent cell {pk} has no children")));
            }
            let mut vol = Rational::zero();
            let mut facet_owners: BTreeMap<Vec<usize>, Vec<(usize, usize)>> = BTreeMap::new();
            for (ci, c) in children.iter().enumerate() {
                if c.root_face != pc.root_face {
                    return Err(Error::Structural(format!(
                        "child of parent cell {pk} spans {} instead of {}",
                        format_face(&c.root_face),
                        format_face(&pc.root_face)
                    )));
                }
                let pts = self.cell_points(&c.vertices);
                for p in &pts {
                    let l = polytope::barycentric(&ppts, &axes, p).ok_or_else(|| {
                        Error::Structural(format!("parent cell {pk} is degenerate"))
                    })?;
                    if l.iter().any(Signed::is_negative) {
                        return Err(Error::Structural(format!(
                            "a child vertex lies outside parent cell {pk}"
                        )));
                    }
                }
                if polytope::linear_rank(&pts) != axes.len() {
                    return Err(Error::Structural(format!(
                        "a child of parent cell {pk} is not full-dimensional"
                    )));
                }
                vol += polytope::volume(&pts, &axes);
                for f in polytope::facets(&pts) {
                    let global: Vec<usize> = f.iter().map(|&k| c.vertices[k]).collect();
                    let off = (0..c.vertices.len()).find(|k| !f.contains(k)).expect("off vertex");
                    facet_owners.entry(global).or_default().push((ci, c.vertices[off]));
                }
            }
            let pvol = polytope::volume(&ppts, &axes);
            if vol != pvol {
                return Err(Error::Structural(format!(
                    "volumes in parent cell {pk} sum to {vol}, expected {pvol}"
                )));
            }
            for (facet, owners) in &facet_owners {
                let fpts = self.cell_points(facet);
                let on_boundary = (0..ppts.len()).any(|k| {
                    fpts.iter().all(|p| {
                        polytope::barycentric(&ppts, &axes, p).expect("checked")[k].is_zero()
                    })
                });
                match (on_boundary, owners.len()) {
                    (true, 1) => {}
                    (false, 2) => {
                        let rows: linalg::Matrix = fpts
                            .iter()
                            .map(|p| axes.iter().map(|&a| p[a].clone()).collect())
                            .collect();
                        let normal = linalg::nullspace(&rows, axes.len())
                            .pop()
                            .ok_or_else(|| Error::Structural("degenerate facet".into()))?;
                        let side = |v: usize| {
                            let p = &self.vertices[v].coords;
                            let y: Vec<Rational> = axes.iter().map(|&a| p[a].clone()).collect();
                            linalg::dot(&normal, &y)
                        };
                        let (a, b) = (side(owners[0].1), side(owners[1].1));
                        if (&a * &b).is_positive() || a.is_zero() || b.is_zero() {
                            return Err(Error::Structural(format!(
                                "two cells overlap across an interior facet in parent cell {pk}"
                            )));
                        }
                    }
                    _ => {
                        return Err(Error::Structural(format!(
                            "facet matching fails in parent cell {pk}: {} owner(s), boundary = {on_boundary}",
                            owners.len()
                        )))
                    }
                }
            }
        }
        Ok(())
    }
}

/// Re-expresses a point of `source` on the ancestor named `target`.
pub fn retract(source: &Subdivision, p: &SkeletonPoint, target: &str) -> Result<SkeletonPoint> {
    let anc = source.ancestor(target).ok_or_else(|| {
        Error::Structural(format!("`{}` is not a descendant of `{target}`", source.id))
    })?;
    let x = source.to_root(p)?;
    anc.from_root(&x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{validate_complex, RawComplex};
    use crate::rational::{int, rat};

    fn segment() -> Arc<Subdivision> {
        let c = validate_complex(&RawComplex {
            id: "seg".into(),
            components: vec![(1, 1.into()), (2, 1.into())],
            faces: vec![vec![1], vec![2], vec![1, 2]],
        })
        .unwrap();
        Subdivision::trivial(Arc::new(c))
    }

    fn halved(parent: &Arc<Subdivision>) -> Arc<Subdivision> {
        Subdivision::new(
            "seg/2",
            parent,
            vec![
                (None, vec![int(1), int(0)]),
                (None, vec![rat(1, 2), rat(1, 2)]),
                (None, vec![int(0), int(1)]),
            ],
            vec![(vec![0, 1], 0), (vec![1, 2], 0)],
        )
        .unwrap()
    }

    #[test]
    fn midpoint_vertex_has_multiplicity_two() {
        let s = halved(&segment());
        assert_eq!(s.vertices()[1].multiplicity, BigInt::from(2));
        assert_eq!(s.vertices()[1].id, ComponentId(3));
        assert_eq!(s.vertices()[0].id, ComponentId(1));
        s.check_tiling().unwrap();
    }

    #[test]
    fn retraction_examples() {
        let root = segment();
        let s = halved(&root);
        let m = SkeletonPoint {
            complex: "seg/2".into(),
            coords: BTreeMap::from([(ComponentId(3), rat(1, 2))]),
        };
        let r = retract(&s, &m, "seg").unwrap();
        assert_eq!(r.coords[&ComponentId(1)], rat(1, 2));
        assert_eq!(r.coords[&ComponentId(2)], rat(1, 2));
        let e1 = SkeletonPoint {
            complex: "seg/2".into(),
            coords: BTreeMap::from([(ComponentId(1), int(1))]),
        };
        assert_eq!(retract(&s, &e1, "seg").unwrap().coords, BTreeMap::from([(ComponentId(1), int(1))]));
        assert_eq!(retract(&s, &m, "seg/2").unwrap(), m);
        assert!(retract(&root, &r, "seg/2").is_err());
    }

    #[test]
    fn tiling_detects_gaps() {
        let root = segment();
        let bad = Subdivision::new(
            "gap",
            &root,
            vec![
                (None, vec![int(1), int(0)]),
                (None, vec![rat(1, 2), rat(1, 2)]),
                (None, vec![rat(1, 4), rat(3, 4)]),
                (None, vec![int(0), int(1)]),
            ],
            vec![(vec![0, 1], 0), (vec![2, 3], 0)],
        )
        .unwrap();
        assert!(bad.check_tiling().is_err());
    }
}
