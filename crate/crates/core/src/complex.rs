//! Dual complexes and points on them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{from_bigint, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComponentId(pub u32);

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E{}", self.0)
    }
}

pub type Face = BTreeSet<ComponentId>;

pub fn face_of(ids: &[u32]) -> Face {
    ids.iter().map(|&i| ComponentId(i)).collect()
}

pub fn format_face(face: &Face) -> String {
    let parts: Vec<String> = face.iter().map(|c| c.0.to_string()).collect();
    format!("{{{}}}", parts.join(","))
}

/// Unvalidated description of a complex.
#[derive(Debug, Clone, PartialEq)]
pub struct RawComplex {
    pub id: String,
    pub components: Vec<(u32, BigInt)>,
    pub faces: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DualComplex {
    id: String,
    ids: Vec<ComponentId>,
    multiplicities: Vec<BigInt>,
    faces: BTreeSet<Face>,
    maximal: Vec<Face>,
}

pub fn validate_complex(raw: &RawComplex) -> Result<DualComplex> {
    let mut mult = BTreeMap::new();
    for (k, (id, b)) in raw.components.iter().enumerate() {
        if !b.is_positive() {
            return Err(Error::Structural(format!(
                "component {k} (id {id}) has nonpositive multiplicity {b}"
            )));
        }
        if mult.insert(ComponentId(*id), b.clone()).is_some() {
            return Err(Error::Structural(format!("duplicate component id {id}")));
        }
    }
    if mult.is_empty() {
        return Err(Error::Structural("complex has no components".into()));
    }
    let mut faces: BTreeSet<Face> = BTreeSet::new();
    faces.insert(Face::new());
    for (k, f) in raw.faces.iter().enumerate() {
        let face = face_of(f);
        if face.len() != f.len() {
            return Err(Error::Structural(format!("face {k} repeats a component")));
        }
        if let Some(c) = face.iter().find(|c| !mult.contains_key(c)) {
            return Err(Error::Structural(format!(
                "face {k} references unknown component {}",
                c.0
            )));
        }
        faces.insert(face);
    }
    for id in mult.keys() {
        if !faces.contains(&Face::from([*id])) {
            return Err(Error::Structural(format!(
                "singleton face {{{}}} is missing",
                id.0
            )));
        }
    }
    for f in &faces {
        for c in f {
            let mut sub = f.clone();
            sub.remove(c);
            if !faces.contains(&sub) {
                return Err(Error::Structural(format!(
                    "face set is not closed under subsets: {} lies in {} but is absent",
                    format_face(&sub),
                    format_face(f)
                )));
            }
        }
    }
    let maximal = faces
        .iter()
        .filter(|f| !f.is_empty() && !faces.iter().any(|g| g.len() > f.len() && f.is_subset(g)))
        .cloned()
        .collect();
    Ok(DualComplex {
        id: raw.id.clone(),
        ids: mult.keys().copied().collect(),
        multiplicities: mult.into_values().collect(),
        faces,
        maximal,
    })
}

impl DualComplex {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[ComponentId] {
        &self.ids
    }

    pub fn multiplicities(&self) -> &[BigInt] {
        &self.multiplicities
    }

    pub fn index_of(&self, id: ComponentId) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub fn multiplicity(&self, id: ComponentId) -> Option<&BigInt> {
        self.index_of(id).map(|i| &self.multiplicities[i])
    }

    pub fn faces(&self) -> &BTreeSet<Face> {
        &self.faces
    }

    pub fn maximal_faces(&self) -> &[Face] {
        &self.maximal
    }

    pub fn is_face(&self, f: &Face) -> bool {
        self.faces.contains(f)
    }

    pub fn dim(&self) -> usize {
        self.maximal.iter().map(|f| f.len() - 1).max().unwrap_or(0)
    }

    /// Coordinates of the vertex `e_i`: `s_i = 1/b_i`.
    pub fn vertex(&self, index: usize) -> Vec<Rational> {
        let mut v = vec![Rational::zero(); self.len()];
        v[index] = Rational::new(BigInt::one(), self.multiplicities[index].clone());
        v
    }

    pub fn axes(&self, face: &Face) -> Vec<usize> {
        face.iter().map(|c| self.index_of(*c).expect("face member")).collect()
    }

    pub fn support(&self, dense: &[Rational]) -> Face {
        dense
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(|(i, _)| self.ids[i])
            .collect()
    }

    /// Checks the point invariants for a dense coordinate vector.
    pub fn check_dense(&self, dense: &[Rational]) -> Result<()> {
        if dense.len() != self.len() {
            return Err(Error::Structural("coordinate vector has wrong length".into()));
        }
        if let Some(i) = dense.iter().position(Signed::is_negative) {
            return Err(Error::Structural(format!(
                "coordinate of {} is negative",
                self.ids[i]
            )));
        }
        let supp = self.support(dense);
        if !self.is_face(&supp) {
            return Err(Error::Structural(format!(
                "support {} is not a face",
                format_face(&supp)
            )));
        }
        let total: Rational = dense
            .iter()
            .zip(&self.multiplicities)
            .map(|(s, b)| s * from_bigint(b))
            .sum();
        if !total.is_one() {
            return Err(Error::Structural(format!(
                "normalization fails: sum of b_i s_i is {total}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn point(&self, coords: BTreeMap<ComponentId, Rational>) -> Result<SkeletonPoint> {
        let p = SkeletonPoint {
            complex: self.id.clone(),
            coords,
        };
        self.dense(&p)?;
        Ok(p)
    }

    pub fn dense(&self, p: &SkeletonPoint) -> Result<Vec<Rational>> {
        if p.complex != self.id {
            return Err(Error::Structural(format!(
                "point belongs to `{}`, not `{}`",
                p.complex, self.id
            )));
        }
        let mut v = vec![Rational::zero(); self.len()];
        for (id, s) in &p.coords {
            let i = self
                .index_of(*id)
                .ok_or_else(|| Error::Structural(format!("unknown component {}", id.0)))?;
            v[i] = s.clone();
        }
        self.check_dense(&v)?;
        Ok(v)
    }

    pub fn sparse(&self, dense: &[Rational]) -> SkeletonPoint {
        SkeletonPoint {
            complex: self.id.clone(),
            coords: dense
                .iter()
                .enumerate()
                .filter(|(_, v)| !v.is_zero())
                .map(|(i, v)| (self.ids[i], v.clone()))
                .collect(),
        }
    }

    /// The divisor `X_0 = Σ b_i E_i` as coefficients.
    pub fn fiber_divisor(&self) -> AffineFunctional {
        AffineFunctional {
            coefficients: self
                .ids
                .iter()
                .zip(&self.multiplicities)
                .map(|(id, b)| (*id, from_bigint(b)))
                .collect(),
        }
    }
}

/// A point of a complex with sparse coordinates `s_i` on its components.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SkeletonPoint {
    pub complex: String,
    pub coords: BTreeMap<ComponentId, Rational>,
}

/// `φ_D(s) = Σ c_i s_i` for `D = Σ c_i E_i`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AffineFunctional {
    pub coefficients: BTreeMap<ComponentId, Rational>,
}

impl AffineFunctional {
    pub fn new(coefficients: BTreeMap<ComponentId, Rational>) -> Self {
        Self { coefficients }
    }

    pub fn dense(&self, complex: &DualComplex) -> Result<Vec<Rational>> {
        let mut v = vec![Rational::zero(); complex.len()];
        for (id, c) in &self.coefficients {
            let i = complex
                .index_of(*id)
                .ok_or_else(|| Error::Structural(format!("unknown component {}", id.0)))?;
            v[i] = c.clone();
        }
        Ok(v)
    }
}

pub fn eval_affine(
    complex: &DualComplex,
    f: &AffineFunctional,
    s: &SkeletonPoint,
) -> Result<Rational> {
    let c = f.dense(complex)?;
    let x = complex.dense(s)?;
    Ok(crate::linalg::dot(&c, &x))
}
