//! Numerical classes: intersection data, nef checks, the kernel certificate,
//! and explicit vertex and Lipschitz bounds.

use std::collections::{BTreeMap, VecDeque};

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::complex::{format_face, AffineFunctional, ComponentId, DualComplex, Face};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::pa::{face_diameter, sandwich_constant};
use crate::rational::{format_rational, from_bigint, Rational};

/// A vertical test curve with its intersection numbers `C·E_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestCurve {
    pub id: String,
    pub components: BTreeMap<ComponentId, Rational>,
}

/// Intersection numbers on a model: the degree matrix `Q_ij = E_i·E_j·A^{n-1}`,
/// declared test curves, and optional tensors `T_{J,j} = E_J·E_j·A^{n-p-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionData {
    model: String,
    ids: Vec<ComponentId>,
    multiplicities: Vec<BigInt>,
    q: Matrix,
    curves: Vec<TestCurve>,
    tensors: BTreeMap<(Face, ComponentId), Rational>,
    face_fiber: BTreeMap<Face, Rational>,
}

impl IntersectionData {
    pub fn new(
        complex: &DualComplex,
        q: Matrix,
        curves: Vec<TestCurve>,
        tensors: BTreeMap<(Face, ComponentId), Rational>,
        face_fiber: BTreeMap<Face, Rational>,
    ) -> Result<Self> {
        let n = complex.len();
        if q.len() != n || q.iter().any(|r| r.len() != n) {
            return Err(Error::Data(format!("degree matrix must be {n}x{n}")));
        }
        if !linalg::is_symmetric(&q) {
            return Err(Error::Data("degree matrix is not symmetric".into()));
        }
        let b: Vec<Rational> = complex.multiplicities().iter().map(from_bigint).collect();
        if let Some(i) = linalg::mat_vec(&q, &b).iter().position(|v| !v.is_zero()) {
            return Err(Error::Data(format!(
                "X_0·{} is nonzero; the fiber must be numerically trivial",
                complex.ids()[i]
            )));
        }
        for c in &curves {
            let mut total = Rational::zero();
            for (id, m) in &c.components {
                let b = complex
                    .multiplicity(*id)
                    .ok_or_else(|| Error::Data(format!("curve {} meets unknown component {}", c.id, id.0)))?;
                total += from_bigint(b) * m;
            }
            if !total.is_zero() {
                return Err(Error::Data(format!("curve {} has C·X_0 = {total}, expected 0", c.id)));
            }
        }
        for (j, _) in tensors.keys() {
            if !complex.is_face(j) {
                return Err(Error::Data(format!("tensor indexed by non-face {}", format_face(j))));
            }
        }
        Ok(Self {
            model: complex.id().to_string(),
            ids: complex.ids().to_vec(),
            multiplicities: complex.multiplicities().to_vec(),
            q,
            curves,
            tensors,
            face_fiber,
        })
    }

    /// Dimension-one data: the components themselves are the test curves.
    pub fn from_components(complex: &DualComplex, q: Matrix) -> Result<Self> {
        let mut curves = Vec::new();
        for (i, id) in complex.ids().iter().enumerate() {
            let mut comps = BTreeMap::new();
            for (j, jd) in complex.ids().iter().enumerate() {
                let v = q.get(i).and_then(|r| r.get(j)).cloned().unwrap_or_default();
                if !v.is_zero() {
                    comps.insert(*jd, v);
                }
            }
            curves.push(TestCurve {
                id: id.to_string(),
                components: comps,
            });
        }
        Self::new(complex, q, curves, BTreeMap::new(), BTreeMap::new())
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn ids(&self) -> &[ComponentId] {
        &self.ids
    }

    pub fn multiplicities(&self) -> &[BigInt] {
        &self.multiplicities
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn curves(&self) -> &[TestCurve] {
        &self.curves
    }

    pub fn tensors(&self) -> &BTreeMap<(Face, ComponentId), Rational> {
        &self.tensors
    }

    pub fn face_fiber(&self) -> &BTreeMap<Face, Rational> {
        &self.face_fiber
    }

    fn index(&self, id: ComponentId) -> Result<usize> {
        self.ids
            .iter()
            .position(|x| *x == id)
            .ok_or_else(|| Error::Data(format!("unknown component {}", id.0)))
    }

    /// Row of intersection numbers `C·E_i` in component order.
    pub fn curve_row(&self, curve: &TestCurve) -> Vec<Rational> {
        self.ids
            .iter()
            .map(|id| curve.components.get(id).cloned().unwrap_or_default())
            .collect()
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let n = self.ids.len();
        (0..n)
            .map(|i| (0..n).filter(|&j| j != i && !self.q[i][j].is_zero()).collect())
            .collect()
    }

    fn distances(&self, from: usize) -> Vec<Option<usize>> {
        let adj = self.adjacency();
        let mut dist = vec![None; adj.len()];
        dist[from] = Some(0);
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(dist[u].expect("visited") + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.ids.is_empty() || self.distances(0).iter().all(Option::is_some)
    }

    fn tensor(&self, face: &Face, j: usize) -> Result<Rational> {
        let id = self.ids[j];
        if let Some(t) = self.tensors.get(&(face.clone(), id)) {
            return Ok(t.clone());
        }
        if face.len() == 1 {
            let i = self.index(*face.iter().next().expect("singleton"))?;
            return Ok(self.q[i][j].clone());
        }
        Err(Error::Data(format!(
            "missing tensor for (J, j) = ({}, {})",
            format_face(face),
            id.0
        )))
    }

    fn fiber_pairing(&self, face: &Face) -> Result<Rational> {
        if let Some(x) = self.face_fiber.get(face) {
            return Ok(x.clone());
        }
        let mut total = Rational::zero();
        for (j, b) in self.multiplicities.iter().enumerate() {
            total += from_bigint(b) * self.tensor(face, j)?;
        }
        Ok(total)
    }
}

/// Pairings of a closed form with curves, components, and faces.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClosedForm {
    pub model: String,
    pub curve_pairings: BTreeMap<String, Rational>,
    pub vertex_pairings: BTreeMap<ComponentId, Rational>,
    pub face_pairings: BTreeMap<Face, Rational>,
}

impl ClosedForm {
    /// Dimension-one form: curve pairings coincide with vertex pairings.
    pub fn from_vertex_pairings(data: &IntersectionData, theta: &[Rational]) -> Result<Self> {
        if theta.len() != data.ids.len() {
            return Err(Error::Data("one pairing per component is required".into()));
        }
        let vertex_pairings: BTreeMap<ComponentId, Rational> =
            data.ids.iter().copied().zip(theta.iter().cloned()).collect();
        Ok(Self {
            model: data.model.clone(),
            curve_pairings: vertex_pairings.iter().map(|(id, t)| (id.to_string(), t.clone())).collect(),
            vertex_pairings,
            face_pairings: BTreeMap::new(),
        })
    }

    fn vertex(&self, id: ComponentId) -> Result<Rational> {
        self.vertex_pairings
            .get(&id)
            .cloned()
            .ok_or_else(|| Error::Data(format!("missing vertex pairing for {}", id.0)))
    }

    fn face(&self, face: &Face) -> Result<Rational> {
        if face.len() == 1 {
            return self.vertex(*face.iter().next().expect("singleton"));
        }
        self.face_pairings
            .get(face)
            .cloned()
            .ok_or_else(|| Error::Data(format!("missing face pairing for {}", format_face(face))))
    }
}

/// One linear constraint `θ·C + Σ c_i (C·E_i) ≥ 0` per test curve.
#[derive(Debug, Clone, PartialEq)]
pub struct NefConstraint {
    pub curve: String,
    pub theta: Rational,
    pub row: Vec<Rational>,
}

pub fn nef_constraints(theta: &ClosedForm, data: &IntersectionData) -> Result<Vec<NefConstraint>> {
    if data.curves.is_empty() {
        return Err(Error::Data("no test curves declared; nefness would be vacuous".into()));
    }
    if theta.model != data.model {
        return Err(Error::Data(format!(
            "closed form is determined on `{}`, data is for `{}`",
            theta.model, data.model
        )));
    }
    data.curves
        .iter()
        .map(|c| {
            let t = theta
                .curve_pairings
                .get(&c.id)
                .cloned()
                .ok_or_else(|| Error::Data(format!("closed form has no pairing with curve {}", c.id)))?;
            Ok(NefConstraint {
                curve: c.id.clone(),
                theta: t,
                row: data.curve_row(c),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NefReport {
    pub nef: bool,
    /// Curve with the smallest slack, reported when negative.
    pub witness: Option<(String, Rational)>,
    pub slacks: Vec<(String, Rational)>,
}

/// Checks `θ + D` against every declared curve.
pub fn is_nef(d: &AffineFunctional, theta: &ClosedForm, data: &IntersectionData) -> Result<NefReport> {
    let cons = nef_constraints(theta, data)?;
    let mut c = vec![Rational::zero(); data.ids.len()];
    for (id, v) in &d.coefficients {
        c[data.index(*id)?] = v.clone();
    }
    let slacks: Vec<(String, Rational)> = cons
        .into_iter()
        .map(|k| {
            let s = k.theta + linalg::dot(&k.row, &c);
            (k.curve, s)
        })
        .collect();
    let worst = slacks
        .iter()
        .filter(|(_, s)| s.is_negative())
        .min_by(|a, b| a.1.cmp(&b.1))
        .cloned();
    Ok(NefReport {
        nef: worst.is_none(),
        witness: worst,
        slacks,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelReport {
    pub passed: bool,
    pub fiber_in_kernel: bool,
    pub rank: usize,
    pub off_diagonal_nonnegative: bool,
    pub connected: bool,
    pub kernel_basis: Vec<Vec<Rational>>,
    pub warnings: Vec<String>,
}

/// Certifies that the kernel of `Q` is spanned by the multiplicity vector.
pub fn zariski_kernel_check(data: &IntersectionData) -> Result<KernelReport> {
    let n = data.ids.len();
    if n == 0 {
        return Err(Error::Data("no components".into()));
    }
    let b: Vec<Rational> = data.multiplicities.iter().map(from_bigint).collect();
    let fiber_in_kernel = linalg::mat_vec(&data.q, &b).iter().all(Zero::is_zero);
    let rank = linalg::rank(&data.q);
    let off_diagonal_nonnegative = (0..n).all(|i| (0..n).all(|j| i == j || !data.q[i][j].is_negative()));
    let connected = data.is_connected();
    let mut warnings = Vec::new();
    if !connected {
        warnings.push("intersection graph is disconnected; the special fiber must be connected".into());
    }
    Ok(KernelReport {
        passed: fiber_in_kernel && rank + 1 == n && off_diagonal_nonnegative && connected,
        fiber_in_kernel,
        rank,
        off_diagonal_nonnegative,
        connected,
        kernel_basis: linalg::nullspace(&data.q, n),
        warnings,
    })
}

/// Bounds `B_i` with `φ(e_i) ≥ −B_i` for every θ-psh function determined on
/// the model and normalized by `max_j φ(e_j) = 0`.
///
/// With `C = max|θ·E_i|`, `λ = max(−b_i Q_ii)` and `κ` the smallest
/// `b_j Q_ij` over adjacent pairs, `B_i = C' Σ_{m=1}^{M_i} λ'^m` where
/// `C' = C/min(1,κ)`, `λ' = max(1, λ/min(1,κ))`, and `M_i` is the
/// eccentricity of `i` in the intersection graph.
pub fn vertex_lower_bound(theta: &ClosedForm, data: &IntersectionData) -> Result<BTreeMap<ComponentId, Rational>> {
    let n = data.ids.len();
    if n == 1 {
        return Ok(BTreeMap::from([(data.ids[0], Rational::zero())]));
    }
    if !data.is_connected() {
        return Err(Error::Structural("intersection graph is disconnected".into()));
    }
    let b: Vec<Rational> = data.multiplicities.iter().map(from_bigint).collect();
    let mut c = Rational::zero();
    for id in &data.ids {
        c = c.max(theta.vertex(*id)?.abs());
    }
    let lambda = (0..n)
        .map(|i| -(&b[i] * &data.q[i][i]))
        .max()
        .expect("nonempty");
    let mut kappa: Option<Rational> = None;
    for i in 0..n {
        for j in 0..n {
            if i != j && data.q[i][j].is_positive() {
                let k = &b[j] * &data.q[i][j];
                kappa = Some(kappa.map_or(k.clone(), |m| m.min(k)));
            }
        }
    }
    let kappa = kappa.ok_or_else(|| Error::Data("no positive off-diagonal entries".into()))?;
    let scale = kappa.min(Rational::one());
    let c1 = &c / &scale;
    let l1 = (lambda / &scale).max(Rational::one());
    let mut out = BTreeMap::new();
    for i in 0..n {
        let ecc = data
            .distances(i)
            .into_iter()
            .map(|d| d.expect("connected"))
            .max()
            .expect("nonempty");
        let mut total = Rational::zero();
        let mut power = Rational::one();
        for _ in 0..ecc {
            power *= &l1;
            total += &power;
        }
        out.insert(data.ids[i], &c1 * total);
    }
    Ok(out)
}

/// The constant `C_τ` bounding inward derivatives from below, and the resulting
/// bound on the `C^{0,1}` norm of normalized θ-psh functions on the face `τ`,
/// given a bound `n_boundary` for the norm on its boundary.
pub fn lipschitz_bound(
    theta: &ClosedForm,
    data: &IntersectionData,
    tau: &Face,
    n_boundary: &Rational,
) -> Result<LipschitzBound> {
    if tau.len() < 2 {
        return Err(Error::Degenerate("a vertex has no Lipschitz constant".into()));
    }
    let b: Vec<Rational> = data.multiplicities.iter().map(from_bigint).collect();
    let mut c_tau = Rational::zero();
    for &k_id in tau {
        let k = data.index(k_id)?;
        let mut face = tau.clone();
        face.remove(&k_id);
        let t_k = data.tensor(&face, k)?;
        if !t_k.is_positive() {
            return Err(Error::Data(format!(
                "tensor for (J, j) = ({}, {}) must be positive",
                format_face(&face),
                k_id.0
            )));
        }
        let axes: Vec<usize> = face.iter().map(|id| data.index(*id)).collect::<Result<_>>()?;
        let face_b: Vec<Rational> = axes.iter().map(|&a| b[a].clone()).collect();
        let mut numer = theta.face(&face)? + data.fiber_pairing(&face)?.abs() * n_boundary;
        let diam = if face_b.len() < 2 { Rational::zero() } else { face_diameter(&face_b) };
        for &a in &axes {
            numer += n_boundary * &diam * &b[a] * data.tensor(&face, a)?.abs();
        }
        for j in 0..data.ids.len() {
            if j == k || axes.contains(&j) {
                continue;
            }
            let t = data.tensor(&face, j)?;
            if t.is_negative() {
                return Err(Error::Data(format!(
                    "tensor for (J, j) = ({}, {}) is negative",
                    format_face(&face),
                    data.ids[j].0
                )));
            }
            numer += n_boundary * &b[j] * t;
        }
        c_tau = c_tau.max(numer / (&b[k] * t_k));
    }
    let tau_b: Vec<Rational> = tau
        .iter()
        .map(|id| data.index(*id).map(|i| b[i].clone()))
        .collect::<Result<_>>()?;
    let constant = sandwich_constant(&tau_b);
    let two = Rational::from_integer(BigInt::from(2));
    let derivative = c_tau.clone().max(&two * n_boundary);
    let norm = &constant * (n_boundary + derivative);
    Ok(LipschitzBound {
        derivative_constant: c_tau,
        sandwich_constant: constant,
        norm,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzBound {
    pub derivative_constant: Rational,
    pub sandwich_constant: Rational,
    pub norm: Rational,
}

/// Runs the bounds face by face: vertices get `B_i`, and each face of
/// dimension `p ≥ 1` uses the largest bound among its facets as `N_∂`.
pub fn lipschitz_pipeline(
    complex: &DualComplex,
    theta: &ClosedForm,
    data: &IntersectionData,
) -> Result<BTreeMap<Face, Rational>> {
    let vertex = vertex_lower_bound(theta, data)?;
    let mut faces: Vec<&Face> = complex.faces().iter().filter(|f| !f.is_empty()).collect();
    faces.sort_by_key(|f| f.len());
    let mut out: BTreeMap<Face, Rational> = BTreeMap::new();
    for face in faces {
        if face.len() == 1 {
            let id = face.iter().next().expect("singleton");
            out.insert(face.clone(), vertex[id].clone());
            continue;
        }
        let boundary = face
            .iter()
            .map(|id| {
                let mut f = face.clone();
                f.remove(id);
                out[&f].clone()
            })
            .max()
            .expect("nonempty");
        let bound = lipschitz_bound(theta, data, face, &boundary)?;
        out.insert(face.clone(), bound.norm);
    }
    Ok(out)
}

impl std::fmt::Display for LipschitzBound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "C_tau = {}, constant = {}, norm <= {}",
            format_rational(&self.derivative_constant),
            format_rational(&self.sandwich_constant),
            format_rational(&self.norm)
        )
    }
}
