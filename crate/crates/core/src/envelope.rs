//! θ-psh functions on a fixed determination and envelopes computed by exact LP.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};

use crate::complex::{validate_complex, AffineFunctional, ComponentId, DualComplex, RawComplex};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::lp::{LinearProgram, LpOutcome};
use crate::numerical::{is_nef, nef_constraints, ClosedForm, IntersectionData, NefConstraint, NefReport};
use crate::pa::{is_convex_on_faces, max_of_pa, PAFunction};
use crate::rational::{format_vector, from_bigint, Rational};
use crate::subdivision::Subdivision;
use crate::valuation::{graded_limit, GradedSequence};

/// The simplicial subdivision viewed as a dual complex of its own, with one
/// component per vertex carrying the vertex multiplicity.
pub fn subdivision_complex(sub: &Subdivision) -> Result<DualComplex> {
    sub.require_simplicial()?;
    let ids: Vec<u32> = sub.vertices().iter().map(|v| v.id.0).collect();
    validate_complex(&RawComplex {
        id: sub.id().to_string(),
        components: sub
            .vertices()
            .iter()
            .map(|v| (v.id.0, v.multiplicity.clone()))
            .collect(),
        faces: sub
            .faces()
            .into_iter()
            .filter(|f| !f.is_empty())
            .map(|f| f.iter().map(|&v| ids[v]).collect())
            .collect(),
    })
}

/// Linear constraints on the divisor coefficients `c_v` of functions
/// determined on a simplicial model.
#[derive(Debug, Clone)]
pub struct PshConstraintSystem {
    determination: Arc<Subdivision>,
    complex: Arc<DualComplex>,
    theta: ClosedForm,
    data: IntersectionData,
    nef: Vec<NefConstraint>,
}

impl PshConstraintSystem {
    pub fn new(determination: Arc<Subdivision>, theta: ClosedForm, data: IntersectionData) -> Result<Self> {
        let complex = subdivision_complex(&determination)?;
        if data.model() != determination.id() {
            return Err(Error::Data(format!(
                "intersection data is for `{}`, determination is `{}`",
                data.model(),
                determination.id()
            )));
        }
        if data.ids() != complex.ids() {
            return Err(Error::Data("intersection data components do not match the determination".into()));
        }
        let nef = nef_constraints(&theta, &data)?;
        Ok(Self {
            determination,
            complex: Arc::new(complex),
            theta,
            data,
            nef,
        })
    }

    pub fn determination(&self) -> &Arc<Subdivision> {
        &self.determination
    }

    pub fn complex(&self) -> &Arc<DualComplex> {
        &self.complex
    }

    pub fn theta(&self) -> &ClosedForm {
        &self.theta
    }

    pub fn data(&self) -> &IntersectionData {
        &self.data
    }

    pub fn constraints(&self) -> &[NefConstraint] {
        &self.nef
    }

    pub fn len(&self) -> usize {
        self.determination.vertices().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn multiplicities(&self) -> Vec<Rational> {
        self.determination
            .vertices()
            .iter()
            .map(|v| from_bigint(&v.multiplicity))
            .collect()
    }

    /// `a(x)` with `φ_c(x) = a(x)·c` for a root point `x`.
    pub fn weights(&self, x: &[Rational]) -> Result<Vec<Rational>> {
        let det = &self.determination;
        let (k, lambda) = det.locate(x).ok_or_else(|| {
            Error::Precondition(format!("{} is not on `{}`", format_vector(x), det.id()))
        })?;
        let mut a = vec![Rational::zero(); self.len()];
        for (&v, l) in det.cells()[k].vertices.iter().zip(lambda) {
            a[v] = l / from_bigint(&det.vertices()[v].multiplicity);
        }
        Ok(a)
    }

    pub fn value(&self, c: &[Rational], x: &[Rational]) -> Result<Rational> {
        Ok(linalg::dot(&self.weights(x)?, c))
    }

    /// `φ_c` as vertex values `c_v / b'_v` on the determination.
    pub fn pa_function(&self, c: &[Rational]) -> Result<PAFunction> {
        if c.len() != self.len() {
            return Err(Error::Data(format!("{} coefficients for {} components", c.len(), self.len())));
        }
        let values = c.iter().zip(self.multiplicities()).map(|(ci, b)| ci / b).collect();
        PAFunction::new(self.determination.clone(), values)
    }

    /// Coefficients of a function given on the determination itself.
    pub fn coefficients_of(&self, phi: &PAFunction) -> Result<Vec<Rational>> {
        if phi.carrier().id() != self.determination.id() {
            return Err(Error::Precondition("function lives on another carrier".into()));
        }
        Ok(phi.values().iter().zip(self.multiplicities()).map(|(f, b)| f * b).collect())
    }

    fn with_theta(&self, theta: ClosedForm) -> Result<Self> {
        Self::new(self.determination.clone(), theta, self.data.clone())
    }
}

/// Checks `θ + dd^c φ_c ≥ 0` against the declared curves.
pub fn psh_check(c: &[Rational], system: &PshConstraintSystem) -> Result<NefReport> {
    if c.len() != system.len() {
        return Err(Error::Data(format!("{} coefficients for {} components", c.len(), system.len())));
    }
    let d = AffineFunctional::new(system.data.ids().iter().copied().zip(c.iter().cloned()).collect());
    is_nef(&d, &system.theta, &system.data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub point: Vec<Rational>,
    pub value: Rational,
    pub coefficients: Vec<Rational>,
    pub active_curves: Vec<String>,
    pub active_vertices: Vec<ComponentId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeResult {
    pub determination: String,
    pub results: Vec<QueryResult>,
}

impl EnvelopeResult {
    pub fn values(&self) -> Vec<Rational> {
        self.results.iter().map(|r| r.value.clone()).collect()
    }
}

/// Vertices at which the obstacle comparison is enforced: those of the finer
/// of the obstacle's carrier and the determination.
fn checkpoints(system: &PshConstraintSystem, obstacle: &PAFunction) -> Result<Vec<(ComponentId, Vec<Rational>)>> {
    let det = &system.determination;
    let carrier = obstacle.carrier();
    let finer = if carrier.id() == det.id() || carrier.is_descendant_of(det.id()) {
        carrier
    } else if det.is_descendant_of(carrier.id()) {
        det
    } else {
        return Err(Error::Precondition(format!(
            "obstacle carrier `{}` and determination `{}` are not nested",
            carrier.id(),
            det.id()
        )));
    };
    Ok(finer.vertices().iter().map(|v| (v.id, v.coords.clone())).collect())
}

/// `P_θ(u)` at each query: the largest `φ_c(x)` over psh `c` with `φ_c ≤ u`.
pub fn envelope(system: &PshConstraintSystem, obstacle: &PAFunction, queries: &[Vec<Rational>]) -> Result<EnvelopeResult> {
    let n = system.len();
    let det = &system.determination;
    let points = checkpoints(system, obstacle)?;
    let u_points: Vec<Rational> = points
        .iter()
        .map(|(_, x)| obstacle.eval_root(x))
        .collect::<Result<_>>()?;
    // c = β − y with β_v = b'_v u(v) and y ≥ 0
    let beta: Vec<Rational> = det
        .vertices()
        .iter()
        .map(|v| Ok(obstacle.eval_root(&v.coords)? * from_bigint(&v.multiplicity)))
        .collect::<Result<_>>()?;
    let mut lp = LinearProgram::new(n);
    lp.set_all_nonnegative();
    for k in &system.nef {
        let rhs = &k.theta + linalg::dot(&k.row, &beta);
        lp.le(k.row.clone(), rhs);
    }
    let det_coords: BTreeSet<&Vec<Rational>> = det.vertices().iter().map(|v| &v.coords).collect();
    let mut weights = Vec::with_capacity(points.len());
    for ((_, x), u) in points.iter().zip(&u_points) {
        let a = system.weights(x)?;
        if !det_coords.contains(x) {
            let rhs = u - linalg::dot(&a, &beta);
            lp.le(a.iter().map(|v| -v).collect(), rhs);
        }
        weights.push(a);
    }
    let objectives: Vec<Vec<Rational>> = queries
        .iter()
        .map(|x| {
            system.root_check(x)?;
            Ok(system.weights(x)?.iter().map(|v| -v).collect())
        })
        .collect::<Result<_>>()?;
    let outcomes = lp.maximize_many(&objectives);
    let mut results = Vec::with_capacity(queries.len());
    for (x, outcome) in queries.iter().zip(outcomes) {
        let sol = match outcome {
            LpOutcome::Optimal(s) => s,
            LpOutcome::Infeasible => {
                return Err(Error::Infeasible("no θ-psh function lies below the obstacle".into()))
            }
            LpOutcome::Unbounded => return Err(Error::Unbounded("envelope is unbounded".into())),
        };
        let c: Vec<Rational> = beta.iter().zip(&sol.x).map(|(b, y)| b - y).collect();
        let value = system.value(&c, x)?;
        let report = psh_check(&c, system)?;
        if !report.nef {
            return Err(Error::Certificate {
                point: format_vector(x),
                detail: "optimizer fails the psh check".into(),
            });
        }
        let mut active_vertices = Vec::new();
        for ((id, _), (a, u)) in points.iter().zip(weights.iter().zip(&u_points)) {
            let phi = linalg::dot(a, &c);
            if phi > *u {
                return Err(Error::Certificate {
                    point: format_vector(x),
                    detail: format!("optimizer exceeds the obstacle at {id}"),
                });
            }
            if phi == *u {
                active_vertices.push(*id);
            }
        }
        let active_curves = report
            .slacks
            .iter()
            .filter(|(_, s)| s.is_zero())
            .map(|(id, _)| id.clone())
            .collect();
        results.push(QueryResult {
            point: x.clone(),
            value,
            coefficients: c,
            active_curves,
            active_vertices,
        });
    }
    Ok(EnvelopeResult {
        determination: det.id().to_string(),
        results,
    })
}

impl PshConstraintSystem {
    fn root_check(&self, x: &[Rational]) -> Result<()> {
        self.determination.root().check_dense(x)
    }
}

/// Intersection data and closed form pulled back to a refinement of the determination.
pub trait RefinementData {
    fn refine(&self, system: &PshConstraintSystem, target: &Arc<Subdivision>) -> Result<PshConstraintSystem>;
}

/// Refinement data for models of relative dimension one.
///
/// A segment `[p, q]` inside an edge of the determination with conductance
/// `Q_PQ` gets `Q'_pq = Q_PQ · |det(b'_P P, b'_Q Q)| / |det(b'_p p, b'_q q)|`;
/// diagonal entries follow from `Q'b' = 0`, and the pulled-back form pairs to
/// zero with the new components.
#[derive(Debug, Clone, Copy, Default)]
pub struct CurveRefinement;

fn edge_det(sub: &Subdivision, face_axes: &[usize], p: usize, q: usize) -> Rational {
    let m: Matrix = [p, q]
        .iter()
        .map(|&v| {
            let vert = &sub.vertices()[v];
            let b = from_bigint(&vert.multiplicity);
            face_axes.iter().map(|&a| &vert.coords[a] * &b).collect()
        })
        .collect();
    linalg::abs_det(&m)
}

impl RefinementData for CurveRefinement {
    fn refine(&self, system: &PshConstraintSystem, target: &Arc<Subdivision>) -> Result<PshConstraintSystem> {
        let det = &system.determination;
        if det.root().dim() > 1 {
            return Err(Error::Precondition("curve refinement needs a model of relative dimension one".into()));
        }
        if target.id() == det.id() {
            return Ok(system.clone());
        }
        if !target.is_descendant_of(det.id()) {
            return Err(Error::Precondition(format!("`{}` does not refine `{}`", target.id(), det.id())));
        }
        target.require_simplicial()?;
        let n = target.vertices().len();
        let mut q = linalg::zeros(n, n);
        let two = Rational::from_integer(BigInt::from(2));
        for cell in target.cells() {
            if cell.vertices.len() != 2 {
                continue;
            }
            let (p, r) = (cell.vertices[0], cell.vertices[1]);
            let axes = target.axes(&cell.root_face);
            let mid: Vec<Rational> = target.vertices()[p]
                .coords
                .iter()
                .zip(&target.vertices()[r].coords)
                .map(|(a, b)| (a + b) / &two)
                .collect();
            let (k, _) = det
                .locate(&mid)
                .ok_or_else(|| Error::Structural("refinement leaves the determination".into()))?;
            let outer = &det.cells()[k].vertices;
            if outer.len() != 2 {
                return Err(Error::Structural("edge of the refinement lies in a vertex cell".into()));
            }
            let (pp, rr) = (outer[0], outer[1]);
            let conductance = &system.data.q()[pp][rr];
            let value = conductance * edge_det(det, &axes, pp, rr) / edge_det(target, &axes, p, r);
            q[p][r] += &value;
            q[r][p] += value;
        }
        let b: Vec<Rational> = target.vertices().iter().map(|v| from_bigint(&v.multiplicity)).collect();
        for i in 0..n {
            let off: Rational = (0..n).filter(|&j| j != i).map(|j| &b[j] * &q[i][j]).sum();
            q[i][i] = -off / &b[i];
        }
        let complex = subdivision_complex(target)?;
        let data = IntersectionData::from_components(&complex, q)?;
        let theta: Vec<Rational> = target
            .vertices()
            .iter()
            .map(|v| {
                system
                    .determination
                    .vertex_by_coords(&v.coords)
                    .map(|i| system.theta.vertex_pairings.get(&det.vertices()[i].id).cloned().unwrap_or_default())
                    .unwrap_or_default()
            })
            .collect();
        let theta = ClosedForm::from_vertex_pairings(&data, &theta)?;
        PshConstraintSystem::new(target.clone(), theta, data)
    }
}

/// Splits every edge of a one-dimensional simplicial subdivision at its midpoint.
pub fn split_edges(sub: &Arc<Subdivision>, id: impl Into<String>) -> Result<Arc<Subdivision>> {
    sub.require_simplicial()?;
    if sub.root().dim() > 1 {
        return Err(Error::Precondition("edge splitting is for one-dimensional complexes".into()));
    }
    let two = Rational::from_integer(BigInt::from(2));
    let mut verts: Vec<(Option<ComponentId>, Vec<Rational>)> =
        sub.vertices().iter().map(|v| (Some(v.id), v.coords.clone())).collect();
    let mut cells = Vec::new();
    for (k, c) in sub.cells().iter().enumerate() {
        if c.vertices.len() != 2 {
            cells.push((c.vertices.clone(), k));
            continue;
        }
        let (p, q) = (c.vertices[0], c.vertices[1]);
        let mid = sub.vertices()[p]
            .coords
            .iter()
            .zip(&sub.vertices()[q].coords)
            .map(|(a, b)| (a + b) / &two)
            .collect();
        let m = verts.len();
        verts.push((None, mid));
        cells.push((vec![p, m], k));
        cells.push((vec![m, q], k));
    }
    Subdivision::new(id, sub, verts, cells)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelReport {
    pub level: usize,
    pub determination: String,
    pub values: Vec<Rational>,
}

/// Envelope values along a sequence of finer determinations.
///
/// The stopping rule is heuristic: `stabilized` only records that the last two
/// levels agree at every query; it does not certify the limit.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementTrace {
    pub levels: Vec<LevelReport>,
    pub monotone: bool,
    pub stabilized: bool,
}

/// Level 0 is the given determination, the next level is the obstacle's
/// carrier if it is finer, and later levels split every edge at its midpoint.
pub fn envelope_refinement(
    system: &PshConstraintSystem,
    obstacle: &PAFunction,
    queries: &[Vec<Rational>],
    refinements: usize,
    refiner: &dyn RefinementData,
) -> Result<RefinementTrace> {
    let mut current = system.clone();
    let mut levels = vec![LevelReport {
        level: 0,
        determination: current.determination.id().to_string(),
        values: envelope(&current, obstacle, queries)?.values(),
    }];
    for level in 1..=refinements {
        let det = current.determination.clone();
        let carrier = obstacle.carrier();
        let target = if carrier.id() != det.id() && carrier.is_descendant_of(det.id()) {
            carrier.clone()
        } else {
            split_edges(&det, format!("{}/{}", system.determination.id(), level))?
        };
        current = refiner.refine(&current, &target)?;
        levels.push(LevelReport {
            level,
            determination: target.id().to_string(),
            values: envelope(&current, obstacle, queries)?.values(),
        });
    }
    let monotone = levels
        .windows(2)
        .all(|w| w[0].values.iter().zip(&w[1].values).all(|(a, b)| a <= b));
    let stabilized = levels.len() >= 2 && levels[levels.len() - 1].values == levels[levels.len() - 2].values;
    Ok(RefinementTrace {
        levels,
        monotone,
        stabilized,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxiomCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxiomReport {
    pub checks: Vec<AxiomCheck>,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn average_forms(a: &ClosedForm, b: &ClosedForm) -> ClosedForm {
    let two = Rational::from_integer(BigInt::from(2));
    let avg = |x: &Rational, y: Option<&Rational>| (x + y.cloned().unwrap_or_default()) / &two;
    ClosedForm {
        model: a.model.clone(),
        curve_pairings: a.curve_pairings.iter().map(|(k, v)| (k.clone(), avg(v, b.curve_pairings.get(k)))).collect(),
        vertex_pairings: a.vertex_pairings.iter().map(|(k, v)| (*k, avg(v, b.vertex_pairings.get(k)))).collect(),
        face_pairings: a.face_pairings.iter().map(|(k, v)| (k.clone(), avg(v, b.face_pairings.get(k)))).collect(),
    }
}

/// Verifies monotonicity, translation by `c`, the 1-Lipschitz property,
/// concavity in `(θ, u)`, and idempotence at the queries and at every
/// vertex of the obstacles' common carrier.
pub fn envelope_axioms(
    system: &PshConstraintSystem,
    u: &PAFunction,
    v: &PAFunction,
    c: &Rational,
    theta2: Option<&ClosedForm>,
    queries: &[Vec<Rational>],
) -> Result<AxiomReport> {
    if u.carrier().id() != v.carrier().id() {
        return Err(Error::Precondition("obstacles must share a carrier".into()));
    }
    let carrier = u.carrier().clone();
    let mut points: Vec<Vec<Rational>> = carrier.vertices().iter().map(|x| x.coords.clone()).collect();
    let n_vertices = points.len();
    points.extend(queries.iter().cloned());
    let p = |sys: &PshConstraintSystem, obs: &PAFunction| envelope(sys, obs, &points).map(|r| r.values());
    let pu = p(system, u)?;
    let pv = p(system, v)?;
    let mut checks = Vec::new();
    let mut check = |name: &'static str, bad: Option<usize>| {
        checks.push(AxiomCheck {
            name,
            passed: bad.is_none(),
            detail: bad.map_or_else(|| "ok".to_string(), |i| format!("fails at {}", format_vector(&points[i]))),
        });
    };

    check("dominance", (0..n_vertices).find(|&i| pu[i] > u.values()[i]));

    let lo = PAFunction::new(
        carrier.clone(),
        u.values().iter().zip(v.values()).map(|(a, b)| a.clone().min(b.clone())).collect(),
    )?;
    let plo = p(system, &lo)?;
    check("monotone", (0..points.len()).find(|&i| plo[i] > pu[i] || plo[i] > pv[i]));

    let shifted = p(system, &u.map_values(|x| x + c))?;
    check("translation", (0..points.len()).find(|&i| shifted[i] != &pu[i] + c));

    let dist = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| (a - b).abs())
        .max()
        .unwrap_or_default();
    check("lipschitz", (0..points.len()).find(|&i| (&pu[i] - &pv[i]).abs() > dist));

    let two = Rational::from_integer(BigInt::from(2));
    let other = match theta2 {
        Some(t) => system.with_theta(t.clone())?,
        None => system.clone(),
    };
    let mid_system = system.with_theta(average_forms(&system.theta, &other.theta))?;
    let pv2 = p(&other, v)?;
    let mid = PAFunction::new(
        carrier.clone(),
        u.values().iter().zip(v.values()).map(|(a, b)| (a + b) / &two).collect(),
    )?;
    let pmid = p(&mid_system, &mid)?;
    check("concavity", (0..points.len()).find(|&i| pmid[i] < (&pu[i] + &pv2[i]) / &two));

    let again = PAFunction::new(carrier, pu[..n_vertices].to_vec())?;
    let ppu = p(system, &again)?;
    check("idempotence", (0..points.len()).find(|&i| ppu[i] != pu[i]));

    Ok(AxiomReport { checks })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxStatus {
    /// Nefness was verified on the refined model.
    Certified,
    /// Only convexity on faces and the inputs' psh property were checked.
    NecessaryConditionsOnly,
}

impl MaxStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            MaxStatus::Certified => "certified",
            MaxStatus::NecessaryConditionsOnly => "necessary-conditions-only",
        }
    }
}

fn require_psh(c: &[Rational], system: &PshConstraintSystem) -> Result<()> {
    let r = psh_check(c, system)?;
    match r.witness {
        None => Ok(()),
        Some((curve, slack)) => Err(Error::Precondition(format!(
            "input is not psh: curve {curve} has slack {slack}"
        ))),
    }
}

/// `max(φ_{c1}, φ_{c2})` on the tie-refined carrier.
pub fn max_combine(
    c1: &[Rational],
    c2: &[Rational],
    system: &PshConstraintSystem,
    refiner: Option<&dyn RefinementData>,
) -> Result<(PAFunction, MaxStatus)> {
    usc_sup_with_status(&[c1.to_vec(), c2.to_vec()], system, refiner)
}

/// Pointwise supremum of finitely many psh functions, on the tie-refined carrier.
pub fn usc_sup_family(family: &[Vec<Rational>], system: &PshConstraintSystem) -> Result<PAFunction> {
    usc_sup_with_status(family, system, None).map(|(f, _)| f)
}

fn usc_sup_with_status(
    family: &[Vec<Rational>],
    system: &PshConstraintSystem,
    refiner: Option<&dyn RefinementData>,
) -> Result<(PAFunction, MaxStatus)> {
    if family.is_empty() {
        return Err(Error::Precondition("empty family".into()));
    }
    let mut pieces = Vec::with_capacity(family.len());
    for c in family {
        require_psh(c, system)?;
        pieces.push(system.pa_function(c)?);
    }
    let id = format!("{}/max", system.determination.id());
    let max = max_of_pa(&pieces, id)?;
    if !is_convex_on_faces(&max) {
        return Err(Error::Certificate {
            point: "carrier".into(),
            detail: "maximum is not convex on faces".into(),
        });
    }
    let Some(refiner) = refiner else {
        return Ok((max, MaxStatus::NecessaryConditionsOnly));
    };
    let refined = refiner.refine(system, max.carrier())?;
    let c = refined.coefficients_of(&max)?;
    let report = psh_check(&c, &refined)?;
    if let Some((curve, slack)) = report.witness {
        return Err(Error::Data(format!(
            "refinement data contradicts the maximum: curve {curve} has slack {slack}"
        )));
    }
    Ok((max, MaxStatus::Certified))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizationReport {
    pub queries: Vec<Vec<Rational>>,
    pub envelope: Vec<Rational>,
    pub values: BTreeMap<u64, Vec<Rational>>,
    pub gaps: BTreeMap<u64, Rational>,
    pub values_monotone: bool,
    pub gaps_monotone: bool,
}

impl RegularizationReport {
    pub fn final_gap(&self) -> &Rational {
        self.gaps.values().next_back().expect("nonempty sequence")
    }
}

/// Compares `φ_m = (1/m) log|a_m|` with `P_θ(0)` on the determination.
pub fn regularization_trace(
    seq: &GradedSequence,
    system: &PshConstraintSystem,
    queries: &[Vec<Rational>],
) -> Result<RegularizationReport> {
    let det = system.determination.clone();
    let root = det.root().clone();
    let zero = PAFunction::new(det.clone(), vec![Rational::zero(); det.vertices().len()])?;
    let env = envelope(system, &zero, queries)?.values();
    for x in queries {
        graded_limit(&root, seq, &root.sparse(x))?;
    }
    let mut values = BTreeMap::new();
    let mut gaps = BTreeMap::new();
    for (&m, ideal) in seq.ideals() {
        let mq = Rational::from_integer(BigInt::from(m));
        let mut pieces: Vec<Vec<Rational>> = Vec::new();
        for g in ideal.generators() {
            for mono in g.terms().keys() {
                let mut f: Vec<Rational> = root.multiplicities().iter().map(|b| from_bigint(b) * from_bigint(ideal.twist())).collect();
                for (id, k) in mono {
                    let i = root
                        .index_of(*id)
                        .ok_or_else(|| Error::Structural(format!("unknown component {}", id.0)))?;
                    f[i] -= Rational::from_integer(BigInt::from(*k));
                }
                pieces.push(f.into_iter().map(|v| v / &mq).collect());
            }
        }
        let vertex_values: Vec<Rational> = det
            .vertices()
            .iter()
            .map(|v| seq.normalized(&root, m, &v.coords))
            .collect::<Result<_>>()?;
        for (k, cell) in det.cells().iter().enumerate() {
            let determined = pieces.iter().any(|f| {
                cell.vertices
                    .iter()
                    .all(|&v| linalg::dot(f, &det.vertices()[v].coords) == vertex_values[v])
            });
            if !determined {
                return Err(Error::Data(format!("phi_{m} is not affine on cell {k} of the determination")));
            }
        }
        let c: Vec<Rational> = vertex_values
            .iter()
            .zip(det.vertices())
            .map(|(f, v)| f * from_bigint(&v.multiplicity))
            .collect();
        let report = psh_check(&c, system)?;
        if let Some((curve, slack)) = report.witness {
            return Err(Error::Data(format!("phi_{m} is not psh: curve {curve} has slack {slack}")));
        }
        let vals: Vec<Rational> = queries
            .iter()
            .map(|x| seq.normalized(&root, m, x))
            .collect::<Result<_>>()?;
        let gap = vals
            .iter()
            .zip(&env)
            .map(|(a, b)| (a - b).abs())
            .max()
            .unwrap_or_default();
        values.insert(m, vals);
        gaps.insert(m, gap);
    }
    let mut values_monotone = true;
    let mut gaps_monotone = true;
    for &m in values.keys() {
        for &l in values.keys().filter(|&&l| l > m && l % m == 0) {
            values_monotone &= values[&m].iter().zip(&values[&l]).all(|(a, b)| a <= b);
            gaps_monotone &= gaps[&l] <= gaps[&m];
        }
    }
    Ok(RegularizationReport {
        queries: queries.to_vec(),
        envelope: env,
        values,
        gaps,
        values_monotone,
        gaps_monotone,
    })
}

impl PshConstraintSystem {
    /// The system on the root complex with the components as test curves.
    pub fn on_curve_model(complex: Arc<DualComplex>, q: Matrix, theta: &[Rational]) -> Result<Self> {
        let det = Subdivision::trivial(complex.clone());
        let data = IntersectionData::from_components(&complex, q)?;
        let theta = ClosedForm::from_vertex_pairings(&data, theta)?;
        Self::new(det, theta, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};
    use crate::valuation::{Monomial, VPolynomial, VerticalIdeal};

    fn chain() -> Arc<DualComplex> {
        Arc::new(
            validate_complex(&RawComplex {
                id: "chain".into(),
                components: vec![(1, 1.into()), (2, 1.into())],
                faces: vec![vec![1], vec![2], vec![1, 2]],
            })
            .unwrap(),
        )
    }

    fn chain_q() -> Matrix {
        vec![vec![int(-1), int(1)], vec![int(1), int(-1)]]
    }

    fn system(theta: &[Rational]) -> PshConstraintSystem {
        PshConstraintSystem::on_curve_model(chain(), chain_q(), theta).unwrap()
    }

    fn e(i: usize) -> Vec<Rational> {
        let mut v = vec![int(0), int(0)];
        v[i] = int(1);
        v
    }

    fn midpoint_carrier(sys: &PshConstraintSystem) -> Arc<Subdivision> {
        split_edges(sys.determination(), "chain/mid").unwrap()
    }

    #[test]
    fn psh_examples() {
        let sys = system(&[int(1), int(1)]);
        assert!(psh_check(&[int(0), int(0)], &sys).unwrap().nef);
        let r = psh_check(&[int(0), int(2)], &sys).unwrap();
        assert_eq!(r.witness.unwrap().0, "E2");
        assert!(psh_check(&[int(3), int(3)], &sys).unwrap().nef);
    }

    #[test]
    fn envelope_examples() {
        let sys = system(&[int(1), int(1)]);
        let det = sys.determination().clone();
        let zero = PAFunction::new(det.clone(), vec![int(0), int(0)]).unwrap();
        let q = vec![e(0), e(1), vec![rat(1, 2), rat(1, 2)]];
        assert!(envelope(&sys, &zero, &q).unwrap().values().iter().all(Zero::is_zero));

        let linear = PAFunction::new(det.clone(), vec![int(0), int(3)]).unwrap();
        let r = envelope(&sys, &linear, &[e(1)]).unwrap();
        assert_eq!(r.results[0].value, int(1));
        assert!(r.results[0].active_curves.contains(&"E2".to_string()));

        let mid = midpoint_carrier(&sys);
        let tent = PAFunction::new(mid.clone(), vec![int(0), int(0), int(1)]).unwrap();
        let q: Vec<Vec<Rational>> = mid.vertices().iter().map(|v| v.coords.clone()).collect();
        assert!(envelope(&sys, &tent, &q).unwrap().values().iter().all(Zero::is_zero));
    }

    #[test]
    fn infeasible_is_reported() {
        let sys = system(&[int(-1), int(-1)]);
        let zero = PAFunction::new(sys.determination().clone(), vec![int(0), int(0)]).unwrap();
        assert!(matches!(envelope(&sys, &zero, &[e(0)]), Err(Error::Infeasible(_))));
    }

    #[test]
    fn curve_refinement_matches_blowup() {
        let sys = system(&[int(1), int(1)]);
        let mid = midpoint_carrier(&sys);
        let refined = CurveRefinement.refine(&sys, &mid).unwrap();
        let q = refined.data().q();
        // vertex order: e1, e2, midpoint (multiplicity 2)
        assert_eq!(q[0][0], int(-2));
        assert_eq!(q[2][2], int(-1));
        assert_eq!(q[0][2], int(1));
        let quarter = split_edges(&mid, "chain/quarter").unwrap();
        let again = CurveRefinement.refine(&refined, &quarter).unwrap();
        let b: Vec<Rational> = quarter.vertices().iter().map(|v| from_bigint(&v.multiplicity)).collect();
        assert!(linalg::mat_vec(again.data().q(), &b).iter().all(Zero::is_zero));
        assert!(again.data().q().iter().flatten().any(|v| !v.is_integer()));
    }

    #[test]
    fn refinement_is_monotone() {
        let sys = system(&[int(1), int(1)]);
        let mid = midpoint_carrier(&sys);
        let u = PAFunction::new(mid.clone(), vec![int(0), int(0), int(-1)]).unwrap();
        let q = vec![vec![rat(1, 2), rat(1, 2)], vec![rat(1, 4), rat(3, 4)]];
        let trace = envelope_refinement(&sys, &u, &q, 3, &CurveRefinement).unwrap();
        assert!(trace.monotone && trace.stabilized);
        assert_eq!(trace.levels.len(), 4);
        assert_eq!(trace.levels[3].values, vec![int(-1), rat(-3, 4)]);
    }

    #[test]
    fn axioms_hold_on_chain() {
        let sys = system(&[int(1), int(1)]);
        let mid = midpoint_carrier(&sys);
        let u = PAFunction::new(mid.clone(), vec![int(0), int(3), int(2)]).unwrap();
        let v = PAFunction::new(mid.clone(), vec![int(-1), int(1), rat(1, 2)]).unwrap();
        let theta2 = ClosedForm::from_vertex_pairings(sys.data(), &[int(2), int(1)]).unwrap();
        let r = envelope_axioms(&sys, &u, &v, &rat(5, 3), Some(&theta2), &[vec![rat(1, 3), rat(2, 3)]]).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.checks.len(), 6);
    }

    #[test]
    fn max_and_sup() {
        let sys = system(&[int(1), int(1)]);
        let c1 = vec![int(0), int(0)];
        let c2 = vec![int(1), int(0)];
        let (m, status) = max_combine(&c1, &c2, &sys, Some(&CurveRefinement)).unwrap();
        assert_eq!(status, MaxStatus::Certified);
        assert_eq!(m.eval_root(&[rat(1, 2), rat(1, 2)]).unwrap(), rat(1, 2));
        let (same, _) = max_combine(&c1, &c1, &sys, None).unwrap();
        assert!(same.values().iter().all(Zero::is_zero));
        let shifted = vec![int(2), int(2)];
        let (m, _) = max_combine(&c2, &[int(3), int(2)], &sys, None).unwrap();
        assert_eq!(m.eval_root(&e(1)).unwrap(), int(2));
        assert!(max_combine(&c1, &[int(0), int(2)], &sys, None).is_err());

        let consts: Vec<Vec<Rational>> = [-1, -2, -3].iter().map(|&t| vec![int(t), int(t)]).collect();
        let s = usc_sup_family(&consts, &sys).unwrap();
        assert!(s.values().iter().all(|v| *v == int(-1)));
        let single = usc_sup_family(&[shifted.clone()], &sys).unwrap();
        assert!(single.values().iter().all(|v| *v == int(2)));
        assert!(usc_sup_family(&[], &sys).is_err());
    }

    #[test]
    fn regularization_on_chain() {
        let sys = system(&[int(2), rat(-1, 2)]);
        let ideals: BTreeMap<u64, VerticalIdeal> = [1u64, 2, 3, 4, 6, 8, 12]
            .iter()
            .map(|&m| {
                let g = VPolynomial::monomial(Monomial::from([(ComponentId(2), m.div_ceil(2))]));
                (m, VerticalIdeal::new(vec![g], 0.into()).unwrap())
            })
            .collect();
        let seq = GradedSequence::new(ideals).unwrap();
        let q = vec![e(0), e(1), vec![rat(1, 2), rat(1, 2)]];
        let r = regularization_trace(&seq, &sys, &q).unwrap();
        assert_eq!(r.envelope[1], rat(-1, 2));
        assert!(r.values_monotone && r.gaps_monotone);
        assert_eq!(r.gaps[&1], rat(1, 2));
        assert_eq!(r.gaps[&3], rat(1, 6));
        assert!(r.final_gap().is_zero());

        let bad: BTreeMap<u64, VerticalIdeal> = [1u64]
            .iter()
            .map(|&m| (m, VerticalIdeal::new(vec![VPolynomial::one()], 0.into()).unwrap()))
            .collect();
        let err = regularization_trace(&GradedSequence::new(bad).unwrap(), &sys, &q).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }
}
