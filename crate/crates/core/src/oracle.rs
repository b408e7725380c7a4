//! An independent solver for curve models: dual graphs with masses, solved as
//! discrete obstacle problems on refined node sets.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::complex::{validate_complex, ComponentId, DualComplex, RawComplex};
use crate::envelope::EnvelopeResult;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::numerical::{ClosedForm, IntersectionData};
use crate::pa::PAFunction;
use crate::rational::{format_vector, from_bigint, Rational};

#[derive(Debug, Clone, PartialEq)]
pub struct GraphVertex {
    pub id: u32,
    pub multiplicity: BigInt,
    pub theta: Rational,
}

/// An edge standing for `multiplicity` intersection points of two components.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEdge {
    pub a: u32,
    pub b: u32,
    pub multiplicity: BigInt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricGraphModel {
    id: String,
    vertices: Vec<GraphVertex>,
    edges: Vec<GraphEdge>,
}

impl MetricGraphModel {
    /// Vertices are sorted by id and edges oriented from the smaller id.
    pub fn new(id: impl Into<String>, mut vertices: Vec<GraphVertex>, mut edges: Vec<GraphEdge>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::Structural("a graph needs at least one vertex".into()));
        }
        let ids: BTreeSet<u32> = vertices.iter().map(|v| v.id).collect();
        if ids.len() != vertices.len() {
            return Err(Error::Structural("duplicate vertex ids".into()));
        }
        if let Some(v) = vertices.iter().find(|v| !v.multiplicity.is_positive()) {
            return Err(Error::Structural(format!("vertex {} has nonpositive multiplicity", v.id)));
        }
        let mut seen = BTreeSet::new();
        for e in &edges {
            if e.a == e.b {
                return Err(Error::Structural(format!("loop at vertex {}", e.a)));
            }
            if !ids.contains(&e.a) || !ids.contains(&e.b) {
                return Err(Error::Structural(format!("edge {}-{} has an unknown endpoint", e.a, e.b)));
            }
            if !e.multiplicity.is_positive() {
                return Err(Error::Structural(format!("edge {}-{} has nonpositive multiplicity", e.a, e.b)));
            }
            if !seen.insert((e.a.min(e.b), e.a.max(e.b))) {
                return Err(Error::Structural(format!(
                    "edge {}-{} listed twice; use its multiplicity",
                    e.a, e.b
                )));
            }
        }
        vertices.sort_by_key(|v| v.id);
        for e in &mut edges {
            if e.a > e.b {
                std::mem::swap(&mut e.a, &mut e.b);
            }
        }
        edges.sort_by_key(|e| (e.a, e.b));
        let g = Self {
            id: id.into(),
            vertices,
            edges,
        };
        if !g.is_connected() {
            return Err(Error::Structural("graph is disconnected".into()));
        }
        Ok(g)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn vertices(&self) -> &[GraphVertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    fn index(&self, id: u32) -> usize {
        self.vertices.iter().position(|v| v.id == id).expect("validated id")
    }

    fn is_connected(&self) -> bool {
        let n = self.vertices.len();
        let mut adj = vec![Vec::new(); n];
        for e in &self.edges {
            let (a, b) = (self.index(e.a), self.index(e.b));
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut queue = VecDeque::from([0]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// The dual complex: one vertex per component, one segment per edge.
    pub fn complex(&self) -> Result<DualComplex> {
        let mut faces: Vec<Vec<u32>> = self.vertices.iter().map(|v| vec![v.id]).collect();
        faces.extend(self.edges.iter().map(|e| vec![e.a, e.b]));
        validate_complex(&RawComplex {
            id: self.id.clone(),
            components: self.vertices.iter().map(|v| (v.id, v.multiplicity.clone())).collect(),
            faces,
        })
    }

    /// The masses `θ_i` as pairings of a closed form.
    pub fn closed_form(&self, data: &IntersectionData) -> Result<ClosedForm> {
        let theta: Vec<Rational> = data
            .ids()
            .iter()
            .map(|id| self.vertices[self.index(id.0)].theta.clone())
            .collect();
        ClosedForm::from_vertex_pairings(data, &theta)
    }
}

/// `E_i·E_j` is the edge multiplicity and `E_i² = −(1/b_i) Σ_{j≠i} b_j E_i·E_j`.
pub fn generate_intersection_data(g: &MetricGraphModel) -> Result<IntersectionData> {
    let complex = g.complex()?;
    let n = complex.len();
    let mut q = linalg::zeros(n, n);
    for e in &g.edges {
        let i = complex.index_of(ComponentId(e.a)).expect("vertex");
        let j = complex.index_of(ComponentId(e.b)).expect("vertex");
        q[i][j] = from_bigint(&e.multiplicity);
        q[j][i] = from_bigint(&e.multiplicity);
    }
    let b: Vec<Rational> = complex.multiplicities().iter().map(from_bigint).collect();
    for i in 0..n {
        let off: Rational = (0..n).filter(|&j| j != i).map(|j| &b[j] * &q[i][j]).sum();
        q[i][i] = -off / &b[i];
    }
    IntersectionData::from_components(&complex, q)
}

/// A node of the refined graph: a vertex, or a point `x ∈ (0,1)` on an edge
/// where `x = b_j s_j` measures the way from `a` to `b`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Node {
    Vertex(usize),
    Edge(usize, Rational),
}

struct NodeGraph {
    nodes: Vec<Node>,
    coords: Vec<Vec<Rational>>,
    /// (node, neighbor, conductance)
    links: Vec<Vec<(usize, Rational)>>,
    /// Sorted interior positions per edge with their node indices.
    edge_nodes: Vec<Vec<(Rational, usize)>>,
}

fn build_nodes(g: &MetricGraphModel, complex: &DualComplex, extra: &[BTreeSet<Rational>]) -> NodeGraph {
    let n = g.vertices.len();
    let b: Vec<Rational> = g.vertices.iter().map(|v| from_bigint(&v.multiplicity)).collect();
    let mut nodes: Vec<Node> = (0..n).map(Node::Vertex).collect();
    let mut coords: Vec<Vec<Rational>> = (0..n)
        .map(|i| complex.vertex(complex.index_of(ComponentId(g.vertices[i].id)).expect("vertex")))
        .collect();
    let mut links = vec![Vec::new(); n];
    let mut edge_nodes = Vec::with_capacity(g.edges.len());
    for (k, e) in g.edges.iter().enumerate() {
        let (i, j) = (g.index(e.a), g.index(e.b));
        let (ci, cj) = (
            complex.index_of(ComponentId(e.a)).expect("vertex"),
            complex.index_of(ComponentId(e.b)).expect("vertex"),
        );
        let mut chain = vec![(Rational::zero(), i)];
        let mut interior = Vec::new();
        for x in &extra[k] {
            let idx = nodes.len();
            nodes.push(Node::Edge(k, x.clone()));
            let mut c = vec![Rational::zero(); complex.len()];
            c[ci] = (Rational::one() - x) / &b[i];
            c[cj] = x / &b[j];
            coords.push(c);
            links.push(Vec::new());
            chain.push((x.clone(), idx));
            interior.push((x.clone(), idx));
        }
        chain.push((Rational::one(), j));
        let m = from_bigint(&e.multiplicity);
        for w in chain.windows(2) {
            let len = (&w[1].0 - &w[0].0) / (&b[i] * &b[j]);
            let cond = &m / len;
            links[w[0].1].push((w[1].1, cond.clone()));
            links[w[1].1].push((w[0].1, cond));
        }
        edge_nodes.push(interior);
    }
    NodeGraph {
        nodes,
        coords,
        links,
        edge_nodes,
    }
}

impl NodeGraph {
    /// `g(f)_p = b_p θ_p + Σ_q w_pq (f_q − f_p)`.
    fn flux(&self, mass: &[Rational], f: &[Rational], p: usize) -> Rational {
        self.links[p]
            .iter()
            .fold(mass[p].clone(), |acc, (q, w)| acc + w * (&f[*q] - &f[p]))
    }

    fn row(&self, p: usize) -> Vec<Rational> {
        let mut r = vec![Rational::zero(); self.nodes.len()];
        for (q, w) in &self.links[p] {
            r[*q] += w;
            r[p] -= w;
        }
        r
    }
}

/// The largest `f ≤ u` with nonnegative flux at every node.
fn solve_obstacle(graph: &NodeGraph, mass: &[Rational], u: &[Rational]) -> Result<Vec<Rational>> {
    let n = graph.nodes.len();
    let total: Rational = mass.iter().sum();
    if total.is_negative() {
        return Err(Error::Infeasible("total mass is negative".into()));
    }
    if total.is_zero() {
        let mut m: Matrix = (0..n).map(|p| graph.row(p)).collect();
        let mut rhs: Vec<Rational> = mass.iter().map(|v| -v).collect();
        m[0] = vec![Rational::zero(); n];
        m[0][0] = Rational::one();
        rhs[0] = Rational::zero();
        let f0 = linalg::solve_unique(&m, &rhs)
            .ok_or_else(|| Error::Inconclusive("harmonic system is singular".into()))?;
        let shift = u.iter().zip(&f0).map(|(a, b)| a - b).min().expect("nonempty");
        return Ok(f0.into_iter().map(|v| v + &shift).collect());
    }
    let mut obstacle = vec![true; n];
    let mut f = u.to_vec();
    for _ in 0..(4 * n + 10) {
        let next: Vec<bool> = (0..n)
            .map(|p| &u[p] - &f[p] <= graph.flux(mass, &f, p))
            .collect();
        if next == obstacle && f != *u || next == obstacle && next.iter().all(|&o| o) {
            return Ok(f);
        }
        obstacle = next;
        let mut m: Matrix = Vec::with_capacity(n);
        let mut rhs = Vec::with_capacity(n);
        for p in 0..n {
            if obstacle[p] {
                let mut r = vec![Rational::zero(); n];
                r[p] = Rational::one();
                m.push(r);
                rhs.push(u[p].clone());
            } else {
                m.push(graph.row(p));
                rhs.push(-mass[p].clone());
            }
        }
        f = linalg::solve_unique(&m, &rhs)
            .ok_or_else(|| Error::Inconclusive("policy system is singular".into()))?;
    }
    Err(Error::Inconclusive("policy iteration did not settle".into()))
}

fn certify(graph: &NodeGraph, mass: &[Rational], u: &[Rational], f: &[Rational]) -> Result<()> {
    let mut contact = false;
    for p in 0..f.len() {
        let flux = graph.flux(mass, f, p);
        if f[p] > u[p] || flux.is_negative() {
            return Err(Error::Inconclusive(format!("node {p} is infeasible")));
        }
        if f[p] == u[p] {
            contact = true;
        } else if !flux.is_zero() {
            return Err(Error::Inconclusive(format!("node {p} violates complementarity")));
        }
    }
    if !contact {
        return Err(Error::Inconclusive("empty contact set".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub values: Vec<Rational>,
    /// Dyadic level at which two successive levels first agreed.
    pub level: u32,
    pub stabilized: bool,
    /// Root coordinates and optimal values at the nodes of the last level.
    pub nodes: Vec<(Vec<Rational>, Rational)>,
}

/// Envelope of `u` on the curve model by policy iteration on dyadic node sets.
///
/// Level `L` uses the graph's vertices, the breakpoints of `u`, and the points
/// `k/2^L` of every edge; the search stops once two levels agree at all queries.
pub fn oracle_envelope(
    g: &MetricGraphModel,
    u: &PAFunction,
    queries: &[Vec<Rational>],
    depth_cap: u32,
) -> Result<OracleResult> {
    let complex = g.complex()?;
    if u.carrier().root().as_ref() != &complex {
        return Err(Error::Precondition("obstacle lives on another complex".into()));
    }
    let mut breakpoints: Vec<BTreeSet<Rational>> = vec![BTreeSet::new(); g.edges.len()];
    let edge_of: BTreeMap<(usize, usize), usize> = g
        .edges
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let (a, b) = (complex.index_of(ComponentId(e.a)).unwrap(), complex.index_of(ComponentId(e.b)).unwrap());
            ((a.min(b), a.max(b)), k)
        })
        .collect();
    let locate_edge = |x: &[Rational]| -> Option<(usize, Rational)> {
        let supp: Vec<usize> = (0..x.len()).filter(|&i| !x[i].is_zero()).collect();
        if supp.len() != 2 {
            return None;
        }
        let k = edge_of[&(supp[0], supp[1])];
        let far = complex.index_of(ComponentId(g.edges[k].b)).unwrap();
        Some((k, &x[far] * from_bigint(&complex.multiplicities()[far])))
    };
    for v in u.carrier().vertices() {
        if let Some((k, t)) = locate_edge(&v.coords) {
            breakpoints[k].insert(t);
        }
    }
    for x in queries {
        complex.check_dense(x)?;
    }
    let mut previous: Option<Vec<Rational>> = None;
    let mut last = None;
    for level in 0..=depth_cap {
        let step = Rational::new(BigInt::one(), BigInt::from(2).pow(level));
        let extra: Vec<BTreeSet<Rational>> = breakpoints
            .iter()
            .map(|bp| {
                let mut s = bp.clone();
                let mut t = step.clone();
                while t < Rational::one() {
                    s.insert(t.clone());
                    t += &step;
                }
                s
            })
            .collect();
        let graph = build_nodes(g, &complex, &extra);
        let mut mass = vec![Rational::zero(); graph.nodes.len()];
        for (i, v) in g.vertices.iter().enumerate() {
            mass[i] = from_bigint(&v.multiplicity) * &v.theta;
        }
        let obstacle: Vec<Rational> = graph.coords.iter().map(|c| u.eval_root(c)).collect::<Result<_>>()?;
        let f = solve_obstacle(&graph, &mass, &obstacle)?;
        certify(&graph, &mass, &obstacle, &f)?;
        let values: Vec<Rational> = queries
            .iter()
            .map(|x| match locate_edge(x) {
                None => {
                    let i = (0..x.len()).find(|&i| !x[i].is_zero()).expect("support");
                    let id = complex.ids()[i].0;
                    f[g.index(id)].clone()
                }
                Some((k, t)) => {
                    let e = &g.edges[k];
                    let mut chain = vec![(Rational::zero(), g.index(e.a))];
                    chain.extend(graph.edge_nodes[k].iter().cloned());
                    chain.push((Rational::one(), g.index(e.b)));
                    let w = chain.windows(2).find(|w| w[0].0 <= t && t <= w[1].0).expect("in edge");
                    let lam = (&t - &w[0].0) / (&w[1].0 - &w[0].0);
                    &f[w[0].1] + lam * (&f[w[1].1] - &f[w[0].1])
                }
            })
            .collect();
        let nodes = graph.coords.iter().cloned().zip(f.iter().cloned()).collect();
        if previous.as_ref() == Some(&values) {
            return Ok(OracleResult {
                values,
                level,
                stabilized: true,
                nodes,
            });
        }
        previous = Some(values.clone());
        last = Some(OracleResult {
            values,
            level,
            stabilized: false,
            nodes,
        });
    }
    Ok(last.expect("at least one level"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub point: Vec<Rational>,
    pub main: Rational,
    pub oracle: Rational,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiffReport {
    pub mismatches: Vec<Mismatch>,
    pub unverified: Vec<Vec<Rational>>,
}

impl DiffReport {
    pub fn is_clean(&self) -> bool {
        self.mismatches.is_empty() && self.unverified.is_empty()
    }
}

impl std::fmt::Display for DiffReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for m in &self.mismatches {
            writeln!(f, "mismatch at {}: main {} oracle {}", format_vector(&m.point), m.main, m.oracle)?;
        }
        for p in &self.unverified {
            writeln!(f, "unverified at {}", format_vector(p))?;
        }
        Ok(())
    }
}

/// Exact comparison of main and oracle values, query by query.
pub fn compare(main: &EnvelopeResult, oracle: &OracleResult) -> DiffReport {
    let mut report = DiffReport::default();
    for (r, o) in main.results.iter().zip(&oracle.values) {
        if !oracle.stabilized {
            report.unverified.push(r.point.clone());
        } else if r.value != *o {
            report.mismatches.push(Mismatch {
                point: r.point.clone(),
                main: r.value.clone(),
                oracle: o.clone(),
            });
        }
    }
    report
}
