//! JSON file formats: models, curve graphs, and envelope results.
//!
//! Every rational travels as a `"p/q"` string. Files carry `schema_version`;
//! load errors name the offending location as a JSON pointer.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::complex::{face_of, validate_complex, ComponentId, DualComplex, Face, RawComplex};
use crate::envelope::{EnvelopeResult, QueryResult};
use crate::error::Error;
use crate::numerical::{ClosedForm, IntersectionData, TestCurve};
use crate::oracle::{GraphEdge, GraphVertex, MetricGraphModel};
use crate::pa::PAFunction;
use crate::rational::{format_rational, parse_rational, Rational};
use crate::subdivision::Subdivision;
use crate::valuation::{VPolynomial, VerticalIdeal};

pub const SCHEMA_VERSION: u32 = 1;

/// A rational in its textual form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Q(pub Rational);

impl Serialize for Q {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(&self.0))
    }
}

impl<'de> Deserialize<'de> for Q {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_rational(&s).map(Q).map_err(serde::de::Error::custom)
    }
}

fn qs(v: &[Rational]) -> Vec<Q> {
    v.iter().cloned().map(Q).collect()
}

fn unq(v: &[Q]) -> Vec<Rational> {
    v.iter().map(|q| q.0.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentEntry {
    pub id: u32,
    pub b: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueEntry {
    pub component: u32,
    pub value: Q,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveEntry {
    pub id: String,
    pub components: Vec<ValueEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub face: Vec<u32>,
    pub component: u32,
    pub value: Q,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceValue {
    pub face: Vec<u32>,
    pub value: Q,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntersectionEntry {
    pub q: Vec<Vec<Q>>,
    /// Absent means the components themselves serve as test curves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curves: Option<Vec<CurveEntry>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tensors: Vec<TensorEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub face_fiber: Vec<FaceValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvePairing {
    pub curve: String,
    pub value: Q,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaEntry {
    pub vertices: Vec<ValueEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curves: Vec<CurvePairing>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub faces: Vec<FaceValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u32>,
    pub coords: Vec<Q>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellEntry {
    pub vertices: Vec<usize>,
    pub parent_cell: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubdivisionEntry {
    pub id: String,
    pub parent: String,
    pub vertices: Vec<VertexEntry>,
    pub cells: Vec<CellEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionEntry {
    pub name: String,
    pub carrier: String,
    pub values: Vec<Q>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdealEntry {
    pub name: String,
    pub generators: Vec<String>,
    #[serde(default)]
    pub twist: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema_version: u32,
    pub id: String,
    pub components: Vec<ComponentEntry>,
    pub faces: Vec<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intersection: Option<IntersectionEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<ThetaEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subdivisions: Vec<SubdivisionEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub functions: Vec<FunctionEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ideals: Vec<IdealEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphVertexEntry {
    pub id: u32,
    pub b: u64,
    pub theta: Q,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphEdgeEntry {
    pub a: u32,
    pub b: u32,
    #[serde(default = "one")]
    pub m: u64,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub schema_version: u32,
    pub id: String,
    pub vertices: Vec<GraphVertexEntry>,
    pub edges: Vec<GraphEdgeEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subdivisions: Vec<SubdivisionEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub functions: Vec<FunctionEntry>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("schema violation at {pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("invalid model at {pointer}: {source}")]
    Invariant { pointer: String, source: Error },
}

impl LoadError {
    pub fn pointer(&self) -> Option<&str> {
        match self {
            LoadError::Read { .. } => None,
            LoadError::Schema { pointer, .. } | LoadError::Invariant { pointer, .. } => Some(pointer),
        }
    }
}

fn at(pointer: impl Into<String>) -> impl FnOnce(Error) -> LoadError {
    let pointer = pointer.into();
    move |source| LoadError::Invariant { pointer, source }
}

fn invalid(pointer: impl Into<String>, message: impl Into<String>) -> LoadError {
    LoadError::Invariant {
        pointer: pointer.into(),
        source: Error::Structural(message.into()),
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, LoadError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let mut pointer = String::new();
        for seg in e.path().iter() {
            match seg {
                serde_path_to_error::Segment::Seq { index } => pointer.push_str(&format!("/{index}")),
                serde_path_to_error::Segment::Map { key } => pointer.push_str(&format!("/{key}")),
                serde_path_to_error::Segment::Enum { variant } => pointer.push_str(&format!("/{variant}")),
                serde_path_to_error::Segment::Unknown => pointer.push_str("/?"),
            }
        }
        if pointer.is_empty() {
            pointer.push('/');
        }
        LoadError::Schema {
            pointer,
            message: e.inner().to_string(),
        }
    })
}

/// A validated model with its named subdivisions, functions, and ideals.
#[derive(Debug, Clone)]
pub struct ModelDescription {
    pub complex: Arc<DualComplex>,
    pub intersection: Option<IntersectionData>,
    pub theta: Option<ClosedForm>,
    /// In declaration order, starting with the root complex.
    pub subdivisions: Vec<Arc<Subdivision>>,
    pub functions: BTreeMap<String, PAFunction>,
    pub ideals: BTreeMap<String, VerticalIdeal>,
}

impl ModelDescription {
    pub fn root(&self) -> &Arc<Subdivision> {
        &self.subdivisions[0]
    }

    pub fn subdivision(&self, id: &str) -> Option<&Arc<Subdivision>> {
        self.subdivisions.iter().find(|s| s.id() == id)
    }

    pub fn function(&self, name: &str) -> Result<&PAFunction, Error> {
        self.functions
            .get(name)
            .ok_or_else(|| Error::Data(format!("no function named `{name}`")))
    }

    pub fn ideal(&self, name: &str) -> Result<&VerticalIdeal, Error> {
        self.ideals
            .get(name)
            .ok_or_else(|| Error::Data(format!("no ideal named `{name}`")))
    }

    pub fn require_intersection(&self) -> Result<&IntersectionData, Error> {
        self.intersection
            .as_ref()
            .ok_or_else(|| Error::Data("model has no intersection data".into()))
    }

    pub fn require_theta(&self) -> Result<&ClosedForm, Error> {
        self.theta
            .as_ref()
            .ok_or_else(|| Error::Data("model declares no form theta".into()))
    }

    /// The curve graph of a one-dimensional model: edge multiplicities are the
    /// off-diagonal degrees, which must be positive integers.
    pub fn graph(&self) -> Result<MetricGraphModel, Error> {
        if self.complex.dim() > 1 {
            return Err(Error::Precondition("a curve graph needs a complex of dimension at most one".into()));
        }
        let data = self.require_intersection()?;
        let theta = self.require_theta()?;
        let vertices = self
            .complex
            .ids()
            .iter()
            .zip(self.complex.multiplicities())
            .map(|(id, b)| {
                Ok(GraphVertex {
                    id: id.0,
                    multiplicity: b.clone(),
                    theta: theta
                        .vertex_pairings
                        .get(id)
                        .cloned()
                        .ok_or_else(|| Error::Data(format!("missing pairing for {id}")))?,
                })
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let mut edges = Vec::new();
        for face in self.complex.faces().iter().filter(|f| f.len() == 2) {
            let axes = self.complex.axes(face);
            let m = &data.q()[axes[0]][axes[1]];
            if !m.is_integer() || !m.is_positive() {
                return Err(Error::Data(format!(
                    "edge {} has degree {m}; a curve graph needs a positive integer",
                    crate::complex::format_face(face)
                )));
            }
            let ids: Vec<u32> = face.iter().map(|c| c.0).collect();
            edges.push(GraphEdge {
                a: ids[0],
                b: ids[1],
                multiplicity: m.to_integer(),
            });
        }
        MetricGraphModel::new(self.complex.id(), vertices, edges)
    }
}

fn face_key(ids: &[u32], complex: &DualComplex, pointer: &str) -> Result<Face, LoadError> {
    let f = face_of(ids);
    if !complex.is_face(&f) {
        return Err(invalid(pointer, format!("{ids:?} is not a face")));
    }
    Ok(f)
}

fn check_version(v: u32) -> Result<(), LoadError> {
    if v != SCHEMA_VERSION {
        return Err(LoadError::Schema {
            pointer: "/schema_version".into(),
            message: format!("unsupported version {v}, expected {SCHEMA_VERSION}"),
        });
    }
    Ok(())
}

fn build_complex(id: &str, components: &[ComponentEntry], faces: &[Vec<u32>]) -> Result<DualComplex, LoadError> {
    for (k, c) in components.iter().enumerate() {
        if c.b == 0 {
            return Err(invalid(format!("/components/{k}/b"), "multiplicity must be positive"));
        }
    }
    let known: Vec<u32> = components.iter().map(|c| c.id).collect();
    for (k, f) in faces.iter().enumerate() {
        if let Some(c) = f.iter().find(|c| !known.contains(c)) {
            return Err(invalid(format!("/faces/{k}"), format!("unknown component {c}")));
        }
    }
    validate_complex(&RawComplex {
        id: id.to_string(),
        components: components.iter().map(|c| (c.id, BigInt::from(c.b))).collect(),
        faces: faces.to_vec(),
    })
    .map_err(at("/"))
}

fn build_subdivisions(
    root: Arc<Subdivision>,
    entries: &[SubdivisionEntry],
) -> Result<Vec<Arc<Subdivision>>, LoadError> {
    let mut subs = vec![root];
    for (k, s) in entries.iter().enumerate() {
        let pointer = format!("/subdivisions/{k}");
        if subs.iter().any(|t| t.id() == s.id) {
            return Err(invalid(format!("{pointer}/id"), format!("duplicate subdivision id `{}`", s.id)));
        }
        let parent = subs
            .iter()
            .find(|t| t.id() == s.parent)
            .cloned()
            .ok_or_else(|| invalid(format!("{pointer}/parent"), format!("unknown parent `{}`", s.parent)))?;
        let vertices = s
            .vertices
            .iter()
            .map(|v| (v.id.map(ComponentId), unq(&v.coords)))
            .collect();
        let cells = s.cells.iter().map(|c| (c.vertices.clone(), c.parent_cell)).collect();
        let sub = Subdivision::new(s.id.clone(), &parent, vertices, cells).map_err(at(pointer.clone()))?;
        sub.check_tiling().map_err(at(pointer))?;
        subs.push(sub);
    }
    Ok(subs)
}

fn build_functions(
    subs: &[Arc<Subdivision>],
    entries: &[FunctionEntry],
) -> Result<BTreeMap<String, PAFunction>, LoadError> {
    let mut out = BTreeMap::new();
    for (k, f) in entries.iter().enumerate() {
        let pointer = format!("/functions/{k}");
        let carrier = subs
            .iter()
            .find(|s| s.id() == f.carrier)
            .cloned()
            .ok_or_else(|| invalid(format!("{pointer}/carrier"), format!("unknown carrier `{}`", f.carrier)))?;
        let phi = PAFunction::new(carrier, unq(&f.values)).map_err(at(format!("{pointer}/values")))?;
        if out.insert(f.name.clone(), phi).is_some() {
            return Err(invalid(format!("{pointer}/name"), format!("duplicate function `{}`", f.name)));
        }
    }
    Ok(out)
}

fn build_intersection(complex: &DualComplex, entry: &IntersectionEntry) -> Result<IntersectionData, LoadError> {
    let q: Vec<Vec<Rational>> = entry.q.iter().map(|r| unq(r)).collect();
    let Some(curves) = &entry.curves else {
        if entry.tensors.is_empty() && entry.face_fiber.is_empty() {
            return IntersectionData::from_components(complex, q).map_err(at("/intersection/q"));
        }
        let base = IntersectionData::from_components(complex, q.clone()).map_err(at("/intersection/q"))?;
        return finish_intersection(complex, q, base.curves().to_vec(), entry);
    };
    let mut list = Vec::with_capacity(curves.len());
    for (k, c) in curves.iter().enumerate() {
        let mut comps = BTreeMap::new();
        for (l, e) in c.components.iter().enumerate() {
            if complex.index_of(ComponentId(e.component)).is_none() {
                return Err(invalid(
                    format!("/intersection/curves/{k}/components/{l}/component"),
                    format!("unknown component {}", e.component),
                ));
            }
            comps.insert(ComponentId(e.component), e.value.0.clone());
        }
        list.push(TestCurve {
            id: c.id.clone(),
            components: comps,
        });
    }
    finish_intersection(complex, q, list, entry)
}

fn finish_intersection(
    complex: &DualComplex,
    q: Vec<Vec<Rational>>,
    curves: Vec<TestCurve>,
    entry: &IntersectionEntry,
) -> Result<IntersectionData, LoadError> {
    let mut tensors = BTreeMap::new();
    for (k, t) in entry.tensors.iter().enumerate() {
        let face = face_key(&t.face, complex, &format!("/intersection/tensors/{k}/face"))?;
        if complex.index_of(ComponentId(t.component)).is_none() {
            return Err(invalid(
                format!("/intersection/tensors/{k}/component"),
                format!("unknown component {}", t.component),
            ));
        }
        tensors.insert((face, ComponentId(t.component)), t.value.0.clone());
    }
    let mut face_fiber = BTreeMap::new();
    for (k, f) in entry.face_fiber.iter().enumerate() {
        let face = face_key(&f.face, complex, &format!("/intersection/face_fiber/{k}/face"))?;
        face_fiber.insert(face, f.value.0.clone());
    }
    IntersectionData::new(complex, q, curves, tensors, face_fiber).map_err(at("/intersection"))
}

fn build_theta(
    complex: &DualComplex,
    data: Option<&IntersectionData>,
    entry: &ThetaEntry,
) -> Result<ClosedForm, LoadError> {
    let mut vertex_pairings = BTreeMap::new();
    for (k, v) in entry.vertices.iter().enumerate() {
        let id = ComponentId(v.component);
        if complex.index_of(id).is_none() {
            return Err(invalid(format!("/theta/vertices/{k}/component"), format!("unknown component {}", v.component)));
        }
        vertex_pairings.insert(id, v.value.0.clone());
    }
    let mut curve_pairings: BTreeMap<String, Rational> =
        entry.curves.iter().map(|c| (c.curve.clone(), c.value.0.clone())).collect();
    if let Some(data) = data {
        for c in data.curves() {
            if curve_pairings.contains_key(&c.id) {
                continue;
            }
            let component = complex.ids().iter().find(|id| id.to_string() == c.id);
            if let Some(v) = component.and_then(|id| vertex_pairings.get(id)) {
                curve_pairings.insert(c.id.clone(), v.clone());
            }
        }
    }
    let mut face_pairings = BTreeMap::new();
    for (k, f) in entry.faces.iter().enumerate() {
        let face = face_key(&f.face, complex, &format!("/theta/faces/{k}/face"))?;
        face_pairings.insert(face, f.value.0.clone());
    }
    Ok(ClosedForm {
        model: complex.id().to_string(),
        curve_pairings,
        vertex_pairings,
        face_pairings,
    })
}

pub fn parse_model(text: &str) -> Result<ModelDescription, LoadError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| LoadError::Schema {
        pointer: "/".into(),
        message: e.to_string(),
    })?;
    if value.get("edges").is_some() {
        return model_from_graph(&parse_json::<GraphFile>(text)?);
    }
    model_from_file(&parse_json::<ModelFile>(text)?)
}

pub fn load_model(path: &Path) -> Result<ModelDescription, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|e| LoadError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_model(&text)
}

pub fn model_from_file(file: &ModelFile) -> Result<ModelDescription, LoadError> {
    check_version(file.schema_version)?;
    let complex = Arc::new(build_complex(&file.id, &file.components, &file.faces)?);
    let intersection = file
        .intersection
        .as_ref()
        .map(|e| build_intersection(&complex, e))
        .transpose()?;
    let theta = file
        .theta
        .as_ref()
        .map(|t| build_theta(&complex, intersection.as_ref(), t))
        .transpose()?;
    let subdivisions = build_subdivisions(Subdivision::trivial(complex.clone()), &file.subdivisions)?;
    let functions = build_functions(&subdivisions, &file.functions)?;
    let mut ideals = BTreeMap::new();
    for (k, e) in file.ideals.iter().enumerate() {
        let mut gens = Vec::with_capacity(e.generators.len());
        for (l, g) in e.generators.iter().enumerate() {
            gens.push(g.parse::<VPolynomial>().map_err(at(format!("/ideals/{k}/generators/{l}")))?);
        }
        let ideal = VerticalIdeal::new(gens, BigInt::from(e.twist)).map_err(at(format!("/ideals/{k}")))?;
        if ideals.insert(e.name.clone(), ideal).is_some() {
            return Err(invalid(format!("/ideals/{k}/name"), format!("duplicate ideal `{}`", e.name)));
        }
    }
    Ok(ModelDescription {
        complex,
        intersection,
        theta,
        subdivisions,
        functions,
        ideals,
    })
}

pub fn graph_from_file(file: &GraphFile) -> Result<MetricGraphModel, LoadError> {
    check_version(file.schema_version)?;
    for (k, v) in file.vertices.iter().enumerate() {
        if v.b == 0 {
            return Err(invalid(format!("/vertices/{k}/b"), "multiplicity must be positive"));
        }
    }
    for (k, e) in file.edges.iter().enumerate() {
        if e.m == 0 {
            return Err(invalid(format!("/edges/{k}/m"), "multiplicity must be positive"));
        }
    }
    let vertices = file
        .vertices
        .iter()
        .map(|v| GraphVertex {
            id: v.id,
            multiplicity: v.b.into(),
            theta: v.theta.0.clone(),
        })
        .collect();
    let edges = file
        .edges
        .iter()
        .map(|e| GraphEdge {
            a: e.a,
            b: e.b,
            multiplicity: e.m.into(),
        })
        .collect();
    MetricGraphModel::new(file.id.clone(), vertices, edges).map_err(at("/edges"))
}

/// A graph file becomes a one-dimensional model with generated intersection data.
pub fn model_from_graph(file: &GraphFile) -> Result<ModelDescription, LoadError> {
    let g = graph_from_file(file)?;
    let complex = Arc::new(g.complex().map_err(at("/"))?);
    let data = crate::oracle::generate_intersection_data(&g).map_err(at("/edges"))?;
    let theta = g.closed_form(&data).map_err(at("/vertices"))?;
    let subdivisions = build_subdivisions(Subdivision::trivial(complex.clone()), &file.subdivisions)?;
    let functions = build_functions(&subdivisions, &file.functions)?;
    Ok(ModelDescription {
        complex,
        intersection: Some(data),
        theta: Some(theta),
        subdivisions,
        functions,
        ideals: BTreeMap::new(),
    })
}

fn u32_face(face: &Face) -> Vec<u32> {
    face.iter().map(|c| c.0).collect()
}

fn to_u64(b: &BigInt) -> u64 {
    u64::try_from(b).expect("multiplicities loaded from files fit in u64")
}

/// The file form of a model; `model_from_file(&save_model(m))` rebuilds `m`.
pub fn save_model(m: &ModelDescription) -> ModelFile {
    let complex = &m.complex;
    let intersection = m.intersection.as_ref().map(|d| IntersectionEntry {
        q: d.q().iter().map(|r| qs(r)).collect(),
        curves: Some(
            d.curves()
                .iter()
                .map(|c| CurveEntry {
                    id: c.id.clone(),
                    components: c
                        .components
                        .iter()
                        .map(|(id, v)| ValueEntry {
                            component: id.0,
                            value: Q(v.clone()),
                        })
                        .collect(),
                })
                .collect(),
        ),
        tensors: d
            .tensors()
            .iter()
            .map(|((f, j), v)| TensorEntry {
                face: u32_face(f),
                component: j.0,
                value: Q(v.clone()),
            })
            .collect(),
        face_fiber: d
            .face_fiber()
            .iter()
            .map(|(f, v)| FaceValue {
                face: u32_face(f),
                value: Q(v.clone()),
            })
            .collect(),
    });
    let theta = m.theta.as_ref().map(|t| ThetaEntry {
        vertices: t
            .vertex_pairings
            .iter()
            .map(|(id, v)| ValueEntry {
                component: id.0,
                value: Q(v.clone()),
            })
            .collect(),
        curves: t
            .curve_pairings
            .iter()
            .map(|(c, v)| CurvePairing {
                curve: c.clone(),
                value: Q(v.clone()),
            })
            .collect(),
        faces: t
            .face_pairings
            .iter()
            .map(|(f, v)| FaceValue {
                face: u32_face(f),
                value: Q(v.clone()),
            })
            .collect(),
    });
    let subdivisions = m.subdivisions[1..]
        .iter()
        .map(|s| SubdivisionEntry {
            id: s.id().to_string(),
            parent: s.parent().expect("non-root").id().to_string(),
            vertices: s
                .vertices()
                .iter()
                .map(|v| VertexEntry {
                    id: Some(v.id.0),
                    coords: qs(&v.coords),
                })
                .collect(),
            cells: s
                .cells()
                .iter()
                .map(|c| CellEntry {
                    vertices: c.vertices.clone(),
                    parent_cell: c.parent_cell,
                })
                .collect(),
        })
        .collect();
    ModelFile {
        schema_version: SCHEMA_VERSION,
        id: complex.id().to_string(),
        components: complex
            .ids()
            .iter()
            .zip(complex.multiplicities())
            .map(|(id, b)| ComponentEntry { id: id.0, b: to_u64(b) })
            .collect(),
        faces: complex
            .faces()
            .iter()
            .filter(|f| !f.is_empty())
            .map(u32_face)
            .collect(),
        intersection,
        theta,
        subdivisions,
        functions: m
            .functions
            .iter()
            .map(|(name, f)| FunctionEntry {
                name: name.clone(),
                carrier: f.carrier().id().to_string(),
                values: qs(f.values()),
            })
            .collect(),
        ideals: m
            .ideals
            .iter()
            .map(|(name, a)| IdealEntry {
                name: name.clone(),
                generators: a.generators().iter().map(|g| g.to_string()).collect(),
                twist: i64::try_from(a.twist()).expect("twists loaded from files fit in i64"),
            })
            .collect(),
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryEntry {
    pub point: Vec<Q>,
    pub value: Q,
    pub coefficients: Vec<Q>,
    pub active_curves: Vec<String>,
    pub active_vertices: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeFile {
    pub schema_version: u32,
    pub determination: String,
    pub results: Vec<QueryEntry>,
}

impl From<&EnvelopeResult> for EnvelopeFile {
    fn from(r: &EnvelopeResult) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            determination: r.determination.clone(),
            results: r
                .results
                .iter()
                .map(|q| QueryEntry {
                    point: qs(&q.point),
                    value: Q(q.value.clone()),
                    coefficients: qs(&q.coefficients),
                    active_curves: q.active_curves.clone(),
                    active_vertices: q.active_vertices.iter().map(|c| c.0).collect(),
                })
                .collect(),
        }
    }
}

impl EnvelopeFile {
    pub fn into_result(self) -> Result<EnvelopeResult, LoadError> {
        check_version(self.schema_version)?;
        Ok(EnvelopeResult {
            determination: self.determination,
            results: self
                .results
                .into_iter()
                .map(|q| QueryResult {
                    point: unq(&q.point),
                    value: q.value.0,
                    coefficients: unq(&q.coefficients),
                    active_curves: q.active_curves,
                    active_vertices: q.active_vertices.into_iter().map(ComponentId).collect(),
                })
                .collect(),
        })
    }
}

pub fn parse_envelope(text: &str) -> Result<EnvelopeResult, LoadError> {
    parse_json::<EnvelopeFile>(text)?.into_result()
}

/// Parses `"1/2,1/2"` into a coordinate vector.
pub fn parse_point(text: &str) -> Result<Vec<Rational>, Error> {
    text.split(',')
        .map(|t| parse_rational(t).map_err(|e| Error::Data(e.to_string())))
        .collect()
}

/// A rational as a decimal string, for human-facing approximate columns.
pub fn decimal(q: &Rational) -> String {
    if q.is_zero() {
        return "0".into();
    }
    format!("{:.6}", crate::rational::approx(q))
}
