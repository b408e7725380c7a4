//! The `napsh` command line.
//!
//! [`run`] parses arguments, executes one job and returns the exit code with
//! the text destined for stdout and stderr, so the binary is a thin wrapper.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use napsh_core::complex::{format_face, ComponentId};
use napsh_core::envelope::{
    envelope, envelope_axioms, envelope_refinement, psh_check, CurveRefinement, EnvelopeResult, PshConstraintSystem,
    QueryResult, RefinementData,
};
use napsh_core::io::{
    decimal, load_model, parse_point, save_model, to_json, EnvelopeFile, LoadError, ModelDescription, SCHEMA_VERSION,
};
use napsh_core::numerical::{lipschitz_pipeline, vertex_lower_bound, zariski_kernel_check, ClosedForm};
use napsh_core::oracle::{compare, oracle_envelope};
use napsh_core::pa::PAFunction;
use napsh_core::rational::{format_rational, parse_rational};
use napsh_core::subdivision::Subdivision;
use napsh_core::support::{barycentric_refine, is_strictly_convex_support, star_subdivision};
use napsh_core::valuation::log_abs_dense;
use napsh_core::{Error, Rational};
use serde_json::{json, Value};

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "napsh", version, about = "Exact computations with psh model functions on dual complexes")]
pub struct Cli {
    /// Output format; TSV is available for point-value tables.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    pub format: Format,
    /// Add an approximate decimal column to TSV tables (not authoritative).
    #[arg(long, global = true)]
    pub decimal: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Tsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundKind {
    Vertex,
    Lipschitz,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a model or graph file and re-check every invariant.
    Validate { model: PathBuf },
    /// Evaluate a model function or log|a| of an ideal at points.
    Eval {
        model: PathBuf,
        #[arg(long, conflicts_with = "ideal", required_unless_present = "ideal")]
        function: Option<String>,
        #[arg(long)]
        ideal: Option<String>,
        /// Root coordinates such as `1/2,1/2`; repeatable.
        #[arg(long = "point", required = true)]
        points: Vec<String>,
    },
    /// Decide whether a coefficient vector is theta-psh on a determination.
    CheckPsh {
        model: PathBuf,
        /// One coefficient per vertex of the determination.
        #[arg(long, allow_hyphen_values = true, conflicts_with = "function", required_unless_present = "function")]
        coefficients: Option<String>,
        /// A function carried by the determination.
        #[arg(long)]
        function: Option<String>,
        #[arg(long)]
        determination: Option<String>,
    },
    /// Star subdivision followed by barycentric refinement, with its support function.
    Subdivide {
        model: PathBuf,
        /// Vertex ids spanning the face, such as `1,2`.
        #[arg(long)]
        face: String,
        /// The star center, by root coordinates or by coordinates along the face.
        #[arg(long)]
        point: String,
        #[arg(long)]
        eps: String,
        /// Subdivision to refine; the root complex by default.
        #[arg(long)]
        on: Option<String>,
        #[arg(long, default_value_t = 8)]
        depth_cap: u32,
    },
    /// Vertex bounds or face-wise Lipschitz bounds for normalized psh functions.
    Bounds {
        model: PathBuf,
        #[arg(value_enum)]
        kind: BoundKind,
    },
    /// The psh envelope of an obstacle at query points.
    Envelope {
        model: PathBuf,
        #[arg(long)]
        obstacle: String,
        /// Query points; the obstacle's carrier vertices by default.
        #[arg(long = "point")]
        points: Vec<String>,
        #[arg(long)]
        determination: Option<String>,
        /// Number of refinement levels to trace.
        #[arg(long)]
        refine: Option<usize>,
    },
    /// Compare the envelope with the independent solver on curve models.
    OracleCompare {
        model: PathBuf,
        #[arg(long)]
        obstacle: String,
        #[arg(long = "point")]
        points: Vec<String>,
        #[arg(long, default_value_t = 2)]
        refine: usize,
        #[arg(long, default_value_t = 12)]
        depth_cap: u32,
    },
    /// Check the envelope axioms on two obstacles.
    Axioms {
        model: PathBuf,
        #[arg(long)]
        u: String,
        #[arg(long)]
        v: String,
        #[arg(long, allow_hyphen_values = true)]
        c: String,
        /// Vertex pairings of a second form, one per component.
        #[arg(long, allow_hyphen_values = true)]
        theta2: Option<String>,
        #[arg(long = "point")]
        points: Vec<String>,
    },
}

/// Result of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

#[derive(Debug)]
enum Failure {
    Load(LoadError),
    Core(Error),
    Usage(String),
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        Failure::Load(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Core(Error::Infeasible(_) | Error::Unbounded(_)) => EXIT_NEGATIVE,
            Failure::Core(Error::Inconclusive(_) | Error::Certificate { .. } | Error::Truncation { .. }) => {
                EXIT_INCONCLUSIVE
            }
            _ => EXIT_DATA,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Load(e) => e.to_string(),
            Failure::Core(e) => e.to_string(),
            Failure::Usage(m) => m.clone(),
        }
    }
}

/// A point-value table with an optional approximated column.
struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
    approx: Option<usize>,
}

impl Table {
    fn new(columns: &[&str], approx: Option<usize>) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            approx,
        }
    }

    fn render(&self, with_decimal: bool) -> String {
        let mut header = self.columns.clone();
        let extra = self.approx.filter(|_| with_decimal);
        if let Some(i) = extra {
            header.push(format!("{}_decimal_approx_nonauthoritative", self.columns[i]));
        }
        let mut out = header.join("\t");
        out.push('\n');
        for row in &self.rows {
            let mut cells = row.clone();
            if let Some(i) = extra {
                let approx = parse_rational(&row[i]).map(|q| decimal(&q)).unwrap_or_default();
                cells.push(approx);
            }
            out.push_str(&cells.join("\t"));
            out.push('\n');
        }
        out
    }
}

struct Report {
    code: i32,
    json: String,
    table: Option<Table>,
}

impl Report {
    fn new(code: i32, json: String, table: Option<Table>) -> Self {
        Report { code, json, table }
    }
}

fn pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("values serialize");
    s.push('\n');
    s
}

fn r(q: &Rational) -> String {
    format_rational(q)
}

fn rs(v: &[Rational]) -> Vec<String> {
    v.iter().map(r).collect()
}

fn joined(v: &[Rational]) -> String {
    rs(v).join(",")
}

/// Parses the arguments (program name first) and runs the job.
pub fn run<I, T>(args: I) -> Output
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_DATA } else { EXIT_SUCCESS };
            let text = e.render().to_string();
            return if e.use_stderr() {
                Output { code, stdout: String::new(), stderr: text }
            } else {
                Output { code, stdout: text, stderr: String::new() }
            };
        }
    };
    execute(&cli)
}

pub fn execute(cli: &Cli) -> Output {
    match dispatch(&cli.command) {
        Ok(report) => match cli.format {
            Format::Json => Output {
                code: report.code,
                stdout: report.json,
                stderr: String::new(),
            },
            Format::Tsv => match report.table {
                Some(t) => Output {
                    code: report.code,
                    stdout: t.render(cli.decimal),
                    stderr: String::new(),
                },
                None => Output {
                    code: EXIT_DATA,
                    stdout: String::new(),
                    stderr: "error: this command has no tabular output; use --format json\n".into(),
                },
            },
        },
        Err(f) => Output {
            code: f.code(),
            stdout: String::new(),
            stderr: format!("error: {}\n", f.message()),
        },
    }
}

fn dispatch(command: &Command) -> Result<Report, Failure> {
    match command {
        Command::Validate { model } => validate(model),
        Command::Eval { model, function, ideal, points } => eval(model, function.as_deref(), ideal.as_deref(), points),
        Command::CheckPsh { model, coefficients, function, determination } => {
            check_psh(model, coefficients.as_deref(), function.as_deref(), determination.as_deref())
        }
        Command::Subdivide { model, face, point, eps, on, depth_cap } => {
            subdivide(model, face, point, eps, on.as_deref(), *depth_cap)
        }
        Command::Bounds { model, kind } => bounds(model, *kind),
        Command::Envelope { model, obstacle, points, determination, refine } => {
            run_envelope(model, obstacle, points, determination.as_deref(), *refine)
        }
        Command::OracleCompare { model, obstacle, points, refine, depth_cap } => {
            oracle_compare(model, obstacle, points, *refine, *depth_cap)
        }
        Command::Axioms { model, u, v, c, theta2, points } => axioms(model, u, v, c, theta2.as_deref(), points),
    }
}

fn load(path: &Path) -> Result<ModelDescription, Failure> {
    Ok(load_model(path)?)
}

fn points_of(m: &ModelDescription, raw: &[String]) -> Result<Vec<Vec<Rational>>, Failure> {
    raw.iter()
        .map(|p| {
            let x = parse_point(p)?;
            m.complex.check_dense(&x).map_err(|e| Error::Data(format!("point {p}: {e}")))?;
            Ok(x)
        })
        .collect()
}

fn rational_list(text: &str) -> Result<Vec<Rational>, Failure> {
    Ok(parse_point(text)?)
}

fn subdivision<'a>(m: &'a ModelDescription, id: Option<&str>) -> Result<&'a Arc<Subdivision>, Failure> {
    match id {
        None => Ok(m.root()),
        Some(id) => m
            .subdivision(id)
            .ok_or_else(|| Failure::Core(Error::Data(format!("no subdivision `{id}`")))),
    }
}

/// The psh system on the root, moved to `determination` for curve models.
fn system(m: &ModelDescription, determination: Option<&str>) -> Result<PshConstraintSystem, Failure> {
    let base = PshConstraintSystem::new(m.root().clone(), m.require_theta()?.clone(), m.require_intersection()?.clone())?;
    match determination {
        None => Ok(base),
        Some(id) => Ok(CurveRefinement.refine(&base, subdivision(m, Some(id))?)?),
    }
}

fn validate(path: &Path) -> Result<Report, Failure> {
    let m = load(path)?;
    for s in &m.subdivisions[1..] {
        s.check_tiling()?;
    }
    let kernel = match &m.intersection {
        Some(d) => {
            let k = zariski_kernel_check(d)?;
            json!({ "passed": k.passed, "rank": k.rank, "connected": k.connected, "fiber_in_kernel": k.fiber_in_kernel })
        }
        None => Value::Null,
    };
    let value = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "validate",
        "model": m.complex.id(),
        "dimension": m.complex.dim(),
        "components": m.complex.len(),
        "faces": m.complex.faces().iter().filter(|f| !f.is_empty()).count(),
        "subdivisions": m.subdivisions.iter().map(|s| s.id().to_string()).collect::<Vec<_>>(),
        "functions": m.functions.keys().collect::<Vec<_>>(),
        "ideals": m.ideals.keys().collect::<Vec<_>>(),
        "intersection_kernel": kernel,
    });
    Ok(Report::new(EXIT_SUCCESS, pretty(&value), None))
}

fn eval(path: &Path, function: Option<&str>, ideal: Option<&str>, raw: &[String]) -> Result<Report, Failure> {
    let m = load(path)?;
    let points = points_of(&m, raw)?;
    let (target, values): (Value, Vec<Rational>) = match (function, ideal) {
        (Some(name), _) => {
            let phi = m.function(name)?;
            let values = points.iter().map(|x| phi.eval_root(x)).collect::<Result<_, _>>()?;
            (json!({ "function": name }), values)
        }
        (None, Some(name)) => {
            let a = m.ideal(name)?;
            let values = points.iter().map(|x| log_abs_dense(&m.complex, a, x)).collect::<Result<_, _>>()?;
            (json!({ "ideal_log_abs": name }), values)
        }
        (None, None) => return Err(Failure::Usage("give --function or --ideal".into())),
    };
    let mut table = Table::new(&["point", "value"], Some(1));
    let mut rows = Vec::new();
    for (x, v) in points.iter().zip(&values) {
        table.rows.push(vec![joined(x), r(v)]);
        rows.push(json!({ "point": rs(x), "value": r(v) }));
    }
    let value = json!({ "schema_version": SCHEMA_VERSION, "command": "eval", "target": target, "rows": rows });
    Ok(Report::new(EXIT_SUCCESS, pretty(&value), Some(table)))
}

fn check_psh(
    path: &Path,
    coefficients: Option<&str>,
    function: Option<&str>,
    determination: Option<&str>,
) -> Result<Report, Failure> {
    let m = load(path)?;
    let sys = system(&m, determination)?;
    let c = match (coefficients, function) {
        (Some(text), _) => rational_list(text)?,
        (None, Some(name)) => sys.coefficients_of(m.function(name)?)?,
        (None, None) => return Err(Failure::Usage("give --coefficients or --function".into())),
    };
    let report = psh_check(&c, &sys)?;
    let mut table = Table::new(&["curve", "slack"], Some(1));
    let mut slacks = Vec::new();
    for (curve, s) in &report.slacks {
        table.rows.push(vec![curve.clone(), r(s)]);
        slacks.push(json!({ "curve": curve, "slack": r(s) }));
    }
    let witness = report
        .witness
        .as_ref()
        .map(|(curve, s)| json!({ "curve": curve, "slack": r(s) }))
        .unwrap_or(Value::Null);
    let value = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "check-psh",
        "determination": sys.determination().id(),
        "coefficients": rs(&c),
        "psh": report.nef,
        "witness": witness,
        "slacks": slacks,
    });
    let code = if report.nef { EXIT_SUCCESS } else { EXIT_NEGATIVE };
    Ok(Report::new(code, pretty(&value), Some(table)))
}

fn subdivide(path: &Path, face: &str, point: &str, eps: &str, on: Option<&str>, depth_cap: u32) -> Result<Report, Failure> {
    let mut m = load(path)?;
    let delta = subdivision(&m, on)?.clone();
    let sigma: Vec<ComponentId> = face
        .split(',')
        .map(|t| t.trim().parse::<u32>().map(ComponentId))
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::Core(Error::Data(format!("face `{face}`: {e}"))))?;
    let given = rational_list(point)?;
    let complex = m.complex.clone();
    let v = if given.len() == complex.len() {
        given
    } else if given.len() == sigma.len() {
        let mut x = vec![Rational::default(); complex.len()];
        for (id, s) in sigma.iter().zip(given) {
            let i = complex.index_of(*id).ok_or_else(|| {
                Failure::Core(Error::Data(format!(
                    "component {} is not in the root complex; give the point in root coordinates",
                    id.0
                )))
            })?;
            x[i] = s;
        }
        x
    } else {
        return Err(Failure::Core(Error::Data(format!(
            "point has {} coordinates; expected {} or {}",
            given.len(),
            sigma.len(),
            complex.len()
        ))));
    };
    complex.check_dense(&v)?;
    let eps = parse_rational(eps).map_err(|e| Error::Data(e.to_string()))?;
    let (star, h_star) = star_subdivision(&delta, &sigma, &v, &eps)?;
    let (refined, h) = barycentric_refine(&star, &h_star, &[], depth_cap)?;
    let certified = is_strictly_convex_support(&h)?;
    let mut table = Table::new(&["vertex", "coords", "h"], Some(2));
    for (vert, hv) in refined.vertices().iter().zip(h.values()) {
        table.rows.push(vec![vert.id.0.to_string(), joined(&vert.coords), r(hv)]);
    }
    m.subdivisions.push(star.clone());
    if !Arc::ptr_eq(&star, &refined) {
        m.subdivisions.push(refined.clone());
    }
    m.functions.insert("h".into(), PAFunction::new(refined.clone(), h.values().to_vec())?);
    let file = save_model(&m);
    let mut text = to_json(&file);
    text.push('\n');
    let code = if certified { EXIT_SUCCESS } else { EXIT_NEGATIVE };
    Ok(Report::new(code, text, Some(table)))
}

fn bounds(path: &Path, kind: BoundKind) -> Result<Report, Failure> {
    let m = load(path)?;
    let data = m.require_intersection()?;
    let theta = m.require_theta()?;
    let (table, rows, label) = match kind {
        BoundKind::Vertex => {
            let b = vertex_lower_bound(theta, data)?;
            let mut table = Table::new(&["component", "bound"], Some(1));
            let mut rows = Vec::new();
            for (id, v) in &b {
                table.rows.push(vec![id.0.to_string(), r(v)]);
                rows.push(json!({ "component": id.0, "bound": r(v) }));
            }
            (table, rows, "vertex")
        }
        BoundKind::Lipschitz => {
            let b = lipschitz_pipeline(&m.complex, theta, data)?;
            let mut table = Table::new(&["face", "norm_bound"], Some(1));
            let mut rows = Vec::new();
            for (face, v) in &b {
                let ids: Vec<u32> = face.iter().map(|c| c.0).collect();
                table.rows.push(vec![format_face(face), r(v)]);
                rows.push(json!({ "face": ids, "norm_bound": r(v) }));
            }
            (table, rows, "lipschitz")
        }
    };
    let value = json!({ "schema_version": SCHEMA_VERSION, "command": "bounds", "kind": label, "rows": rows });
    Ok(Report::new(EXIT_SUCCESS, pretty(&value), Some(table)))
}

/// Query points, defaulting to the vertices of the obstacle's carrier.
fn queries(m: &ModelDescription, u: &PAFunction, raw: &[String]) -> Result<Vec<Vec<Rational>>, Failure> {
    if raw.is_empty() {
        Ok(u.carrier().vertices().iter().map(|v| v.coords.clone()).collect())
    } else {
        points_of(m, raw)
    }
}

fn run_envelope(
    path: &Path,
    obstacle: &str,
    raw: &[String],
    determination: Option<&str>,
    refine: Option<usize>,
) -> Result<Report, Failure> {
    let m = load(path)?;
    let sys = system(&m, determination)?;
    let u = m.function(obstacle)?;
    let pts = queries(&m, u, raw)?;
    match refine {
        None => {
            let result = envelope(&sys, u, &pts)?;
            let mut table = Table::new(&["point", "value", "active_curves"], Some(1));
            for q in &result.results {
                table.rows.push(vec![joined(&q.point), r(&q.value), q.active_curves.join(",")]);
            }
            let mut text = to_json(&EnvelopeFile::from(&result));
            text.push('\n');
            Ok(Report::new(EXIT_SUCCESS, text, Some(table)))
        }
        Some(n) => {
            let trace = envelope_refinement(&sys, u, &pts, n, &CurveRefinement)?;
            let mut columns = vec!["point".to_string()];
            columns.extend(trace.levels.iter().map(|l| format!("level_{}", l.level)));
            let mut table = Table {
                columns,
                rows: Vec::new(),
                approx: Some(trace.levels.len()),
            };
            for (k, x) in pts.iter().enumerate() {
                let mut row = vec![joined(x)];
                row.extend(trace.levels.iter().map(|l| r(&l.values[k])));
                table.rows.push(row);
            }
            let levels: Vec<Value> = trace
                .levels
                .iter()
                .map(|l| json!({ "level": l.level, "determination": l.determination, "values": rs(&l.values) }))
                .collect();
            let value = json!({
                "schema_version": SCHEMA_VERSION,
                "command": "envelope",
                "points": pts.iter().map(|x| rs(x)).collect::<Vec<_>>(),
                "levels": levels,
                "monotone": trace.monotone,
                "stabilized": trace.stabilized,
            });
            let code = if trace.stabilized { EXIT_SUCCESS } else { EXIT_INCONCLUSIVE };
            Ok(Report::new(code, pretty(&value), Some(table)))
        }
    }
}

fn oracle_compare(path: &Path, obstacle: &str, raw: &[String], refine: usize, depth_cap: u32) -> Result<Report, Failure> {
    let m = load(path)?;
    let g = m.graph()?;
    let sys = system(&m, None)?;
    let u = m.function(obstacle)?;
    let pts = queries(&m, u, raw)?;
    let trace = envelope_refinement(&sys, u, &pts, refine, &CurveRefinement)?;
    let last = trace.levels.last().expect("level 0 is always present");
    let main = EnvelopeResult {
        determination: last.determination.clone(),
        results: pts
            .iter()
            .zip(&last.values)
            .map(|(x, v)| QueryResult {
                point: x.clone(),
                value: v.clone(),
                coefficients: Vec::new(),
                active_curves: Vec::new(),
                active_vertices: Vec::new(),
            })
            .collect(),
    };
    let oracle = oracle_envelope(&g, u, &pts, depth_cap)?;
    let diff = compare(&main, &oracle);
    let mut table = Table::new(&["point", "main", "oracle", "status"], Some(1));
    let mut rows = Vec::new();
    for (k, x) in pts.iter().enumerate() {
        let status = if diff.unverified.contains(x) {
            "unverified"
        } else if diff.mismatches.iter().any(|mm| &mm.point == x) {
            "mismatch"
        } else {
            "equal"
        };
        let (a, b) = (r(&last.values[k]), r(&oracle.values[k]));
        table.rows.push(vec![joined(x), a.clone(), b.clone(), status.into()]);
        rows.push(json!({ "point": rs(x), "main": a, "oracle": b, "status": status }));
    }
    let value = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "oracle-compare",
        "main_determination": last.determination,
        "oracle_level": oracle.level,
        "oracle_stabilized": oracle.stabilized,
        "clean": diff.is_clean(),
        "rows": rows,
    });
    let code = if !diff.mismatches.is_empty() {
        EXIT_NEGATIVE
    } else if !diff.unverified.is_empty() {
        EXIT_INCONCLUSIVE
    } else {
        EXIT_SUCCESS
    };
    Ok(Report::new(code, pretty(&value), Some(table)))
}

fn axioms(
    path: &Path,
    u: &str,
    v: &str,
    c: &str,
    theta2: Option<&str>,
    raw: &[String],
) -> Result<Report, Failure> {
    let m = load(path)?;
    let sys = system(&m, None)?;
    let (u, v) = (m.function(u)?, m.function(v)?);
    let c = parse_rational(c).map_err(|e| Error::Data(e.to_string()))?;
    let theta2 = match theta2 {
        Some(text) => Some(ClosedForm::from_vertex_pairings(m.require_intersection()?, &rational_list(text)?)?),
        None => None,
    };
    let pts = queries(&m, u, raw)?;
    let report = envelope_axioms(&sys, u, v, &c, theta2.as_ref(), &pts)?;
    let mut table = Table::new(&["axiom", "passed", "detail"], None);
    let mut checks = Vec::new();
    for check in &report.checks {
        table.rows.push(vec![check.name.into(), check.passed.to_string(), check.detail.clone()]);
        checks.push(json!({ "axiom": check.name, "passed": check.passed, "detail": check.detail }));
    }
    let value = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "axioms",
        "passed": report.passed(),
        "checks": checks,
    });
    let code = if report.passed() { EXIT_SUCCESS } else { EXIT_NEGATIVE };
    Ok(Report::new(code, pretty(&value), Some(table)))
}
