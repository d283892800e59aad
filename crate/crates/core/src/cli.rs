//! Command-line driver: flat JSON configuration, subcommands and output files.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use crate::dg::{default_penalty, DgField, DgSpace, FieldKind, NonlinearVariant};
use crate::diagnostics::{
    convergence_study, spectrum_estimate, validate_study, SpectrumWeight, SPECTRUM_HEADER,
};
use crate::error::{Error, Result};
use crate::interface::{
    extract_zero_level_set, interface_distance, InitialCondition, ReferenceSpec, TestCase,
    DEFAULT_REFERENCE_SAMPLES, INTERFACE_HEADER,
};
use crate::mesh::Mesh;
use crate::operators::{
    elliptic_projection, node_average, Discretization, InitialProjection, InverseLaplacianSolver,
    ScalarField,
};
use crate::time_stepper::{
    run_on, ModelParams, Observer, SimState, StepRecord, TimeSeries, DEFAULT_NEWTON_MAX_ITER,
    DEFAULT_NEWTON_TOL,
};

/// Prefix of every diagnostic line on standard error.
pub const ERROR_PREFIX: &str = "chdg-error:";
pub const WARNING_PREFIX: &str = "chdg-warning:";
pub const THREADS_ENV: &str = "CHDG_THREADS";
pub const FIELD_DUMP_MAGIC: &str = "# chdg-field v1";

pub const KEYS: &[&str] = &[
    "epsilon",
    "n",
    "k",
    "T",
    "scheme",
    "test_case",
    "sigma0",
    "degree",
    "newton_tol",
    "newton_max_iter",
    "init_projection",
    "dump_every",
    "output_dir",
    "n_list",
    "reference_n",
    "snapshot_time",
];

/// Everything a subcommand needs; one flat JSON object on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub epsilon: f64,
    pub n: usize,
    pub k: f64,
    pub t_final: f64,
    pub scheme: NonlinearVariant,
    pub test_case: TestCase,
    pub sigma0: f64,
    pub degree: usize,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub init_projection: InitialProjection,
    pub dump_every: usize,
    pub output_dir: PathBuf,
    pub n_list: Vec<usize>,
    pub reference_n: Option<usize>,
    pub snapshot_time: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            n: 20,
            k: 1e-5,
            t_final: 1e-4,
            scheme: NonlinearVariant::Splitting,
            test_case: TestCase::Test1,
            sigma0: default_penalty(1),
            degree: 1,
            newton_tol: DEFAULT_NEWTON_TOL,
            newton_max_iter: DEFAULT_NEWTON_MAX_ITER,
            init_projection: InitialProjection::L2Continuous,
            dump_every: 10,
            output_dir: PathBuf::from("output"),
            n_list: Vec::new(),
            reference_n: None,
            snapshot_time: 0.0,
        }
    }
}

fn as_f64(key: &str, v: &Value, errors: &mut Vec<String>) -> Option<f64> {
    let got = match v {
        Value::Number(x) => x.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    };
    if got.is_none() {
        errors.push(format!("key '{key}': expected a number, got {v}"));
    }
    got
}

fn as_usize(key: &str, v: &Value, errors: &mut Vec<String>) -> Option<usize> {
    let got = match v {
        Value::Number(x) => x.as_u64().map(|x| x as usize),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    };
    if got.is_none() {
        errors.push(format!("key '{key}': expected a non-negative integer, got {v}"));
    }
    got
}

fn as_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn as_parsed<T: std::str::FromStr<Err = Error>>(
    key: &str,
    v: &Value,
    errors: &mut Vec<String>,
) -> Option<T> {
    match as_text(v).parse() {
        Ok(x) => Some(x),
        Err(e) => {
            errors.push(format!("key '{key}': {e}"));
            None
        }
    }
}

impl Config {
    /// Builds a configuration from a flat JSON object, collecting every
    /// malformed or unknown key. `sigma0` defaults to the penalty of the
    /// configured degree.
    pub fn from_map(map: &Map<String, Value>) -> Result<Self> {
        let mut c = Config::default();
        let mut errors = Vec::new();
        let mut sigma0 = None;
        for (key, v) in map {
            let e = &mut errors;
            match key.as_str() {
                "epsilon" => c.epsilon = as_f64(key, v, e).unwrap_or(c.epsilon),
                "n" => c.n = as_usize(key, v, e).unwrap_or(c.n),
                "k" => c.k = as_f64(key, v, e).unwrap_or(c.k),
                "T" => c.t_final = as_f64(key, v, e).unwrap_or(c.t_final),
                "scheme" => c.scheme = as_parsed(key, v, e).unwrap_or(c.scheme),
                "test_case" => c.test_case = as_parsed(key, v, e).unwrap_or(c.test_case),
                "sigma0" => sigma0 = as_f64(key, v, e),
                "degree" => c.degree = as_usize(key, v, e).unwrap_or(c.degree),
                "newton_tol" => c.newton_tol = as_f64(key, v, e).unwrap_or(c.newton_tol),
                "newton_max_iter" => {
                    c.newton_max_iter = as_usize(key, v, e).unwrap_or(c.newton_max_iter)
                }
                "init_projection" => {
                    c.init_projection = as_parsed(key, v, e).unwrap_or(c.init_projection)
                }
                "dump_every" => c.dump_every = as_usize(key, v, e).unwrap_or(c.dump_every),
                "output_dir" => match v {
                    Value::String(s) => c.output_dir = PathBuf::from(s),
                    other => e.push(format!("key 'output_dir': expected a string, got {other}")),
                },
                "n_list" => match v {
                    Value::Array(items) => {
                        c.n_list = items.iter().filter_map(|x| as_usize(key, x, e)).collect()
                    }
                    Value::String(s) => {
                        let parsed: std::result::Result<Vec<usize>, _> = s
                            .split(',')
                            .filter(|t| !t.trim().is_empty())
                            .map(|t| t.trim().parse::<usize>())
                            .collect();
                        match parsed {
                            Ok(list) => c.n_list = list,
                            Err(_) => e.push(format!("key 'n_list': expected integers, got {s}")),
                        }
                    }
                    other => e.push(format!("key 'n_list': expected an array, got {other}")),
                },
                "reference_n" => {
                    c.reference_n = match v {
                        Value::Null => None,
                        other => as_usize(key, other, e),
                    }
                }
                "snapshot_time" => c.snapshot_time = as_f64(key, v, e).unwrap_or(c.snapshot_time),
                other => e.push(format!("unknown key '{other}'")),
            }
        }
        c.sigma0 = sigma0.unwrap_or_else(|| default_penalty(c.degree.max(1)));
        if errors.is_empty() {
            Ok(c)
        } else {
            Err(Error::Config(errors))
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        match serde_json::from_str::<Value>(text) {
            Ok(Value::Object(map)) => Self::from_map(&map),
            Ok(_) => Err(Error::Parse("configuration must be a JSON object".into())),
            Err(e) => Err(Error::Parse(format!("configuration is not valid JSON: {e}"))),
        }
    }

    pub fn to_map(&self) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("epsilon".into(), self.epsilon.into());
        m.insert("n".into(), self.n.into());
        m.insert("k".into(), self.k.into());
        m.insert("T".into(), self.t_final.into());
        m.insert("scheme".into(), self.scheme.to_string().into());
        m.insert("test_case".into(), self.test_case.id().into());
        m.insert("sigma0".into(), self.sigma0.into());
        m.insert("degree".into(), self.degree.into());
        m.insert("newton_tol".into(), self.newton_tol.into());
        m.insert("newton_max_iter".into(), self.newton_max_iter.into());
        m.insert(
            "init_projection".into(),
            serde_json::to_value(self.init_projection).expect("enum serializes"),
        );
        m.insert("dump_every".into(), self.dump_every.into());
        m.insert(
            "output_dir".into(),
            self.output_dir.to_string_lossy().into_owned().into(),
        );
        m.insert("n_list".into(), self.n_list.clone().into());
        if let Some(r) = self.reference_n {
            m.insert("reference_n".into(), r.into());
        }
        m.insert("snapshot_time".into(), self.snapshot_time.into());
        m
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&Value::Object(self.to_map())).expect("config serializes")
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            epsilon: self.epsilon,
            k: self.k,
            t_final: self.t_final,
            sigma0: self.sigma0,
            degree: self.degree,
            scheme: self.scheme,
            newton_tol: self.newton_tol,
            newton_max_iter: self.newton_max_iter,
            init_projection: self.init_projection,
        }
    }

    /// Hard errors shared by all subcommands.
    pub fn errors(&self) -> Vec<String> {
        let mut e = self.params().errors();
        if self.n == 0 {
            e.push("n must be >= 1".into());
        }
        if self.dump_every == 0 {
            e.push("dump_every must be >= 1".into());
        }
        if self.test_case == TestCase::Custom {
            e.push("test_case 'custom' needs a signed distance and is only available from the library".into());
        }
        if self.output_dir.as_os_str().is_empty() {
            e.push("output_dir must not be empty".into());
        }
        if !(self.snapshot_time >= 0.0 && self.snapshot_time.is_finite()) {
            e.push(format!("snapshot_time must be non-negative, got {}", self.snapshot_time));
        }
        e
    }

    /// `reference_n`, defaulting to twice the finest listed mesh.
    pub fn reference(&self) -> usize {
        self.reference_n
            .unwrap_or_else(|| 2 * self.n_list.iter().copied().max().unwrap_or(self.n))
    }

    pub fn initial_condition(&self) -> Result<InitialCondition> {
        InitialCondition::new(self.test_case, self.epsilon)
    }
}

/// Reads the optional file and applies `key=value` overrides on top.
/// Override values are read as JSON when possible and as strings otherwise.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<Config> {
    let mut map = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Parse(format!("cannot read {}: {e}", p.display())))?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(m)) => m,
                Ok(_) => {
                    return Err(Error::Parse(format!("{} is not a JSON object", p.display())))
                }
                Err(e) => return Err(Error::Parse(format!("{}: {e}", p.display()))),
            }
        }
        None => Map::new(),
    };
    let mut errors = Vec::new();
    for o in overrides {
        match o.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => {
                let value = serde_json::from_str(v.trim()).unwrap_or_else(|_| Value::String(v.to_string()));
                map.insert(k.trim().to_string(), value);
            }
            _ => errors.push(format!("override '{o}' is not of the form key=value")),
        }
    }
    match Config::from_map(&map) {
        Ok(c) if errors.is_empty() => Ok(c),
        Ok(_) => Err(Error::Config(errors)),
        Err(Error::Config(more)) => {
            errors.extend(more);
            Err(Error::Config(errors))
        }
        Err(e) => Err(e),
    }
}

// ---------------------------------------------------------------- files

/// Writes `contents` through a temporary file in the target directory.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// A field read back from a dump file.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub n: usize,
    pub degree: usize,
    pub name: String,
    pub time: f64,
    pub coeffs: Vec<f64>,
}

pub fn format_field_dump(n: usize, name: &str, time: f64, field: &DgField) -> String {
    let r = field.degree();
    let d = field.len() / field.num_cells().max(1);
    let mut s = format!("{FIELD_DUMP_MAGIC}, n={n}, r={r}, field={name}, t={time:.16e}\n");
    s.push_str("cell_index");
    for i in 0..d {
        s.push_str(&format!(",c{i}"));
    }
    s.push('\n');
    for (cell, chunk) in field.coeffs().chunks(d).enumerate() {
        s.push_str(&cell.to_string());
        for v in chunk {
            s.push_str(&format!(",{v:.16e}"));
        }
        s.push('\n');
    }
    s
}

pub fn parse_field_dump(text: &str) -> Result<FieldDump> {
    let bad = |m: &str| Error::Parse(format!("field dump: {m}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file"))?;
    let rest = header
        .strip_prefix(FIELD_DUMP_MAGIC)
        .ok_or_else(|| bad("missing header"))?;
    let (mut n, mut r, mut name, mut t) = (None, None, None, None);
    for item in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once('=') {
            Some(("n", v)) => n = v.parse::<usize>().ok(),
            Some(("r", v)) => r = v.parse::<usize>().ok(),
            Some(("field", v)) => name = Some(v.to_string()),
            Some(("t", v)) => t = v.parse::<f64>().ok(),
            _ => return Err(bad(&format!("unexpected header item '{item}'"))),
        }
    }
    let (n, degree, name, time) = match (n, r, name, t) {
        (Some(n), Some(r), Some(f), Some(t)) => (n, r, f, t),
        _ => return Err(bad("header needs n, r, field and t")),
    };
    let d = (degree + 1) * (degree + 2) / 2;
    let cols = lines.next().ok_or_else(|| bad("missing column header"))?;
    if cols.split(',').count() != d + 1 {
        return Err(bad("column header does not match the degree"));
    }
    let mut coeffs = Vec::new();
    for (row, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let mut parts = line.split(',');
        let cell: usize = parts
            .next()
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| bad(&format!("row {row}: bad cell index")))?;
        if cell != row {
            return Err(bad(&format!("row {row}: cells must be listed in order")));
        }
        let vals = parts
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad(&format!("row {row}: bad coefficient")))?;
        if vals.len() != d {
            return Err(bad(&format!("row {row}: expected {d} coefficients")));
        }
        coeffs.extend(vals);
    }
    if coeffs.len() != 2 * n * n * d {
        return Err(bad(&format!("expected {} cells, found {}", 2 * n * n, coeffs.len() / d)));
    }
    Ok(FieldDump {
        n,
        degree,
        name,
        time,
        coeffs,
    })
}

// ---------------------------------------------------------------- subcommands

fn discretization(c: &Config, n: usize) -> Result<Arc<Discretization>> {
    let space = Arc::new(DgSpace::new(Arc::new(Mesh::uniform(n)?), c.degree)?);
    Ok(Arc::new(Discretization::new(space, c.sigma0)?))
}

struct RunWriter<'a> {
    dir: &'a Path,
    n: usize,
    every: usize,
    last: usize,
    records: Vec<StepRecord>,
}

impl Observer for RunWriter<'_> {
    fn on_record(&mut self, record: &StepRecord, state: &SimState) -> Result<()> {
        self.records.push(record.clone());
        if state.step % self.every == 0 || state.step == self.last {
            for (name, f) in [("U", &state.u), ("W", &state.w)] {
                let path = self.dir.join(format!("field_{name}_{:06}.csv", state.step));
                write_atomic(&path, &format_field_dump(self.n, name, state.time, f))?;
            }
        }
        Ok(())
    }
}

pub fn cmd_run(c: &Config) -> Result<()> {
    let disc = discretization(c, c.n)?;
    let ic = c.initial_condition()?;
    let params = c.params();
    let mut w = RunWriter {
        dir: &c.output_dir,
        n: c.n,
        every: c.dump_every,
        last: params.num_steps(),
        records: Vec::new(),
    };
    let result = run_on(disc, &params, &ic, &mut w);
    // completed steps are kept even when a later step fails
    let series = TimeSeries { records: w.records };
    write_atomic(&c.output_dir.join("timeseries.csv"), &series.to_csv())?;
    result.map(|_| ())
}

pub fn cmd_converge(c: &Config) -> Result<()> {
    let errors = validate_study(&c.n_list, c.reference());
    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }
    let ic = c.initial_condition()?;
    let report = convergence_study(&c.params(), &ic, &c.n_list, c.reference())?;
    write_atomic(&c.output_dir.join("convergence.csv"), &report.to_csv())
}

/// `P_h u0` at `snapshot_time = 0`, the computed `U` at that time otherwise.
pub fn spectrum_snapshot(c: &Config, disc: &Arc<Discretization>, ic: &InitialCondition) -> Result<DgField> {
    if c.snapshot_time == 0.0 {
        return elliptic_projection(disc, |p| ic.value(p), |p| ic.gradient(p));
    }
    let mut params = c.params();
    params.t_final = c.snapshot_time;
    #[derive(Default)]
    struct Last(Option<DgField>);
    impl Observer for Last {
        fn on_record(&mut self, _r: &StepRecord, s: &SimState) -> Result<()> {
            self.0 = Some(s.u.clone());
            Ok(())
        }
    }
    let mut last = Last::default();
    run_on(disc.clone(), &params, ic, &mut last)?;
    last.0.ok_or_else(|| Error::InvalidArgument("empty run".into()))
}

pub fn cmd_spectrum(c: &Config) -> Result<()> {
    let meshes = if c.n_list.is_empty() { vec![c.n] } else { c.n_list.clone() };
    let ic = c.initial_condition()?;
    let mut out = format!("{SPECTRUM_HEADER}\n");
    for n in meshes {
        let disc = discretization(c, n)?;
        let u = spectrum_snapshot(c, &disc, &ic)?;
        let inv = InverseLaplacianSolver::new(disc)?;
        let lambda = spectrum_estimate(&inv, SpectrumWeight::Field(&u), c.epsilon)?;
        out.push_str(&format!("{n},{:.16e},{lambda:.16e}\n", c.epsilon));
    }
    write_atomic(&c.output_dir.join("spectrum.csv"), &out)
}

pub const INTERFACE_DISTANCE_HEADER: &str = "time,n,h,segments,length,distance,accuracy_bound";

pub fn cmd_interface(c: &Config, field: &Path, reference: Option<&str>) -> Result<()> {
    let reference = reference.map(str::parse::<ReferenceSpec>).transpose()?;
    let text = fs::read_to_string(field)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", field.display())))?;
    let dump = parse_field_dump(&text)?;
    let space = DgSpace::new(Arc::new(Mesh::uniform(dump.n)?), dump.degree)?;
    let v = space.field(dump.coeffs, FieldKind::Broken)?;
    let avg = node_average(&space, &v)?;
    let poly = extract_zero_level_set(&space, &avg, dump.time)?;
    write_atomic(
        &c.output_dir.join("interface.csv"),
        &format!("{INTERFACE_HEADER}\n{}", poly.csv_rows()),
    )?;
    if let Some(r) = reference {
        let d = interface_distance(&poly, &r, DEFAULT_REFERENCE_SAMPLES)?;
        let row = format!(
            "{:.16e},{},{:.16e},{},{:.16e},{:.16e},{:.16e}\n",
            dump.time,
            dump.n,
            space.mesh().h(),
            poly.len(),
            poly.length(),
            d.distance,
            d.accuracy_bound
        );
        write_atomic(
            &c.output_dir.join("interface_distance.csv"),
            &format!("{INTERFACE_DISTANCE_HEADER}\n{row}"),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------- entry point

#[derive(Debug, Parser)]
#[command(name = "chdg", version, about = "MIP-DG solver for the Cahn-Hilliard equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Flat JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Treat warnings as errors.
    #[arg(long)]
    pub strict: bool,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Time-step one simulation; writes timeseries.csv and field dumps.
    Run(Common),
    /// Spatial convergence study over `n_list`; writes convergence.csv.
    Converge(Common),
    /// Smallest eigenvalue of the linearized operator; writes spectrum.csv.
    Spectrum(Common),
    /// Zero level set of a dumped field; writes interface.csv.
    Interface {
        #[command(flatten)]
        common: Common,
        /// Field dump produced by `run`.
        #[arg(long)]
        field: PathBuf,
        /// `ellipse:a,b` or `circle:cx,cy,r`.
        #[arg(long)]
        reference: Option<String>,
    },
}

fn load(common: &Common) -> Result<(Config, Vec<String>)> {
    let mut c = parse_config(common.config.as_deref(), &common.set)?;
    if let Some(out) = &common.out {
        c.output_dir = out.clone();
    }
    let mut errors = c.errors();
    let warnings = c.params().warnings();
    if common.strict {
        errors.extend(warnings.iter().cloned());
    }
    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }
    Ok((c, warnings))
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::Config(vec![format!("{THREADS_ENV} must be a positive integer, got '{v}'")]))?;
    // a second initialization in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    configure_threads()?;
    let (common, run): (&Common, Box<dyn Fn(&Config) -> Result<()>>) = match &cli.command {
        Command::Run(c) => (c, Box::new(cmd_run)),
        Command::Converge(c) => (c, Box::new(cmd_converge)),
        Command::Spectrum(c) => (c, Box::new(cmd_spectrum)),
        Command::Interface {
            common,
            field,
            reference,
        } => (
            common,
            Box::new(move |c: &Config| cmd_interface(c, field, reference.as_deref())),
        ),
    };
    let (config, warnings) = load(common)?;
    for w in warnings {
        eprintln!("{WARNING_PREFIX} {w}");
    }
    fs::create_dir_all(&config.output_dir)?;
    write_atomic(&config.output_dir.join("config.json"), &config.to_json())?;
    run(&config)
}

/// Exit status for an error: 2 for solver failures, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_solver_failure() {
        2
    } else {
        1
    }
}

pub fn report(e: &Error) {
    match e {
        Error::Config(list) => {
            for item in list {
                eprintln!("{ERROR_PREFIX} config: {item}");
            }
        }
        other => eprintln!("{ERROR_PREFIX} {other}"),
    }
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            if code == 0 {
                let _ = e.print();
            } else {
                eprintln!("{ERROR_PREFIX} usage: {}", e.to_string().trim_end());
            }
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            report(&e);
            exit_code(&e)
        }
    }
}
