//! Command-line configuration and file formats.
//!
//! Configuration is a flat JSON object whose keys equal the long flag names
//! with dashes replaced by underscores (`k1`, `grid`, `heights`, `tol_energy`, ...).
//! Values from the file are applied first, then `PABN_THREADS`, then flags.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use crate::director::{DirectorField, TopologyClass};
use crate::energy::Quadrature;
use crate::experiments::{SweepResult, SweepSpec};
use crate::geometry::{CellParams, GridGeometry, NodeClass};
use crate::relax::DescentMethod;
use crate::topology::{Diagnostics, PLANAR_THRESHOLD};
use crate::vec3::Vec3;
use crate::Error;

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "PABN_THREADS";

pub const ENERGIES_HEADER: [&str; 14] = [
    "topology",
    "h_over_Lc",
    "grid_N",
    "K1",
    "K2",
    "K3",
    "K24",
    "E_total",
    "E_splay",
    "E_twist",
    "E_bend",
    "E_saddle",
    "iterations",
    "converged",
];
pub const EPSILONS_HEADER: [&str; 3] = ["h_over_Lc", "eps1", "eps3"];
pub const DIAGNOSTICS_HEADER: [&str; 4] = ["kind", "id", "value", "kink"];

#[derive(Parser, Debug)]
#[command(
    name = "pabn",
    version,
    about = "Director-field relaxation in post-aligned nematic cells"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Relax one topology at one post height; writes the field, energies and diagnostics.
    Run(ConfigArgs),
    /// Relax every topology over a list of heights; writes energies.csv and epsilons.csv.
    Sweep(ConfigArgs),
    /// Recompute topology diagnostics from a saved VTK field.
    Diagnose(DiagnoseArgs),
    /// Write the unrelaxed trial field of a topology.
    Trial(ConfigArgs),
}

/// Flags shared by `run`, `sweep` and `trial`. Values are kept as text so
/// that errors can name the offending key.
#[derive(Args, Debug, Default, Clone)]
pub struct ConfigArgs {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub topology: Option<String>,
    /// Post height in units of Lc.
    #[arg(long)]
    pub height: Option<String>,
    /// Comma-separated post heights for `sweep`.
    #[arg(long)]
    pub heights: Option<String>,
    /// Comma-separated topologies for `sweep`.
    #[arg(long)]
    pub topologies: Option<String>,
    /// Nodes per Lc along x and y.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub k1: Option<String>,
    #[arg(long)]
    pub k2: Option<String>,
    #[arg(long)]
    pub k3: Option<String>,
    #[arg(long)]
    pub k24: Option<String>,
    #[arg(long)]
    pub cell_width: Option<String>,
    #[arg(long)]
    pub post_width: Option<String>,
    #[arg(long)]
    pub cell_height: Option<String>,
    #[arg(long)]
    pub max_iters: Option<String>,
    #[arg(long)]
    pub tol_energy: Option<String>,
    #[arg(long)]
    pub energy_window: Option<String>,
    #[arg(long)]
    pub tol_step: Option<String>,
    #[arg(long)]
    pub step0: Option<String>,
    #[arg(long)]
    pub backtrack: Option<String>,
    #[arg(long)]
    pub grow: Option<String>,
    #[arg(long)]
    pub min_step: Option<String>,
    /// steepest, conjugate_gradient or lbfgs.
    #[arg(long)]
    pub method: Option<String>,
    /// gauss2 or cell_center.
    #[arg(long)]
    pub quadrature: Option<String>,
    #[arg(long)]
    pub memory: Option<String>,
    #[arg(long)]
    pub progress_every: Option<String>,
    #[arg(long)]
    pub trace_stride: Option<String>,
    #[arg(long)]
    pub planar_threshold: Option<String>,
    #[arg(long, short = 'o')]
    pub output: Option<String>,
    #[arg(long)]
    pub threads: Option<String>,
}

impl ConfigArgs {
    fn pairs(&self) -> Vec<(&'static str, &String)> {
        let fields: [(&'static str, &Option<String>); 27] = [
            ("topology", &self.topology),
            ("height", &self.height),
            ("heights", &self.heights),
            ("topologies", &self.topologies),
            ("grid", &self.grid),
            ("k1", &self.k1),
            ("k2", &self.k2),
            ("k3", &self.k3),
            ("k24", &self.k24),
            ("cell_width", &self.cell_width),
            ("post_width", &self.post_width),
            ("cell_height", &self.cell_height),
            ("max_iters", &self.max_iters),
            ("tol_energy", &self.tol_energy),
            ("energy_window", &self.energy_window),
            ("tol_step", &self.tol_step),
            ("step0", &self.step0),
            ("backtrack", &self.backtrack),
            ("grow", &self.grow),
            ("min_step", &self.min_step),
            ("method", &self.method),
            ("quadrature", &self.quadrature),
            ("memory", &self.memory),
            ("progress_every", &self.progress_every),
            ("trace_stride", &self.trace_stride),
            ("planar_threshold", &self.planar_threshold),
            ("output", &self.output),
        ];
        let mut out: Vec<_> = fields
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k, v)))
            .collect();
        if let Some(t) = &self.threads {
            out.push(("threads", t));
        }
        out
    }
}

#[derive(Args, Debug, Clone)]
pub struct DiagnoseArgs {
    /// Legacy VTK file written by `run` or `trial`.
    pub input: PathBuf,
    /// Directory for diagnostics.csv; printed only when absent.
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = PLANAR_THRESHOLD)]
    pub planar_threshold: f64,
}

/// Fully validated run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Topology of `run` and `trial`.
    pub topology: TopologyClass,
    /// Post height of `run` and `trial`, in units of `Lc`.
    pub height: f64,
    /// Grid, constants, solver options and the `sweep` heights and topologies.
    pub spec: SweepSpec,
    pub planar_threshold: f64,
    pub output: PathBuf,
    /// `None` leaves the choice to rayon.
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            topology: TopologyClass::T,
            height: 1.0,
            spec: SweepSpec::default(),
            planar_threshold: PLANAR_THRESHOLD,
            output: PathBuf::from("out"),
            threads: None,
        }
    }
}

fn parse_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Parse {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn number(key: &str, v: &str) -> Result<f64, Error> {
    v.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| parse_err(key, format!("expected a number, found {v:?}")))
}

fn count(key: &str, v: &str) -> Result<usize, Error> {
    v.trim()
        .parse::<usize>()
        .map_err(|_| parse_err(key, format!("expected a non-negative integer, found {v:?}")))
}

/// Lower-cased, dash-to-underscore form used for serde enum names.
fn snake(v: &str) -> Value {
    Value::String(v.trim().to_ascii_lowercase().replace('-', "_"))
}

impl RunConfig {
    /// Applies one textual `key = value` setting.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), Error> {
        let spec = &mut self.spec;
        match key {
            "topology" => {
                self.topology = value
                    .parse()
                    .map_err(|e: Error| parse_err(key, e.to_string()))?
            }
            "height" => self.height = number(key, value)?,
            "heights" => {
                spec.heights = value
                    .split(',')
                    .enumerate()
                    .map(|(i, v)| number(&format!("heights[{i}]"), v))
                    .collect::<Result<_, _>>()?
            }
            "topologies" => {
                spec.topologies = value
                    .split(',')
                    .enumerate()
                    .map(|(i, v)| {
                        v.parse().map_err(|e: Error| {
                            parse_err(&format!("topologies[{i}]"), e.to_string())
                        })
                    })
                    .collect::<Result<_, _>>()?
            }
            "grid" => spec.grid_n = count(key, value)?,
            "k1" => spec.constants.k1 = number(key, value)?,
            "k2" => spec.constants.k2 = number(key, value)?,
            "k3" => spec.constants.k3 = number(key, value)?,
            "k24" => spec.constants.k24 = number(key, value)?,
            "cell_width" => spec.cell_width = number(key, value)?,
            "post_width" => spec.post_width = number(key, value)?,
            "cell_height" => spec.cell_height = number(key, value)?,
            "max_iters" => spec.relax.max_iters = count(key, value)?,
            "tol_energy" => spec.relax.tol_energy = number(key, value)?,
            "energy_window" => spec.relax.energy_window = count(key, value)?,
            "tol_step" => spec.relax.tol_step = number(key, value)?,
            "step0" => spec.relax.step0 = Some(number(key, value)?),
            "backtrack" => spec.relax.backtrack = number(key, value)?,
            "grow" => spec.relax.grow = number(key, value)?,
            "min_step" => spec.relax.min_step = number(key, value)?,
            "method" => {
                spec.relax.method = serde_json::from_value::<DescentMethod>(snake(value))
                    .map_err(|_| parse_err(key, "expected steepest, conjugate_gradient or lbfgs"))?
            }
            "quadrature" => {
                spec.relax.quadrature = serde_json::from_value::<Quadrature>(snake(value))
                    .map_err(|_| parse_err(key, "expected gauss2 or cell_center"))?
            }
            "memory" => spec.relax.memory = count(key, value)?,
            "progress_every" => spec.relax.progress_every = count(key, value)?,
            "trace_stride" => spec.relax.trace_stride = count(key, value)?,
            "planar_threshold" => self.planar_threshold = number(key, value)?,
            "output" => self.output = PathBuf::from(value),
            "threads" => self.threads = Some(count(key, value)?),
            _ => return Err(parse_err(key, "unknown key")),
        }
        Ok(())
    }

    /// Applies every key of a flat JSON object. Arrays become comma lists.
    pub fn apply_json(&mut self, doc: &Value) -> Result<(), Error> {
        let obj = doc
            .as_object()
            .ok_or_else(|| parse_err("config", "expected a JSON object"))?;
        for (key, v) in obj {
            let text = match v {
                Value::String(s) => s.clone(),
                Value::Number(n) => n.to_string(),
                Value::Array(items) => items
                    .iter()
                    .enumerate()
                    .map(|(i, it)| match it {
                        Value::String(s) => Ok(s.clone()),
                        Value::Number(n) => Ok(n.to_string()),
                        _ => Err(parse_err(
                            &format!("{key}[{i}]"),
                            "expected a number or string",
                        )),
                    })
                    .collect::<Result<Vec<_>, _>>()?
                    .join(","),
                Value::Null if key == "threads" || key == "step0" => continue,
                _ => return Err(parse_err(key, "expected a number, string or array")),
            };
            self.apply(key, &text)?;
        }
        Ok(())
    }

    /// Checks every setting, naming the first offending key.
    pub fn validate(&self) -> Result<(), Error> {
        let spec = &self.spec;
        spec.constants
            .validate()
            .map_err(|(key, reason)| parse_err(key, reason))?;
        spec.relax
            .validate()
            .map_err(|(key, reason)| parse_err(key, reason))?;
        if spec.grid_n < 8 {
            return Err(parse_err("grid", "must be at least 8"));
        }
        for (key, v) in [
            ("cell_width", spec.cell_width),
            ("post_width", spec.post_width),
            ("cell_height", spec.cell_height),
        ] {
            if !(v > 0.0) {
                return Err(parse_err(key, "must be positive"));
            }
        }
        if !(self.planar_threshold > 0.0 && self.planar_threshold < 1.0) {
            return Err(parse_err("planar_threshold", "must lie in (0, 1)"));
        }
        if self.threads == Some(0) {
            return Err(parse_err("threads", "must be positive"));
        }
        check_height("height", spec, self.height)?;
        if spec.heights.is_empty() {
            return Err(parse_err("heights", "must not be empty"));
        }
        for (i, &h) in spec.heights.iter().enumerate() {
            check_height(&format!("heights[{i}]"), spec, h)?;
        }
        if spec.heights.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(parse_err("heights", "must be strictly ascending"));
        }
        if spec.topologies.is_empty() {
            return Err(parse_err("topologies", "must not be empty"));
        }
        Ok(())
    }

    /// Parameters of the single-height commands.
    pub fn cell(&self) -> CellParams {
        self.spec.cell(self.height)
    }
}

fn check_height(key: &str, spec: &SweepSpec, h: f64) -> Result<(), Error> {
    match spec.cell(h).validate() {
        Ok(()) => Ok(()),
        Err(Error::NonConformingGrid(_)) => Err(parse_err(key, "not conforming to grid")),
        Err(Error::InvalidParams(msg)) => Err(parse_err(key, msg)),
        Err(e) => Err(e),
    }
}

/// Builds a configuration from parsed flags. `file` takes precedence over
/// `--config`.
pub fn resolve_config(args: &ConfigArgs, file: Option<&Path>) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::default();
    if let Some(path) = file.or(args.config.as_deref()) {
        let text = fs::read_to_string(path)?;
        let doc: Value =
            serde_json::from_str(&text).map_err(|e| parse_err("config", e.to_string()))?;
        cfg.apply_json(&doc)?;
    }
    if let Ok(t) = std::env::var(THREADS_ENV) {
        cfg.apply("threads", &t)
            .map_err(|e| parse_err(THREADS_ENV, e.to_string()))?;
    }
    for (key, value) in args.pairs() {
        cfg.apply(key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses configuration flags (without program or subcommand name) and an
/// optional JSON file.
pub fn parse_config<S: AsRef<str>>(argv: &[S], file: Option<&Path>) -> Result<RunConfig, Error> {
    #[derive(Parser)]
    #[command(no_binary_name = true)]
    struct Flags {
        #[command(flatten)]
        args: ConfigArgs,
    }
    let flags = Flags::try_parse_from(argv.iter().map(|s| s.as_ref()))
        .map_err(|e| parse_err("argv", e.to_string().trim().to_string()))?;
    resolve_config(&flags.args, file)
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x}")
}

fn optional(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

/// Writes `energies.csv` and `epsilons.csv` into `dir`, creating it if needed.
pub fn write_csv(result: &SweepResult, dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    let mut rows: Vec<_> = result.rows.iter().collect();
    rows.sort_by(|a, b| {
        (a.topology, a.h_over_lc)
            .partial_cmp(&(b.topology, b.h_over_lc))
            .unwrap()
    });
    let mut w = csv::Writer::from_path(dir.join("energies.csv"))?;
    w.write_record(ENERGIES_HEADER)?;
    for r in rows {
        let k = &r.constants;
        let e = &r.energy;
        w.write_record([
            r.topology.name().to_string(),
            format_float(r.h_over_lc),
            r.grid_n.to_string(),
            format_float(k.k1),
            format_float(k.k2),
            format_float(k.k3),
            format_float(k.k24),
            format_float(e.total),
            format_float(e.splay),
            format_float(e.twist),
            format_float(e.bend),
            format_float(e.saddle),
            r.report.iterations.to_string(),
            r.report.converged.to_string(),
        ])?;
    }
    w.flush()?;
    let mut eps = result.eps.clone();
    eps.sort_by(|a, b| a.h_over_lc.partial_cmp(&b.h_over_lc).unwrap());
    let mut w = csv::Writer::from_path(dir.join("epsilons.csv"))?;
    w.write_record(EPSILONS_HEADER)?;
    for r in eps {
        w.write_record([
            format_float(r.h_over_lc),
            optional(r.eps1),
            optional(r.eps3),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per edge, face path, vertex and lateral face.
pub fn write_diagnostics_csv(diag: &Diagnostics, path: &Path) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(DIAGNOSTICS_HEADER)?;
    let sig = &diag.signature;
    for (kind, signs) in [
        ("vertical_edge", sig.vertical),
        ("top_edge", sig.horizontal_top),
        ("base_edge", sig.horizontal_base),
    ] {
        for (i, s) in signs.iter().enumerate() {
            w.write_record([
                kind.to_string(),
                (i + 1).to_string(),
                s.to_string(),
                String::new(),
            ])?;
        }
    }
    for (kind, rotations) in [
        ("lateral_path", &diag.lateral_rotations),
        ("substrate_path", &diag.substrate_rotations),
    ] {
        for (i, r) in rotations.iter().enumerate() {
            w.write_record([
                kind.to_string(),
                i.to_string(),
                format_float(r.net_rotation),
                r.kink.to_string(),
            ])?;
        }
    }
    for v in &diag.vertex_degrees {
        w.write_record([
            "vertex".to_string(),
            v.vertex.to_string(),
            format_float(v.solid_angle),
            String::new(),
        ])?;
    }
    for (i, b) in diag.planar_bands.iter().enumerate() {
        w.write_record([
            "planar_band".to_string(),
            (i + 1).to_string(),
            (*b as u8).to_string(),
            String::new(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Mask value of a node: 0 excluded, 1 free or tangent, 2 fixed.
pub fn mask_value(class: NodeClass) -> i32 {
    match class {
        NodeClass::Excluded => 0,
        NodeClass::TopFixed | NodeClass::EdgeFixed { .. } => 2,
        _ => 1,
    }
}

fn vtk_title(p: &CellParams, topology: Option<TopologyClass>) -> String {
    let topo = topology.map_or("none", TopologyClass::name);
    format!(
        "pabn director Lc={} Lp={} H={} h={} N={} normal_substrate={} topology={}",
        p.cell_width,
        p.post_width,
        p.cell_height,
        p.post_height,
        p.grid_n,
        p.normal_substrate as u8,
        topo
    )
}

/// Writes a legacy ASCII VTK structured-points file. Geometry parameters and
/// the topology label go into the title line so that [`read_vtk`] can rebuild
/// the grid.
pub fn write_vtk(
    field: &DirectorField,
    topology: Option<TopologyClass>,
    path: &Path,
) -> Result<(), Error> {
    let geom = field.geometry();
    let p = geom.params();
    let d = geom.spacing();
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", vtk_title(p, topology))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} {}", geom.nx(), geom.nx(), geom.nz())?;
    writeln!(w, "SPACING {d} {d} {d}")?;
    let o = -p.cell_width / 4.0;
    writeln!(w, "ORIGIN {o} {o} 0")?;
    writeln!(w, "POINT_DATA {}", geom.node_count())?;
    writeln!(w, "VECTORS director float")?;
    for v in field.values() {
        writeln!(w, "{} {} {}", v.x, v.y, v.z)?;
    }
    writeln!(w, "SCALARS mask int 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for &c in geom.classes() {
        writeln!(w, "{}", mask_value(c))?;
    }
    w.flush()?;
    Ok(())
}

fn title_value<'a>(title: &'a str, key: &str) -> Result<&'a str, Error> {
    title
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .ok_or_else(|| Error::Vtk(format!("title lacks {key}=")))
}

fn title_number(title: &str, key: &str) -> Result<f64, Error> {
    let v = title_value(title, key)?;
    v.parse().map_err(|_| Error::Vtk(format!("bad {key}={v}")))
}

/// Reads a file written by [`write_vtk`]; returns the field and its topology label.
pub fn read_vtk(path: &Path) -> Result<(DirectorField, Option<TopologyClass>), Error> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let mut next = || -> Result<String, Error> {
        lines
            .next()
            .ok_or_else(|| Error::Vtk("unexpected end of file".into()))?
            .map_err(Error::from)
    };
    if !next()?.starts_with("# vtk DataFile") {
        return Err(Error::Vtk("missing VTK signature".into()));
    }
    let title = next()?;
    let params = CellParams {
        cell_width: title_number(&title, "Lc")?,
        post_width: title_number(&title, "Lp")?,
        cell_height: title_number(&title, "H")?,
        post_height: title_number(&title, "h")?,
        grid_n: title_number(&title, "N")? as usize,
        normal_substrate: title_value(&title, "normal_substrate")? == "1",
    };
    let topology = match title_value(&title, "topology")? {
        "none" => None,
        t => Some(t.parse::<TopologyClass>()?),
    };
    let geom = Arc::new(GridGeometry::build(params)?);
    let mut line = next()?;
    while !line.starts_with("VECTORS") {
        if line.starts_with("DIMENSIONS") {
            let dims: Vec<usize> = line
                .split_whitespace()
                .skip(1)
                .filter_map(|t| t.parse().ok())
                .collect();
            if dims != [geom.nx(), geom.nx(), geom.nz()] {
                return Err(Error::Vtk(format!(
                    "dimensions {dims:?} disagree with the title"
                )));
            }
        }
        line = next()?;
    }
    let mut values = Vec::with_capacity(geom.node_count());
    for _ in 0..geom.node_count() {
        let l = next()?;
        let c: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| Error::Vtk(format!("bad vector line {l:?}")))?;
        if c.len() != 3 {
            return Err(Error::Vtk(format!("bad vector line {l:?}")));
        }
        values.push(Vec3::new(c[0], c[1], c[2]));
    }
    Ok((DirectorField::from_values(geom, values)?, topology))
}

fn with_threads<T>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T, Error>
where
    T: Send,
{
    match threads {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| parse_err("threads", e.to_string()))?;
            Ok(pool.install(job))
        }
    }
}

fn print_diagnostics(d: &Diagnostics) {
    let class = TopologyClass::from_signature(d.signature.vertical)
        .map_or("unclassified", TopologyClass::name);
    println!(
        "signature vertical={:?} top={:?} base={:?} class={class}",
        d.signature.vertical, d.signature.horizontal_top, d.signature.horizontal_base
    );
    println!("max |kink| = {}", d.max_abs_kink());
    let angles: Vec<String> = d
        .vertex_degrees
        .iter()
        .map(|v| format!("{:.4}", v.solid_angle))
        .collect();
    println!("vertex solid angles = [{}]", angles.join(", "));
    println!("planar bands (faces 1-4) = {:?}", d.planar_bands);
}

/// Carries out one subcommand.
pub fn execute(command: &Command) -> Result<(), Error> {
    match command {
        Command::Run(args) => {
            let cfg = resolve_config(args, None)?;
            let spec = &cfg.spec;
            let run = with_threads(cfg.threads, || {
                crate::experiments::run_single(
                    cfg.topology,
                    cfg.cell(),
                    &spec.constants,
                    &spec.relax,
                )
            })??;
            fs::create_dir_all(&cfg.output)?;
            write_vtk(
                &run.field,
                Some(cfg.topology),
                &cfg.output.join("field.vtk"),
            )?;
            let row = crate::experiments::SweepRow {
                topology: cfg.topology,
                h_over_lc: cfg.height,
                grid_n: spec.grid_n,
                constants: spec.constants,
                energy: run.energy,
                report: run.report.clone(),
                signature: run.signature(),
            };
            let result = SweepResult {
                rows: vec![row],
                ..Default::default()
            };
            write_csv(&result, &cfg.output)?;
            println!(
                "{} h={} N={}: E={} ({} iterations, {:?})",
                cfg.topology,
                cfg.height,
                spec.grid_n,
                run.energy.total,
                run.report.iterations,
                run.report.reason
            );
            if let Some(d) = &run.diagnostics {
                write_diagnostics_csv(d, &cfg.output.join("diagnostics.csv"))?;
                print_diagnostics(d);
            }
            if let Some(e) = &run.diagnostic_error {
                eprintln!("warning: diagnostics unavailable: {e}");
            }
        }
        Command::Sweep(args) => {
            let cfg = resolve_config(args, None)?;
            let result =
                with_threads(cfg.threads, || crate::experiments::sweep_heights(&cfg.spec))??;
            write_csv(&result, &cfg.output)?;
            for f in &result.failures {
                eprintln!("failed: {} h={}: {}", f.topology, f.h_over_lc, f.message);
            }
            for r in &result.eps {
                println!(
                    "h={} eps1={} eps3={}",
                    r.h_over_lc,
                    optional(r.eps1),
                    optional(r.eps3)
                );
            }
            let p = &result.plateau;
            println!(
                "slopes eps1 low={} high={}; eps3 low={} high={}",
                optional(p.eps1_low),
                optional(p.eps1_high),
                optional(p.eps3_low),
                optional(p.eps3_high)
            );
        }
        Command::Trial(args) => {
            let cfg = resolve_config(args, None)?;
            let geom = Arc::new(GridGeometry::build(cfg.cell())?);
            let field = crate::director::trial_field(&geom, cfg.topology)?;
            fs::create_dir_all(&cfg.output)?;
            let path = cfg.output.join("trial.vtk");
            write_vtk(&field, Some(cfg.topology), &path)?;
            let e = crate::energy::energy_breakdown(&field, &cfg.spec.constants)?;
            println!(
                "{} trial written to {} (E={})",
                cfg.topology,
                path.display(),
                e.total
            );
        }
        Command::Diagnose(args) => {
            let (field, label) = read_vtk(&args.input)?;
            let d = crate::topology::diagnose_with_threshold(&field, args.planar_threshold)?;
            if let Some(t) = label {
                println!("label {t}");
            }
            print_diagnostics(&d);
            if let Some(dir) = &args.output {
                write_diagnostics_csv(&d, &dir.join("diagnostics.csv"))?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::director::trial_field;

    #[test]
    fn run_flags_parse() {
        let cfg = parse_config(
            &[
                "--topology",
                "T",
                "--height",
                "1.0",
                "--grid",
                "16",
                "--k1",
                "4",
                "--k2",
                "2",
                "--k3",
                "6",
            ],
            None,
        )
        .unwrap();
        assert_eq!(cfg.topology, TopologyClass::T);
        assert_eq!(cfg.height, 1.0);
        assert_eq!(cfg.spec.grid_n, 16);
        assert_eq!(cfg.spec.constants.k3, 6.0);
    }

    #[test]
    fn nonconforming_height_names_the_key() {
        let err = parse_config(&["--height", "0.3", "--grid", "8"], None).unwrap_err();
        match err {
            Error::Parse { key, reason } => {
                assert_eq!(key, "height");
                assert_eq!(reason, "not conforming to grid");
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn file_values_are_validated_and_overridden() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(&path, r#"{"k1": -1, "grid": 24}"#).unwrap();
        match parse_config::<&str>(&[], Some(&path)).unwrap_err() {
            Error::Parse { key, reason } => {
                assert_eq!(key, "k1");
                assert_eq!(reason, "must be positive");
            }
            e => panic!("{e:?}"),
        }
        let cfg = parse_config(&["--k1", "3"], Some(&path)).unwrap();
        assert_eq!(cfg.spec.constants.k1, 3.0);
        assert_eq!(cfg.spec.grid_n, 24);

        fs::write(&path, r#"{"heights": [0.5, 0.3], "grid": 8}"#).unwrap();
        match parse_config::<&str>(&[], Some(&path)).unwrap_err() {
            Error::Parse { key, .. } => assert_eq!(key, "heights[1]"),
            e => panic!("{e:?}"),
        }
        fs::write(&path, r#"{"colour": 1}"#).unwrap();
        assert!(
            matches!(parse_config::<&str>(&[], Some(&path)), Err(Error::Parse { key, .. }) if key == "colour")
        );
    }

    #[test]
    fn enum_options_parse() {
        let cfg = parse_config(
            &[
                "--method",
                "conjugate-gradient",
                "--quadrature",
                "cell_center",
            ],
            None,
        )
        .unwrap();
        assert_eq!(cfg.spec.relax.method, DescentMethod::ConjugateGradient);
        assert_eq!(cfg.spec.relax.quadrature, Quadrature::CellCenter);
        assert!(parse_config(&["--method", "newton"], None).is_err());
        assert!(matches!(
            parse_config(&["--topologies", "T,P5"], None),
            Err(Error::Parse { key, .. }) if key == "topologies[1]"
        ));
    }

    #[test]
    fn float_text_round_trips() {
        for x in [0.1, 1.0 / 3.0, 40.41274192833, 1e-17, 2.0] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(format_float(2.0), "2");
    }

    #[test]
    fn empty_result_writes_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        write_csv(&SweepResult::default(), dir.path()).unwrap();
        let e = fs::read_to_string(dir.path().join("energies.csv")).unwrap();
        assert_eq!(
            e,
            "topology,h_over_Lc,grid_N,K1,K2,K3,K24,E_total,E_splay,E_twist,E_bend,E_saddle,iterations,converged\n"
        );
        let e = fs::read_to_string(dir.path().join("epsilons.csv")).unwrap();
        assert_eq!(e, "h_over_Lc,eps1,eps3\n");
    }

    #[test]
    fn vtk_round_trip_and_mask_counts() {
        let dir = tempfile::tempdir().unwrap();
        let geom = Arc::new(GridGeometry::build(CellParams::new(1.0, 16)).unwrap());
        let f = trial_field(&geom, TopologyClass::P2).unwrap();
        let path = dir.path().join("p2.vtk");
        write_vtk(&f, Some(TopologyClass::P2), &path).unwrap();
        let (back, topo) = read_vtk(&path).unwrap();
        assert_eq!(topo, Some(TopologyClass::P2));
        assert_eq!(back.values(), f.values());

        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("DATASET STRUCTURED_POINTS\nDIMENSIONS 16 16 49\nSPACING 0.0625 0.0625 0.0625\nORIGIN -0.25 -0.25 0\n"));
        let mask: Vec<i32> = text
            .split("LOOKUP_TABLE default\n")
            .nth(1)
            .unwrap()
            .lines()
            .map(|l| l.parse().unwrap())
            .collect();
        let counts = geom.class_counts();
        assert_eq!(mask.iter().filter(|&&m| m == 0).count(), counts.excluded);
        assert_eq!(
            mask.iter().filter(|&&m| m == 2).count(),
            counts.top + counts.edge
        );
    }

    #[test]
    fn flat_cell_mask_has_no_excluded_nodes() {
        let dir = tempfile::tempdir().unwrap();
        let geom = Arc::new(GridGeometry::build(CellParams::new(0.0, 8)).unwrap());
        let f = trial_field(&geom, TopologyClass::T).unwrap();
        let path = dir.path().join("flat.vtk");
        write_vtk(&f, None, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mask = text.split("LOOKUP_TABLE default\n").nth(1).unwrap();
        assert!(!mask.lines().any(|l| l == "0"));
        assert_eq!(read_vtk(&path).unwrap().1, None);
    }

    #[test]
    fn unwritable_path_is_an_io_error() {
        let geom = Arc::new(GridGeometry::build(CellParams::new(0.0, 8)).unwrap());
        let f = trial_field(&geom, TopologyClass::T).unwrap();
        let err = write_vtk(&f, None, Path::new("/nonexistent-dir/x/field.vtk")).unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }
}
