//! The `nearfield` command.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 model error.
//! Failures are reported on stderr as one JSON object
//! `{"error": {"kind": ..., "message": ...}}`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::addressing::{
    method_i, method_i_from_rates, method_ii, method_ii_from_rates, method_iii, method_iii_from_rates, method_iv,
    method_iv_from_rates, reports_to_json_lines, spectrum_scan, table_comparison, Method, MethodReport, Setup,
};
use crate::config::{ConfigError, RateSource, RunConfig};
use crate::fieldmodel::{grid, DriveConfiguration, Electrode};
use crate::hyperfine::{diagonalize, field_independent_point, transition_frequency, LevelSet};
use crate::optimizer::{
    design_for_parallel_fields, offset_sweep, parallel_field_for_rate, sensitivity, solve_currents, DesignTarget,
    ErrorModel, SweepSpec,
};
use crate::output::{number, render_text, write_file, Cell, Format, Provenance, Table};
use crate::sequencer::{
    self, execute, execute_shots, parse_angle, parse_quantity, ExecMode, ExecutionModel, Instruction, PulseLength,
    SequenceProgram, UnitKind,
};
use crate::trapmodel::{make_layout, ConfigLabel, IonLayout};
use crate::units::{to_khz, MT, NM, UM, US, UT};

#[derive(Debug, Parser)]
#[command(name = "nearfield", version, about = "Near-field microwave addressing of two trapped-ion qubits")]
pub struct Cli {
    /// Run configuration (TOML); the built-in defaults are used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` of the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for shot sampling and Monte-Carlo trials.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Linear sweep KEY=START:STOP:STEPS, e.g. `duration=0us:600us:301`.
    #[arg(long, global = true)]
    pub scan: Option<String>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Qubit frequency versus static field and its field-independent point.
    Hyperfine,
    /// π-time map of the designed drive over the configured grid.
    Fieldmap,
    /// Comparison of the four addressing methods.
    Methods {
        /// Run a single method.
        #[arg(long)]
        method: Option<Method>,
    },
    /// Parse and execute a pulse-sequence script.
    Sequence {
        script: PathBuf,
        /// Sample this many shots instead of computing exact probabilities.
        #[arg(long)]
        shots: Option<usize>,
    },
    /// Electrode-current design, control-error sensitivity and offset sweep.
    Optimize,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Model(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Model(_) => 3,
        }
    }

    pub fn record(&self) -> String {
        let (kind, message) = match self {
            CliError::Usage(m) => ("usage", m),
            CliError::Config(m) => ("config", m),
            CliError::Model(m) => ("model", m),
        };
        serde_json::json!({ "error": { "kind": kind, "message": message } }).to_string()
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn model<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Model(e.to_string())
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = CliError::Usage(e.render().to_string().trim().to_string());
            eprintln!("{}", err.record());
            return err.exit_code();
        }
    };
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.record());
            e.exit_code()
        }
    }
}

/// Runs a parsed command and returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::builtin(),
    };
    let scan = cli.scan.as_deref().map(Scan::parse).transpose()?;
    let ctx = Context::new(&cfg, cli)?;
    match &cli.command {
        Command::Hyperfine => cmd_hyperfine(&ctx, scan.as_ref()),
        Command::Fieldmap => {
            no_scan(scan.as_ref(), "fieldmap")?;
            cmd_fieldmap(&ctx)
        }
        Command::Methods { method } => {
            no_scan(scan.as_ref(), "methods")?;
            cmd_methods(&ctx, *method)
        }
        Command::Sequence { script, shots } => cmd_sequence(&ctx, script, *shots, scan.as_ref()),
        Command::Optimize => cmd_optimize(&ctx, scan.as_ref()),
    }
}

fn no_scan(scan: Option<&Scan>, command: &str) -> Result<(), CliError> {
    match scan {
        Some(s) => Err(CliError::Usage(format!("`{command}` does not support --scan (got key `{}`)", s.key))),
        None => Ok(()),
    }
}

/// `KEY=START:STOP:STEPS`
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub key: String,
    pub start: String,
    pub stop: String,
    pub steps: usize,
}

impl Scan {
    pub fn parse(s: &str) -> Result<Scan, CliError> {
        let usage = || CliError::Usage(format!("--scan expects KEY=START:STOP:STEPS, got `{s}`"));
        let (key, range) = s.split_once('=').ok_or_else(usage)?;
        let parts: Vec<&str> = range.split(':').collect();
        let [start, stop, steps] = parts[..] else { return Err(usage()) };
        let steps: usize = steps.parse().map_err(|_| usage())?;
        if key.is_empty() {
            return Err(usage());
        }
        if steps == 0 {
            return Err(CliError::Usage("--scan range is empty (STEPS = 0)".into()));
        }
        Ok(Scan { key: key.to_string(), start: start.to_string(), stop: stop.to_string(), steps })
    }
}

/// `n` evenly spaced values from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

struct Context<'a> {
    cfg: &'a RunConfig,
    provenance: Provenance,
    format: Format,
    out: PathBuf,
    seed: Option<u64>,
}

impl<'a> Context<'a> {
    fn new(cfg: &'a RunConfig, cli: &Cli) -> Result<Self, CliError> {
        Ok(Context {
            cfg,
            provenance: Provenance::new(cfg.text.as_bytes(), cli.seed),
            format: cli.format,
            out: cli.out.clone().unwrap_or_else(|| cfg.output_dir.clone()),
            seed: cli.seed,
        })
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        write_file(&self.out, name, contents)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", self.out.join(name).display())))
    }

    fn table(&self, stem: &str, t: &Table) -> Result<PathBuf, CliError> {
        self.write(&format!("{stem}.{}", self.format.extension()), &t.render(self.format, &self.provenance))
    }

    fn text(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        self.write(name, &render_text(body, &self.provenance))
    }

    fn static_field(&self) -> Result<f64, CliError> {
        let c = self.cfg;
        match c.static_field {
            Some(b) => Ok(b),
            None => field_independent_point(&c.atom, c.qubit.down, c.qubit.up, c.hyperfine_range).map_err(model),
        }
    }

    fn levels(&self) -> Result<LevelSet, CliError> {
        diagonalize(&self.cfg.atom, self.static_field()?).map_err(model)
    }

    fn layout(&self) -> IonLayout {
        let c = self.cfg;
        let mut l = make_layout(&c.trap, ConfigLabel::B, c.ion2_offset, c.residual_floor);
        l.switch_time = c.switch_time;
        l
    }

    fn design_drive(&self, levels: &LevelSet) -> Result<DriveConfiguration, CliError> {
        let c = self.cfg;
        let omega_q = transition_frequency(levels, c.qubit.down, c.qubit.up).map_err(model)?;
        let target = DesignTarget::new(c.design_null, c.design_gradient, c.design_direction, omega_q).map_err(model)?;
        solve_currents(&c.field_model, &target).map_err(model)
    }
}

fn cmd_hyperfine(ctx: &Context<'_>, scan: Option<&Scan>) -> Result<Vec<PathBuf>, CliError> {
    let c = ctx.cfg;
    let (range, points) = match scan {
        None => (c.hyperfine_range, c.hyperfine_points),
        Some(s) if s.key == "field" => {
            let parse = |v: &str| -> Result<f64, CliError> {
                let (num, scale) = if let Some(n) = v.strip_suffix("mT") {
                    (n, MT)
                } else if let Some(n) = v.strip_suffix("uT") {
                    (n, UT)
                } else if let Some(n) = v.strip_suffix('T') {
                    (n, 1.0)
                } else {
                    (v, MT)
                };
                num.parse::<f64>()
                    .map(|x| x * scale)
                    .map_err(|_| CliError::Usage(format!("bad field value `{v}`")))
            };
            let (a, b) = (parse(&s.start)?, parse(&s.stop)?);
            if !(b > a) || s.steps < 2 {
                return Err(CliError::Usage("hyperfine field range is empty".into()));
            }
            if !(a >= 0.0) {
                return Err(CliError::Usage("static field must be non-negative".into()));
            }
            ((a, b), s.steps)
        }
        Some(s) => return Err(CliError::Usage(format!("hyperfine scans only `field`, not `{}`", s.key))),
    };
    let rows: Vec<(f64, f64)> = linspace(range.0, range.1, points)
        .into_par_iter()
        .map(|b| {
            let levels = diagonalize(&c.atom, b)?;
            Ok((b, transition_frequency(&levels, c.qubit.down, c.qubit.up)?))
        })
        .collect::<Result<_, crate::hyperfine::HyperfineError>>()
        .map_err(model)?;
    let mut t = Table::new(&["field_mT", "frequency_GHz"]);
    for (b, w) in &rows {
        t.push(vec![(b / MT).into(), (crate::ordinary(*w) / 1e9).into()]);
    }
    t.note("qubit", format!("{}<->{}", c.qubit.down, c.qubit.up));
    let mut files = Vec::new();
    match field_independent_point(&c.atom, c.qubit.down, c.qubit.up, range) {
        Ok(b) => {
            let levels = diagonalize(&c.atom, b).map_err(model)?;
            let f = crate::ordinary(transition_frequency(&levels, c.qubit.down, c.qubit.up).map_err(model)?);
            t.note("field_independent_point_mT", number(b / MT));
            let body = format!(
                "qubit = {}<->{}\nfield_mT = {}\nfrequency_GHz = {}\n",
                c.qubit.down,
                c.qubit.up,
                b / MT,
                f / 1e9
            );
            files.push(ctx.text("clock_point.txt", &body)?);
        }
        Err(e) => t.note("field_independent_point_mT", format!("none ({e})").replace(' ', "_")),
    }
    files.insert(0, ctx.table("hyperfine", &t)?);
    Ok(files)
}

fn cmd_fieldmap(ctx: &Context<'_>) -> Result<Vec<PathBuf>, CliError> {
    let c = ctx.cfg;
    let levels = ctx.levels()?;
    let drive = ctx.design_drive(&levels)?;
    let points = grid(c.fieldmap_x, c.fieldmap_z, c.fieldmap_shape.0, c.fieldmap_shape.1);
    let map = c.field_model.pi_time_map(&drive, &levels, c.qubit, &points).map_err(model)?;
    let mut t = Table::new(&["x_um", "z_um", "B_par_re", "B_par_im", "B_perp", "T_pi_us"]);
    t.note("field_unit", "uT");
    t.note("outside_validity", map.outside_validity);
    if let Ok(null) = c.field_model.find_null(&drive) {
        t.note("null_x_um", number(null.position.x / UM));
        t.note("null_z_um", number(null.position.y / UM));
    }
    for p in &map.points {
        t.push(vec![
            (p.position.x / UM).into(),
            (p.position.y / UM).into(),
            (p.parallel.re / UT).into(),
            (p.parallel.im / UT).into(),
            (p.perpendicular / UT).into(),
            (p.pi_time / US).into(),
        ]);
    }
    Ok(vec![ctx.table("fieldmap", &t)?])
}

/// Reports for the selected methods, from injected rates or from designed
/// currents depending on the configuration.
pub fn method_reports(cfg: &RunConfig, which: Option<Method>) -> Result<Vec<MethodReport>, CliError> {
    let methods: Vec<Method> = match which {
        Some(m) => vec![m],
        None => vec![Method::I, Method::II, Method::III, Method::IV],
    };
    let m = &cfg.methods;
    let r = &m.rates;
    if m.source == RateSource::Rates {
        return methods
            .into_iter()
            .map(|method| match method {
                Method::I => method_i_from_rates(r.method_i[0], r.method_i[1]),
                Method::II => method_ii_from_rates(r.method_ii[0], r.method_ii[1], r.method_ii_acz),
                Method::III => method_iii_from_rates(r.method_iii[0], r.method_iii[1]),
                Method::IV => method_iv_from_rates(r.method_iv_global, r.method_iv_acz),
            })
            .collect::<Result<_, _>>()
            .map_err(model);
    }

    let ctx = Context { cfg, provenance: Provenance::new(&[], None), format: Format::Csv, out: PathBuf::new(), seed: None };
    let levels = ctx.levels()?;
    let layout = ctx.layout();
    let setup = Setup { model: &cfg.field_model, levels: &levels, layout: &layout, qubit: cfg.qubit };
    methods
        .into_iter()
        .map(|method| {
            let drive = method_drive(cfg, &levels, &layout, method)?;
            match method {
                Method::I => method_i(&setup, &drive),
                Method::II => method_ii(&setup, &drive, &cfg.trap, cfg.micromotion_efficiency),
                Method::III => method_iii(&setup, &drive, m.acz_detuning),
                Method::IV => method_iv(&setup, &drive, r.method_iv_global, m.acz_detuning),
            }
            .map_err(model)
        })
        .collect()
}

/// Designed drive for `method` in `layout`: method I gets the configured
/// carrier rates, method II a null on ion 1 at the lower sideband, methods
/// III and IV the configured ac Zeeman fields.
pub fn method_drive(
    cfg: &RunConfig,
    levels: &LevelSet,
    layout: &IonLayout,
    method: Method,
) -> Result<DriveConfiguration, CliError> {
    let m = &cfg.methods;
    let omega_q = transition_frequency(levels, cfg.qubit.down, cfg.qubit.up).map_err(model)?;
    let (ion1, ion2) = (layout.radial(0), layout.radial(1));
    let field_for = |rate: f64| parallel_field_for_rate(levels, cfg.qubit, rate).map_err(model);
    let (b1, b2, frequency) = match method {
        Method::I => (field_for(m.rates.method_i[0])?, field_for(m.rates.method_i[1])?, omega_q),
        Method::II => {
            let direction = if (ion2 - ion1).norm() > 0.0 { (ion2 - ion1).normalize() } else { cfg.design_direction };
            let target = DesignTarget::new(ion1, m.method_ii_gradient, direction, omega_q - cfg.trap.rf_frequency)
                .map_err(model)?;
            return solve_currents(&cfg.field_model, &target).map_err(model);
        }
        Method::III | Method::IV => (m.acz_fields[0], m.acz_fields[1], omega_q + m.acz_detuning),
    };
    design_for_parallel_fields(&cfg.field_model, ion1, ion2, b1, b2, frequency).map_err(model)
}

fn cmd_methods(ctx: &Context<'_>, which: Option<Method>) -> Result<Vec<PathBuf>, CliError> {
    let reports = method_reports(ctx.cfg, which)?;
    let mut files = vec![ctx.text("methods.txt", &table_comparison(&reports))?];
    match ctx.format {
        Format::JsonLines => {
            let body = format!(
                "{}\n{}",
                serde_json::json!({ "_header": ctx.provenance }),
                reports_to_json_lines(&reports)
            );
            files.push(ctx.write("methods.jsonl", &body)?);
        }
        Format::Csv => {
            let mut t = Table::new(&["method", "rate_q1_kHz", "rate_q2_kHz", "crosstalk", "differential_acz_kHz", "notes"]);
            for r in &reports {
                t.push(vec![
                    r.method.to_string().into(),
                    to_khz(r.rate_q1).into(),
                    to_khz(r.rate_q2).into(),
                    r.crosstalk.map_or(Cell::Text(String::new()), Cell::Num),
                    r.differential_acz.map_or(Cell::Text(String::new()), |d| Cell::Num(to_khz(d))),
                    r.notes.clone().into(),
                ]);
            }
            files.push(ctx.table("methods", &t)?);
        }
    }
    if let Some(iv) = reports.iter().find(|r| r.method == Method::IV) {
        let m = &ctx.cfg.methods;
        let detunings = linspace(m.spectrum_span.0, m.spectrum_span.1, m.spectrum_points);
        let split = iv.differential_acz.unwrap_or(0.0);
        let mut t = Table::new(&["detuning_kHz", "P_down_total"]);
        t.note("differential_acz_kHz", number(to_khz(split)));
        for p in spectrum_scan(iv.rate_q1, split, &detunings) {
            t.push(vec![to_khz(p.detuning).into(), p.p_down_total.into()]);
        }
        files.push(ctx.table("spectrum", &t)?);
    }
    Ok(files)
}

/// Execution model for the configured sequence method.
pub fn execution_model(cfg: &RunConfig) -> Result<ExecutionModel, CliError> {
    let s = &cfg.sequence;
    let report = method_reports(cfg, Some(s.method))?.remove(0);
    let mut m = ExecutionModel::from_report(&report, s.global_rate);
    m.switch_time = cfg.switch_time;
    m.phase_slip = s.phase_slip;
    m.detection_error = s.detection_error;
    m.preparation_error = s.preparation_error;
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ScanValue {
    Quantity(sequencer::Quantity),
    Angle(sequencer::Angle),
}

/// Copy of `program` with `key` set to `value` on every pulse.
fn override_pulses(program: &SequenceProgram, key: &str, value: ScanValue) -> SequenceProgram {
    fn walk(body: &mut [Instruction], key: &str, value: ScanValue) {
        for ins in body {
            match ins {
                Instruction::Pulse(p) => match (key, value) {
                    ("duration", ScanValue::Quantity(q)) => p.length = PulseLength::Duration(q),
                    ("detuning", ScanValue::Quantity(q)) => p.detuning = Some(q),
                    ("rate", ScanValue::Quantity(q)) => p.rate = Some(q),
                    ("phase", ScanValue::Angle(a)) => p.phase = Some(a),
                    _ => {}
                },
                Instruction::Branch { body, .. } => walk(body, key, value),
                _ => {}
            }
        }
    }
    let mut p = program.clone();
    walk(&mut p.instructions, key, value);
    p
}

fn scan_values(s: &Scan) -> Result<Vec<ScanValue>, CliError> {
    let usage = |m: String| CliError::Usage(format!("--scan {}: {m}", s.key));
    let kind = match s.key.as_str() {
        "duration" => UnitKind::Time,
        "detuning" | "rate" => UnitKind::Frequency,
        "phase" => {
            let (a, b) = (parse_angle(&s.start).map_err(usage)?, parse_angle(&s.stop).map_err(usage)?);
            let (a, b) = (a.radians(), b.radians());
            return Ok(linspace(a, b, s.steps)
                .into_iter()
                .map(|v| ScanValue::Angle(sequencer::Angle::Quantity(sequencer::Quantity::new(v, sequencer::Unit::Rad))))
                .collect());
        }
        other => return Err(CliError::Usage(format!("sequence scans duration, detuning, rate or phase, not `{other}`"))),
    };
    let a = parse_quantity(&s.start).map_err(usage)?;
    let b = parse_quantity(&s.stop).map_err(usage)?;
    if a.unit.kind() != kind || b.unit.kind() != kind {
        return Err(usage("START and STOP need units of the scanned quantity".into()));
    }
    if a.unit != b.unit {
        return Err(usage("START and STOP must use the same unit".into()));
    }
    if s.key == "duration" && (a.value < 0.0 || b.value < 0.0) {
        return Err(usage("durations must be non-negative".into()));
    }
    Ok(linspace(a.value, b.value, s.steps)
        .into_iter()
        .map(|v| ScanValue::Quantity(sequencer::Quantity::new(v, a.unit)))
        .collect())
}

fn cmd_sequence(ctx: &Context<'_>, script: &PathBuf, shots: Option<usize>, scan: Option<&Scan>) -> Result<Vec<PathBuf>, CliError> {
    let text = std::fs::read_to_string(script)
        .map_err(|e| CliError::Config(format!("{}: {e}", script.display())))?;
    let program = sequencer::parse(&text).map_err(|e| CliError::Config(format!("{}:{e}", script.display())))?;
    let exec = execution_model(ctx.cfg)?;
    let seed = ctx.seed.or(program.seed).unwrap_or(0);
    let mut files = Vec::new();

    if let Some(s) = scan {
        let values = scan_values(s)?;
        let results: Vec<[f64; 2]> = values
            .par_iter()
            .map(|v| {
                let p = override_pulses(&program, &s.key, *v);
                execute(&p, &exec, ExecMode::Deterministic).map(|t| t.final_p_down)
            })
            .collect::<Result<_, _>>()
            .map_err(model)?;
        let x = |v: &ScanValue| match v {
            ScanValue::Quantity(q) => q.si(),
            ScanValue::Angle(a) => a.radians(),
        };
        let t = match s.key.as_str() {
            "duration" => {
                let mut t = Table::new(&["t_us", "P_down_ion1", "P_down_ion2", "total_bright_expectation"]);
                for (v, p) in values.iter().zip(&results) {
                    t.push(vec![(x(v) / US).into(), p[0].into(), p[1].into(), (p[0] + p[1]).into()]);
                }
                ("flopping", t)
            }
            "detuning" => {
                let mut t = Table::new(&["detuning_kHz", "P_down_total", "P_down_q1", "P_down_q2"]);
                for (v, p) in values.iter().zip(&results) {
                    t.push(vec![to_khz(x(v)).into(), (p[0] + p[1]).into(), p[0].into(), p[1].into()]);
                }
                ("spectrum", t)
            }
            key => {
                let column = if key == "rate" { "rate_kHz" } else { "phase_rad" };
                let mut t = Table::new(&[column, "P_down_q1", "P_down_q2", "total_bright_expectation"]);
                for (v, p) in values.iter().zip(&results) {
                    let xv = if key == "rate" { to_khz(x(v)) } else { x(v) };
                    t.push(vec![xv.into(), p[0].into(), p[1].into(), (p[0] + p[1]).into()]);
                }
                ("scan", t)
            }
        };
        let (stem, mut table) = t;
        table.note("script", script.display());
        table.note("method", exec.method);
        files.push(ctx.table(stem, &table)?);
        return Ok(files);
    }

    let trace = execute(&program, &exec, ExecMode::Deterministic).map_err(model)?;
    let mut t = Table::new(&["step", "time_us", "P_down_q1", "P_down_q2"]);
    t.note("script", script.display());
    t.note("method", exec.method);
    for s in &trace.steps {
        t.push(vec![s.step.into(), (s.time / US).into(), s.p_down[0].into(), s.p_down[1].into()]);
    }
    files.push(ctx.table("trace", &t)?);

    let mut body = String::new();
    let _ = writeln!(body, "program = {}", program.name.as_deref().unwrap_or("unnamed"));
    let _ = writeln!(body, "method = {}", exec.method);
    let _ = writeln!(body, "duration_us = {}", trace.duration / US);
    let _ = writeln!(body, "final_P_down = [{}, {}]", trace.final_p_down[0], trace.final_p_down[1]);
    let _ = writeln!(body, "outcomes = {}", trace.outcomes.len());
    for o in &trace.outcomes {
        let _ = writeln!(body, "outcome readings={:?} probability={} inferred={}", o.readings(), o.probability, describe(&o.records));
    }
    if let Some(n) = shots {
        let hist = execute_shots(&program, &exec, n, seed).map_err(model)?;
        let _ = writeln!(body, "shots = {n}\nseed = {seed}");
        for (readings, count) in &hist.counts {
            let _ = writeln!(body, "sampled readings={readings:?} count={count} frequency={}", *count as f64 / n as f64);
        }
    }
    files.push(ctx.text("detection.txt", &body)?);
    Ok(files)
}

fn describe(records: &[sequencer::DetectionRecord]) -> String {
    use crate::spindynamics::Spin;
    use sequencer::Inferred;
    match records.last().map(|r| r.inferred) {
        None => "-".into(),
        Some(Inferred::Resolved(s)) => s.iter().map(|x| if *x == Spin::Down { 'd' } else { 'u' }).collect(),
        Some(Inferred::Pending) => "pending".into(),
        Some(Inferred::Inconsistent) => "inconsistent".into(),
    }
}

fn cmd_optimize(ctx: &Context<'_>, scan: Option<&Scan>) -> Result<Vec<PathBuf>, CliError> {
    let c = ctx.cfg;
    let levels = ctx.levels()?;
    let drive = ctx.design_drive(&levels)?;
    let mut files = Vec::new();

    let mut t = Table::new(&["electrode", "re_A", "im_A", "amplitude_A", "phase_rad"]);
    for e in Electrode::ALL {
        let i = drive.current(e);
        t.push(vec![format!("{e:?}").to_uppercase().into(), i.re.into(), i.im.into(), i.norm().into(), i.arg().into()]);
    }
    let null = c.field_model.find_null(&drive).map_err(model)?;
    let sample = c.field_model.sample(&drive, c.design_null);
    let g = c.field_model.parallel_gradient(&drive);
    let grad = g[0] * c.design_direction.x + g[1] * c.design_direction.y;
    t.note("null_x_um", number(null.position.x / UM));
    t.note("null_z_um", number(null.position.y / UM));
    t.note("residual_T", number(sample.field.norm()));
    t.note("gradient_T_per_m", number(grad.norm()));
    files.push(ctx.table("currents", &t)?);

    let seed = ctx.seed.unwrap_or(0);
    if let Some((errors, trials)) = c.sensitivity {
        match scan {
            None => {
                let r = sensitivity(&c.field_model, &drive, &levels, c.qubit, errors, trials, seed).map_err(model)?;
                let body = format!(
                    "amplitude_error_rms = {}\nphase_error_rms = {}\nresidual_parallel_median_T = {}\nresidual_parallel_p90_T = {}\nspectator_rate_median_kHz = {}\nspectator_rate_p90_kHz = {}\ntrials = {}\nseed = {}\n",
                    r.amplitude_error_rms,
                    r.phase_error_rms,
                    r.residual_parallel_median,
                    r.residual_parallel_p90,
                    to_khz(r.spectator_rate_median),
                    to_khz(r.spectator_rate_p90),
                    r.trials,
                    r.seed
                );
                files.push(ctx.text("sensitivity.txt", &body)?);
            }
            Some(s) if s.key == "error_scale" => {
                let parse = |v: &str| v.parse::<f64>().map_err(|_| CliError::Usage(format!("bad scale `{v}`")));
                let (a, b) = (parse(&s.start)?, parse(&s.stop)?);
                if !(a > 0.0 && b > 0.0) {
                    return Err(CliError::Usage("error_scale must be positive".into()));
                }
                let mut t = Table::new(&["error_scale", "residual_median_T", "residual_p90_T", "spectator_median_kHz"]);
                let mut pts = Vec::new();
                for k in linspace(a.ln(), b.ln(), s.steps).into_iter().map(f64::exp) {
                    let e = ErrorModel { amplitude_rms: errors.amplitude_rms * k, phase_rms: errors.phase_rms * k };
                    let r = sensitivity(&c.field_model, &drive, &levels, c.qubit, e, trials, seed).map_err(model)?;
                    pts.push((k.ln(), r.residual_parallel_median.ln()));
                    t.push(vec![k.into(), r.residual_parallel_median.into(), r.residual_parallel_p90.into(), to_khz(r.spectator_rate_median).into()]);
                }
                if pts.len() >= 2 {
                    t.note("loglog_slope", number(loglog_slope(&pts)));
                }
                files.push(ctx.table("sensitivity_scan", &t)?);
            }
            Some(s) => return Err(CliError::Usage(format!("optimize scans only `error_scale`, not `{}`", s.key))),
        }
    } else if let Some(s) = scan {
        return Err(CliError::Usage(format!("--scan {} needs a [sensitivity] section", s.key)));
    }

    if !c.sweep_offsets.is_empty() {
        let direction = if c.ion2_offset.norm() > 0.0 { c.ion2_offset.normalize() } else { c.design_direction };
        let spec = SweepSpec {
            method: c.sweep_method,
            direction,
            residual_floor: c.residual_floor,
            micromotion_efficiency: c.micromotion_efficiency,
        };
        let sweep_drive = method_drive(c, &levels, &ctx.layout(), c.sweep_method)?;
        let sweep = offset_sweep(&c.field_model, &sweep_drive, &levels, c.qubit, &c.trap, &c.sweep_offsets, &spec).map_err(model)?;
        let mut t = Table::new(&["offset_nm", "rate_addr_kHz", "rate_spec_kHz", "crosstalk"]);
        t.note("method", c.sweep_method);
        t.note("monotone_decreasing", sweep.monotone_decreasing);
        for r in &sweep.rows {
            t.push(vec![(r.offset / NM).into(), to_khz(r.rate_addressed).into(), to_khz(r.rate_spectator).into(), r.crosstalk.into()]);
        }
        files.push(ctx.table("sweep", &t)?);
    }
    Ok(files)
}

/// Least-squares slope of (x, y) pairs.
pub fn loglog_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
