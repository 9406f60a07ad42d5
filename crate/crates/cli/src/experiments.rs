use std::collections::BTreeMap;

use laurent_lab::groundstate::{gap_scaling, gap_scaling_capped};
use laurent_lab::ids::{dominance_violations, envelope_curves, mc_ids, sandwich_curves};
use laurent_lab::io::{Cell, Table};
use laurent_lab::lifshitz::{
    bump_energy, double_log_fit, log_log_fit, lower_probe, temple_verify, upper_probe, BumpOptions, ProbeOptions, ProbePoint,
};
use laurent_lab::operator::{
    assemble_simple, bracketing_report, powered_section, Boundary, Interval, DEFAULT_DIMENSION_CAP,
};
use laurent_lab::fit::fit_log_log;
use laurent_lab::symbol::{
    check_sandwich, envelope_bounds, envelope_table, free_ids_closed, minima_report, CosineFactor, EnvelopeOptions,
    MinimaOptions, QuadratureOptions, Symbol,
};
use serde_json::{json, Value};

use crate::config::{ConfigError, Kind, RunConfig};

/// A failure inside a numerical module.
#[derive(Debug)]
pub struct NumericalError {
    pub module: &'static str,
    pub name: String,
    pub message: String,
}

/// `Operator(DimensionCap { .. })` -> `Operator::DimensionCap`.
fn variant_path(debug: &str) -> String {
    let mut parts = Vec::new();
    let mut rest = debug;
    loop {
        let ident: String = rest.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
        if ident.is_empty() {
            break;
        }
        parts.push(ident.clone());
        rest = &rest[ident.len()..];
        match rest.strip_prefix('(') {
            Some(r) => rest = r,
            None => break,
        }
    }
    parts.join("::")
}

macro_rules! numerical_from {
    ($($ty:ty => $module:literal),* $(,)?) => {
        $(impl From<$ty> for RunError {
            fn from(e: $ty) -> Self {
                RunError::Numerical(NumericalError { module: $module, name: variant_path(&format!("{e:?}")), message: e.to_string() })
            }
        })*
    };
}

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Numerical(NumericalError),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

numerical_from! {
    laurent_lab::symbol::SymbolError => "symbol",
    laurent_lab::operator::OperatorError => "operator",
    laurent_lab::groundstate::GroundError => "groundstate",
    laurent_lab::disorder::DisorderError => "disorder",
    laurent_lab::ids::IdsError => "ids",
    laurent_lab::lifshitz::LifshitzError => "lifshitz",
}

/// Tables to write, in order, plus summary values for the manifest.
#[derive(Debug, Default)]
pub struct Outcome {
    pub tables: Vec<(String, Table)>,
    pub summary: BTreeMap<String, Value>,
}

impl Outcome {
    fn table(&mut self, name: &str, t: Table) {
        self.tables.push((name.to_string(), t));
    }

    fn note(&mut self, key: &str, v: Value) {
        self.summary.insert(key.to_string(), v);
    }
}

fn f(x: f64) -> Cell {
    Cell::Float(x)
}

/// JSON number, or null for non-finite values.
fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn lnln(p: f64) -> f64 {
    if p > 0.0 && p < 1.0 {
        (-p.ln()).ln()
    } else {
        f64::NAN
    }
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, RunError> {
    cfg.validate()?;
    match cfg.kind {
        Kind::SymbolReport => symbol_report(cfg),
        Kind::Bracketing => bracketing(cfg),
        Kind::GapScan => gap_scan(cfg),
        Kind::IdsSweep => ids_sweep(cfg),
        Kind::Sandwich => sandwich(cfg),
        Kind::Temple => temple(cfg),
        Kind::TailFit => tail_fit(cfg),
        Kind::Probes => probes(cfg),
        Kind::Figure1 => figure1(cfg),
    }
}

fn symbol_report(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let s = cfg.symbol()?;
    let mut out = Outcome::default();
    let report = minima_report(&s, &MinimaOptions::default())?;
    let mut t = Table::new(&["location", "exponent", "residual", "exact_exponent"]);
    for m in &report.minima {
        t.push(vec![f(m.location), f(m.exponent), f(m.residual), f(m.exact_exponent.unwrap_or(f64::NAN))]);
    }
    out.table("minima.csv", t);
    out.note("b", num(report.b));
    out.note("holder", num(report.holder));

    let coeffs = s.fourier_coefficients(cfg.n_max.unwrap_or(64), &QuadratureOptions::default())?;
    let mut t = Table::new(&["n", "re", "im"]);
    for (n, re, im) in coeffs.rows() {
        t.push(vec![n.into(), f(re), f(im)]);
    }
    out.table("coefficients.csv", t);
    let decay = coeffs.decay_report();
    out.note("decay_nu", num(decay.nu));
    out.note("decay_weighted_sup", num(decay.weighted_sup));
    out.note("band_limited", json!(decay.band_limited));
    out.note("hermitian_defect", num(coeffs.hermitian_defect()));

    if cfg.energies.is_some() {
        let mut t = Table::new(&["energy", "free_ids"]);
        for e in cfg.energies()? {
            t.push(vec![f(e), f(free_ids_closed(&s, e))]);
        }
        out.table("free_ids.csv", t);
    }
    Ok(out)
}

fn bracketing(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let spec = cfg.spec()?;
    let interval = Interval::centered(cfg.l()?);
    let cuts = cfg.cuts.clone().unwrap_or_else(|| vec![0]);
    let mut out = Outcome::default();
    let mut t = Table::new(&["a", "b", "cut", "lower_gap", "upper_gap", "norm", "threshold", "holds"]);
    let mut all = true;
    for cut in cuts {
        let r = bracketing_report(&spec, interval, cut)?;
        all &= r.holds();
        t.push(vec![
            interval.a.into(),
            interval.b.into(),
            cut.into(),
            f(r.lower_gap),
            f(r.upper_gap),
            f(r.norm),
            f(r.threshold()),
            r.holds().into(),
        ]);
    }
    out.table("bracketing.csv", t);
    out.note("all_hold", json!(all));
    Ok(out)
}

fn gap_scan(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let spec = cfg.spec()?;
    let g = gap_scaling_capped(&spec, &cfg.l_list()?, cfg.cap.unwrap_or(DEFAULT_DIMENSION_CAP))?;
    let mut out = Outcome::default();
    let mut t = Table::new(&["l", "zero_modes", "gap", "scaled"]);
    for p in &g.points {
        t.push(vec![p.l.into(), p.zero_modes.into(), f(p.gap), f(p.scaled)]);
    }
    out.table("gap.csv", t);
    out.note("slope", num(g.fit.slope));
    out.note("target_slope", num(-g.b));
    out.note("c0", num(g.c0));
    Ok(out)
}

fn curve_table(c: &laurent_lab::ids::IdsCurve<f64>) -> Table {
    let mut t = Table::new(&["energy", "mean", "stderr", "samples", "l", "ln_energy", "lnln_mean"]);
    for (e, m, s, n, l) in c.csv_rows() {
        t.push(vec![f(e), f(m), f(s), n.into(), l.into(), f(e.ln()), f(lnln(m))]);
    }
    t
}

fn ids_sweep(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let l = cfg.l()?;
    let interval = Interval::centered(l);
    let sec = if cfg.spec.is_some() {
        powered_section(&cfg.spec()?, interval, cfg.boundary.unwrap_or(Boundary::NeumannMod))?
    } else {
        let s = cfg.symbol()?;
        assemble_simple(&s.fourier_coefficients(interval.len() - 1, &QuadratureOptions::default())?, interval)
    };
    let curve = mc_ids(&sec, &cfg.dist()?, &cfg.energies()?, cfg.samples()?, cfg.seed)?;
    let mut out = Outcome::default();
    out.table("ids.csv", curve_table(&curve));
    out.note("boundary", json!(sec.boundary.name()));
    Ok(out)
}

fn sandwich(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let l = cfg.l()?;
    let (dist, energies, n, seed) = (cfg.dist()?, cfg.energies()?, cfg.samples()?, cfg.seed);
    let mut out = Outcome::default();
    if cfg.spec.is_some() {
        let (lower, upper) = sandwich_curves(&cfg.spec()?, &dist, l, &energies, n, seed)?;
        let mut t = Table::new(&["energy", "dirichlet_mean", "dirichlet_stderr", "neumann_mean", "neumann_stderr"]);
        for j in 0..energies.len() {
            t.push(vec![f(energies[j]), f(lower.mean[j]), f(lower.stderr[j]), f(upper.mean[j]), f(upper.stderr[j])]);
        }
        out.table("sandwich.csv", t);
        out.note("bracket_violations", json!(dominance_violations(&lower, &upper)));
    }
    if cfg.symbol.is_some() {
        let s = cfg.symbol()?;
        let env = envelope_bounds(&s, &EnvelopeOptions::default())?;
        let env = env.with_constants(cfg.c_low.unwrap_or(env.c_low), cfg.c_up.unwrap_or(env.c_up));
        let c = envelope_curves(&s, &env.lower_symbol()?, &env.upper_symbol()?, &dist, l, &energies, n, seed, &QuadratureOptions::default())?;
        let mut t = Table::new(&["energy", "upper_envelope_mean", "symbol_mean", "lower_envelope_mean"]);
        for j in 0..energies.len() {
            t.push(vec![f(energies[j]), f(c.upper_envelope.mean[j]), f(c.symbol.mean[j]), f(c.lower_envelope.mean[j])]);
        }
        out.table("envelope.csv", t);
        out.note("envelope_violations", json!(c.violations()));
        out.note("c_low", num(env.c_low));
        out.note("c_up", num(env.c_up));
    }
    Ok(out)
}

fn temple(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let spec = cfg.spec()?;
    let l = cfg.l()?;
    let c0 = match cfg.c0 {
        Some(c) => c,
        None => gap_scaling(&spec, &[l])?.c0,
    };
    let r = temple_verify(&spec, &cfg.dist()?, l, cfg.c_tilde()?, Some(c0), cfg.samples()?, cfg.seed)?;
    let mut out = Outcome::default();
    let mut t = Table::new(&["sample", "e0", "min_form", "lhs", "rhs", "pass"]);
    for s in &r.samples {
        t.push(vec![s.index.into(), f(s.e0), f(s.min_form), f(s.lhs), f(s.rhs), s.pass.into()]);
    }
    out.table("temple.csv", t);
    out.note("pass_rate", num(r.pass_rate));
    out.note("c0", num(c0));
    out.note("c_tilde", num(r.c_tilde));
    out.note("threshold", num(r.threshold));
    out.note("b", num(r.b));
    Ok(out)
}

fn probe_options(cfg: &RunConfig) -> ProbeOptions<f64> {
    ProbeOptions { cap: cfg.cap.unwrap_or(DEFAULT_DIMENSION_CAP), tilt: cfg.tilt, ..ProbeOptions::default() }
}

fn tail_fit(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let spec = cfg.spec()?;
    let energies = cfg.positive_energies()?;
    let pts = upper_probe(&spec, &cfg.dist()?, &energies, cfg.gamma()?, cfg.samples()?, cfg.seed, &probe_options(cfg))?;
    let mut out = Outcome::default();
    let mut t = Table::new(&["energy", "l", "samples", "hits", "probability", "ci_lo", "ci_hi", "stderr", "theta", "ln_energy", "lnln_probability"]);
    for p in &pts {
        t.push(vec![
            f(p.energy),
            p.l.into(),
            p.n_samples.into(),
            p.hits.into(),
            f(p.probability),
            f(p.interval.0),
            f(p.interval.1),
            f(p.stderr),
            f(p.theta.unwrap_or(f64::NAN)),
            f(p.energy.ln()),
            f(lnln(p.probability)),
        ]);
    }
    out.table("tail.csv", t);
    let (lo, hi) = cfg.window.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let fit_pts: Vec<(f64, f64)> = pts
        .iter()
        .filter(|p| p.skipped.is_none() && p.energy >= lo && p.energy <= hi && p.probability > 0.0 && p.probability < 1.0)
        .map(|p| (p.energy, p.probability))
        .collect();
    let b = spec.b();
    match double_log_fit(&fit_pts, Some(-1.0 / b)) {
        Ok(fit) => {
            out.note("slope", num(fit.slope));
            out.note("intercept", num(fit.intercept));
            out.note("residual", num(fit.residual));
            out.note("fit_points", json!(fit.points));
        }
        Err(e) => out.note("fit_error", json!(e.to_string())),
    }
    out.note("target_slope", num(-1.0 / b));

    let s = spec.symbol()?;
    let free: Vec<(f64, f64)> = energies.iter().map(|&e| (e, free_ids_closed(&s, e))).collect();
    let mut t = Table::new(&["energy", "free_ids"]);
    for &(e, v) in &free {
        t.push(vec![f(e), f(v)]);
    }
    out.table("free_ids.csv", t);
    if let Ok(fit) = log_log_fit(&free, Some(1.0 / b)) {
        out.note("free_slope", num(fit.slope));
        out.note("free_target_slope", num(1.0 / b));
    }
    Ok(out)
}

fn probe_row(t: &mut Table, probe: &str, p: &ProbePoint<f64>) {
    t.push(vec![
        probe.into(),
        f(p.energy),
        p.l.into(),
        p.n_samples.into(),
        p.hits.into(),
        f(p.probability),
        f(p.interval.0),
        f(p.interval.1),
        f(p.certificate_probability.unwrap_or(f64::NAN)),
        p.dominance_failures.map_or(Cell::Int(-1), |d| d.into()),
        f(p.c3.unwrap_or(f64::NAN)),
        p.skipped.clone().unwrap_or_default().into(),
    ]);
}

fn probes(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let spec = cfg.spec()?;
    let energies = cfg.positive_energies()?;
    let (dist, gamma, n, seed) = (cfg.dist()?, cfg.gamma()?, cfg.samples()?, cfg.seed);
    let opts = probe_options(cfg);
    let mut out = Outcome::default();
    let mut t = Table::new(&[
        "probe", "energy", "l", "samples", "hits", "probability", "ci_lo", "ci_hi", "certificate_probability", "dominance_failures", "c3",
        "skipped",
    ]);
    for p in &upper_probe(&spec, &dist, &energies, gamma, n, seed, &opts)? {
        probe_row(&mut t, "upper", p);
    }
    if spec.m() == 1 && dist.small_ball_exponent().is_some() {
        let lower = lower_probe(&spec, &dist, &energies, gamma, n, seed, &ProbeOptions { tilt: None, ..opts })?;
        let failures: usize = lower.iter().filter_map(|p| p.dominance_failures).sum();
        out.note("certificate_failures", json!(failures));
        for p in &lower {
            probe_row(&mut t, "lower", p);
        }
    } else {
        out.note("lower_probe", json!("skipped: needs a single minimum and a small-ball exponent"));
    }
    out.table("probes.csv", t);

    if let Some(b) = &cfg.bump {
        let opts = BumpOptions { nodes: b.nodes.unwrap_or(1) };
        let mut t = Table::new(&["n", "l", "numerator", "norm_sq", "formula_diff_deviation"]);
        let mut slopes = BTreeMap::new();
        for &nn in &b.n {
            let mut pts = Vec::new();
            for &l in &b.l {
                let r = bump_energy::<f64>(nn, l, &opts)?;
                t.push(vec![nn.into(), l.into(), f(r.numerator), f(r.norm_sq), f(r.formula_diff_deviation)]);
                pts.push((l as f64, r.numerator));
            }
            let slope = fit_log_log(&pts).map_or(f64::NAN, |fit| fit.slope);
            slopes.insert(nn.to_string(), json!({ "slope": num(slope), "target": -(2.0 * nn as f64 - 1.0) }));
        }
        out.table("bump.csv", t);
        out.note("bump_slopes", json!(slopes));
    }
    Ok(out)
}

/// The three-minimum example symbol with exponents 0.3, 0.6 and 0.7.
pub fn example_symbol() -> Symbol<f64> {
    Symbol::cosine_power_product(
        0.5,
        vec![
            CosineFactor { location: 0.0, exponent: 0.3 },
            CosineFactor { location: 2.5, exponent: 0.6 },
            CosineFactor { location: -2.0, exponent: 0.7 },
        ],
    )
    .expect("valid example symbol")
}

fn figure1(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let s = if cfg.symbol.is_some() { cfg.symbol()? } else { example_symbol() };
    let log2 = cfg.grid_log2.unwrap_or(12);
    let measured = envelope_bounds(&s, &EnvelopeOptions::default())?;
    let env = measured.with_constants(cfg.c_low.unwrap_or(0.5), cfg.c_up.unwrap_or(3.0));
    let mut out = Outcome::default();
    let mut t = Table::new(&["t", "f", "lower", "upper"]);
    for row in envelope_table(&s, &env, log2) {
        t.push(row.iter().map(|&x| f(x)).collect());
    }
    out.table("figure1.csv", t);
    let check = check_sandwich(&s, &env, log2);
    out.note("sandwich_holds", json!(check.holds()));
    out.note("lower_violations", json!(check.lower_violations));
    out.note("upper_violations", json!(check.upper_violations));
    out.note("worst_lower_ratio", num(check.worst_lower_ratio));
    out.note("worst_upper_ratio", num(check.worst_upper_ratio));
    out.note("b", num(env.b));
    out.note("c_low", num(env.c_low));
    out.note("c_up", num(env.c_up));
    out.note("proof_c_low", num(measured.c_low));
    out.note("proof_c_up", num(measured.c_up));
    Ok(out)
}
