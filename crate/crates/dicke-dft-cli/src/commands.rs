//! Subcommand implementations. Every command computes first, then writes its
//! output files plus a `<command>.meta.json` sidecar.

use std::path::PathBuf;

use nalgebra::DVector;
use serde::Serialize;

use dicke_dft::adiabatic::{self, AcOptions};
use dicke_dft::diagnostics;
use dicke_dft::functionals::{
    self, fll_constrained_search, lieb_functional, DensityPair, FunctionalResult,
};
use dicke_dft::geometry;
use dicke_dft::model::build_basis;
use dicke_dft::par::parallel_map;
use dicke_dft::spectral;
use dicke_dft::{Error as CoreError, ModelParams, Potentials};

use crate::config::{CurveConfig, FunctionalConfig, RunConfig, SpectrumConfig};
use crate::output::{fmt_float, svg_plot, CsvBuilder, OutputFile, Sidecar};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Sizing(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 1,
            CliError::Config(_) => 2,
            CliError::Sizing(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numerical(m) | CliError::Sizing(m) => m,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Sizing { .. } => CliError::Sizing(e.to_string()),
            CoreError::Config(_) => CliError::Config(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

pub struct Ctx {
    pub config: RunConfig,
    pub seed: u64,
    pub format: Format,
    pub out_dir: PathBuf,
}

impl Ctx {
    fn energy_tol(&self) -> f64 {
        self.config
            .convergence
            .as_ref()
            .map(|c| c.energy_tol)
            .unwrap_or(1e-9)
    }

    fn finish(
        &self,
        command: &str,
        mut files: Vec<OutputFile>,
        started: std::time::Instant,
    ) -> Result<(), CliError> {
        let sidecar = Sidecar {
            command,
            config: &self.config,
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION"),
            wall_time_seconds: started.elapsed().as_secs_f64(),
        };
        files.push(
            OutputFile::json(format!("{command}.meta.json"), &sidecar)
                .map_err(CliError::Numerical)?,
        );
        crate::output::write_all(&self.out_dir, &files).map_err(CliError::Numerical)?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// spectrum
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SpectrumSummary {
    ground_energy: f64,
    gap: f64,
    degenerate: bool,
    cutoff_used: usize,
    residual: f64,
    eigenvalues: Vec<f64>,
}

pub fn cmd_spectrum(ctx: &Ctx) -> Result<i32, CliError> {
    let started = std::time::Instant::now();
    let params = &ctx.config.model;
    let spec_cfg = ctx.config.spectrum.clone().unwrap_or_default();
    let pots = potentials_from(params, &spec_cfg)?;

    let result = match &ctx.config.truncation {
        Some(trunc) => {
            let basis = build_basis(params, trunc)?;
            spectral::ground_at_cutoff(params, &pots, &basis, spec_cfg.k)?
        }
        None => spectral::converged_ground(params, &pots, ctx.energy_tol(), spec_cfg.k)?,
    };

    let mut csv = CsvBuilder::new(&["index", "eigenvalue"]);
    for (i, e) in result.eigenvalues.iter().enumerate() {
        csv.row(&[i.to_string(), fmt_float(*e)]);
    }
    let summary = SpectrumSummary {
        ground_energy: result.ground_energy(),
        gap: result.gap,
        degenerate: result.degenerate_flag,
        cutoff_used: result.cutoff_used,
        residual: result.residual,
        eigenvalues: result.eigenvalues.clone(),
    };
    let mut files = vec![
        OutputFile::new("spectrum.csv", csv.finish()),
        OutputFile::json("spectrum.json", &summary).map_err(CliError::Numerical)?,
    ];
    if ctx.format == Format::Svg {
        let pts: Vec<(f64, f64)> = result
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(i, &e)| (i as f64, e))
            .collect();
        files.push(OutputFile::new(
            "spectrum.svg",
            svg_plot("spectrum", "index", "energy", &[("levels".into(), pts)]),
        ));
    }
    ctx.finish("spectrum", files, started)?;
    Ok(0)
}

fn potentials_from(params: &ModelParams, cfg: &SpectrumConfig) -> Result<Potentials, CliError> {
    let v = cfg.v.clone().unwrap_or_else(|| vec![0.0; params.n_spins()]);
    let j = cfg.j.clone().unwrap_or_else(|| vec![0.0; params.n_modes()]);
    if v.len() != params.n_spins() || j.len() != params.n_modes() {
        return Err(CliError::Config(
            "spectrum.v / spectrum.j length must match the model".into(),
        ));
    }
    Ok(Potentials::new(v, j)?)
}

// ---------------------------------------------------------------------------
// curve
// ---------------------------------------------------------------------------

struct CurveRow {
    sigma: f64,
    value: f64,
    v: f64,
    j: f64,
    gap: f64,
    cutoff: usize,
}

pub fn cmd_curve(ctx: &Ctx) -> Result<i32, CliError> {
    let started = std::time::Instant::now();
    let params = &ctx.config.model;
    let cfg = ctx
        .config
        .curve
        .clone()
        .ok_or_else(|| CliError::Config("missing [curve] section".into()))?;
    if (params.n_spins() != 1 || params.n_modes() != 1) && !cfg.use_constrained_search {
        return Err(CliError::Config(
            "curve requires N = M = 1 unless use_constrained_search is set".into(),
        ));
    }
    if cfg.sigma_points < 2 {
        return Err(CliError::Config("curve.sigma_points must be at least 2".into()));
    }
    let clamp = 1.0 - functionals::BOUNDARY_EPS;
    let mut sigma_max = cfg.sigma_max;
    if sigma_max >= clamp {
        eprintln!("warning: sigma_max clamped from {sigma_max} to {clamp}");
        sigma_max = clamp;
    }

    let mut tasks = Vec::new();
    for (li, &lam) in cfg.lambdas.iter().enumerate() {
        for i in 0..cfg.sigma_points {
            let sigma =
                -sigma_max + 2.0 * sigma_max * i as f64 / (cfg.sigma_points - 1) as f64;
            tasks.push((li, lam, sigma));
        }
    }
    let rows: Vec<Result<(usize, CurveRow), CliError>> = parallel_map(&tasks, |&(li, lam, sigma)| {
        let scaled = params.scaled_coupling(lam);
        let target = DensityPair::from_slices(&[sigma], &[cfg.xi]).map_err(CliError::from)?;
        let res = curve_point(&scaled, &target, &cfg)?;
        Ok((li, res))
    });

    let mut per_lambda: Vec<Vec<CurveRow>> = (0..cfg.lambdas.len()).map(|_| Vec::new()).collect();
    for r in rows {
        let (li, row) = r?;
        per_lambda[li].push(row);
    }

    let mut files = Vec::new();
    let mut series = Vec::new();
    for (li, rows) in per_lambda.iter().enumerate() {
        let mut csv = CsvBuilder::new(&["sigma", "F", "v", "j", "gap", "cutoff"]);
        for row in rows {
            csv.row(&[
                fmt_float(row.sigma),
                fmt_float(row.value),
                fmt_float(row.v),
                fmt_float(row.j),
                fmt_float(row.gap),
                row.cutoff.to_string(),
            ]);
        }
        files.push(OutputFile::new(format!("curve_{li:02}.csv"), csv.finish()));
        series.push((
            format!("lambda={}", cfg.lambdas[li]),
            rows.iter().map(|r| (r.sigma, r.value)).collect::<Vec<_>>(),
        ));
    }
    if ctx.format == Format::Json {
        #[derive(Serialize)]
        struct JsonRow {
            lambda: f64,
            sigma: f64,
            value: f64,
            v: f64,
            j: f64,
            gap: f64,
            cutoff: usize,
        }
        let all: Vec<JsonRow> = per_lambda
            .iter()
            .enumerate()
            .flat_map(|(li, rows)| {
                rows.iter().map(move |r| JsonRow {
                    lambda: ctx.config.curve.as_ref().unwrap().lambdas[li],
                    sigma: r.sigma,
                    value: r.value,
                    v: r.v,
                    j: r.j,
                    gap: r.gap,
                    cutoff: r.cutoff,
                })
            })
            .collect();
        files.push(OutputFile::json("curve.json", &all).map_err(CliError::Numerical)?);
    }
    if ctx.format == Format::Svg {
        files.push(OutputFile::new(
            "curve.svg",
            svg_plot("universal functional", "sigma", "F(sigma, xi)", &series),
        ));
    }
    ctx.finish("curve", files, started)?;
    Ok(0)
}

fn curve_point(
    params: &ModelParams,
    target: &DensityPair,
    cfg: &CurveConfig,
) -> Result<CurveRow, CliError> {
    let res = if cfg.use_constrained_search {
        fll_constrained_search(params, target, cfg.tol, 0)?
    } else {
        lieb_functional(params, target, cfg.tol)?
    };
    let (v, j) = match &res.representing_potentials {
        Some(p) => (p.v[0], p.j[0]),
        None => (f64::NAN, f64::NAN),
    };
    Ok(CurveRow {
        sigma: target.sigma[0],
        value: res.value,
        v,
        j,
        gap: res.residuals.get("gap").copied().unwrap_or(f64::NAN),
        cutoff: res.cutoff_used,
    })
}

// ---------------------------------------------------------------------------
// functional
// ---------------------------------------------------------------------------

pub fn cmd_functional(ctx: &Ctx) -> Result<i32, CliError> {
    let started = std::time::Instant::now();
    let params = &ctx.config.model;
    let cfg = ctx
        .config
        .functional
        .clone()
        .ok_or_else(|| CliError::Config("missing [functional] section".into()))?;
    let kinds: Vec<&str> = match cfg.kind.as_str() {
        "both" => vec!["fll", "fl"],
        "fll" => vec!["fll"],
        "fl" => vec!["fl"],
        other => {
            return Err(CliError::Config(format!(
                "functional.kind must be fll|fl|both, got {other}"
            )))
        }
    };

    let mut files = Vec::new();
    for kind in kinds {
        let results: Vec<Result<FunctionalResult, CliError>> =
            parallel_map(&cfg.targets, |t| {
                let target = DensityPair::from_slices(&t.sigma, &t.xi)
                    .map_err(CliError::from)?;
                let res = match kind {
                    "fll" => fll_constrained_search(params, &target, cfg.tol, ctx.seed)?,
                    _ => lieb_functional(params, &target, cfg.tol)?,
                };
                Ok(res)
            });
        let csv = functional_csv(params, &cfg, results)?;
        files.push(OutputFile::new(format!("functional_{kind}.csv"), csv));
    }
    ctx.finish("functional", files, started)?;
    Ok(0)
}

fn functional_csv(
    params: &ModelParams,
    cfg: &FunctionalConfig,
    results: Vec<Result<FunctionalResult, CliError>>,
) -> Result<String, CliError> {
    let n = params.n_spins();
    let m = params.n_modes();
    let mut header: Vec<String> = Vec::new();
    for i in 1..=n {
        header.push(format!("sigma_{i}"));
    }
    for i in 1..=m {
        header.push(format!("xi_{i}"));
    }
    header.push("F".into());
    for i in 1..=n {
        header.push(format!("v_{i}"));
    }
    for i in 1..=m {
        header.push(format!("j_{i}"));
    }
    header.extend(["gap".into(), "cutoff".into(), "converged".into()]);
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut csv = CsvBuilder::new(&header_refs);

    for (t, r) in cfg.targets.iter().zip(results) {
        let res = r?;
        let mut fields: Vec<String> = Vec::new();
        fields.extend(t.sigma.iter().map(|&x| fmt_float(x)));
        fields.extend(t.xi.iter().map(|&x| fmt_float(x)));
        fields.push(fmt_float(res.value));
        match &res.representing_potentials {
            Some(p) => {
                fields.extend(p.v.iter().map(|&x| fmt_float(x)));
                fields.extend(p.j.iter().map(|&x| fmt_float(x)));
            }
            None => {
                fields.extend((0..n + m).map(|_| fmt_float(f64::NAN)));
            }
        }
        fields.push(fmt_float(
            res.residuals.get("gap").copied().unwrap_or(f64::NAN),
        ));
        fields.push(res.cutoff_used.to_string());
        fields.push(res.converged.to_string());
        csv.row(&fields);
    }
    Ok(csv.finish())
}

// ---------------------------------------------------------------------------
// adiabatic
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct AdiabaticSummary {
    sigma: Vec<f64>,
    xi: Vec<f64>,
    g_value: f64,
    f_reconstructed: f64,
    residual: f64,
    nodes: usize,
    jump_flag: bool,
}

pub fn cmd_adiabatic(ctx: &Ctx) -> Result<i32, CliError> {
    let started = std::time::Instant::now();
    let params = &ctx.config.model;
    let cfg = ctx
        .config
        .adiabatic
        .clone()
        .ok_or_else(|| CliError::Config("missing [adiabatic] section".into()))?;
    let xi: Vec<f64> = cfg.xi.clone().unwrap_or_else(|| vec![0.0; params.n_modes()]);
    if xi.len() != params.n_modes() {
        return Err(CliError::Config("adiabatic.xi length must be M".into()));
    }
    let opts = AcOptions {
        chain_warm_starts: !cfg.independent_nodes,
        seed: ctx.seed,
        cutoff: None,
    };

    let traces: Vec<Result<adiabatic::AdiabaticTrace, CliError>> =
        parallel_map(&cfg.sigmas, |sigma| {
            if sigma.len() != params.n_spins() {
                return Err(CliError::Config("adiabatic sigma length must be N".into()));
            }
            let sv = DVector::from_column_slice(sigma);
            let xv = DVector::from_column_slice(&xi);
            Ok(adiabatic::g_lambda(params, &sv, &xv, cfg.quad_tol, &opts)?)
        });

    let mut files = Vec::new();
    let mut summaries = Vec::new();
    for (i, trace) in traces.into_iter().enumerate() {
        let trace = trace?;
        let mut csv = CsvBuilder::new(&["s", "integrand", "virial_residual"]);
        for ((s, val), vir) in trace
            .s_nodes
            .iter()
            .zip(&trace.integrand_values)
            .zip(&trace.virial_residuals)
        {
            csv.float_row(&[*s, *val, *vir]);
        }
        files.push(OutputFile::new(
            format!("adiabatic_nodes_{i:02}.csv"),
            csv.finish(),
        ));
        summaries.push(AdiabaticSummary {
            sigma: cfg.sigmas[i].clone(),
            xi: xi.clone(),
            g_value: trace.g_value,
            f_reconstructed: trace.f_reconstructed,
            residual: trace.route_residual,
            nodes: trace.s_nodes.len(),
            jump_flag: trace.jump_flag,
        });
    }
    files.push(OutputFile::json("adiabatic.json", &summaries).map_err(CliError::Numerical)?);
    ctx.finish("adiabatic", files, started)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// regular-set
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct PlaneInfo {
    normal: Vec<f64>,
    offset: f64,
    facet: bool,
    central: bool,
}

#[derive(Serialize)]
struct RegularSetSummary {
    n_spins: usize,
    hyperplanes: usize,
    components: Option<usize>,
    samples: usize,
    planes: Vec<PlaneInfo>,
}

pub fn cmd_regular_set(ctx: &Ctx) -> Result<i32, CliError> {
    let started = std::time::Instant::now();
    let cfg = ctx.config.regular_set.clone().unwrap_or(crate::config::RegularSetConfig {
        n_spins: None,
        samples: 100_000,
    });
    let n = cfg.n_spins.unwrap_or(ctx.config.model.n_spins());
    let planes = geometry::irregular_hyperplanes(n)?;

    let mut header: Vec<String> = (1..=n).map(|i| format!("normal_{i}")).collect();
    header.push("offset".into());
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut csv = CsvBuilder::new(&header_refs);
    for p in &planes {
        let mut row: Vec<f64> = p.normal.clone();
        row.push(p.offset);
        csv.float_row(&row);
    }

    let components = if n <= 3 {
        Some(geometry::count_components(n, cfg.samples, ctx.seed)?)
    } else {
        None
    };
    let summary = RegularSetSummary {
        n_spins: n,
        hyperplanes: planes.len(),
        components,
        samples: cfg.samples,
        planes: planes
            .iter()
            .map(|p| PlaneInfo {
                normal: p.normal.clone(),
                offset: p.offset,
                facet: p.is_facet(),
                central: p.is_central(),
            })
            .collect(),
    };
    let files = vec![
        OutputFile::new("hyperplanes.csv", csv.finish()),
        OutputFile::json("regular_set.json", &summary).map_err(CliError::Numerical)?,
    ];
    ctx.finish("regular-set", files, started)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

pub fn cmd_diagnose(ctx: &Ctx) -> Result<i32, CliError> {
    let started = std::time::Instant::now();
    let reports = diagnostics::run_battery(ctx.seed)?;
    let mut csv = CsvBuilder::new(&["name", "lhs", "rhs", "residual", "tolerance", "passed"]);
    let mut all_passed = true;
    for r in &reports {
        all_passed &= r.passed;
        csv.row(&[
            r.name.clone(),
            fmt_float(r.lhs),
            fmt_float(r.rhs),
            fmt_float(r.residual),
            fmt_float(r.tolerance),
            r.passed.to_string(),
        ]);
    }
    let files = vec![OutputFile::new("diagnose.csv", csv.finish())];
    ctx.finish("diagnose", files, started)?;
    if all_passed {
        Ok(0)
    } else {
        eprintln!("diagnose: one or more checks failed");
        Ok(1)
    }
}

// ---------------------------------------------------------------------------
// hk-scan
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct HkSummary {
    grid_points: usize,
    collisions: usize,
    min_pairwise_distance: f64,
    skipped_degenerate: usize,
    collision_pairs: Vec<HkPair>,
}

#[derive(Serialize)]
struct HkPair {
    first: usize,
    second: usize,
    distance: f64,
    both_regular: bool,
}

pub fn cmd_hk_scan(ctx: &Ctx) -> Result<i32, CliError> {
    let started = std::time::Instant::now();
    let params = &ctx.config.model;
    let cfg = ctx.config.hk_scan.clone().unwrap_or(crate::config::HkScanConfig {
        nv: 5,
        nj: 5,
        range: 1.0,
        tol: 1e-6,
    });
    let grid = diagnostics::potential_grid(params, cfg.nv, cfg.nj, cfg.range);
    let report = diagnostics::hk_scan(params, &grid, cfg.tol)?;

    let n = params.n_spins();
    let m = params.n_modes();
    let mut header: Vec<String> = Vec::new();
    for i in 1..=n {
        header.push(format!("v_{i}"));
    }
    for i in 1..=m {
        header.push(format!("j_{i}"));
    }
    for i in 1..=n {
        header.push(format!("sigma_{i}"));
    }
    for i in 1..=m {
        header.push(format!("xi_{i}"));
    }
    header.extend(["gap".into(), "degenerate".into()]);
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut csv = CsvBuilder::new(&header_refs);
    for e in &report.entries {
        let mut fields: Vec<String> = Vec::new();
        fields.extend(e.potentials.v.iter().map(|&x| fmt_float(x)));
        fields.extend(e.potentials.j.iter().map(|&x| fmt_float(x)));
        fields.extend(e.density.sigma.iter().map(|&x| fmt_float(x)));
        fields.extend(e.density.xi.iter().map(|&x| fmt_float(x)));
        fields.push(fmt_float(e.gap));
        fields.push(e.skipped_degenerate.to_string());
        csv.row(&fields);
    }
    let summary = HkSummary {
        grid_points: grid.len(),
        collisions: report.collisions.len(),
        min_pairwise_distance: report.min_pairwise_distance,
        skipped_degenerate: report.skipped,
        collision_pairs: report
            .collisions
            .iter()
            .map(|c| HkPair {
                first: c.first,
                second: c.second,
                distance: c.distance,
                both_regular: c.both_regular,
            })
            .collect(),
    };
    let files = vec![
        OutputFile::new("hk_scan.csv", csv.finish()),
        OutputFile::json("hk_scan.json", &summary).map_err(CliError::Numerical)?,
    ];
    ctx.finish("hk-scan", files, started)?;
    Ok(0)
}
