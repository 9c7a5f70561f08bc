//! The seven subcommands of the `vma` binary.
//!
//! Every command is a pure function of its files, flags, and the global
//! seed. Failures are classified at the call site: problems with the
//! invocation or its input files exit 2, computations that fail on
//! well-formed inputs exit 1.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, ValueEnum};

use vma_core::analysis::{build_fv_curve, estimate_offset, synchronize};
use vma_core::fit::{fit_control, fit_sheath};
use vma_core::protocol::build_protocol;
use vma_core::sim::{add_noise, simulate};
use vma_core::{FitOptions, FitProblem, ProtocolConfig, RampSpec};

use crate::catalog::{load_catalog, Catalog};
use crate::io::{self, AnalyticRow, Metadata, ProfileMeta};
use crate::params::ParamFile;
use crate::sweep::{SweepManifest, SweepSpec, SweptParameter};
use crate::{Classify, CmdResult, Failure};

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Directory holding the default actuator catalog (actuators.csv).
    #[arg(
        long = "config",
        global = true,
        env = "VMA_CONFIG_DIR",
        value_name = "DIR"
    )]
    pub config_dir: Option<PathBuf>,

    /// Seed for stochastic steps (synthetic measurement noise).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Suppress informational output; errors still go to stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

fn open_catalog(g: &GlobalOpts, explicit: Option<&Path>) -> CmdResult<Catalog> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => match &g.config_dir {
            Some(dir) => dir.join("actuators.csv"),
            None => {
                return Err(Failure::usage(anyhow!(
                    "no catalog available: pass --catalog FILE or point --config/VMA_CONFIG_DIR \
                     at a directory containing actuators.csv"
                )))
            }
        },
    };
    load_catalog(&path).or_usage()
}

fn load_protocol_config(path: &Path) -> CmdResult<ProtocolConfig> {
    let body = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .or_usage()?;
    let cfg: ProtocolConfig = toml::from_str(&body)
        .with_context(|| format!("parsing {}", path.display()))
        .or_usage()?;
    cfg.validate()
        .with_context(|| format!("validating {}", path.display()))
        .or_usage()?;
    Ok(cfg)
}

/// Log-spaced magnitudes from `lo` to `hi` inclusive; `n = 1` yields `[lo]`.
fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let ratio = hi / lo;
    (0..n)
        .map(|i| lo * ratio.powf(i as f64 / (n - 1) as f64))
        .collect()
}

/// Signed grid in ascending order: extension side (negative shortening
/// velocities) from -hi to -lo, then the shortening side from +lo to +hi.
fn signed_log_grid(lo: f64, hi: f64, per_side: usize) -> Vec<f64> {
    let mags = log_grid(lo, hi, per_side);
    let mut grid: Vec<f64> = mags.iter().rev().map(|v| -v).collect();
    grid.extend(&mags);
    grid
}

fn is_strictly_increasing(order: &[usize], xs: &[f64]) -> bool {
    order.windows(2).all(|w| xs[w[1]] > xs[w[0]])
}

// ---------------------------------------------------------------------------
// protocol

#[derive(Debug, Args)]
pub struct ProtocolArgs {
    /// Session description (TOML); replaces --actuator/--pressure.
    #[arg(
        long = "config-file",
        value_name = "TOML",
        conflicts_with_all = ["actuator", "pressure"]
    )]
    pub config_file: Option<PathBuf>,

    /// Catalog actuator the standard session is built for.
    #[arg(long, requires = "pressure")]
    pub actuator: Option<String>,

    /// Working pressure [psi] of the standard session.
    #[arg(long, requires = "actuator")]
    pub pressure: Option<f64>,

    /// Catalog file overriding the config-directory default.
    #[arg(long, value_name = "CSV")]
    pub catalog: Option<PathBuf>,

    /// Output strain-profile CSV.
    #[arg(long, short, value_name = "CSV")]
    pub out: PathBuf,
}

pub fn cmd_protocol(g: &GlobalOpts, a: &ProtocolArgs) -> CmdResult<()> {
    let (cfg, actuator_id) = match (&a.config_file, &a.actuator, a.pressure) {
        (Some(path), _, _) => (load_protocol_config(path)?, "custom".to_string()),
        (None, Some(id), Some(pressure)) => {
            let catalog = open_catalog(g, a.catalog.as_deref())?;
            let rec = catalog
                .get(id)
                .ok_or_else(|| Failure::usage(anyhow!("actuator '{id}' not found in catalog")))?;
            let rest_pressurized = rec.rest_length_at(pressure).or_usage()?;
            (
                ProtocolConfig::standard(pressure, rec.initial_length_mm, rest_pressurized),
                rec.id.clone(),
            )
        }
        _ => {
            return Err(Failure::usage(anyhow!(
                "pass either --config-file or both --actuator and --pressure"
            )))
        }
    };
    let profile = build_protocol(&cfg).or_usage()?;
    let meta = ProfileMeta {
        actuator_id,
        rest_length_unpressurized_mm: cfg.rest_length_unpressurized_mm,
        rest_length_pressurized_mm: cfg.rest_length_pressurized_mm,
        pressure_psi: cfg.pressure_psi,
        sample_rate_hz: cfg.sample_rate_hz,
    };
    io::write_profile(&a.out, &profile, &meta).or_usage()?;
    if !g.quiet {
        println!(
            "wrote {}: {} segments, {:.1} s, {} measurement ramps",
            a.out.display(),
            profile.segments.len(),
            profile.total_duration(),
            cfg.expected_ramp_count(),
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Model parameter file (JSON).
    #[arg(long, value_name = "JSON")]
    pub params: PathBuf,

    /// Strain-profile CSV (from `vma protocol`).
    #[arg(long, value_name = "CSV")]
    pub profile: PathBuf,

    /// Gaussian force-noise standard deviation [N]; 0 disables.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,

    /// Output trace CSV.
    #[arg(long, short, value_name = "CSV")]
    pub out: PathBuf,
}

pub fn cmd_simulate(g: &GlobalOpts, a: &SimulateArgs) -> CmdResult<()> {
    if !(a.noise.is_finite() && a.noise >= 0.0) {
        return Err(Failure::usage(anyhow!(
            "--noise must be finite and >= 0, got {}",
            a.noise
        )));
    }
    let params = ParamFile::load(&a.params).or_usage()?;
    let chain = params.dimensional_chain().or_usage()?;
    let (profile, meta) = io::read_profile(&a.profile).or_usage()?;
    let trace_meta = meta.trace_meta().or_usage()?;
    let mut trace = simulate(&chain, &profile, &trace_meta).or_numerical()?;
    if a.noise > 0.0 {
        trace = add_noise(&trace, a.noise, g.seed).or_numerical()?;
    }
    io::write_trace(&a.out, &trace).or_usage()?;
    if !g.quiet {
        let duration = trace.samples.last().map_or(0.0, |s| s.time);
        println!(
            "wrote {}: {} samples over {:.1} s",
            a.out.display(),
            trace.len(),
            duration,
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Input trace CSV.
    #[arg(long, value_name = "CSV")]
    pub trace: PathBuf,

    /// Session description (TOML) overriding the standard session implied
    /// by the trace metadata.
    #[arg(long, value_name = "TOML")]
    pub protocol: Option<PathBuf>,

    /// Cross-check the trace metadata against this catalog actuator.
    #[arg(long)]
    pub actuator: Option<String>,

    /// Catalog file overriding the config-directory default.
    #[arg(long, value_name = "CSV")]
    pub catalog: Option<PathBuf>,

    /// Output curve CSV; raw points land in a `_points` sibling file.
    #[arg(long, short, value_name = "CSV")]
    pub out: PathBuf,
}

pub fn cmd_analyze(g: &GlobalOpts, a: &AnalyzeArgs) -> CmdResult<()> {
    let trace = io::read_trace(&a.trace).or_usage()?;
    if let Some(id) = &a.actuator {
        let catalog = open_catalog(g, a.catalog.as_deref())?;
        let rec = catalog
            .get(id)
            .ok_or_else(|| Failure::usage(anyhow!("actuator '{id}' not found in catalog")))?;
        let expected_pressurized = rec.rest_length_at(trace.meta.pressure_psi).or_usage()?;
        let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1e-12);
        if rel(trace.meta.rest_length_unpressurized_mm, rec.initial_length_mm) > 1e-6
            || rel(trace.meta.rest_length_pressurized_mm, expected_pressurized) > 1e-6
        {
            return Err(Failure::usage(anyhow!(
                "trace metadata disagrees with catalog entry '{id}': trace rest lengths \
                 {} / {} mm, catalog {} / {} mm at {} psi",
                trace.meta.rest_length_unpressurized_mm,
                trace.meta.rest_length_pressurized_mm,
                rec.initial_length_mm,
                expected_pressurized,
                trace.meta.pressure_psi,
            )));
        }
    }
    let cfg = match &a.protocol {
        Some(path) => load_protocol_config(path)?,
        None => ProtocolConfig::standard(
            trace.meta.pressure_psi,
            trace.meta.rest_length_unpressurized_mm,
            trace.meta.rest_length_pressurized_mm,
        ),
    };
    let curve = build_fv_curve(&trace, &cfg).or_numerical()?;
    io::write_fv_curve(&a.out, &curve).or_usage()?;
    if !g.quiet {
        println!(
            "wrote {}: {} velocity groups from {} ramps",
            a.out.display(),
            curve.groups.len(),
            curve.points.len(),
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// fit

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitStage {
    /// Stage 1: the bare control element.
    Control,
    /// Stage 2: a sheath element on top of frozen control parameters.
    Sheath,
}

impl FitStage {
    fn as_str(self) -> &'static str {
        match self {
            FitStage::Control => "control",
            FitStage::Sheath => "sheath",
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input curve CSV (from `vma analyze`).
    #[arg(long, value_name = "CSV")]
    pub fv: PathBuf,

    /// Which chain element to identify.
    #[arg(long, value_enum)]
    pub stage: FitStage,

    /// Stage-1 parameter file held fixed while fitting the sheath.
    #[arg(long, value_name = "JSON")]
    pub control_params: Option<PathBuf>,

    /// Fit per-velocity group means instead of pooled raw points.
    #[arg(long)]
    pub means: bool,

    /// Optimizer iteration budget.
    #[arg(long, default_value_t = 200)]
    pub max_iterations: usize,

    /// Output parameter file (JSON).
    #[arg(long, short, value_name = "JSON")]
    pub out: PathBuf,
}

pub fn cmd_fit(g: &GlobalOpts, a: &FitArgs) -> CmdResult<()> {
    let curve = io::read_fv_curve(&a.fv).or_usage()?;
    if !a.means && curve.points.is_empty() {
        return Err(Failure::usage(anyhow!(
            "{} has no raw-points sibling; pass --means to fit the group means",
            a.fv.display()
        )));
    }
    let opts = FitOptions {
        max_iterations: a.max_iterations,
        use_group_means: a.means,
        ..FitOptions::default()
    };
    let problem = FitProblem::from_curve(&curve, a.means).or_usage()?;
    let fit = match a.stage {
        FitStage::Control => {
            if a.control_params.is_some() {
                return Err(Failure::usage(anyhow!(
                    "--control-params only applies to --stage sheath"
                )));
            }
            fit_control(&problem, &opts).or_numerical()?
        }
        FitStage::Sheath => {
            let path = a.control_params.as_ref().ok_or_else(|| {
                Failure::usage(anyhow!(
                    "--stage sheath requires --control-params from a stage-1 fit"
                ))
            })?;
            let control_file = ParamFile::load(path).or_usage()?;
            let control_chain = control_file.chain().or_usage()?;
            let problem = problem.with_frozen_control(*control_chain.control());
            fit_sheath(&problem, &opts).or_numerical()?
        }
    };
    let chain = fit.chain().or_numerical()?;
    let mut file = ParamFile::from_chain(&chain, curve.eps0, curve.d_eps).or_numerical()?;
    file.pressure_psi = Some(curve.pressure_psi);
    if !curve.actuator_id.is_empty() {
        file.actuator_id = Some(curve.actuator_id.clone());
    }
    let file = file.with_fit(a.stage.as_str(), &fit);
    file.save(&a.out).or_usage()?;
    if !g.quiet {
        let e = &fit.element;
        match a.stage {
            FitStage::Control => println!(
                "wrote {}: kappa = {:.6}, gamma = {:.6} 1/s",
                a.out.display(),
                e.kappa,
                e.gamma
            ),
            FitStage::Sheath => println!(
                "wrote {}: sheath kappa = {:.6}, gamma = {:.6} 1/s, beta = {:.6}",
                a.out.display(),
                e.kappa,
                e.gamma,
                e.beta
            ),
        }
        println!(
            "  sse = {:.3e}, r_squared = {:.6}, {} iterations, converged = {}",
            fit.sse, fit.r_squared, fit.iterations, fit.converged
        );
        if fit.degenerate.iter().any(|&d| d) {
            let names: [&str; 3] = ["kappa", "gamma", "beta"];
            let flagged: Vec<&str> = fit
                .degenerate
                .iter()
                .zip(names)
                .filter_map(|(&d, n)| d.then_some(n))
                .collect();
            println!(
                "  warning: data does not constrain {}",
                flagged.join(", ")
            );
        }
    }
    if !fit.converged {
        return Err(Failure::numerical(anyhow!(
            "fit did not converge within {} iterations (best parameters written to {})",
            a.max_iterations,
            a.out.display()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// fv

#[derive(Debug, Args)]
pub struct FvArgs {
    /// Model parameter file (JSON).
    #[arg(long, value_name = "JSON")]
    pub params: PathBuf,

    /// Smallest velocity magnitude [1/s].
    #[arg(long = "v-min")]
    pub v_min: f64,

    /// Largest velocity magnitude [1/s].
    #[arg(long = "v-max")]
    pub v_max: f64,

    /// Log-spaced grid points per side.
    #[arg(long, short, default_value_t = 40)]
    pub n: usize,

    /// Tabulate only the shortening side instead of mirroring to extension.
    #[arg(long)]
    pub no_mirror: bool,

    /// Output curve CSV.
    #[arg(long, short, value_name = "CSV")]
    pub out: PathBuf,
}

pub fn cmd_fv(g: &GlobalOpts, a: &FvArgs) -> CmdResult<()> {
    if !(a.v_min.is_finite() && a.v_min > 0.0 && a.v_min < a.v_max) {
        return Err(Failure::usage(anyhow!(
            "need 0 < --v-min < --v-max, got {} and {}",
            a.v_min,
            a.v_max
        )));
    }
    if a.n == 0 {
        return Err(Failure::usage(anyhow!("--n must be at least 1")));
    }
    let params = ParamFile::load(&a.params).or_usage()?;
    let chain = params.chain().or_usage()?;
    let grid = if a.no_mirror {
        log_grid(a.v_min, a.v_max, a.n)
    } else {
        signed_log_grid(a.v_min, a.v_max, a.n)
    };
    // The file column is a shortening velocity (positive shortens); the
    // model's ramp velocity is positive when extending, hence the sign flip.
    let rows: Vec<AnalyticRow> = grid
        .iter()
        .map(|&v| {
            let r = RampSpec::new(params.eps0, params.d_eps, -v)?;
            Ok(AnalyticRow {
                v,
                fv: chain.fv(&r),
                dfv: chain.dfv(&r),
            })
        })
        .collect::<vma_core::Result<_>>()
        .or_numerical()?;
    let asymptote = chain.dfv_asymptote(params.d_eps, params.eps0).or_numerical()?;
    let v_alpha_90 = chain.v_alpha_exact(params.d_eps, 0.9).or_numerical()?;
    let mut md = Metadata::new();
    md.insert("model_arity".into(), params.model_arity.to_string());
    md.insert("control_kappa".into(), io::fmt_f64(params.control_kappa));
    md.insert("control_gamma".into(), io::fmt_f64(params.control_gamma));
    if let (Some(k), Some(gm), Some(b)) =
        (params.sheath_kappa, params.sheath_gamma, params.sheath_beta)
    {
        md.insert("sheath_kappa".into(), io::fmt_f64(k));
        md.insert("sheath_gamma".into(), io::fmt_f64(gm));
        md.insert("sheath_beta".into(), io::fmt_f64(b));
    }
    md.insert("eps0".into(), io::fmt_f64(params.eps0));
    md.insert("d_eps".into(), io::fmt_f64(params.d_eps));
    md.insert("asymptote".into(), io::fmt_f64(asymptote));
    md.insert("v_alpha_90".into(), io::fmt_f64(v_alpha_90));
    if let Some(id) = &params.actuator_id {
        md.insert("actuator_id".into(), id.clone());
    }
    if let Some(p) = params.pressure_psi {
        md.insert("pressure_psi".into(), io::fmt_f64(p));
    }
    io::write_analytic_curve(&a.out, &md, &rows).or_usage()?;
    if !g.quiet {
        println!(
            "wrote {}: {} rows, asymptote {:.6}, v_alpha(0.9) {:.6} 1/s",
            a.out.display(),
            rows.len(),
            asymptote,
            v_alpha_90,
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Sweep study description (TOML).
    #[arg(long, value_name = "TOML")]
    pub spec: PathBuf,

    /// Directory receiving the curve files and manifest.json.
    #[arg(long = "out-dir", value_name = "DIR")]
    pub out_dir: PathBuf,
}

pub fn cmd_sweep(g: &GlobalOpts, a: &SweepArgs) -> CmdResult<()> {
    let spec = SweepSpec::load(&a.spec).or_usage()?;
    std::fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("creating {}", a.out_dir.display()))
        .or_usage()?;
    let grid = signed_log_grid(spec.v_min, spec.v_max, spec.points_per_side);
    let control_chain = spec.control_chain().or_usage()?;
    let stem = spec.stem();

    let mut files = Vec::new();
    let mut asymptote = Vec::new();
    let mut v_alpha_90 = Vec::new();
    let mut distance: Option<Vec<f64>> = spec.sheath.as_ref().map(|_| Vec::new());
    for (i, &value) in spec.values.iter().enumerate() {
        let chain = spec.chain_at(value).or_usage()?;
        let rows: Vec<AnalyticRow> = grid
            .iter()
            .map(|&v| {
                let r = RampSpec::new(spec.eps0, spec.d_eps, -v)?;
                Ok(AnalyticRow {
                    v,
                    fv: chain.fv(&r),
                    dfv: chain.dfv(&r),
                })
            })
            .collect::<vma_core::Result<_>>()
            .or_numerical()?;
        let asy = chain.dfv_asymptote(spec.d_eps, spec.eps0).or_numerical()?;
        let v90 = chain.v_alpha_exact(spec.d_eps, 0.9).or_numerical()?;
        let mut md = Metadata::new();
        md.insert("parameter".into(), spec.parameter.as_str().into());
        md.insert("element".into(), format!("{:?}", spec.element).to_lowercase());
        md.insert("value".into(), io::fmt_f64(value));
        md.insert("eps0".into(), io::fmt_f64(spec.eps0));
        md.insert("d_eps".into(), io::fmt_f64(spec.d_eps));
        md.insert("asymptote".into(), io::fmt_f64(asy));
        md.insert("v_alpha_90".into(), io::fmt_f64(v90));
        let name = format!("{stem}_{i:02}.csv");
        io::write_analytic_curve(&a.out_dir.join(&name), &md, &rows).or_usage()?;
        if let Some(d) = distance.as_mut() {
            let mean_sq = grid
                .iter()
                .map(|&v| {
                    let r = RampSpec::new(spec.eps0, spec.d_eps, -v)?;
                    let diff = chain.dfv(&r) - control_chain.dfv(&r);
                    Ok(diff * diff)
                })
                .sum::<vma_core::Result<f64>>()
                .or_numerical()?
                / grid.len() as f64;
            d.push(mean_sq.sqrt());
        }
        files.push(name);
        asymptote.push(asy);
        v_alpha_90.push(v90);
    }

    let mut order: Vec<usize> = (0..spec.values.len()).collect();
    order.sort_by(|&i, &j| spec.values[i].partial_cmp(&spec.values[j]).expect("finite"));
    let (check_name, ok) = match spec.parameter {
        SweptParameter::Kappa => (
            "asymptote_strictly_increasing",
            is_strictly_increasing(&order, &asymptote),
        ),
        SweptParameter::Gamma => (
            "v_alpha_90_strictly_increasing",
            is_strictly_increasing(&order, &v_alpha_90),
        ),
        SweptParameter::Beta => (
            "distance_to_control_strictly_increasing",
            is_strictly_increasing(&order, distance.as_ref().expect("beta sweeps have a sheath")),
        ),
    };
    let mut checks = BTreeMap::new();
    checks.insert(check_name.to_string(), ok);

    let manifest = SweepManifest {
        parameter: spec.parameter,
        element: spec.element,
        values: spec.values.clone(),
        files,
        asymptote,
        v_alpha_90,
        distance_to_control: distance,
        checks,
    };
    let manifest_path = a.out_dir.join("manifest.json");
    let mut body = serde_json::to_string_pretty(&manifest)
        .context("encoding manifest")
        .or_usage()?;
    body.push('\n');
    io::write_atomic(&manifest_path, body.as_bytes()).or_usage()?;
    if !g.quiet {
        println!(
            "wrote {} curve files and {}",
            manifest.files.len(),
            manifest_path.display()
        );
        for (name, ok) in &manifest.checks {
            println!("  {name}: {}", if *ok { "ok" } else { "FAILED" });
        }
    }
    if manifest.checks.values().any(|ok| !ok) {
        return Err(Failure::numerical(anyhow!(
            "ordering check failed; see {}",
            manifest_path.display()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sync

#[derive(Debug, Args)]
pub struct SyncArgs {
    /// Machine trace CSV (without a pressure column).
    #[arg(long, value_name = "CSV")]
    pub machine: PathBuf,

    /// Pressure log CSV (time_s, pressure_psi).
    #[arg(long, value_name = "CSV")]
    pub pressure: PathBuf,

    /// Clock offset [s] mapping log time to machine time; estimated from
    /// the data when omitted.
    #[arg(long, allow_hyphen_values = true)]
    pub offset: Option<f64>,

    /// Output merged trace CSV.
    #[arg(long, short, value_name = "CSV")]
    pub out: PathBuf,
}

pub fn cmd_sync(g: &GlobalOpts, a: &SyncArgs) -> CmdResult<()> {
    let machine = io::read_trace(&a.machine).or_usage()?;
    let log = io::read_pressure_log(&a.pressure).or_usage()?;
    let offset = match a.offset {
        Some(o) if o.is_finite() => o,
        Some(o) => return Err(Failure::usage(anyhow!("--offset must be finite, got {o}"))),
        None => estimate_offset(&machine, &log).or_numerical()?,
    };
    let merged = synchronize(&machine, &log, Some(offset)).or_numerical()?;
    io::write_trace(&a.out, &merged).or_usage()?;
    if !g.quiet {
        println!(
            "wrote {} using clock offset {} s",
            a.out.display(),
            io::fmt_f64(offset)
        );
    }
    Ok(())
}
