//! Configuration ingestion, scenario orchestration, initial-data
//! construction, and result emission (CSV ledgers, JSON reports, plot-script
//! text).
//!
//! The JSON config is the single entry point; every command is a function of
//! a parsed `RunConfig` so the binary, the tests, and the Python bindings
//! share one code path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decay::{self, DecayProfile, FitReport, StabilizationCheck, StabilizationConstants};
use crate::dynamics::{self, AbortInfo, EnergyLedger, LedgerRow, SimSetup, State};
use crate::error::{Error, Result};
use crate::geometry::{self, Geometry, Mode};
use crate::nonlinearity::{self, ModelParams, ValidationReport};
use crate::well::{self, Classification, Label, WellDiagnostics, WellGeometry};

/// Relative energy-identity residual tolerance at the default resolution.
pub const RESIDUAL_TOL: f64 = 1e-3;

// ---------------------------------------------------------------------------
// Config schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub params: ModelParams,
    pub initial: InitialConfig,
    pub time: TimeConfig,
    /// Mandatory: every randomized search is seeded from it.
    pub seed: u64,
    pub outputs: OutputsConfig,
    #[serde(default)]
    pub well: WellConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub mode: Mode,
    pub dims: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShapeKind {
    #[serde(rename = "gaussian-bump")]
    GaussianBump,
    #[serde(rename = "single-mode")]
    SingleMode,
    #[serde(rename = "file")]
    File,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub shape: ShapeKind,
    pub amplitude: f64,
    pub auto_scale_into_well: bool,
    /// Snapshot path for the "file" shape.
    #[serde(default)]
    pub path: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    /// Step override; the stability gate still applies.
    #[serde(default)]
    pub dt: Option<f64>,
    pub t_end: f64,
    /// Steps between ledger rows (default: about 800 rows per run).
    #[serde(default)]
    pub output_stride: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsConfig {
    pub ledger: Option<String>,
    pub report: Option<String>,
    pub snapshot: Option<String>,
    pub decay_csv: Option<String>,
    pub plot_script: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WellConfig {
    /// Well margin as a fraction of s*.
    pub delta_frac: f64,
    /// Restarts for the embedding-constant ascent.
    pub restarts: usize,
    /// Sampled directions for the depth estimate.
    pub depth_directions: usize,
    /// Bypass the estimation searches and take the constants as given.
    pub synthetic_constants: Option<SyntheticConstants>,
}

impl Default for WellConfig {
    fn default() -> Self {
        WellConfig {
            delta_frac: well::DEFAULT_DELTA_FRAC,
            restarts: 16,
            depth_directions: 64,
            synthetic_constants: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConstants {
    pub m_f: f64,
    pub m_h: f64,
    pub k1: f64,
    pub k2: f64,
}

/// Parse a config from JSON text; unknown keys are rejected and parse errors
/// carry the line/column location.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Apply `key=value` overrides with dotted paths (`time.t_end=5`). Values
/// parse as JSON scalars first, falling back to strings.
pub fn apply_overrides(text: &str, overrides: &[String]) -> Result<String> {
    let mut value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| Error::Config(format!("config parse error: {e}")))?;
    for ov in overrides {
        let (key, raw) = ov
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{ov}' is not key=value")))?;
        let leaf: serde_json::Value =
            serde_json::from_str(raw).unwrap_or(serde_json::Value::String(raw.to_string()));
        let parts: Vec<&str> = key.split('.').collect();
        let mut node = &mut value;
        for part in &parts[..parts.len() - 1] {
            node = node
                .as_object_mut()
                .ok_or_else(|| {
                    Error::Config(format!("override path '{key}' does not address an object"))
                })?
                .entry(part.to_string())
                .or_insert_with(|| serde_json::Value::Object(Default::default()));
        }
        let obj = node.as_object_mut().ok_or_else(|| {
            Error::Config(format!("override path '{key}' does not address an object"))
        })?;
        obj.insert(parts.last().unwrap().to_string(), leaf);
    }
    Ok(serde_json::to_string_pretty(&value)?)
}

// ---------------------------------------------------------------------------
// Validation command
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub ok: bool,
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn run_validate(cfg: &RunConfig) -> ValidationSummary {
    let mut report: ValidationReport = nonlinearity::validate_params(&cfg.params);
    let mut violations = std::mem::take(&mut report.violations);
    let mut warnings = std::mem::take(&mut report.warnings);

    match geometry::build_geometry(cfg.geometry.mode, &cfg.geometry.dims) {
        Ok(geom) => {
            if let Some(dt) = cfg.time.dt {
                let cap = dynamics::max_stable_dt(&geom);
                if !(dt > 0.0) || dt > cap {
                    violations.push(format!(
                        "dt = {dt:.6e} violates the stability bound {cap:.6e}"
                    ));
                }
            }
        }
        Err(e) => violations.push(e.to_string()),
    }
    if !(cfg.time.t_end > 0.0) {
        violations.push(format!("t_end must be positive (got {})", cfg.time.t_end));
    }
    if !(cfg.well.delta_frac > 0.0 && cfg.well.delta_frac < 1.0) {
        violations.push(format!(
            "well.delta_frac must lie in (0, 1) (got {})",
            cfg.well.delta_frac
        ));
    }
    if cfg.initial.shape == ShapeKind::File && cfg.initial.path.is_none() {
        violations.push("initial.shape = \"file\" requires initial.path".into());
    }
    if cfg.params.p >= 5.0 {
        warnings.push("decay analysis requires strictly p < 5".into());
    }
    ValidationSummary {
        ok: violations.is_empty(),
        violations,
        warnings,
    }
}

fn require_valid_config(cfg: &RunConfig) -> Result<Vec<String>> {
    let summary = run_validate(cfg);
    if let Some(first) = summary.violations.first() {
        return Err(Error::Validation(first.clone()));
    }
    Ok(summary.warnings)
}

// ---------------------------------------------------------------------------
// Initial data
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AutoScaleInfo {
    /// Multiplier applied on top of the configured amplitude.
    pub applied_scale: f64,
    pub x_norm: f64,
    pub j: f64,
    pub norm_cap: f64,
    pub j_cap: f64,
}

fn shape_fields(cfg: &RunConfig, geom: &Geometry) -> Result<State> {
    let amp = cfg.initial.amplitude;
    let mut state = State::zero(geom);
    match cfg.initial.shape {
        ShapeKind::GaussianBump => {
            state.u = match geom.mode {
                Mode::Reduced2d => geom.eval_on_omega(|x| {
                    let r2 = (x[0] - 0.55).powi(2) + (x[1] - 0.45).powi(2);
                    amp * (std::f64::consts::PI * x[0]).sin() * (1.0 - x[1]) * (-r2 / 0.045).exp()
                }),
                Mode::Full3d => geom.eval_on_omega(|x| {
                    let r2 = (x[0] - 0.55).powi(2) + (x[1] - 0.45).powi(2) + (x[2] - 0.45).powi(2);
                    amp * (std::f64::consts::PI * x[0]).sin()
                        * (std::f64::consts::PI * x[1]).sin()
                        * (1.0 - x[2])
                        * (-r2 / 0.045).exp()
                }),
            };
            let bubble = |t: f64| 16.0 * t * t * (1.0 - t) * (1.0 - t);
            state.w = match geom.mode {
                Mode::Reduced2d => geom.eval_on_gamma(|x| 0.5 * amp * bubble(x[0])),
                Mode::Full3d => geom.eval_on_gamma(|x| 0.5 * amp * bubble(x[0]) * bubble(x[1])),
            };
        }
        ShapeKind::SingleMode => {
            state.u = match geom.mode {
                Mode::Reduced2d => geom.eval_on_omega(|x| {
                    amp * (std::f64::consts::PI * x[0]).sin()
                        * (0.5 * std::f64::consts::PI * x[1]).cos()
                }),
                Mode::Full3d => geom.eval_on_omega(|x| {
                    amp * (std::f64::consts::PI * x[0]).sin()
                        * (std::f64::consts::PI * x[1]).sin()
                        * (0.5 * std::f64::consts::PI * x[2]).cos()
                }),
            };
        }
        ShapeKind::File => {
            let path = cfg.initial.path.as_ref().expect("validated");
            let snap = read_snapshot(Path::new(path))?;
            if snap.dims != geom.dims {
                return Err(Error::ShapeMismatch(format!(
                    "snapshot dims {:?} do not match geometry {:?}",
                    snap.dims, geom.dims
                )));
            }
            state.u = snap.u.iter().map(|x| amp * x).collect();
            state.v = snap.v.iter().map(|x| amp * x).collect();
            state.w = snap.w.iter().map(|x| amp * x).collect();
            state.z = snap.z.iter().map(|x| amp * x).collect();
        }
    }
    state.enforce_bc(geom);
    Ok(state)
}

/// Build the configured initial datum, optionally bisecting the amplitude
/// until membership in the closed invariant set holds with a 10% margin on
/// both defining inequalities.
pub fn build_initial(
    cfg: &RunConfig,
    geom: &Geometry,
    params: &ModelParams,
    wellgeom: &WellGeometry,
) -> Result<(State, Option<AutoScaleInfo>)> {
    let mut state = shape_fields(cfg, geom)?;
    if !cfg.initial.auto_scale_into_well {
        return Ok((state, None));
    }
    let pot = well::pair_potentials(&state.u, &state.w, geom, params);
    let base_norm = pot.x_sq.sqrt();
    if base_norm == 0.0 {
        return Err(Error::Validation(
            "auto-scale requires a nonzero initial shape".into(),
        ));
    }
    let s_delta = wellgeom.s_star - wellgeom.delta;
    let norm_cap = 0.9 * s_delta;
    let j_cap = 0.9 * wellgeom.lambda(s_delta);
    // J along the amplitude ray in closed form.
    let j_of = |a: f64| -> f64 {
        0.5 * a * a * pot.x_sq
            - a.powf(params.p + 1.0) * pot.int_f
            - a.powf(params.q + 1.0) * pot.int_h
    };
    let a_hi = norm_cap / base_norm;
    let scale = if j_of(a_hi) <= j_cap {
        a_hi
    } else {
        let (mut lo, mut hi) = (0.0, a_hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if j_of(mid) <= j_cap {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    for x in state
        .u
        .iter_mut()
        .chain(state.v.iter_mut())
        .chain(state.w.iter_mut())
        .chain(state.z.iter_mut())
    {
        *x *= scale;
    }
    if !well::check_in_tilde_w1_delta(&state.u, &state.w, geom, params, wellgeom) {
        return Err(Error::Validation(
            "auto-scale failed to place the datum in the invariant set".into(),
        ));
    }
    let info = AutoScaleInfo {
        applied_scale: scale,
        x_norm: scale * base_norm,
        j: j_of(scale),
        norm_cap,
        j_cap,
    };
    Ok((state, Some(info)))
}

// ---------------------------------------------------------------------------
// Prepared context shared by the commands
// ---------------------------------------------------------------------------

pub struct Prepared {
    pub geom: Geometry,
    pub params: ModelParams,
    pub wellgeom: WellGeometry,
    pub diagnostics: Option<WellDiagnostics>,
    pub consts: StabilizationConstants,
    pub initial: State,
    pub auto_scale: Option<AutoScaleInfo>,
    pub dt: f64,
    pub stride: usize,
    pub warnings: Vec<String>,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let warnings = require_valid_config(cfg)?;
    let geom = geometry::build_geometry(cfg.geometry.mode, &cfg.geometry.dims)?;
    let params = cfg.params;

    let (wellgeom, diagnostics) = match &cfg.well.synthetic_constants {
        Some(sc) => (
            WellGeometry::synthetic(
                sc.m_f,
                sc.m_h,
                sc.k1,
                sc.k2,
                params.p,
                params.q,
                cfg.well.delta_frac,
            )?,
            None,
        ),
        None => {
            let build = well::build_well_geometry(
                &geom,
                &params,
                cfg.seed,
                cfg.well.delta_frac,
                cfg.well.restarts,
                cfg.well.depth_directions,
            )?;
            (build.geometry, Some(build.diagnostics))
        }
    };
    let consts = decay::compute_stabilization_constants(&geom, &wellgeom)?;

    let (initial, auto_scale) = build_initial(cfg, &geom, &params, &wellgeom)?;

    let dt = cfg.time.dt.unwrap_or_else(|| dynamics::default_dt(&geom));
    let n_steps = (cfg.time.t_end / dt).ceil().max(1.0) as usize;
    let stride = cfg
        .time
        .output_stride
        .unwrap_or_else(|| (n_steps / 800).max(1));

    Ok(Prepared {
        geom,
        params,
        wellgeom,
        diagnostics,
        consts,
        initial,
        auto_scale,
        dt,
        stride,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// A constant plus a one-line note on how it was obtained.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProvValue {
    pub value: f64,
    pub provenance: String,
}

fn pv(value: f64, provenance: &str) -> ProvValue {
    ProvValue {
        value,
        provenance: provenance.to_string(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WellConstantsReport {
    pub m_f: ProvValue,
    pub m_h: ProvValue,
    pub k1: ProvValue,
    pub k2: ProvValue,
    pub s_star: ProvValue,
    pub s_star_residual: ProvValue,
    pub lambda_at_s_star: ProvValue,
    pub delta: ProvValue,
    /// None encodes an infinite depth (sources disabled).
    pub d_est: Option<ProvValue>,
    pub c_min: ProvValue,
    pub c1_star: ProvValue,
    pub c2_star: ProvValue,
    pub c_star: ProvValue,
    pub c0: ProvValue,
    pub xi: ProvValue,
    pub t0: ProvValue,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialReport {
    pub classification: Classification,
    pub in_tilde_w1_delta: bool,
    pub auto_scale: Option<AutoScaleInfo>,
    pub e_total0: f64,
    pub e_quad0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchDiagnostics {
    pub k1_converged: bool,
    pub k1_restart_gap: f64,
    pub k2_converged: bool,
    pub k2_restart_gap: f64,
    pub depth_degenerate: bool,
    pub depth_directions: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WellReport {
    pub constants: WellConstantsReport,
    pub initial: InitialReport,
    pub diagnostics: Option<SearchDiagnostics>,
    pub warnings: Vec<String>,
}

pub fn well_report(cfg: &RunConfig, prep: &Prepared) -> WellReport {
    let wg = &prep.wellgeom;
    let synthetic = cfg.well.synthetic_constants.is_some();
    let k_prov = if synthetic {
        "given constant (synthetic mode)".to_string()
    } else {
        format!(
            "rayleigh-quotient normalized ascent, {} restarts, seed {}, tol 1e-8",
            cfg.well.restarts, cfg.seed
        )
    };
    let m_prov = if synthetic {
        "given constant (synthetic mode)".to_string()
    } else {
        "scale/(p+1): tight under source homogeneity".to_string()
    };
    let d_prov = if synthetic {
        "not estimated in synthetic mode".to_string()
    } else {
        format!(
            "min ray maximum over {} seeded smooth directions + perturbation refinement (upper bound)",
            cfg.well.depth_directions
        )
    };
    let constants = WellConstantsReport {
        m_f: pv(wg.m_f, &m_prov),
        m_h: pv(wg.m_h, &m_prov),
        k1: pv(wg.k1, &k_prov),
        k2: pv(wg.k2, &k_prov),
        s_star: pv(
            wg.s_star,
            "bisection on the Lambda'(s) = 0 equation, residual <= 1e-12",
        ),
        s_star_residual: pv(wg.s_star_residual, "defect of the s* equation at the root"),
        lambda_at_s_star: pv(wg.lambda_at_s_star, "Lambda evaluated at s*"),
        delta: pv(wg.delta, "delta_frac * s_star"),
        d_est: if wg.d_est.is_finite() {
            Some(pv(wg.d_est, &d_prov))
        } else {
            None
        },
        c_min: pv(wg.c_min, "min(p+1, q+1)"),
        c1_star: pv(
            prep.consts.c1_star,
            "reciprocal smallest eigenvalue of the separable mixed stencil (exact)",
        ),
        c2_star: pv(
            prep.consts.c2_star,
            "inverse power iteration on the dense clamped biharmonic",
        ),
        c_star: pv(
            prep.consts.c_star,
            "power iteration on the trace/Laplacian pencil",
        ),
        c0: pv(prep.consts.c0, "max{1, c1*+c*, 2 c2*}"),
        xi: pv(
            prep.consts.xi,
            "(s*-delta) substitution into the xi sum; < 1 strictly",
        ),
        t0: pv(
            prep.consts.t0,
            "max{1, 1/|Omega|, 1/|Gamma|, 8 c c0/((c-2)(1-xi))}",
        ),
    };
    let cls = well::classify(
        &prep.initial.u,
        &prep.initial.w,
        &prep.geom,
        &prep.params,
        &prep.wellgeom,
    );
    let in_set = well::check_in_tilde_w1_delta(
        &prep.initial.u,
        &prep.initial.w,
        &prep.geom,
        &prep.params,
        &prep.wellgeom,
    );
    let initial = InitialReport {
        classification: cls,
        in_tilde_w1_delta: in_set,
        auto_scale: prep.auto_scale.clone(),
        e_total0: well::total_energy(&prep.initial, &prep.geom, &prep.params),
        e_quad0: well::quadratic_energy(&prep.initial, &prep.geom),
    };
    let diagnostics = prep.diagnostics.as_ref().map(|d| SearchDiagnostics {
        k1_converged: d.k1.converged,
        k1_restart_gap: d.k1.restart_gap,
        k2_converged: d.k2.converged,
        k2_restart_gap: d.k2.restart_gap,
        depth_degenerate: d.depth.degenerate,
        depth_directions: d.depth.directions,
    });
    WellReport {
        constants,
        initial,
        diagnostics,
        warnings: prep.warnings.clone(),
    }
}

/// Command `well`: compute and emit the well geometry + the classification
/// of the configured initial datum.
pub fn run_well(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<WellReport> {
    let prep = prepare(cfg)?;
    let report = well_report(cfg, &prep);
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(cfg.outputs.report.as_deref().unwrap_or("report.json"));
        std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Simulate command
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateReport {
    pub well: WellReport,
    pub dt: f64,
    pub t_end: f64,
    pub output_stride: usize,
    pub max_abs_residual: f64,
    pub global_existence: well::GlobalExistenceReport,
    pub aborted: Option<AbortInfo>,
}

#[derive(Debug)]
pub struct SimulateOutcome {
    pub report: SimulateReport,
    pub ledger: EnergyLedger,
    pub final_state: State,
}

/// Flat snapshot dump: JSON header fields plus the four field arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub mode: Mode,
    pub dims: Vec<usize>,
    pub gamma_dims: Vec<usize>,
    pub time: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub z: Vec<f64>,
}

pub fn write_snapshot(state: &State, geom: &Geometry, path: &Path) -> Result<()> {
    let snap = Snapshot {
        mode: geom.mode,
        dims: geom.dims.clone(),
        gamma_dims: geom.gamma_dims.clone(),
        time: state.t,
        u: state.u.clone(),
        v: state.v.clone(),
        w: state.w.clone(),
        z: state.z.clone(),
    };
    std::fs::write(path, serde_json::to_string(&snap)?)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Fixed CSV schema: `t,E,calE,J,D,residual,label`.
pub fn ledger_to_csv(ledger: &EnergyLedger) -> String {
    let mut out = String::from("t,E,calE,J,D,residual,label\n");
    for r in &ledger.rows {
        out.push_str(&format!(
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}\n",
            r.t, r.e_quad, r.e_total, r.j_potential, r.dissipation, r.residual, r.label
        ));
    }
    out
}

pub fn ledger_from_csv(text: &str) -> Result<EnergyLedger> {
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if k == 0 {
            if line.trim() != "t,E,calE,J,D,residual,label" {
                return Err(Error::Config(format!("unexpected CSV header: {line}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(Error::Config(format!(
                "CSV line {} has {} columns",
                k + 1,
                cols.len()
            )));
        }
        let f = |i: usize| -> Result<f64> {
            cols[i]
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("CSV line {}: {e}", k + 1)))
        };
        rows.push(LedgerRow {
            t: f(0)?,
            e_quad: f(1)?,
            e_total: f(2)?,
            j_potential: f(3)?,
            dissipation: f(4)?,
            residual: f(5)?,
            label: cols[6].parse::<Label>().map_err(Error::Config)?,
        });
    }
    let e_total0 = rows.first().map(|r| r.e_total).unwrap_or(0.0);
    Ok(EnergyLedger { rows, e_total0 })
}

fn plot_script_text(csv_name: &str) -> String {
    format!(
        "#!/usr/bin/env python3\n\
         # Plot the energy ledger columns against time.\n\
         import csv\n\
         import matplotlib.pyplot as plt\n\
         ts, e, cal_e, d = [], [], [], []\n\
         with open({csv_name:?}) as fh:\n\
             for row in csv.DictReader(fh):\n\
                 ts.append(float(row['t']))\n\
                 e.append(float(row['E']))\n\
                 cal_e.append(float(row['calE']))\n\
                 d.append(float(row['D']))\n\
         fig, ax = plt.subplots()\n\
         ax.semilogy(ts, e, label='E')\n\
         ax.semilogy(ts, cal_e, label='calE')\n\
         ax.semilogy(ts, [max(x, 1e-300) for x in d], label='D')\n\
         ax.set_xlabel('t')\n\
         ax.legend()\n\
         fig.savefig('energy.png', dpi=150)\n\
         print('wrote energy.png')\n"
    )
}

/// Command `simulate`: run the configured scenario, emit the CSV ledger and
/// the JSON report. A runtime instability is recorded in the report (the
/// binary maps it to exit code 3).
pub fn run_simulate(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<SimulateOutcome> {
    let prep = prepare(cfg)?;
    simulate_prepared(cfg, &prep, out_dir)
}

pub fn simulate_prepared(
    cfg: &RunConfig,
    prep: &Prepared,
    out_dir: Option<&Path>,
) -> Result<SimulateOutcome> {
    let setup = SimSetup {
        geom: &prep.geom,
        params: &prep.params,
        well: &prep.wellgeom,
        dt: prep.dt,
        t_end: cfg.time.t_end,
        output_stride: prep.stride,
        residual_tol: RESIDUAL_TOL,
        coupling: true,
    };
    let sim = dynamics::simulate(&setup, &prep.initial)?;
    let global_existence =
        well::global_existence_monitor(&sim.ledger, &prep.wellgeom, RESIDUAL_TOL);
    let report = SimulateReport {
        well: well_report(cfg, prep),
        dt: prep.dt,
        t_end: cfg.time.t_end,
        output_stride: prep.stride,
        max_abs_residual: sim.ledger.max_abs_residual(),
        global_existence,
        aborted: sim.aborted.clone(),
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let csv_name = cfg.outputs.ledger.as_deref().unwrap_or("ledger.csv");
        std::fs::write(dir.join(csv_name), ledger_to_csv(&sim.ledger))?;
        let report_name = cfg.outputs.report.as_deref().unwrap_or("report.json");
        std::fs::write(
            dir.join(report_name),
            serde_json::to_string_pretty(&report)?,
        )?;
        if let Some(snap) = &cfg.outputs.snapshot {
            write_snapshot(&sim.final_state, &prep.geom, &dir.join(snap))?;
        }
        if let Some(plot) = &cfg.outputs.plot_script {
            std::fs::write(dir.join(plot), plot_script_text(csv_name))?;
        }
    }
    Ok(SimulateOutcome {
        report,
        ledger: sim.ledger,
        final_state: sim.final_state,
    })
}

// ---------------------------------------------------------------------------
// Decay command
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayReport {
    pub profile: DecayProfile,
    pub fit: FitReport,
    pub stabilization: StabilizationConstants,
    pub stabilization_check: StabilizationCheck,
    /// sigma(t/T0 - 1) envelope available (needs a fitted C-tilde).
    pub envelope_emitted: bool,
    pub flags: Vec<String>,
    pub simulate: SimulateReport,
}

pub struct DecayOutcome {
    pub report: DecayReport,
    pub ledger: EnergyLedger,
}

/// Command `decay`: analyze the ledger of the configured scenario (reusing
/// `<out>/ledger.csv` if present, running the simulation otherwise), fit the
/// decay branch, and check the stabilization estimate.
pub fn run_decay(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<DecayOutcome> {
    if cfg.params.p >= 5.0 {
        return Err(Error::Validation(format!(
            "decay analysis requires strictly p < 5 (got p = {})",
            cfg.params.p
        )));
    }
    let prep = prepare(cfg)?;

    let csv_name = cfg
        .outputs
        .ledger
        .as_deref()
        .unwrap_or("ledger.csv")
        .to_string();
    let reuse = out_dir.map(|d| d.join(&csv_name)).filter(|p| p.exists());
    let (ledger, sim_report) = match reuse {
        Some(path) => {
            let ledger = ledger_from_csv(&std::fs::read_to_string(&path)?)?;
            let global_existence =
                well::global_existence_monitor(&ledger, &prep.wellgeom, RESIDUAL_TOL);
            let report = SimulateReport {
                well: well_report(cfg, &prep),
                dt: prep.dt,
                t_end: cfg.time.t_end,
                output_stride: prep.stride,
                max_abs_residual: ledger.max_abs_residual(),
                global_existence,
                aborted: None,
            };
            (ledger, report)
        }
        None => {
            let out = simulate_prepared(cfg, &prep, out_dir)?;
            (out.ledger, out.report)
        }
    };

    let profile = decay::beta_and_b(&prep.params.damping_u, &prep.params.damping_w)?;
    let fit = decay::fit_decay_rate(&ledger, &profile)?;
    let mut consts = prep.consts.clone();
    let check = decay::check_stabilization(&ledger, &consts, profile.big_phi());
    consts.c_tilde = check.c_tilde;

    let mut flags = Vec::new();
    if check.short_run {
        flags.push(format!(
            "short run: t_end = {} < 3 T0 = {}",
            cfg.time.t_end,
            3.0 * consts.t0
        ));
    }
    if check.undamped {
        flags.push(
            "positive energy with zero dissipation: stabilization estimate inapplicable".into(),
        );
    }
    if fit.truncated {
        flags.push("fit window truncated at the noise floor".into());
    }

    // sigma envelope: calE(t) <= sigma(t/T0 - 1) for t > T0, built from the
    // fitted C-tilde when one exists.
    let envelope = consts.c_tilde.map(|ct| {
        let phi = profile.big_phi();
        let horizon = (cfg.time.t_end / consts.t0 - 1.0).max(0.0);
        let sol = if horizon > 0.0 {
            decay::solve_decay_ode(ledger.e_total0, |s| ct * phi(s), horizon, 256)
        } else {
            vec![(0.0, ledger.e_total0)]
        };
        move |t: f64| -> f64 {
            let tau = (t / consts.t0 - 1.0).max(0.0);
            // Piecewise-linear lookup in the precomputed table.
            if sol.len() == 1 || tau <= 0.0 {
                return sol[0].1;
            }
            let idx = sol.partition_point(|&(tt, _)| tt < tau);
            if idx >= sol.len() {
                return sol.last().unwrap().1;
            }
            let (t1, s1) = sol[idx - 1];
            let (t2, s2) = sol[idx];
            s1 + (s2 - s1) * (tau - t1) / (t2 - t1)
        }
    });

    let report = DecayReport {
        profile: profile.clone(),
        fit,
        stabilization: consts.clone(),
        stabilization_check: check,
        envelope_emitted: envelope.is_some(),
        flags,
        simulate: sim_report,
    };

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let report_name = cfg.outputs.report.as_deref().unwrap_or("report.json");
        std::fs::write(
            dir.join(report_name),
            serde_json::to_string_pretty(&report)?,
        )?;
        let decay_name = cfg.outputs.decay_csv.as_deref().unwrap_or("decay.csv");
        let mut csv = String::from("t,calE,sigma_envelope\n");
        for r in &ledger.rows {
            let env = envelope.as_ref().map(|f| f(r.t));
            match env {
                Some(e) => csv.push_str(&format!("{:.12e},{:.12e},{:.12e}\n", r.t, r.e_total, e)),
                None => csv.push_str(&format!("{:.12e},{:.12e},\n", r.t, r.e_total)),
            }
        }
        std::fs::write(dir.join(decay_name), csv)?;
    }

    Ok(DecayOutcome { report, ledger })
}

// ---------------------------------------------------------------------------
// Sweep command
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepEntry {
    pub key: String,
    pub value: String,
    pub dir: PathBuf,
    pub ok: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepIndex {
    pub entries: Vec<SweepEntry>,
}

/// Command `sweep`: run the decay pipeline for every value of one overridden
/// key, each run isolated in its own subdirectory; runs execute on a small
/// thread pool.
pub fn run_sweep(config_text: &str, out_root: &Path, vary: &str) -> Result<SweepIndex> {
    let (key, values) = vary
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--vary '{vary}' is not key=v1,v2,...")))?;
    let values: Vec<String> = values.split(',').map(|s| s.trim().to_string()).collect();
    if values.is_empty() {
        return Err(Error::Config("--vary needs at least one value".into()));
    }
    std::fs::create_dir_all(out_root)?;

    let mut entries: Vec<SweepEntry> = Vec::new();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (i, val) in values.iter().enumerate() {
            let key = key.to_string();
            let val = val.clone();
            let dir = out_root.join(format!(
                "run_{i}_{}",
                val.replace(['/', '\\', '.', ' '], "_")
            ));
            let text = config_text.to_string();
            handles.push(scope.spawn(move || {
                let result = (|| -> Result<()> {
                    let adjusted = apply_overrides(&text, &[format!("{key}={val}")])?;
                    let cfg = parse_config(&adjusted)?;
                    std::fs::create_dir_all(&dir)?;
                    run_decay(&cfg, Some(&dir))?;
                    Ok(())
                })();
                SweepEntry {
                    key,
                    value: val,
                    dir,
                    ok: result.is_ok(),
                    error: result.err().map(|e| e.to_string()),
                }
            }));
        }
        for h in handles {
            entries.push(h.join().expect("sweep worker panicked"));
        }
    });
    entries.sort_by(|a, b| a.dir.cmp(&b.dir));
    let index = SweepIndex { entries };
    std::fs::write(
        out_root.join("index.json"),
        serde_json::to_string_pretty(&index)?,
    )?;
    Ok(index)
}

// ---------------------------------------------------------------------------
// Canned scenario configs (used by tests and handy from the CLI docs)
// ---------------------------------------------------------------------------

/// Scenario A: reduced 2D 64x64, p = q = 2, linear damping, auto-scaled
/// datum, T_end = 10.
pub fn scenario_a_json() -> String {
    scenario_json(2.0, 1.0, 10.0, None)
}

/// Scenario B: same geometry, p = q = 3, cubic damping, T_end = 50.
pub fn scenario_b_json() -> String {
    scenario_json(3.0, 3.0, 50.0, None)
}

pub fn scenario_json(p: f64, damping_exp: f64, t_end: f64, delta_frac: Option<f64>) -> String {
    let mut cfg = serde_json::json!({
        "geometry": { "mode": "reduced-2d", "dims": [64, 64] },
        "params": {
            "p": p,
            "q": p,
            "damping_u": { "near_exp": damping_exp, "far_exp": damping_exp, "coeff": 1.0 },
            "damping_w": { "near_exp": damping_exp, "far_exp": damping_exp, "coeff": 1.0 },
            "source_scale_f": 1.0,
            "source_scale_h": 1.0
        },
        "initial": { "shape": "gaussian-bump", "amplitude": 1.0, "auto_scale_into_well": true },
        "time": { "t_end": t_end },
        "seed": 42,
        "outputs": {}
    });
    if let Some(frac) = delta_frac {
        cfg["well"] = serde_json::json!({ "delta_frac": frac });
    }
    serde_json::to_string_pretty(&cfg).expect("static config")
}
