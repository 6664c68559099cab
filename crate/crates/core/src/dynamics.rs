//! Time integration of the coupled chamber/plate system and the energy
//! ledger every invariance and decay check consumes.
//!
//! The scheme is leapfrog in both displacements with the two subsystems
//! staggered half a step apart: the chamber pair `(u, v)` keeps `u` at
//! integer times and `v` at half-integers, the plate pair `(w, z)` keeps `w`
//! at half-integers and `z` at integer times. Each velocity kick is then
//! time-centered: the chamber kick at `t_n` sees the plate velocity `z_n`
//! through the ghost flux, and the plate kick at `t_{n+1/2}` sees the fresh
//! trace velocity `v_{n+1/2}`, so the skew coupling pair cancels in the
//! energy balance to second order.
//!
//! Damping is treated implicitly per node in midpoint form: a kick from
//! `v_old` to `v_new` with the force evaluated at `m = (v_old + v_new)/2`
//! reduces to the scalar monotone equation `m + (dt/2) g(m) = a`, which has
//! a unique root bracketed by `[min(0,a), max(0,a)]`. The kick then removes
//! exactly `dt g(m) m >= 0` from the kinetic energy, so the dissipation sign
//! is unconditionally correct and the damping stays second-order accurate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, BoundaryField, Field, Geometry, Mode};
use crate::nonlinearity::{eval_f, eval_g, eval_h, DampingProfile, ModelParams};
use crate::well::{self, Label, WellGeometry};

/// Snapshot of the full system at one time instant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct State {
    pub t: f64,
    pub u: Field,
    /// Chamber velocity u_t.
    pub v: Field,
    pub w: BoundaryField,
    /// Plate velocity w_t.
    pub z: BoundaryField,
}

impl State {
    pub fn zero(geom: &Geometry) -> Self {
        State {
            t: 0.0,
            u: geom.zero_field(),
            v: geom.zero_field(),
            w: geom.zero_boundary_field(),
            z: geom.zero_boundary_field(),
        }
    }

    /// Re-impose the rigid-wall and clamped rows.
    pub fn enforce_bc(&mut self, geom: &Geometry) {
        geom.enforce_dirichlet(&mut self.u);
        geom.enforce_dirichlet(&mut self.v);
        geom.enforce_clamped(&mut self.w);
        geom.enforce_clamped(&mut self.z);
    }

    pub fn check_shapes(&self, geom: &Geometry) -> Result<()> {
        geom.check_field(&self.u)?;
        geom.check_field(&self.v)?;
        geom.check_boundary_field(&self.w)?;
        geom.check_boundary_field(&self.z)?;
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
            && self.w.iter().chain(&self.z).all(|x| x.is_finite())
    }
}

/// One output row of the energy ledger.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LedgerRow {
    pub t: f64,
    /// Quadratic energy E.
    pub e_quad: f64,
    /// Total energy (kinetic + potential J).
    pub e_total: f64,
    /// Potential energy J.
    pub j_potential: f64,
    /// Cumulative dissipation D(t).
    pub dissipation: f64,
    /// Relative energy-identity residual at this row.
    pub residual: f64,
    pub label: Label,
}

/// Time-ordered energy bookkeeping for one trajectory.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub rows: Vec<LedgerRow>,
    /// Total energy at t = 0, the reference for the identity residual.
    pub e_total0: f64,
}

impl EnergyLedger {
    pub fn dissipation_series(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.dissipation).collect()
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.residual.abs())
            .fold(0.0, f64::max)
    }

    /// Linear interpolation of (e_total, dissipation) at time t.
    pub fn interp(&self, t: f64) -> Option<(f64, f64)> {
        let rows = &self.rows;
        if rows.is_empty() || t < rows[0].t || t > rows.last().unwrap().t + 1e-12 {
            return None;
        }
        let pos = rows.partition_point(|r| r.t < t);
        if pos == 0 {
            return Some((rows[0].e_total, rows[0].dissipation));
        }
        if pos >= rows.len() {
            let r = rows.last().unwrap();
            return Some((r.e_total, r.dissipation));
        }
        let (a, b) = (&rows[pos - 1], &rows[pos]);
        let s = if b.t > a.t {
            (t - a.t) / (b.t - a.t)
        } else {
            0.0
        };
        Some((
            a.e_total + s * (b.e_total - a.e_total),
            a.dissipation + s * (b.dissipation - a.dissipation),
        ))
    }
}

/// Energy-identity residual of row `i`, relative to max(E_total(0), 1e-14):
/// r = (calE(t_i) + D(t_i) - calE(0)) / max(calE(0), 1e-14).
pub fn energy_identity_residual(ledger: &EnergyLedger, i: usize) -> f64 {
    let row = &ledger.rows[i];
    (row.e_total + row.dissipation - ledger.e_total0) / ledger.e_total0.max(1e-14)
}

// ---------------------------------------------------------------------------
// Implicit damping solve
// ---------------------------------------------------------------------------

fn eval_g_prime(s: f64, profile: &DampingProfile) -> f64 {
    let c = profile.coeff;
    if c == 0.0 {
        return 0.0;
    }
    let a = s.abs();
    if a < 1.0 {
        let k = profile.near_exp;
        if a == 0.0 {
            if k > 1.0 {
                0.0
            } else if k == 1.0 {
                c
            } else {
                f64::INFINITY
            }
        } else {
            c * k * a.powf(k - 1.0)
        }
    } else {
        let m = profile.far_exp;
        c * m * a.powf(m - 1.0)
    }
}

/// Solve `v + lambda g(v) = a` for the unique root (monotonicity), with
/// residual at most `1e-12 (1 + |a|)`. Newton safeguarded by the bracket
/// `[min(0,a), max(0,a)]`; `warm` is a starting guess (e.g. the previous
/// velocity at the same node).
pub fn solve_damping_scalar(a: f64, lambda: f64, profile: &DampingProfile, warm: f64) -> f64 {
    debug_assert!(lambda > 0.0);
    if profile.coeff == 0.0 || a == 0.0 {
        return a;
    }
    if profile.is_globally_linear() {
        return a / (1.0 + lambda * profile.coeff);
    }
    let (mut lo, mut hi) = if a > 0.0 { (0.0, a) } else { (a, 0.0) };
    let tol = 1e-12 * (1.0 + a.abs());
    let mut x = if warm.is_finite() {
        warm.clamp(lo, hi)
    } else {
        0.5 * (lo + hi)
    };
    if x == 0.0 {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let phi = x + lambda * eval_g(x, profile) - a;
        if phi.abs() <= tol {
            return x;
        }
        if phi > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let dphi = 1.0 + lambda * eval_g_prime(x, profile);
        let newton = x - phi / dphi;
        x = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    x
}

/// Implicit-midpoint damping kick, fused and applied in place:
/// per node, `m` solves `m + lambda g(m) = v + lambda accel` (`lambda` is the
/// half step) and the velocity updates to `v <- 2 m - v`. The midpoints land
/// in `m_out` (also the warm starts for the next kick). Returns the weighted
/// dissipation rate `sum w (a - m) m / lambda`: `(a - m)/lambda` is exactly
/// the damping force the kick applied, so the energy bookkeeping is exact to
/// rounding.
fn damped_kick(
    v: &mut [f64],
    m_out: &mut [f64],
    accel: &[f64],
    weights: &[f64],
    lambda: f64,
    profile: &DampingProfile,
) -> f64 {
    let n = v.len();
    if profile.is_disabled() {
        for i in 0..n {
            let a = v[i] + lambda * accel[i];
            m_out[i] = a;
            v[i] = 2.0 * a - v[i];
        }
        return 0.0;
    }
    let mut raw = 0.0;
    if profile.is_globally_linear() {
        let inv = 1.0 / (1.0 + lambda * profile.coeff);
        for i in 0..n {
            let a = v[i] + lambda * accel[i];
            let m = a * inv;
            m_out[i] = m;
            v[i] = 2.0 * m - v[i];
            raw += weights[i] * ((a - m) * m).max(0.0);
        }
        return raw / lambda;
    }
    let tol_rel = 1e-12;
    if profile.near_exp == 3.0 && profile.far_exp == 3.0 {
        // Pure cubic force: Newton from the previous midpoint converges in a
        // couple of iterations at explicit-CFL step sizes.
        let c = lambda * profile.coeff;
        for i in 0..n {
            let a = v[i] + lambda * accel[i];
            let mut x = m_out[i];
            for _ in 0..3 {
                let x2 = x * x;
                let phi = x + c * x2 * x - a;
                x -= phi / (1.0 + 3.0 * c * x2);
            }
            let ok = (x + c * x * x * x - a).abs() <= tol_rel * (1.0 + a.abs());
            if !ok {
                x = solve_damping_scalar(a, lambda, profile, x);
            }
            m_out[i] = x;
            v[i] = 2.0 * x - v[i];
            raw += weights[i] * ((a - x) * x).max(0.0);
        }
        return raw / lambda;
    }
    // General monotone force: a few fixed-point sweeps from the previous
    // midpoint (the damping term is a small perturbation at CFL-limited
    // steps), with the robust solver as fallback.
    for i in 0..n {
        let a = v[i] + lambda * accel[i];
        let mut x = m_out[i];
        for _ in 0..4 {
            x = a - lambda * eval_g(x, profile);
        }
        let ok = (x + lambda * eval_g(x, profile) - a).abs() <= tol_rel * (1.0 + a.abs());
        if !ok {
            x = solve_damping_scalar(a, lambda, profile, x);
        }
        m_out[i] = x;
        v[i] = 2.0 * x - v[i];
        raw += weights[i] * ((a - x) * x).max(0.0);
    }
    raw / lambda
}

// ---------------------------------------------------------------------------
// Stability bounds
// ---------------------------------------------------------------------------

/// Largest step the explicit scheme tolerates: `2 / sqrt(lambda_max)` for the
/// stiffer of the two operators (the plate biharmonic in practice).
pub fn max_stable_dt(geom: &Geometry) -> f64 {
    let lap_max: f64 = geom.h.iter().map(|h| 4.0 / (h * h)).sum();
    let wave = 2.0 / lap_max.sqrt();
    wave.min(plate_stable_dt(geom))
}

fn plate_stable_dt(geom: &Geometry) -> f64 {
    // lambda_max(B) is the square of the plate-Laplacian bound, so the step
    // limit is 2 / lambda_max(Delta_Gamma): h^2/2 for the beam, h^2/4 for
    // the 2D plate.
    let plate_lap: f64 = match geom.mode {
        Mode::Reduced2d => 4.0 / (geom.h[0] * geom.h[0]),
        Mode::Full3d => 4.0 / (geom.h[0] * geom.h[0]) + 4.0 / (geom.h[1] * geom.h[1]),
    };
    2.0 / plate_lap
}

/// Default step: a 4x margin under the plate limit, which dominates the
/// chamber limit on every practical grid.
pub fn default_dt(geom: &Geometry) -> f64 {
    0.25 * geom.h_omega().min(plate_stable_dt(geom))
}

// ---------------------------------------------------------------------------
// Integrator
// ---------------------------------------------------------------------------

pub struct Integrator<'a> {
    geom: &'a Geometry,
    params: &'a ModelParams,
    dt: f64,
    steps_done: u64,
    u: Field,
    z: BoundaryField,
    v_half: Field,
    /// Midpoint velocity of the latest chamber kick = synchronized velocity
    /// at the current integer time.
    v_mid: Field,
    w_half: BoundaryField,
    /// Scratch: plate kick midpoints.
    z_mid: BoundaryField,
    /// Scratch: acceleration buffers.
    accel_u: Field,
    accel_w: BoundaryField,
    /// Dissipation of all completed kicks (the latest chamber kick straddles
    /// the current report time; see `dissipation`).
    d_accum: f64,
    /// Chamber dissipation rate of the straddling kick.
    d_rate_last: f64,
    /// Test hook: with the coupling off the two subsystems evolve
    /// independently, which is what the modal oracle can predict exactly.
    coupling: bool,
}

impl<'a> Integrator<'a> {
    pub fn new(
        initial: &State,
        params: &'a ModelParams,
        geom: &'a Geometry,
        dt: f64,
    ) -> Result<Self> {
        Self::with_coupling(initial, params, geom, dt, true)
    }

    pub fn with_coupling(
        initial: &State,
        params: &'a ModelParams,
        geom: &'a Geometry,
        dt: f64,
        coupling: bool,
    ) -> Result<Self> {
        initial.check_shapes(geom)?;
        if !(dt > 0.0) || dt > max_stable_dt(geom) {
            return Err(Error::Validation(format!(
                "dt = {dt:.6e} violates the stability bound {:.6e}",
                max_stable_dt(geom)
            )));
        }
        let mut state = initial.clone();
        state.enforce_bc(geom);

        // Bootstrap the staggered representation: implicit-midpoint half
        // kick for the chamber velocity, half drift for the plate
        // displacement.
        let mut accel_u = geom.zero_field();
        Self::fill_accel_u(&state.u, &state.z, params, geom, coupling, &mut accel_u)?;
        let mut v_half = state.v.clone();
        let mut mid = state.v.clone();
        let boot_rate = damped_kick(
            &mut v_half,
            &mut mid,
            &accel_u,
            geom.omega_weights(),
            0.25 * dt,
            &params.damping_u,
        );
        let boot_diss = 0.5 * dt * boot_rate;

        let w_half: Vec<f64> = state
            .w
            .iter()
            .zip(&state.z)
            .map(|(w, z)| w + 0.5 * dt * z)
            .collect();

        Ok(Integrator {
            geom,
            params,
            dt,
            steps_done: 0,
            u: state.u,
            z_mid: state.z.clone(),
            z: state.z,
            v_mid: state.v,
            v_half,
            w_half,
            accel_u,
            accel_w: geom.zero_boundary_field(),
            d_accum: boot_diss,
            d_rate_last: 0.0,
            coupling,
        })
    }

    fn fill_accel_u(
        u: &[f64],
        z: &[f64],
        params: &ModelParams,
        geom: &Geometry,
        coupling: bool,
        out: &mut Field,
    ) -> Result<()> {
        if coupling {
            geometry::apply_laplacian_into(u, z, geom, out)?;
        } else {
            let zero = geom.zero_boundary_field();
            geometry::apply_laplacian_into(u, &zero, geom, out)?;
        }
        let sf = params.source_scale_f;
        if sf != 0.0 {
            // f(0) = 0 keeps the rigid-wall rows untouched.
            let p = params.p;
            if p == 2.0 {
                for (a, &ui) in out.iter_mut().zip(u) {
                    *a += sf * ui.abs() * ui;
                }
            } else if p == 3.0 {
                for (a, &ui) in out.iter_mut().zip(u) {
                    *a += sf * ui * ui * ui;
                }
            } else {
                for (a, &ui) in out.iter_mut().zip(u) {
                    *a += eval_f(ui, params);
                }
            }
        }
        Ok(())
    }

    fn fill_accel_w(&mut self, v_half_trace_of: &[f64]) -> Result<()> {
        let acc = geometry::apply_biharmonic(&self.w_half, self.geom)?;
        self.accel_w.copy_from_slice(&acc);
        for a in self.accel_w.iter_mut() {
            *a = -*a;
        }
        if self.params.source_scale_h != 0.0 {
            for (a, &wi) in self.accel_w.iter_mut().zip(&self.w_half) {
                *a += eval_h(wi, self.params);
            }
        }
        if self.coupling {
            for g in 0..self.accel_w.len() {
                self.accel_w[g] -= v_half_trace_of[self.geom.gamma_to_omega(g)];
            }
        }
        self.geom.enforce_clamped(&mut self.accel_w);
        Ok(())
    }

    /// Advance one full step. The wave displacement drifts with the stored
    /// half velocity, the plate kick uses the fresh trace of that velocity,
    /// and the chamber kick closes the step with the updated plate velocity.
    ///
    /// Rigid-wall and clamped rows stay zero without re-enforcement: their
    /// accelerations vanish by construction, so zero velocities are a fixed
    /// point of every kick.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.dt;
        let geom = self.geom;

        // Drift u to t_{n+1}.
        for (u, &v) in self.u.iter_mut().zip(&self.v_half) {
            *u += dt * v;
        }

        // Plate kick over [t_n, t_{n+1}], centered at t_{n+1/2}: midpoint
        // damping solve against the fresh trace velocity.
        let v_half = std::mem::take(&mut self.v_half);
        self.fill_accel_w(&v_half)?;
        self.v_half = v_half;
        let rate_z = damped_kick(
            &mut self.z,
            &mut self.z_mid,
            &self.accel_w,
            geom.gamma_weights(),
            0.5 * dt,
            &self.params.damping_w,
        );
        self.d_accum += dt * rate_z;

        // Drift w to t_{n+3/2}.
        for (w, &z) in self.w_half.iter_mut().zip(&self.z) {
            *w += dt * z;
        }

        // Chamber kick over [t_{n+1/2}, t_{n+3/2}], centered at t_{n+1},
        // with the updated plate velocity in the ghost flux.
        Self::fill_accel_u(
            &self.u,
            &self.z,
            self.params,
            geom,
            self.coupling,
            &mut self.accel_u,
        )?;
        let rate_v = damped_kick(
            &mut self.v_half,
            &mut self.v_mid,
            &self.accel_u,
            geom.omega_weights(),
            0.5 * dt,
            &self.params.damping_u,
        );
        self.d_accum += dt * rate_v;
        self.d_rate_last = rate_v;
        self.steps_done += 1;
        Ok(())
    }

    pub fn time(&self) -> f64 {
        self.steps_done as f64 * self.dt
    }

    /// Cumulative dissipation up to the current integer time. The latest
    /// chamber kick straddles that time by half a step, so half of its
    /// contribution is deferred.
    pub fn dissipation(&self) -> f64 {
        if self.steps_done == 0 {
            0.0
        } else {
            self.d_accum - 0.5 * self.dt * self.d_rate_last
        }
    }

    /// Synchronized state at the current integer time. The chamber velocity
    /// is the midpoint of the latest kick (centered exactly there), the
    /// plate displacement the exact back-drift.
    pub fn sync_state(&self) -> State {
        let w: Vec<f64> = self
            .w_half
            .iter()
            .zip(&self.z)
            .map(|(w, z)| w - 0.5 * self.dt * z)
            .collect();
        State {
            t: self.time(),
            u: self.u.clone(),
            v: self.v_mid.clone(),
            w,
            z: self.z.clone(),
        }
    }
}

/// Advance a synchronized state by one step (stand-alone form of the
/// integrator; `simulate` keeps the staggered representation across steps).
pub fn step(state: &State, params: &ModelParams, geom: &Geometry, dt: f64) -> Result<State> {
    let mut integ = Integrator::new(state, params, geom, dt)?;
    integ.step()?;
    let mut out = integ.sync_state();
    out.t += state.t;
    if !out.is_finite() {
        return Err(Error::Instability {
            t: state.t,
            reason: "non-finite field values".into(),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Simulation driver
// ---------------------------------------------------------------------------

pub struct SimSetup<'a> {
    pub geom: &'a Geometry,
    pub params: &'a ModelParams,
    /// Well geometry for the per-row classification hook.
    pub well: &'a WellGeometry,
    pub dt: f64,
    pub t_end: f64,
    /// Steps between ledger rows.
    pub output_stride: usize,
    /// Relative tolerance on the energy-identity residual; a total-energy
    /// rise beyond it aborts the run as an instability.
    pub residual_tol: f64,
    pub coupling: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AbortInfo {
    pub t_last_good: f64,
    pub reason: String,
}

pub struct SimOutcome {
    pub ledger: EnergyLedger,
    pub final_state: State,
    pub aborted: Option<AbortInfo>,
}

fn ledger_row(state: &State, d: f64, e_total0: f64, setup: &SimSetup) -> LedgerRow {
    let pot = well::pair_potentials(&state.u, &state.w, setup.geom, setup.params);
    let kinetic = 0.5
        * (geometry::inner_omega(&state.v, &state.v, setup.geom)
            + geometry::inner_gamma(&state.z, &state.z, setup.geom));
    let j = pot.j();
    let e_quad = kinetic + 0.5 * pot.x_sq;
    let e_total = kinetic + j;
    let residual = (e_total + d - e_total0) / e_total0.max(1e-14);
    let label = well::classify_potentials(&pot, setup.params, setup.well).label;
    LedgerRow {
        t: state.t,
        e_quad,
        e_total,
        j_potential: j,
        dissipation: d,
        residual,
        label,
    }
}

/// Run the coupled system to `t_end`, emitting ledger rows every
/// `output_stride` steps (plus the initial and final instants).
///
/// An increase of the total energy beyond the residual tolerance, or any
/// non-finite field value, stops the run; the partial ledger and the last
/// good time are returned so the caller can report them.
pub fn simulate(setup: &SimSetup, initial: &State) -> Result<SimOutcome> {
    let n_steps = (setup.t_end / setup.dt).ceil() as u64;
    let dt = if n_steps > 0 {
        setup.t_end / n_steps as f64
    } else {
        setup.dt
    };
    let stride = setup.output_stride.max(1) as u64;

    let mut init = initial.clone();
    init.t = 0.0;
    init.enforce_bc(setup.geom);
    let mut integ = Integrator::with_coupling(&init, setup.params, setup.geom, dt, setup.coupling)?;

    let mut ledger = EnergyLedger::default();
    let first = ledger_row(&init, 0.0, 0.0, setup);
    ledger.e_total0 = first.e_total;
    let mut row0 = first;
    row0.residual = 0.0;
    ledger.rows.push(row0);

    let abort_slack = setup.residual_tol * ledger.e_total0.abs().max(1e-14);
    let mut prev_e_total = ledger.e_total0;
    let mut aborted = None;

    for n in 1..=n_steps {
        integ.step()?;
        if n % stride == 0 || n == n_steps {
            let state = integ.sync_state();
            if !state.is_finite() {
                aborted = Some(AbortInfo {
                    t_last_good: ledger.rows.last().unwrap().t,
                    reason: "non-finite field values".into(),
                });
                break;
            }
            let row = ledger_row(&state, integ.dissipation(), ledger.e_total0, setup);
            if row.e_total > prev_e_total + abort_slack {
                aborted = Some(AbortInfo {
                    t_last_good: ledger.rows.last().unwrap().t,
                    reason: format!(
                        "total energy increased from {prev_e_total:.6e} to {:.6e}",
                        row.e_total
                    ),
                });
                break;
            }
            prev_e_total = row.e_total;
            ledger.rows.push(row);
        }
    }

    Ok(SimOutcome {
        ledger,
        final_state: integ.sync_state(),
        aborted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_geometry;
    use crate::nonlinearity::DampingProfile;
    use std::f64::consts::PI;

    fn quiet_params() -> ModelParams {
        ModelParams {
            p: 2.0,
            q: 2.0,
            damping_u: DampingProfile::linear(0.5),
            damping_w: DampingProfile::linear(0.5),
            source_scale_f: 0.0,
            source_scale_h: 0.0,
        }
    }

    fn dummy_well() -> WellGeometry {
        WellGeometry::synthetic(1.0, 1.0, 1.0, 1.0, 3.0, 3.0, 0.05).unwrap()
    }

    #[test]
    fn damping_scalar_examples() {
        let lin = DampingProfile::linear(1.0);
        assert!((solve_damping_scalar(3.0, 0.5, &lin, 0.0) - 2.0).abs() < 1e-12);
        let cubic = DampingProfile {
            near_exp: 3.0,
            far_exp: 3.0,
            coeff: 1.0,
        };
        assert!((solve_damping_scalar(2.0, 1.0, &cubic, 0.0) - 1.0).abs() < 1e-10);
        assert_eq!(solve_damping_scalar(0.0, 1.0, &cubic, 0.5), 0.0);
    }

    #[test]
    fn damping_scalar_residual_bound() {
        let profiles = [
            DampingProfile {
                near_exp: 0.5,
                far_exp: 3.0,
                coeff: 2.0,
            },
            DampingProfile {
                near_exp: 3.0,
                far_exp: 1.0,
                coeff: 0.3,
            },
            DampingProfile {
                near_exp: 2.0,
                far_exp: 5.0,
                coeff: 1.0,
            },
        ];
        let mut rng = crate::rng::Rng::new(9);
        for pr in &profiles {
            for _ in 0..200 {
                let a = 20.0 * rng.next_symmetric();
                let lam = 1e-4 + rng.next_f64();
                let v = solve_damping_scalar(a, lam, pr, 0.0);
                let res = (v + lam * eval_g(v, pr) - a).abs();
                assert!(
                    res <= 1e-12 * (1.0 + a.abs()),
                    "residual {res:.2e} for a={a}, lam={lam}"
                );
                assert!(v.abs() <= a.abs() + 1e-15, "root inside bracket");
            }
        }
    }

    #[test]
    fn zero_state_is_fixed_point() {
        let geom = build_geometry(Mode::Reduced2d, &[16, 16]).unwrap();
        let params = quiet_params();
        let state = State::zero(&geom);
        let out = step(&state, &params, &geom, default_dt(&geom)).unwrap();
        assert!(out.u.iter().all(|&x| x == 0.0));
        assert!(out.w.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn cfl_rejected_up_front() {
        let geom = build_geometry(Mode::Reduced2d, &[16, 16]).unwrap();
        let params = quiet_params();
        let state = State::zero(&geom);
        let err = step(&state, &params, &geom, 10.0 * max_stable_dt(&geom));
        assert!(err.is_err());
    }

    /// Single chamber mode, no sources, linear damping, coupling off: every
    /// node follows the same scalar ODE  A'' = -mu A - c A'  with mu the
    /// discrete eigenvalue, so a high-accuracy 2x2 integration of that ODE
    /// predicts the ledger energy; the defect must shrink like dt^2.
    #[test]
    fn modal_oracle_second_order() {
        let geom = build_geometry(Mode::Reduced2d, &[17, 17]).unwrap();
        let params = ModelParams {
            p: 2.0,
            q: 2.0,
            damping_u: DampingProfile::linear(0.5),
            damping_w: DampingProfile::linear(0.5),
            source_scale_f: 0.0,
            source_scale_h: 0.0,
        };
        let phi = geom.eval_on_omega(|x| (PI * x[0]).sin() * (0.5 * PI * x[1]).cos());
        let z0 = geom.zero_boundary_field();
        let lphi = geometry::apply_laplacian(&phi, &z0, &geom).unwrap();
        let mu =
            -geometry::inner_omega(&lphi, &phi, &geom) / geometry::inner_omega(&phi, &phi, &geom);
        let norm_sq = geometry::inner_omega(&phi, &phi, &geom);
        let c = 0.5;

        // Reference modal energy at time t via fine RK4 on [A; A'].
        let modal_energy = |t: f64| -> f64 {
            let mut y = [1.0, 0.0];
            let n = 20000usize;
            let hstep = t / n as f64;
            let rhs = |y: [f64; 2]| [y[1], -mu * y[0] - c * y[1]];
            for _ in 0..n {
                let k1 = rhs(y);
                let k2 = rhs([y[0] + 0.5 * hstep * k1[0], y[1] + 0.5 * hstep * k1[1]]);
                let k3 = rhs([y[0] + 0.5 * hstep * k2[0], y[1] + 0.5 * hstep * k2[1]]);
                let k4 = rhs([y[0] + hstep * k3[0], y[1] + hstep * k3[1]]);
                y[0] += hstep / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
                y[1] += hstep / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
            }
            0.5 * (y[1] * y[1] + mu * y[0] * y[0]) * norm_sq
        };

        let well = dummy_well();
        let run = |dt: f64| -> f64 {
            let setup = SimSetup {
                geom: &geom,
                params: &params,
                well: &well,
                dt,
                t_end: 1.0,
                output_stride: 16,
                residual_tol: 1.0,
                coupling: false,
            };
            let mut init = State::zero(&geom);
            init.u = phi.clone();
            let out = simulate(&setup, &init).unwrap();
            assert!(out.aborted.is_none());
            out.ledger
                .rows
                .iter()
                .map(|r| (r.e_quad - modal_energy(r.t)).abs())
                .fold(0.0, f64::max)
        };

        let dt0 = 1.0 / 512.0;
        let coarse = run(dt0);
        let fine = run(0.5 * dt0);
        assert!(
            coarse / fine > 3.0 && coarse / fine < 5.0,
            "expected ~4x reduction, got {coarse:.3e} / {fine:.3e} = {:.2}",
            coarse / fine
        );
        // Sanity: oscillation actually decays.
        assert!(modal_energy(1.0) < 0.7 * modal_energy(0.0));
    }

    /// With damping and sources off the coupled scheme must conserve the
    /// quadratic energy to O(dt^2), uniformly over the run.
    #[test]
    fn conservative_limit() {
        let geom = build_geometry(Mode::Reduced2d, &[17, 17]).unwrap();
        let params = ModelParams {
            p: 2.0,
            q: 2.0,
            damping_u: DampingProfile::linear(0.0),
            damping_w: DampingProfile::linear(0.0),
            source_scale_f: 0.0,
            source_scale_h: 0.0,
        };
        let well = dummy_well();
        let run = |dt: f64| -> f64 {
            let setup = SimSetup {
                geom: &geom,
                params: &params,
                well: &well,
                dt,
                t_end: 1.0,
                output_stride: 8,
                residual_tol: 1.0,
                coupling: true,
            };
            let mut init = State::zero(&geom);
            init.u = geom.eval_on_omega(|x| (PI * x[0]).sin() * (0.5 * PI * x[1]).cos());
            init.w = geom.eval_on_gamma(|x| {
                let t = x[0];
                16.0 * t * t * (1.0 - t) * (1.0 - t)
            });
            let out = simulate(&setup, &init).unwrap();
            assert!(out.aborted.is_none());
            let e0 = out.ledger.rows[0].e_quad;
            out.ledger
                .rows
                .iter()
                .map(|r| (r.e_quad - e0).abs() / e0)
                .fold(0.0, f64::max)
        };
        let hg = geom.h_gamma();
        let dt0 = 0.25 * 0.5 * hg * hg;
        let coarse = run(dt0);
        let fine = run(0.5 * dt0);
        assert!(coarse < 1e-3, "drift too large: {coarse:.3e}");
        assert!(
            coarse / fine > 3.0,
            "expected second order, got ratio {:.2}",
            coarse / fine
        );
    }

    /// One step with sources on and damping off: the energy gain matches the
    /// midpoint estimate of the source work to third order in dt.
    #[test]
    fn one_step_source_work_balance() {
        let geom = build_geometry(Mode::Reduced2d, &[17, 17]).unwrap();
        let params = ModelParams {
            p: 2.0,
            q: 2.0,
            damping_u: DampingProfile::linear(0.0),
            damping_w: DampingProfile::linear(0.0),
            source_scale_f: 1.0,
            source_scale_h: 1.0,
        };
        let mut init = State::zero(&geom);
        init.u = geom.eval_on_omega(|x| 0.4 * (PI * x[0]).sin() * (0.5 * PI * x[1]).cos());
        init.v = geom.eval_on_omega(|x| 0.3 * (2.0 * PI * x[0]).sin() * (1.0 - x[1]));
        init.w = geom.eval_on_gamma(|x| {
            let t = x[0];
            4.0 * t * t * (1.0 - t) * (1.0 - t)
        });
        init.z = geom.eval_on_gamma(|x| {
            let t = x[0];
            2.0 * t * t * (1.0 - t) * (1.0 - t)
        });
        init.enforce_bc(&geom);

        let defect = |dt: f64| -> f64 {
            let next = step(&init, &params, &geom, dt).unwrap();
            let e = |s: &State| {
                0.5 * (geometry::inner_omega(&s.v, &s.v, &geom)
                    + geometry::inner_gamma(&s.z, &s.z, &geom)
                    + geometry::x_norm_sq(&s.u, &s.w, &geom))
            };
            let gain = e(&next) - e(&init);
            // Midpoint source work over the step.
            let fu: Vec<f64> = init
                .u
                .iter()
                .zip(&next.u)
                .map(|(a, b)| eval_f(0.5 * (a + b), &params))
                .collect();
            let hw: Vec<f64> = init
                .w
                .iter()
                .zip(&next.w)
                .map(|(a, b)| eval_h(0.5 * (a + b), &params))
                .collect();
            let vmid: Vec<f64> = init
                .v
                .iter()
                .zip(&next.v)
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            let zmid: Vec<f64> = init
                .z
                .iter()
                .zip(&next.z)
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            let work = dt
                * (geometry::inner_omega(&fu, &vmid, &geom)
                    + geometry::inner_gamma(&hw, &zmid, &geom));
            (gain - work).abs()
        };

        let dt0 = 1e-4;
        let d0 = defect(dt0);
        let d1 = defect(0.5 * dt0);
        assert!(
            d0 / d1 > 5.0,
            "expected O(dt^3) defect, got ratio {:.2}",
            d0 / d1
        );
    }

    /// The identity residual must drop by roughly 4x when dt is halved on a
    /// smooth linearly damped run.
    #[test]
    fn identity_residual_refines() {
        let geom = build_geometry(Mode::Reduced2d, &[17, 17]).unwrap();
        let params = quiet_params();
        let well = dummy_well();
        let run = |dt: f64| -> f64 {
            let setup = SimSetup {
                geom: &geom,
                params: &params,
                well: &well,
                dt,
                t_end: 1.0,
                output_stride: 32,
                residual_tol: 1.0,
                coupling: true,
            };
            let mut init = State::zero(&geom);
            init.u = geom.eval_on_omega(|x| (PI * x[0]).sin() * (0.5 * PI * x[1]).cos());
            let out = simulate(&setup, &init).unwrap();
            out.ledger.max_abs_residual()
        };
        let hg = geom.h_gamma();
        let dt0 = 0.25 * 0.5 * hg * hg;
        let coarse = run(dt0);
        let fine = run(0.5 * dt0);
        let ratio = coarse / fine;
        assert!((1.8..=4.2).contains(&ratio), "refinement ratio {ratio:.2}");
    }

    #[test]
    fn dissipation_nondecreasing_and_linear_reduction() {
        let geom = build_geometry(Mode::Reduced2d, &[17, 17]).unwrap();
        let params = quiet_params();
        let well = dummy_well();
        let setup = SimSetup {
            geom: &geom,
            params: &params,
            well: &well,
            dt: default_dt(&geom),
            t_end: 0.5,
            output_stride: 64,
            residual_tol: 1.0,
            coupling: true,
        };
        let mut init = State::zero(&geom);
        init.v = geom.eval_on_omega(|x| (PI * x[0]).sin() * (0.5 * PI * x[1]).cos());
        let out = simulate(&setup, &init).unwrap();
        let d = out.ledger.dissipation_series();
        assert_eq!(d[0], 0.0);
        for k in 1..d.len() {
            assert!(d[k] >= d[k - 1]);
        }
        // For a zero-velocity start the dissipation stays zero.
        let out2 = simulate(&setup, &State::zero(&geom)).unwrap();
        assert!(out2.ledger.dissipation_series().iter().all(|&x| x == 0.0));
        // Energy identity ties D to the energy drop.
        let last = out.ledger.rows.last().unwrap();
        let drop = out.ledger.e_total0 - last.e_total;
        assert!((last.dissipation - drop).abs() <= 2e-3 * out.ledger.e_total0.max(1e-14));
    }

    #[test]
    fn determinism_bitwise() {
        let geom = build_geometry(Mode::Reduced2d, &[16, 16]).unwrap();
        let params = ModelParams {
            p: 2.0,
            q: 2.0,
            damping_u: DampingProfile {
                near_exp: 3.0,
                far_exp: 3.0,
                coeff: 1.0,
            },
            damping_w: DampingProfile {
                near_exp: 3.0,
                far_exp: 3.0,
                coeff: 1.0,
            },
            source_scale_f: 1.0,
            source_scale_h: 1.0,
        };
        let well = dummy_well();
        let setup = SimSetup {
            geom: &geom,
            params: &params,
            well: &well,
            dt: default_dt(&geom),
            t_end: 0.2,
            output_stride: 50,
            residual_tol: 1.0,
            coupling: true,
        };
        let mut init = State::zero(&geom);
        init.u = geom.eval_on_omega(|x| 0.1 * (PI * x[0]).sin() * (1.0 - x[1]));
        let a = simulate(&setup, &init).unwrap();
        let b = simulate(&setup, &init).unwrap();
        for (ra, rb) in a.ledger.rows.iter().zip(&b.ledger.rows) {
            assert_eq!(ra.e_total.to_bits(), rb.e_total.to_bits());
            assert_eq!(ra.dissipation.to_bits(), rb.dissipation.to_bits());
        }
    }
}
