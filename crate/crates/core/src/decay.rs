//! Energy-decay machinery: concave majorants of the damping near the origin,
//! the stabilization constants, the comparison ODE whose solution envelopes
//! the energy, and the rate fits run against measured ledgers.

use serde::{Deserialize, Serialize};

use crate::dynamics::EnergyLedger;
use crate::error::{Error, Result};
use crate::geometry::{self, Geometry};
use crate::linalg::{Cholesky, TensorLaplaceSolver};
use crate::nonlinearity::DampingProfile;
use crate::well::{self, WellGeometry};

/// Concave power majorant `phi(s) = coeff s^exponent` with
/// `phi(g(s) s) >= |g(s)|^2 + s^2` for `|s| < 1`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhiMajorant {
    pub coeff: f64,
    pub exponent: f64,
}

impl PhiMajorant {
    pub fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else {
            self.coeff * s.powf(self.exponent)
        }
    }
}

/// Construct the concave majorant from the near-origin growth of a damping
/// profile: exponent `2/(k+1)` for linear/superlinear growth `k >= 1`,
/// `2k/(k+1)` for sublinear growth `k < 1`; the coefficient uses the exact
/// near-origin envelope constants of the glued power law.
pub fn build_phi(profile: &DampingProfile) -> Result<PhiMajorant> {
    if profile.coeff <= 0.0 {
        return Err(Error::Validation(
            "a concave damping majorant needs an enabled damping term (coeff > 0)".into(),
        ));
    }
    let (c1, c2) = profile.near_bounds();
    let k = profile.near_exp;
    let exponent = if k >= 1.0 {
        2.0 / (k + 1.0)
    } else {
        2.0 * k / (k + 1.0)
    };
    let coeff = c1.powf(-exponent) * (1.0 + c2 * c2);
    Ok(PhiMajorant { coeff, exponent })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Exponential,
    Algebraic,
}

/// Decay classification for one run: the majorant exponents, beta, and the
/// algebraic rate b = 1/(beta - 1) when applicable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayProfile {
    pub nu1: f64,
    pub nu2: f64,
    pub c1: f64,
    pub c2: f64,
    pub beta: f64,
    pub b: Option<f64>,
    pub branch: Branch,
}

impl DecayProfile {
    pub fn phi1(&self) -> PhiMajorant {
        PhiMajorant {
            coeff: self.c1,
            exponent: self.nu1,
        }
    }
    pub fn phi2(&self) -> PhiMajorant {
        PhiMajorant {
            coeff: self.c2,
            exponent: self.nu2,
        }
    }
    /// Phi = phi1 + phi2 + id.
    pub fn big_phi(&self) -> impl Fn(f64) -> f64 + '_ {
        move |s: f64| self.phi1().eval(s) + self.phi2().eval(s) + s.max(0.0)
    }
}

/// Decide the decay branch: exponential iff both damping terms are linearly
/// bounded near the origin (both majorants linear), algebraic otherwise with
/// beta = max(1/nu_i) and b = 1/(beta - 1).
pub fn beta_and_b(profile_u: &DampingProfile, profile_w: &DampingProfile) -> Result<DecayProfile> {
    let phi1 = build_phi(profile_u)?;
    let phi2 = build_phi(profile_w)?;
    let beta = (1.0 / phi1.exponent).max(1.0 / phi2.exponent);
    let exponential = profile_u.near_exp == 1.0 && profile_w.near_exp == 1.0;
    let (branch, b) = if exponential {
        (Branch::Exponential, None)
    } else {
        (Branch::Algebraic, Some(1.0 / (beta - 1.0)))
    };
    Ok(DecayProfile {
        nu1: phi1.exponent,
        nu2: phi2.exponent,
        c1: phi1.coeff,
        c2: phi2.coeff,
        beta,
        b,
        branch,
    })
}

// ---------------------------------------------------------------------------
// Stabilization constants
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilizationConstants {
    /// Embedding constant of |u|_2^2 <= c1* |grad u|_2^2.
    pub c1_star: f64,
    /// Embedding constant of |w|_2^2 <= c2* |Delta w|_2^2.
    pub c2_star: f64,
    /// Trace constant of |gamma u|_2^2 <= c* |grad u|_2^2.
    pub c_star: f64,
    pub c0: f64,
    pub xi: f64,
    pub t0: f64,
    /// Fitted multiplicative constant of the stabilization estimate, set
    /// after a run suite has been checked.
    pub c_tilde: Option<f64>,
}

pub fn c0_from(c1_star: f64, c2_star: f64, c_star: f64) -> f64 {
    1.0f64.max(c1_star + c_star).max(2.0 * c2_star)
}

/// xi = M_f (p+1) K1 (s*-delta)^{p-1} + M_h (q+1) K2 (s*-delta)^{q-1};
/// strictly below 1 for every delta > 0 because equality holds at delta = 0.
pub fn xi_margin(wg: &WellGeometry, delta: f64) -> f64 {
    let s = wg.s_star - delta;
    wg.m_f * (wg.p + 1.0) * wg.k1 * s.powf(wg.p - 1.0)
        + wg.m_h * (wg.q + 1.0) * wg.k2 * s.powf(wg.q - 1.0)
}

/// Smallest eigenvalue of the plate biharmonic (generalized, in the weighted
/// inner product) by inverse power iteration on the dense symmetric form.
fn plate_min_eigenvalue(geom: &Geometry) -> Result<f64> {
    let free: Vec<usize> = (0..geom.gamma_len())
        .filter(|&g| !geom.is_gamma_boundary(g))
        .collect();
    let nf = free.len();
    let weights = geom.gamma_weights();
    let mut s = vec![0.0; nf * nf];
    for (col, &g) in free.iter().enumerate() {
        let mut e = geom.zero_boundary_field();
        e[g] = 1.0;
        let be = geometry::apply_biharmonic(&e, geom)?;
        for (row, &gr) in free.iter().enumerate() {
            s[row * nf + col] = weights[gr] * be[gr];
        }
    }
    let chol = Cholesky::factor(&s, nf)?;
    let mut x: Vec<f64> = free
        .iter()
        .map(|&g| {
            let gw = g as f64 / (geom.gamma_len() - 1) as f64;
            gw * gw * (1.0 - gw) * (1.0 - gw)
        })
        .collect();
    let mut mu = 0.0;
    for _ in 0..500 {
        // x <- S^{-1} (omega .* x), generalized inverse iteration.
        let rhs: Vec<f64> = free.iter().zip(&x).map(|(&g, &v)| weights[g] * v).collect();
        x = chol.solve(&rhs);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= norm);
        // Rayleigh quotient x' S x / x' (omega x).
        let sx: Vec<f64> = (0..nf)
            .map(|r| (0..nf).map(|c| s[r * nf + c] * x[c]).sum())
            .collect();
        let num: f64 = x.iter().zip(&sx).map(|(a, b)| a * b).sum();
        let den: f64 = free.iter().zip(&x).map(|(&g, &v)| weights[g] * v * v).sum();
        let mu_new = num / den;
        if (mu_new - mu).abs() <= 1e-13 * mu_new.abs() {
            return Ok(mu_new);
        }
        mu = mu_new;
    }
    Ok(mu)
}

/// Trace constant sup |gamma u|^2 / |grad u|^2 by power iteration on the
/// pencil (T, -L): u <- (-L)^{-1} T u with T the trace form.
fn trace_constant(geom: &Geometry) -> f64 {
    let solver = TensorLaplaceSolver::new(&geom.dims, &geom.h);
    let omega_w = geom.omega_weights();
    let gamma_w = geom.gamma_weights();
    let apply_t = |u: &[f64]| -> Vec<f64> {
        let mut out = geom.zero_field();
        for g in 0..geom.gamma_len() {
            let idx = geom.gamma_to_omega(g);
            if omega_w[idx] > 0.0 {
                out[idx] = gamma_w[g] / omega_w[idx] * u[idx];
            }
        }
        out
    };
    let mut u = geom.eval_on_omega(|x| {
        let trans: f64 = x[..x.len() - 1]
            .iter()
            .map(|&c| (std::f64::consts::PI * c).sin())
            .product();
        trans * (0.5 * std::f64::consts::PI * x[x.len() - 1]).cos()
    });
    let mut rho = 0.0;
    for _ in 0..500 {
        let tu = apply_t(&u);
        let sol = solver.solve_dof(&well::extract_u_dofs(&tu, geom));
        u = well::embed_u_dofs(&sol, geom);
        let h1 = geometry::h1_semi(&u, geom);
        u.iter_mut().for_each(|v| *v /= h1);
        let tr = geometry::trace_gamma(&u, geom);
        let rho_new = geometry::inner_gamma(&tr, &tr, geom);
        if (rho_new - rho).abs() <= 1e-13 * rho_new.abs() {
            return rho_new;
        }
        rho = rho_new;
    }
    rho
}

/// Assemble c0, xi, and T0 for a geometry/well combination. T0 carries the
/// (1 - xi) correction that the iteration argument actually needs.
pub fn compute_stabilization_constants(
    geom: &Geometry,
    wellgeom: &WellGeometry,
) -> Result<StabilizationConstants> {
    let c1_star = 1.0 / TensorLaplaceSolver::new(&geom.dims, &geom.h).min_eigenvalue();
    let c2_star = 1.0 / plate_min_eigenvalue(geom)?;
    let c_star = trace_constant(geom);
    let c0 = c0_from(c1_star, c2_star, c_star);
    let xi = xi_margin(wellgeom, wellgeom.delta);
    if xi >= 1.0 {
        return Err(Error::Validation(format!(
            "xi = {xi:.6} >= 1; the well margin delta must be positive"
        )));
    }
    let c = wellgeom.c_min;
    let t0 = 1.0f64
        .max(1.0 / geom.volume())
        .max(1.0 / geom.gamma_area())
        .max(8.0 * c * c0 / ((c - 2.0) * (1.0 - xi)));
    Ok(StabilizationConstants {
        c1_star,
        c2_star,
        c_star,
        c0,
        xi,
        t0,
        c_tilde: None,
    })
}

/// Ratios R(T) = calE(T) / Phi(D(T)) at T in {T0, 2 T0, ...} within the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilizationCheck {
    pub ts: Vec<f64>,
    pub ratios: Vec<f64>,
    /// sup of the ratios: the fitted C-tilde for this run.
    pub c_tilde: Option<f64>,
    /// Run shorter than 3 T0.
    pub short_run: bool,
    /// Positive energy met zero dissipation (undamped run; the estimate is
    /// inapplicable).
    pub undamped: bool,
}

pub fn check_stabilization(
    ledger: &EnergyLedger,
    consts: &StabilizationConstants,
    big_phi: impl Fn(f64) -> f64,
) -> StabilizationCheck {
    let t_end = ledger.rows.last().map(|r| r.t).unwrap_or(0.0);
    let short_run = t_end < 3.0 * consts.t0;
    let mut ts = Vec::new();
    let mut ratios = Vec::new();
    let mut undamped = false;
    let mut k = 1.0;
    while k * consts.t0 <= t_end * (1.0 + 1e-12) {
        let t = k * consts.t0;
        if let Some((e, d)) = ledger.interp(t) {
            let denom = big_phi(d);
            let r = if denom <= 0.0 {
                if e.abs() <= 1e-14 {
                    0.0
                } else {
                    undamped = true;
                    f64::INFINITY
                }
            } else {
                e.max(0.0) / denom
            };
            ts.push(t);
            ratios.push(r);
        }
        k += 1.0;
    }
    let c_tilde = ratios
        .iter()
        .cloned()
        .filter(|r| r.is_finite())
        .fold(None, |acc: Option<f64>, r| {
            Some(acc.map_or(r, |a| a.max(r)))
        });
    StabilizationCheck {
        ts,
        ratios,
        c_tilde,
        short_run,
        undamped,
    }
}

// ---------------------------------------------------------------------------
// Comparison ODE
// ---------------------------------------------------------------------------

/// Invert `lambda + phi_tilde(lambda) = s` by bisection on [0, s]; the map is
/// strictly increasing, so the root is unique. Residual <= 1e-12 max(1, s).
pub fn invert_i_plus_phi(s: f64, phi_tilde: impl Fn(f64) -> f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let f = |l: f64| l + phi_tilde(l) - s;
    let (mut lo, mut hi) = (0.0, s);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if (hi - lo) <= 1e-15 * s.max(1.0) && f(0.5 * (lo + hi)).abs() <= 1e-12 * s.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Integrate `sigma' = -(I + phi_tilde)^{-1} sigma, sigma(0) = e0` with RK4,
/// halving the step until two successive refinements agree to 1e-8
/// relatively; returns `n_out + 1` equally spaced samples on [0, t_end].
pub fn solve_decay_ode(
    e0: f64,
    phi_tilde: impl Fn(f64) -> f64,
    t_end: f64,
    n_out: usize,
) -> Vec<(f64, f64)> {
    assert!(n_out >= 1);
    if e0 <= 0.0 || t_end <= 0.0 {
        return (0..=n_out)
            .map(|k| (t_end * k as f64 / n_out as f64, 0.0))
            .collect();
    }
    let rhs = |sig: f64| -> f64 {
        if sig <= 0.0 {
            0.0
        } else {
            -invert_i_plus_phi(sig, &phi_tilde)
        }
    };
    let integrate = |steps_per_out: usize| -> Vec<(f64, f64)> {
        let n = n_out * steps_per_out;
        let h = t_end / n as f64;
        let mut out = Vec::with_capacity(n_out + 1);
        let mut sigma = e0;
        out.push((0.0, sigma));
        for k in 1..=n {
            let k1 = rhs(sigma);
            let k2 = rhs(sigma + 0.5 * h * k1);
            let k3 = rhs(sigma + 0.5 * h * k2);
            let k4 = rhs(sigma + h * k3);
            sigma += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            sigma = sigma.max(0.0);
            if k % steps_per_out == 0 {
                out.push((k as f64 * h, sigma));
            }
        }
        out
    };
    let mut steps = 4usize;
    let mut prev = integrate(steps);
    for _ in 0..10 {
        steps *= 2;
        let cur = integrate(steps);
        let diff = prev
            .iter()
            .zip(&cur)
            .map(|((_, a), (_, b))| (a - b).abs() / b.abs().max(1e-300))
            .fold(0.0, f64::max);
        if diff <= 1e-8 {
            return cur;
        }
        prev = cur;
    }
    prev
}

/// Closed form of the ODE for a linear majorant `phi_tilde(s) = c s`:
/// `sigma(t) = e0 exp(-t / (1 + c))`.
pub fn sigma_exponential_closed_form(e0: f64, c_lin: f64, t: f64) -> f64 {
    e0 * (-t / (1.0 + c_lin)).exp()
}

/// Algebraic comparison envelope
/// `sigma_tilde(t) = [C0 (beta-1)(t-t0) + sigma(t0)^{1-beta}]^{-1/(beta-1)}`.
pub fn sigma_tilde_envelope(c0: f64, beta: f64, t0: f64, sigma_t0: f64, t: f64) -> f64 {
    (c0 * (beta - 1.0) * (t - t0) + sigma_t0.powf(1.0 - beta)).powf(-1.0 / (beta - 1.0))
}

/// Lower-bound constant of `(I + phi_tilde)^{-1}(s) >= C0 s^beta` fitted on
/// the inversion range lambda in (0, 1].
pub fn fit_c0_lower(phi_tilde: impl Fn(f64) -> f64, beta: f64) -> f64 {
    let mut c0 = f64::INFINITY;
    let n = 2000;
    for k in 0..=n {
        // log-spaced lambda from 1e-8 to 1.
        let lambda = 10f64.powf(-8.0 + 8.0 * k as f64 / n as f64);
        let s = lambda + phi_tilde(lambda);
        c0 = c0.min(lambda / s.powf(beta));
    }
    c0
}

// ---------------------------------------------------------------------------
// Rate fitting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub branch: Branch,
    /// Exponential rate a in calE ~ exp(-a t) (exponential branch).
    pub rate: Option<f64>,
    /// Algebraic exponent used for the envelope (algebraic branch).
    pub b: Option<f64>,
    /// sup over the window of calE(t) (1+t)^b.
    pub envelope_sup: Option<f64>,
    /// Slope of log calE against log(1+t).
    pub loglog_slope: Option<f64>,
    pub r_squared: f64,
    pub window: (f64, f64),
    /// The window hit the noise floor and was truncated.
    pub truncated: bool,
    pub points: usize,
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if syy <= 1e-28 {
        // Constant data: any horizontal line fits perfectly.
        return (0.0, my, 1.0);
    }
    let slope = sxy / sxx;
    let r2 = (sxy * sxy) / (sxx * syy);
    (slope, my - slope * mx, r2)
}

const NOISE_FLOOR: f64 = 1e-14;

/// Fit the measured decay of the total energy over the trailing window
/// [0.2 T_end, T_end], truncated at the noise floor.
pub fn fit_decay_rate(ledger: &EnergyLedger, profile: &DecayProfile) -> Result<FitReport> {
    let t_end = ledger
        .rows
        .last()
        .map(|r| r.t)
        .ok_or_else(|| Error::Validation("cannot fit an empty ledger".into()))?;
    let w_lo = 0.2 * t_end;
    let mut rows: Vec<(f64, f64)> = ledger
        .rows
        .iter()
        .filter(|r| r.t >= w_lo && r.e_total > NOISE_FLOOR)
        .map(|r| (r.t, r.e_total))
        .collect();
    let mut truncated = false;
    if rows.len() < 3 {
        // Energy hit the noise floor early; fit on the surviving prefix.
        truncated = true;
        rows = ledger
            .rows
            .iter()
            .filter(|r| r.e_total > NOISE_FLOOR)
            .map(|r| (r.t, r.e_total))
            .collect();
    }
    if rows.len() < 3 {
        return Err(Error::Validation(
            "not enough ledger rows above the noise floor to fit a decay rate".into(),
        ));
    }
    let window = (rows.first().unwrap().0, rows.last().unwrap().0);
    let points = rows.len();
    match profile.branch {
        Branch::Exponential => {
            let xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let ys: Vec<f64> = rows.iter().map(|r| r.1.ln()).collect();
            let (slope, _, r2) = linear_fit(&xs, &ys);
            Ok(FitReport {
                branch: Branch::Exponential,
                rate: Some(-slope),
                b: None,
                envelope_sup: None,
                loglog_slope: None,
                r_squared: r2,
                window,
                truncated,
                points,
            })
        }
        Branch::Algebraic => {
            let b = profile.b.expect("algebraic branch always carries b");
            let sup = rows
                .iter()
                .map(|&(t, e)| e * (1.0 + t).powf(b))
                .fold(0.0, f64::max);
            let xs: Vec<f64> = rows.iter().map(|r| (1.0 + r.0).ln()).collect();
            let ys: Vec<f64> = rows.iter().map(|r| r.1.ln()).collect();
            let (slope, _, r2) = linear_fit(&xs, &ys);
            Ok(FitReport {
                branch: Branch::Algebraic,
                rate: None,
                b: Some(b),
                envelope_sup: Some(sup),
                loglog_slope: Some(slope),
                r_squared: r2,
                window,
                truncated,
                points,
            })
        }
    }
}
