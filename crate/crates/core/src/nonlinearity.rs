//! Source and damping nonlinearities and the parameter assumptions they must
//! satisfy.
//!
//! Sources are pure power laws `f(u) = scale |u|^{p-1} u` with potential
//! `F(u) = scale |u|^{p+1} / (p+1)`, so the Euler identity
//! `u f(u) = (p+1) F(u)` holds exactly and the homogeneity constant of `F`
//! is tight: `M = scale / (p+1)`.
//!
//! Damping forces are odd monotone piecewise power laws glued continuously at
//! `|s| = 1`: exponent `near_exp` inside, `far_exp` outside, one common
//! coefficient. The near-origin growth decides the eventual energy decay
//! branch (exponential when linear, algebraic otherwise).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Odd monotone damping force, `g(s) = coeff |s|^{near_exp - 1} s` for
/// `|s| < 1` and `coeff |s|^{far_exp - 1} s` beyond.
///
/// With a single coefficient the glue at `|s| = 1` is automatically
/// continuous, and the recorded envelope constants are exact:
/// `alpha = beta = coeff` at infinity, `c1 = c2 = coeff` near the origin.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DampingProfile {
    /// Growth exponent near the origin (< 1 sublinear, 1 linear, > 1 superlinear).
    pub near_exp: f64,
    /// Growth exponent at |s| >= 1; plays the role of m (wave) or r (plate).
    pub far_exp: f64,
    /// Scale; 0 disables the damping term entirely.
    pub coeff: f64,
}

impl DampingProfile {
    pub fn linear(coeff: f64) -> Self {
        DampingProfile {
            near_exp: 1.0,
            far_exp: 1.0,
            coeff,
        }
    }

    pub fn is_disabled(&self) -> bool {
        self.coeff == 0.0
    }

    pub fn is_globally_linear(&self) -> bool {
        self.near_exp == 1.0 && self.far_exp == 1.0
    }

    /// Lower/upper envelope constants alpha, beta of `g(s) s` against
    /// `|s|^{far_exp + 1}` for `|s| >= 1` (exact for the glued power law).
    pub fn far_bounds(&self) -> (f64, f64) {
        (self.coeff, self.coeff)
    }

    /// Lower/upper constants c1, c2 of `|g(s)|` against `|s|^{near_exp}` for
    /// `|s| < 1`.
    pub fn near_bounds(&self) -> (f64, f64) {
        (self.coeff, self.coeff)
    }
}

/// Model exponents and coefficients for the sources and damping forces.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Wave source exponent, 1 < p <= 5 (p < 5 for decay runs).
    pub p: f64,
    /// Plate source exponent, q > 1.
    pub q: f64,
    pub damping_u: DampingProfile,
    pub damping_w: DampingProfile,
    /// Nonnegative multipliers on f and h; 0 disables a source.
    #[serde(default = "one")]
    pub source_scale_f: f64,
    #[serde(default = "one")]
    pub source_scale_h: f64,
}

fn one() -> f64 {
    1.0
}

/// Outcome of `validate_params`: hard violations and advisory warnings.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl ModelParams {
    /// Homogeneity constant of F: F(u) = m_f |u|^{p+1}, tight by construction.
    pub fn m_f(&self) -> f64 {
        self.source_scale_f / (self.p + 1.0)
    }

    /// Homogeneity constant of H.
    pub fn m_h(&self) -> f64 {
        self.source_scale_h / (self.q + 1.0)
    }

    /// c = min(p+1, q+1); the well theory needs c > 2.
    pub fn c_min(&self) -> f64 {
        (self.p + 1.0).min(self.q + 1.0)
    }

    pub fn validate(&self) -> ValidationReport {
        validate_params(self)
    }
}

fn odd_power(s: f64, exp: f64) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    // |s|^{exp-1} s with fast paths for the common small integer exponents.
    if exp == 1.0 {
        s
    } else if exp == 2.0 {
        s.abs() * s
    } else if exp == 3.0 {
        s * s * s
    } else {
        s.abs().powf(exp - 1.0) * s
    }
}

/// Wave source f(u) = scale |u|^{p-1} u.
pub fn eval_f(u: f64, params: &ModelParams) -> f64 {
    params.source_scale_f * odd_power(u, params.p)
}

/// Plate source h(w) = scale |w|^{q-1} w.
pub fn eval_h(w: f64, params: &ModelParams) -> f64 {
    params.source_scale_h * odd_power(w, params.q)
}

/// Potential of f: F(u) = scale |u|^{p+1} / (p+1), nonnegative.
pub fn eval_big_f(u: f64, params: &ModelParams) -> f64 {
    params.source_scale_f * u.abs().powf(params.p + 1.0) / (params.p + 1.0)
}

/// Potential of h.
pub fn eval_big_h(w: f64, params: &ModelParams) -> f64 {
    params.source_scale_h * w.abs().powf(params.q + 1.0) / (params.q + 1.0)
}

/// Damping force; odd, monotone increasing, g(0) = 0, continuous at |s| = 1.
pub fn eval_g(s: f64, profile: &DampingProfile) -> f64 {
    if profile.coeff == 0.0 {
        return 0.0;
    }
    let a = s.abs();
    if a < 1.0 {
        profile.coeff * odd_power(s, profile.near_exp)
    } else {
        profile.coeff * odd_power(s, profile.far_exp)
    }
}

/// Validate every hard assumption the theory needs, and collect advisory
/// warnings for conditions that only matter for uniqueness or extra
/// regularity.
pub fn validate_params(params: &ModelParams) -> ValidationReport {
    let mut report = ValidationReport::default();
    let p = params.p;
    let q = params.q;
    let m = params.damping_u.far_exp;
    let r = params.damping_w.far_exp;

    let mut hard = |cond: bool, msg: String| {
        if !cond {
            report.violations.push(msg);
        }
    };

    hard(
        p.is_finite() && p > 1.0,
        format!("source exponent requires p > 1 (got p = {p})"),
    );
    hard(
        p <= 5.0,
        format!("global existence regime requires p <= 5 (got p = {p})"),
    );
    hard(
        q.is_finite() && q > 1.0,
        format!("plate source exponent requires q > 1 (got q = {q})"),
    );
    hard(
        m >= 1.0,
        format!("wave damping far-field exponent requires m >= 1 (got m = {m})"),
    );
    hard(
        r >= 1.0,
        format!("plate damping far-field exponent requires r >= 1 (got r = {r})"),
    );
    hard(
        p * (m + 1.0) / m < 6.0,
        format!(
            "parameter gate requires p(m+1)/m < 6 (got {} with p = {p}, m = {m})",
            p * (m + 1.0) / m
        ),
    );
    hard(
        params.damping_u.near_exp > 0.0 && params.damping_u.near_exp.is_finite(),
        format!(
            "wave damping near-origin exponent must be positive (got {})",
            params.damping_u.near_exp
        ),
    );
    hard(
        params.damping_w.near_exp > 0.0 && params.damping_w.near_exp.is_finite(),
        format!(
            "plate damping near-origin exponent must be positive (got {})",
            params.damping_w.near_exp
        ),
    );
    hard(
        params.damping_u.coeff >= 0.0 && params.damping_u.coeff.is_finite(),
        format!(
            "wave damping coefficient must be >= 0 (got {})",
            params.damping_u.coeff
        ),
    );
    hard(
        params.damping_w.coeff >= 0.0 && params.damping_w.coeff.is_finite(),
        format!(
            "plate damping coefficient must be >= 0 (got {})",
            params.damping_w.coeff
        ),
    );
    hard(
        params.source_scale_f >= 0.0 && params.source_scale_f.is_finite(),
        format!(
            "source scale on f must be >= 0 (got {})",
            params.source_scale_f
        ),
    );
    hard(
        params.source_scale_h >= 0.0 && params.source_scale_h.is_finite(),
        format!(
            "source scale on h must be >= 0 (got {})",
            params.source_scale_h
        ),
    );

    // Advisory conditions: uniqueness and extra-regularity hypotheses are
    // monitored, not enforced.
    if p > 3.0 && m < 3.0 * p - 4.0 {
        report.warnings.push(format!(
            "uniqueness condition m >= 3p-4 not met for p > 3 (m = {m}, 3p-4 = {})",
            3.0 * p - 4.0
        ));
    }
    if p > 3.0 {
        report.warnings.push(
            "p > 3: uniqueness additionally relies on a C^2 source bound; the pure power law satisfies it"
                .to_string(),
        );
    }
    if m > 5.0 {
        report.warnings.push(format!(
            "m > 5 requires the extra regularity u in L^inf(L^{})(Omega), which is monitored, not enforced",
            1.5 * (m - 1.0)
        ));
    }
    if p >= 5.0 && report.violations.is_empty() {
        report
            .warnings
            .push("p = 5 is the endpoint: decay runs require strictly p < 5".to_string());
    }
    if params.damping_u.is_disabled() || params.damping_w.is_disabled() {
        report.warnings.push(
            "damping disabled on at least one component; decay theory inapplicable".to_string(),
        );
    }
    report
}

/// Validate and convert into a hard error naming the first violated assumption.
pub fn require_valid(params: &ModelParams) -> Result<ValidationReport> {
    let report = validate_params(params);
    if let Some(first) = report.violations.first() {
        return Err(Error::Validation(first.clone()));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p: f64, q: f64) -> ModelParams {
        ModelParams {
            p,
            q,
            damping_u: DampingProfile::linear(1.0),
            damping_w: DampingProfile::linear(1.0),
            source_scale_f: 1.0,
            source_scale_h: 1.0,
        }
    }

    #[test]
    fn f_matches_power_law() {
        let pr = params(2.0, 2.0);
        assert_eq!(eval_f(0.0, &pr), 0.0);
        assert_eq!(eval_f(3.0, &pr), 9.0);
        let pr3 = params(3.0, 3.0);
        assert_eq!(eval_f(-2.0, &pr3), -8.0);
    }

    #[test]
    fn big_f_and_euler_identity() {
        let pr = params(2.0, 2.0);
        assert_eq!(eval_big_f(0.0, &pr), 0.0);
        assert!((eval_big_f(3.0, &pr) - 9.0).abs() < 1e-12);
        assert!((3.0 * eval_f(3.0, &pr) - 3.0 * eval_big_f(3.0, &pr)).abs() < 1e-12);
        let pr3 = params(3.0, 3.0);
        assert!((eval_big_f(2.0, &pr3) - 4.0).abs() < 1e-12);
        assert!((2.0 * eval_f(2.0, &pr3) - 16.0).abs() < 1e-12);
    }

    #[test]
    fn euler_identity_on_sample_grid() {
        // u f(u) = (p+1) F(u) to machine precision on [-10, 10].
        for &p in &[2.0, 2.5, 3.0, 4.5] {
            let pr = params(p, p);
            for i in 0..=1000 {
                let u = -10.0 + 20.0 * i as f64 / 1000.0;
                let lhs = u * eval_f(u, &pr);
                let rhs = (p + 1.0) * eval_big_f(u, &pr);
                assert!(
                    (lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()),
                    "p = {p}, u = {u}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn g_piecewise_values() {
        let cubic = DampingProfile {
            near_exp: 3.0,
            far_exp: 3.0,
            coeff: 1.0,
        };
        assert_eq!(eval_g(0.0, &cubic), 0.0);
        assert!((eval_g(0.5, &cubic) - 0.125).abs() < 1e-15);
        assert!((eval_g(2.0, &cubic) - 8.0).abs() < 1e-15);
    }

    #[test]
    fn g_monotone_odd_and_continuous_at_one() {
        let profiles = [
            DampingProfile {
                near_exp: 0.5,
                far_exp: 3.0,
                coeff: 2.0,
            },
            DampingProfile {
                near_exp: 3.0,
                far_exp: 1.0,
                coeff: 0.7,
            },
            DampingProfile::linear(1.5),
        ];
        for pr in &profiles {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=400 {
                let s = -10.0 + 20.0 * i as f64 / 400.0;
                let g = eval_g(s, pr);
                assert!(g >= prev - 1e-12, "monotone violated for {pr:?} at s = {s}");
                assert!(g * s >= 0.0);
                assert!((g + eval_g(-s, pr)).abs() < 1e-12, "odd symmetry");
                prev = g;
            }
            let below = eval_g(1.0 - 1e-12, pr);
            let above = eval_g(1.0 + 1e-12, pr);
            assert!((below - above).abs() < 1e-9, "continuity at |s| = 1");
        }
    }

    #[test]
    fn g_far_field_envelopes() {
        let pr = DampingProfile {
            near_exp: 0.5,
            far_exp: 2.0,
            coeff: 1.3,
        };
        let (alpha, beta) = pr.far_bounds();
        for i in 0..=100 {
            let s = 1.0 + 9.0 * i as f64 / 100.0;
            let gs = eval_g(s, &pr) * s;
            let pow = s.powf(pr.far_exp + 1.0);
            assert!(alpha * pow <= gs + 1e-12);
            assert!(gs <= beta * pow + 1e-9 * pow);
        }
    }

    #[test]
    fn validation_gate_examples() {
        let mut pr = params(3.0, 3.0);
        pr.damping_u = DampingProfile {
            near_exp: 1.0,
            far_exp: 3.0,
            coeff: 1.0,
        };
        assert!(
            validate_params(&pr).is_ok(),
            "p = 3, m = 3 passes: 3*4/3 = 4 < 6"
        );

        pr.damping_u = DampingProfile::linear(1.0);
        let rep = validate_params(&pr);
        assert!(
            !rep.is_ok(),
            "p = 3, m = 1 sits on the boundary: 3*2 = 6 is not < 6"
        );
        assert!(rep.violations[0].contains("p(m+1)/m < 6"));

        let clean = params(2.0, 2.0);
        let rep = validate_params(&clean);
        assert!(rep.is_ok());
        assert!(rep.warnings.is_empty(), "warnings: {:?}", rep.warnings);
    }

    #[test]
    fn advisory_warnings() {
        let mut pr = params(4.0, 2.0);
        pr.damping_u = DampingProfile {
            near_exp: 1.0,
            far_exp: 7.0,
            coeff: 1.0,
        };
        let rep = validate_params(&pr);
        assert!(rep.is_ok());
        assert!(rep.warnings.iter().any(|w| w.contains("uniqueness")));
        assert!(rep.warnings.iter().any(|w| w.contains("m > 5")));
    }

    #[test]
    fn require_valid_names_assumption() {
        let pr = params(0.5, 2.0);
        let err = require_valid(&pr).unwrap_err();
        assert!(err.to_string().contains("p > 1"));
    }
}
