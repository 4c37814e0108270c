//! Closed-form free response of a segment's RC network.
//!
//! Once the transistor has switched off, the reservoir capacitor holds some
//! deviation `V0` from the resting rail and the membrane starts at rest. The
//! reservoir voltage then obeys
//!
//! ```text
//! A v'' + B v' + C v = 0,   A = R_A C_R C_M,
//!                           B = C_R + C_M + C_R R_A / R_L,
//!                           C = 1 / R_L
//! ```
//!
//! with `v_R(t) = D+ e^(λ+ t) + D- e^(λ- t)` and
//! `v_M = v_R + R_A C_R dv_R/dt`. All voltages here are deviations from the
//! segment's resting rail; see [`to_physical`].

use thiserror::Error;

use crate::model::{Polarity, RcNetwork};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("characteristic coefficients must be positive and finite (a={a}, b={b}, c={c})")]
    BadCoefficients { a: f64, b: f64, c: f64 },
    #[error("characteristic discriminant {0} is not positive; roots are not real and distinct")]
    Degenerate(f64),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// How the second exponential's prefactor in the membrane response is
/// formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoefficientForm {
    /// `(1 + λ R_A C_R)` for both exponentials; satisfies the governing
    /// equations for any component values.
    #[default]
    Consistent,
    /// `(1 + λ- R_L C_M)` on the fast exponential, as sometimes written.
    /// Only correct when `R_A C_R == R_L C_M`.
    LeakMembrane,
}

/// Coefficients `(a, b, c)` of the characteristic polynomial.
pub fn characteristic_coeffs(rc: &RcNetwork) -> (f64, f64, f64) {
    let a = rc.r_axial * rc.c_reservoir * rc.c_membrane;
    let b = rc.c_reservoir + rc.c_membrane + rc.c_reservoir * rc.r_axial / rc.r_leak;
    let c = 1.0 / rc.r_leak;
    (a, b, c)
}

/// Roots `(λ+, λ-)` of `a λ² + b λ + c`; λ+ is the slower root.
pub fn characteristic_roots(a: f64, b: f64, c: f64) -> Result<(f64, f64), AnalyticError> {
    let ok = |x: f64| x.is_finite() && x > 0.0;
    if !(ok(a) && ok(b) && ok(c)) {
        return Err(AnalyticError::BadCoefficients { a, b, c });
    }
    let disc = b * b - 4.0 * a * c;
    if !(disc > 0.0) {
        return Err(AnalyticError::Degenerate(disc));
    }
    // q has the sign of -b, avoiding cancellation in the small root
    let q = -0.5 * (b + disc.sqrt());
    let fast = q / a;
    let slow = c / q;
    Ok((slow, fast))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicSolution {
    pub a_coeff: f64,
    pub b_coeff: f64,
    pub c_coeff: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub d_plus: f64,
    pub d_minus: f64,
    pub v0: f64,
    /// Prefactor of `D+ e^(λ+ t)` in the membrane response.
    pub m_plus: f64,
    /// Prefactor of `D- e^(λ- t)` in the membrane response.
    pub m_minus: f64,
}

/// Coefficients `(D+, D-)` matching `v_R(0) = v0` and `v_M(0) = 0`.
pub fn solution_coefficients(v0: f64, rc: &RcNetwork, roots: (f64, f64)) -> (f64, f64) {
    solution_coefficients_with(v0, rc, roots, CoefficientForm::Consistent)
}

pub fn solution_coefficients_with(
    v0: f64,
    rc: &RcNetwork,
    (lp, lm): (f64, f64),
    form: CoefficientForm,
) -> (f64, f64) {
    let tau_a = rc.r_axial * rc.c_reservoir;
    let plus = 1.0 + lp * tau_a;
    let minus = match form {
        CoefficientForm::Consistent => 1.0 + lm * tau_a,
        CoefficientForm::LeakMembrane => 1.0 + lm * rc.r_leak * rc.c_membrane,
    };
    // D+ (plus) + D- (minus) = 0 and D+ + D- = v0
    let d_plus = v0 * minus / (minus - plus);
    let d_minus = -v0 * plus / (minus - plus);
    (d_plus, d_minus)
}

impl CharacteristicSolution {
    pub fn new(v0: f64, rc: &RcNetwork) -> Result<Self, AnalyticError> {
        Self::with_form(v0, rc, CoefficientForm::Consistent)
    }

    pub fn with_form(v0: f64, rc: &RcNetwork, form: CoefficientForm) -> Result<Self, AnalyticError> {
        rc.validate()?;
        let (a, b, c) = characteristic_coeffs(rc);
        let (lp, lm) = characteristic_roots(a, b, c)?;
        let (d_plus, d_minus) = solution_coefficients_with(v0, rc, (lp, lm), form);
        let tau_a = rc.r_axial * rc.c_reservoir;
        let m_minus = match form {
            CoefficientForm::Consistent => 1.0 + lm * tau_a,
            CoefficientForm::LeakMembrane => 1.0 + lm * rc.r_leak * rc.c_membrane,
        };
        Ok(Self {
            a_coeff: a,
            b_coeff: b,
            c_coeff: c,
            lambda_plus: lp,
            lambda_minus: lm,
            d_plus,
            d_minus,
            v0,
            m_plus: 1.0 + lp * tau_a,
            m_minus,
        })
    }

    pub fn reservoir_voltage(&self, t: f64) -> f64 {
        self.d_plus * (self.lambda_plus * t).exp() + self.d_minus * (self.lambda_minus * t).exp()
    }

    pub fn membrane_voltage(&self, t: f64) -> f64 {
        self.m_plus * self.d_plus * (self.lambda_plus * t).exp()
            + self.m_minus * self.d_minus * (self.lambda_minus * t).exp()
    }

    /// Time of the membrane extremum, where `dv_M/dt = 0`.
    pub fn membrane_peak_time(&self) -> Option<f64> {
        let p = self.m_plus * self.d_plus * self.lambda_plus;
        let m = self.m_minus * self.d_minus * self.lambda_minus;
        // p e^(λ+ t) + m e^(λ- t) = 0
        let ratio = -m / p;
        if !(ratio > 0.0) {
            return None;
        }
        let t = ratio.ln() / (self.lambda_plus - self.lambda_minus);
        (t > 0.0).then_some(t)
    }

    /// Polynomial residual `|a λ² + b λ + c|` relative to the largest term.
    pub fn root_residuals(&self) -> (f64, f64) {
        let res = |l: f64| {
            let terms = [self.a_coeff * l * l, self.b_coeff * l, self.c_coeff];
            let scale = terms.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            terms.iter().sum::<f64>().abs() / scale
        };
        (res(self.lambda_plus), res(self.lambda_minus))
    }
}

/// Reservoir deviation at `t` after release.
pub fn reservoir_voltage(sol: &CharacteristicSolution, t: f64) -> f64 {
    sol.reservoir_voltage(t)
}

/// Membrane deviation at `t` after release.
pub fn membrane_voltage(sol: &CharacteristicSolution, t: f64) -> f64 {
    sol.membrane_voltage(t)
}

/// Maps a deviation onto a physical node voltage.
pub fn to_physical(v_deviation: f64, polarity: Polarity, vdd: f64) -> f64 {
    match polarity {
        Polarity::NType => vdd - v_deviation,
        Polarity::PType => v_deviation,
    }
}
