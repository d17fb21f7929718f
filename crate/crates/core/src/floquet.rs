//! Two half-lines glued at `x = 0`: Bloch solutions of Hill's equation and
//! the interface quotients `R+-` that a bound state would have to match.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::analytic::{linspace, principal_sqrt};
use crate::error::{invalid, Result, SppError};
use crate::materials::MaterialModel;

pub const DEFAULT_STEPS: usize = 2048;
const MARGINAL_TOL: f64 = 1e-10;

type C = Complex64;
pub type Mat2 = [[C; 2]; 2];

fn c(re: f64) -> C {
    C::new(re, 0.0)
}

fn matmul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[c(0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn det(m: &Mat2) -> C {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonodromyResult {
    pub matrix: Mat2,
    pub multipliers: [C; 2],
    /// `-Log(rho_inside) / p` with `p` the period over which `rho_inside` is taken.
    pub exponent: C,
    /// Index of the decaying multiplier in `multipliers`.
    pub inside: usize,
    /// Period used for the exponent: the profile period, or twice it when the
    /// decaying multiplier over one period is negative.
    pub effective_period: f64,
}

impl MonodromyResult {
    /// `psi'(0) / psi(0)` for the Bloch solution decaying to the right.
    pub fn decaying_quotient(&self) -> Result<C> {
        let m = &self.matrix;
        let rho = self.multipliers[self.inside];
        let v1 = (m[0][1], rho - m[0][0]);
        let v2 = (rho - m[1][1], m[1][0]);
        let n1 = v1.0.norm() + v1.1.norm();
        let n2 = v2.0.norm() + v2.1.norm();
        let (a, b) = if n1 >= n2 { v1 } else { v2 };
        let scale = n1.max(n2);
        if scale == 0.0 {
            // M is a multiple of the identity; every solution is a Bloch solution.
            return Err(SppError::Marginal);
        }
        if a.norm() <= 1e-12 * scale {
            return Err(SppError::DegenerateQuotient);
        }
        Ok(b / a)
    }
}

/// Fundamental matrix of `phi'' + W phi = 0` over one period by RK4.
pub fn fundamental_matrix<F>(w: F, period: f64, steps: usize) -> Mat2
where
    F: Fn(f64) -> C,
{
    let h = period / steps as f64;
    let rhs = |x: f64, y: [C; 2]| [y[1], -w(x) * y[0]];
    let mut cols = [[c(1.0), c(0.0)], [c(0.0), c(1.0)]];
    for y in cols.iter_mut() {
        for s in 0..steps {
            let x = s as f64 * h;
            let k1 = rhs(x, *y);
            let k2 = rhs(x + 0.5 * h, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
            let k3 = rhs(x + 0.5 * h, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
            let k4 = rhs(x + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
            for i in 0..2 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
    [[cols[0][0], cols[1][0]], [cols[0][1], cols[1][1]]]
}

fn eigenvalues(m: &Mat2) -> [C; 2] {
    let tr = m[0][0] + m[1][1];
    let disc = (tr * tr - 4.0 * det(m)).sqrt();
    let a = 0.5 * (tr + disc);
    let b = 0.5 * (tr - disc);
    // Product form keeps the small root accurate.
    let d = det(m);
    if a.norm() >= b.norm() {
        [a, if a.norm() > 0.0 { d / a } else { b }]
    } else {
        [if b.norm() > 0.0 { d / b } else { a }, b]
    }
}

pub fn monodromy<F>(w: F, period: f64, steps: usize) -> Result<MonodromyResult>
where
    F: Fn(f64) -> C,
{
    if !(period > 0.0) {
        return Err(invalid("period", "must be positive"));
    }
    if steps < 100 {
        return Err(invalid("steps", "must be at least 100"));
    }
    let matrix = fundamental_matrix(w, period, steps);
    let multipliers = eigenvalues(&matrix);
    if multipliers.iter().all(|r| (r.norm() - 1.0).abs() <= MARGINAL_TOL) {
        return Err(SppError::Marginal);
    }
    let inside = if multipliers[0].norm() < multipliers[1].norm() { 0 } else { 1 };
    let rho = multipliers[inside];
    let (exponent, effective_period) = if rho.re < 0.0 && rho.im.abs() <= 1e-12 * rho.norm() {
        // Antiperiodic Bloch solution: read the multiplier off the doubled period.
        let doubled = eigenvalues(&matmul(&matrix, &matrix));
        let inner = if doubled[0].norm() < doubled[1].norm() { doubled[0] } else { doubled[1] };
        (-inner.ln() / (2.0 * period), 2.0 * period)
    } else {
        (-rho.ln() / period, period)
    };
    Ok(MonodromyResult { matrix, multipliers, exponent, inside, effective_period })
}

/// Profile `W(x, omega)` of a half-line.
pub type Profile = Arc<dyn Fn(f64, f64) -> C + Send + Sync>;

#[derive(Clone)]
pub enum HalfLine {
    Homogeneous(MaterialModel),
    Periodic { profile: Profile, period: f64, conservative: bool },
}

impl fmt::Debug for HalfLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HalfLine::Homogeneous(m) => f.debug_tuple("Homogeneous").field(m).finish(),
            HalfLine::Periodic { period, conservative, .. } => {
                f.debug_struct("Periodic").field("period", period).field("conservative", conservative).finish_non_exhaustive()
            }
        }
    }
}

impl HalfLine {
    /// `W(x) = mean + amplitude cos(2 pi x / period)`, independent of omega.
    pub fn cosine(mean: f64, amplitude: f64, period: f64) -> Result<Self> {
        if !(period > 0.0) {
            return Err(invalid("period", "must be positive"));
        }
        let profile: Profile = Arc::new(move |x, _| c(mean + amplitude * (2.0 * std::f64::consts::PI * x / period).cos()));
        Ok(HalfLine::Periodic { profile, period, conservative: true })
    }

    pub fn w(&self, x: f64, omega: f64, k: f64) -> Result<C> {
        match self {
            HalfLine::Homogeneous(m) => m.w_derivative_at(c(omega), k, 0),
            HalfLine::Periodic { profile, .. } => Ok(profile(x, omega)),
        }
    }

    pub fn is_conservative(&self, omega: f64) -> bool {
        match self {
            HalfLine::Homogeneous(m) => m.is_conservative(omega),
            HalfLine::Periodic { conservative, .. } => *conservative,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterfaceQuotients {
    pub r_plus: C,
    pub r_minus: C,
}

impl InterfaceQuotients {
    pub fn mismatch(&self) -> f64 {
        (self.r_plus - self.r_minus).norm()
    }
}

/// `R- = lambda-` for a homogeneous left half-line.
pub fn left_quotient(left: &MaterialModel, omega: f64, k: f64) -> Result<C> {
    let lambda = principal_sqrt(-left.w_derivative_at(c(omega), k, 0)?);
    if lambda.re <= 0.0 {
        return Err(SppError::NoDecay { omega });
    }
    Ok(lambda)
}

/// `R+` from the monodromy eigenvector of the decaying Bloch solution.
pub fn right_quotient(right: &HalfLine, omega: f64, k: f64, steps: usize) -> Result<C> {
    let (period, w): (f64, Box<dyn Fn(f64) -> C>) = match right {
        HalfLine::Homogeneous(m) => {
            let value = m.w_derivative_at(c(omega), k, 0)?;
            (1.0, Box::new(move |_| value))
        }
        HalfLine::Periodic { profile, period, .. } => {
            let p = profile.clone();
            (*period, Box::new(move |x| p(x, omega)))
        }
    };
    monodromy(w, period, steps)?.decaying_quotient()
}

pub fn interface_quotients(left: &MaterialModel, right: &HalfLine, omega: f64, k: f64) -> Result<InterfaceQuotients> {
    Ok(InterfaceQuotients { r_plus: right_quotient(right, omega, k, DEFAULT_STEPS)?, r_minus: left_quotient(left, omega, k)? })
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuotientSample {
    pub omega: f64,
    /// `None` when a half-line has no decaying solution at this frequency.
    pub quotients: Option<InterfaceQuotients>,
}

impl QuotientSample {
    pub fn gap(&self) -> Option<f64> {
        self.quotients.map(|q| q.mismatch())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoLayerReport {
    pub samples: Vec<QuotientSample>,
    /// Left medium lossy and right medium conservative at every sample.
    pub applicable: bool,
    pub min_gap: Option<f64>,
    pub min_im_r_minus: Option<f64>,
    pub skipped: usize,
}

impl TwoLayerReport {
    /// No sample can host a bound state.
    pub fn nonexistence(&self) -> bool {
        self.applicable && self.min_gap.is_some_and(|g| g > 0.0)
    }
}

pub fn two_layer_nonexistence_scan(
    left: &MaterialModel,
    right: &HalfLine,
    omega_range: (f64, f64),
    steps: usize,
    k: f64,
) -> Result<TwoLayerReport> {
    let (lo, hi) = omega_range;
    if !(lo < hi) || steps < 2 {
        return Err(invalid("omega_range", "needs lo < hi and at least two samples"));
    }
    let omegas = linspace(lo, hi, steps);
    let samples: Vec<QuotientSample> =
        omegas.par_iter().map(|&omega| QuotientSample { omega, quotients: interface_quotients(left, right, omega, k).ok() }).collect();
    let applicable = omegas.iter().all(|&w| !left.is_conservative(w) && right.is_conservative(w));
    let valid: Vec<&InterfaceQuotients> = samples.iter().filter_map(|s| s.quotients.as_ref()).collect();
    let min_gap = valid.iter().map(|q| q.mismatch()).reduce(f64::min);
    let min_im_r_minus = valid.iter().map(|q| q.r_minus.im.abs()).reduce(f64::min);
    let skipped = samples.len() - valid.len();
    Ok(TwoLayerReport { samples, applicable, min_gap, min_im_r_minus, skipped })
}
