//! Closed-form linear analysis of the symmetric three-layer sandwich.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, Result, SppError};
use crate::materials::LayerStack;

const SINGULAR_REL: f64 = 1e-12;

/// Square root with argument in `(-pi/2, pi/2]`, independent of the sign of zero.
pub fn principal_sqrt(z: Complex64) -> Complex64 {
    let r = Complex64::new(z.re, if z.im == 0.0 { 0.0 } else { z.im }).sqrt();
    if r.re == 0.0 && r.im < 0.0 {
        -r
    } else if r.re == 0.0 {
        Complex64::new(0.0, r.im)
    } else {
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThreeLayerRates {
    pub lambda_minus: Complex64,
    pub lambda_plus: Complex64,
    pub mu: Complex64,
}

fn require_three_layers(stack: &LayerStack) -> Result<()> {
    if stack.is_three_layer() {
        Ok(())
    } else {
        Err(invalid("stack", format!("expected 3 layers, got {}", stack.layers.len())))
    }
}

fn outer_and_core_w(stack: &LayerStack, omega: f64) -> Result<[Complex64; 3]> {
    require_three_layers(stack)?;
    let w = stack.layer_w(Complex64::new(omega, 0.0), 0)?;
    Ok([w[0], w[1], w[2]])
}

fn in_essential_spectrum(w: Complex64) -> bool {
    let scale = w.norm().max(1.0);
    w.im.abs() <= 1e-14 * scale && w.re >= 0.0
}

/// True iff zero lies outside the essential spectra of both half-lines.
pub fn spectral_gap_check(stack: &LayerStack, omega: f64) -> bool {
    match outer_and_core_w(stack, omega) {
        Ok([wm, _, wp]) => !in_essential_spectrum(wm) && !in_essential_spectrum(wp),
        Err(_) => false,
    }
}

/// Principal-root rates without the decay requirement.
pub fn formal_rates(stack: &LayerStack, omega: f64) -> Result<ThreeLayerRates> {
    let [wm, ws, wp] = outer_and_core_w(stack, omega)?;
    Ok(ThreeLayerRates { lambda_minus: principal_sqrt(-wm), lambda_plus: principal_sqrt(-wp), mu: principal_sqrt(-ws) })
}

impl ThreeLayerRates {
    pub fn decaying(&self) -> bool {
        self.lambda_minus.re > 0.0 && self.lambda_plus.re > 0.0
    }
}

pub fn compute_rates(stack: &LayerStack, omega: f64) -> Result<ThreeLayerRates> {
    let rates = formal_rates(stack, omega)?;
    if !rates.decaying() {
        return Err(SppError::NoDecay { omega });
    }
    Ok(rates)
}

/// Labelling of the logarithm branches in the width condition.
///
/// `Principal` uses `Log` with argument in `(-pi, pi]` and adds `2 pi i m`.
/// `Clockwise` uses argument in `(-2 pi, 0]` and subtracts `2 pi i m`; both
/// enumerate the same set of widths, and for PT stacks `m = -1` in the
/// clockwise labelling is the smallest positive width.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LogBranch {
    Principal,
    #[default]
    Clockwise,
}

impl LogBranch {
    pub fn name(self) -> &'static str {
        match self {
            LogBranch::Principal => "principal",
            LogBranch::Clockwise => "clockwise",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "principal" => Some(LogBranch::Principal),
            "clockwise" => Some(LogBranch::Clockwise),
            _ => None,
        }
    }
}

/// Multiplier `(mu - l-)(mu - l+) / ((mu + l-)(mu + l+))` of the width condition.
pub fn width_multiplier(rates: &ThreeLayerRates, omega: f64) -> Result<Complex64> {
    let ThreeLayerRates { lambda_minus: lm, lambda_plus: lp, mu } = *rates;
    let close = |a: Complex64, b: Complex64| (a - b).norm() < SINGULAR_REL * (a.norm() + b.norm());
    if mu.norm() == 0.0 || close(mu, lm) || close(mu, lp) || close(mu, -lm) || close(mu, -lp) {
        return Err(SppError::Singular { omega });
    }
    Ok((mu - lm) * (mu - lp) / ((mu + lm) * (mu + lp)))
}

pub fn dtilde_from_rates(rates: &ThreeLayerRates, omega: f64, m: i32, branch: LogBranch) -> Result<Complex64> {
    let b = width_multiplier(rates, omega)?;
    let log = b.ln();
    let two_pi_i_m = Complex64::new(0.0, 2.0 * PI * m as f64);
    let z = match branch {
        LogBranch::Principal => log + two_pi_i_m,
        LogBranch::Clockwise => {
            let shifted = if log.im > 0.0 { log - Complex64::new(0.0, 2.0 * PI) } else { log };
            shifted - two_pi_i_m
        }
    };
    Ok(z / (2.0 * rates.mu))
}

pub fn dtilde(stack: &LayerStack, omega: f64, m: i32, branch: LogBranch) -> Result<Complex64> {
    let rates = compute_rates(stack, omega)?;
    dtilde_from_rates(&rates, omega, m, branch)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DtildeSample {
    pub omega: f64,
    pub m: i32,
    /// Formal width from principal roots; `None` when the condition is singular.
    pub value: Option<Complex64>,
    /// Both outer rates have positive real part.
    pub decaying: bool,
}

impl DtildeSample {
    /// Positive real width, ignoring the decay requirement.
    pub fn is_positive_real(&self, im_tol: f64) -> bool {
        matches!(self.value, Some(v) if v.re > 0.0 && v.im.abs() < im_tol)
    }

    pub fn is_admissible(&self, im_tol: f64) -> bool {
        self.decaying && self.is_positive_real(im_tol)
    }
}

pub fn dtilde_sample(stack: &LayerStack, omega: f64, m: i32, branch: LogBranch) -> DtildeSample {
    match formal_rates(stack, omega) {
        Ok(r) => DtildeSample { omega, m, value: dtilde_from_rates(&r, omega, m, branch).ok(), decaying: r.decaying() },
        Err(_) => DtildeSample { omega, m, value: None, decaying: false },
    }
}

pub fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => vec![],
        1 => vec![lo],
        _ => (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect(),
    }
}

pub fn scan_dtilde(stack: &LayerStack, omega_range: (f64, f64), steps: usize, m: i32, branch: LogBranch) -> Vec<DtildeSample> {
    linspace(omega_range.0, omega_range.1, steps).into_par_iter().map(|omega| dtilde_sample(stack, omega, m, branch)).collect()
}

/// Start of the final run of admissible samples that extends to the end of the scan.
pub fn positivity_onset(samples: &[DtildeSample], im_tol: f64) -> Option<f64> {
    let last_bad = samples.iter().rposition(|s| !s.is_admissible(im_tol));
    match last_bad {
        None => samples.first().map(|s| s.omega),
        Some(i) if i + 1 < samples.len() => Some(samples[i + 1].omega),
        Some(_) => None,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NonexistenceReport {
    pub samples: usize,
    pub singular: usize,
    /// Samples where some outer rate has `Re <= 0`.
    pub non_decaying: usize,
    /// Samples with `Re d > 0` and `|Im d| < im_tol`, decaying or not.
    pub positive_real: usize,
    /// Decaying samples with `Re d > 0` and `|Im d| < im_tol`.
    pub admissible: Vec<DtildeSample>,
}

/// Scans all `m` values for admissible widths.
pub fn nonexistence_scan(
    stack: &LayerStack,
    omega_range: (f64, f64),
    steps: usize,
    ms: &[i32],
    branch: LogBranch,
    im_tol: f64,
) -> NonexistenceReport {
    let mut samples = 0;
    let mut singular = 0;
    let mut non_decaying = 0;
    let mut positive_real = 0;
    let mut admissible = Vec::new();
    for &m in ms {
        for s in scan_dtilde(stack, omega_range, steps, m, branch) {
            samples += 1;
            if s.value.is_none() {
                singular += 1;
            }
            if !s.decaying {
                non_decaying += 1;
            }
            if s.is_positive_real(im_tol) {
                positive_real += 1;
            }
            if s.is_admissible(im_tol) {
                admissible.push(s);
            }
        }
    }
    NonexistenceReport { samples, singular, non_decaying, positive_real, admissible }
}

/// Real frequency where `Re dtilde_m(omega) = d` with a real width.
///
/// A 200-point scan brackets sign changes, bisection with secant steps
/// refines each; brackets caused by branch-cut jumps are discarded.
pub fn find_omega0(stack: &LayerStack, d: f64, m: i32, branch: LogBranch, bracket: (f64, f64)) -> Result<f64> {
    let (lo, hi) = bracket;
    if !(lo < hi) {
        return Err(invalid("bracket", "lower end must be below upper end"));
    }
    let f = |omega: f64| dtilde(stack, omega, m, branch).map(|z| z.re - d);
    let grid = linspace(lo, hi, 200);
    let values: Vec<Option<f64>> = grid.iter().map(|&w| f(w).ok()).collect();
    let mut last_err = None;
    for i in 0..grid.len() - 1 {
        let (Some(fa), Some(fb)) = (values[i], values[i + 1]) else { continue };
        if fa == 0.0 {
            return check_root(stack, d, m, branch, grid[i]);
        }
        if fa.signum() == fb.signum() {
            continue;
        }
        let root = refine_root(&f, grid[i], grid[i + 1], fa, fb)?;
        match check_root(stack, d, m, branch, root) {
            Ok(r) => return Ok(r),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or(SppError::NoRoot { lo, hi }))
}

fn check_root(stack: &LayerStack, d: f64, m: i32, branch: LogBranch, omega: f64) -> Result<f64> {
    let z = dtilde(stack, omega, m, branch)?;
    if (z.re - d).abs() > 1e-8 * d.abs().max(1.0) {
        return Err(SppError::NoRoot { lo: omega, hi: omega });
    }
    if z.im.abs() > 1e-8 {
        return Err(SppError::NonRealWidth { omega, im: z.im });
    }
    Ok(omega)
}

/// Bracketed root of a real function: Illinois false position with bisection safeguard.
pub fn refine_root<F>(f: &F, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut side = 0;
    for _ in 0..200 {
        if (b - a).abs() <= 1e-13 * a.abs().max(1.0) {
            break;
        }
        let mut c = (a * fb - b * fa) / (fb - fa);
        let width = (b - a).abs();
        if !c.is_finite() || (c - a).abs() < 0.01 * width || (b - c).abs() < 0.01 * width {
            c = 0.5 * (a + b);
        }
        let fc = f(c)?;
        if fc == 0.0 {
            return Ok(c);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Ok(if fa.abs() < fb.abs() { a } else { b })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenConstants {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

/// Piecewise exponential eigenfunction of a three-layer sandwich.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticProfile {
    pub rates: ThreeLayerRates,
    pub constants: EigenConstants,
    pub x1: f64,
    pub width: f64,
}

impl AnalyticProfile {
    /// Derivative of order 0, 1 or 2 at `x`; interface points use the right limit.
    pub fn derivative(&self, x: f64, order: u32) -> Complex64 {
        let s = x - self.x1;
        let ThreeLayerRates { lambda_minus: lm, lambda_plus: lp, mu } = self.rates;
        let EigenConstants { a, b, c, d } = self.constants;
        if s < 0.0 {
            a * lm.powu(order) * (lm * s).exp()
        } else if s < self.width {
            b * mu.powu(order) * (mu * s).exp() + c * (-mu).powu(order) * (-mu * s).exp()
        } else {
            d * (-lp).powu(order) * (-lp * s).exp()
        }
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        self.derivative(x, 0)
    }

    /// One-sided limits of the value and slope at the interface `x1` (`left = true`)
    /// or `x1 + width`.
    pub fn one_sided(&self, at_left: bool, from_left: bool, order: u32) -> Complex64 {
        let ThreeLayerRates { lambda_minus: lm, lambda_plus: lp, mu } = self.rates;
        let EigenConstants { a, b, c, d } = self.constants;
        let s = if at_left { 0.0 } else { self.width };
        let core = b * mu.powu(order) * (mu * s).exp() + c * (-mu).powu(order) * (-mu * s).exp();
        match (at_left, from_left) {
            (true, true) => a * lm.powu(order),
            (false, false) => d * (-lp).powu(order) * (-lp * s).exp(),
            _ => core,
        }
    }
}

pub fn analytic_eigenfunction(stack: &LayerStack, omega0: f64) -> Result<AnalyticProfile> {
    let width = stack.width().ok_or_else(|| invalid("stack", "expected 3 layers"))?;
    let rates = compute_rates(stack, omega0)?;
    let ThreeLayerRates { lambda_minus: _, lambda_plus: lp, mu } = rates;
    width_multiplier(&rates, omega0)?;
    let d = width;
    let ratio = lp / mu;
    let one = Complex64::new(1.0, 0.0);
    let a = (-lp * d).exp() * 0.5 * ((one - ratio) * (-mu * d).exp() + (one + ratio) * (mu * d).exp());
    let b = 0.5 * (one - ratio) * (-(mu + lp) * d).exp();
    let c = 0.5 * (one + ratio) * ((mu - lp) * d).exp();
    let constants = EigenConstants { a, b, c, d: one };
    let profile = AnalyticProfile { rates, constants, x1: stack.interfaces[0], width };
    let residual = matching_residual(&profile);
    if !(residual <= 1e-8) {
        return Err(SppError::Matching { residual });
    }
    Ok(profile)
}

/// Largest relative violation of the four matching relations.
pub fn matching_residual(p: &AnalyticProfile) -> f64 {
    let rel = |u: Complex64, v: Complex64| (u - v).norm() / (u.norm() + v.norm()).max(f64::MIN_POSITIVE);
    [
        rel(p.one_sided(true, true, 0), p.one_sided(true, false, 0)),
        rel(p.one_sided(true, true, 1), p.one_sided(true, false, 1)),
        rel(p.one_sided(false, true, 0), p.one_sided(false, false, 0)),
        rel(p.one_sided(false, true, 1), p.one_sided(false, false, 1)),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Tests `W(c - x) = conj W(c + x)` about the stack center at sampled offsets.
pub fn pt_check(stack: &LayerStack, omega: f64) -> bool {
    let center = stack.center();
    let span = match (stack.interfaces.first(), stack.interfaces.last()) {
        (Some(a), Some(b)) => (b - a).max(1.0),
        _ => 1.0,
    };
    (1..=64).all(|i| {
        let x = span * (i as f64 - 0.5) / 32.0;
        match (stack.w_eval(center - x, omega), stack.w_eval(center + x, omega)) {
            (Ok(l), Ok(r)) => (l - r.conj()).norm() <= 1e-12 * l.norm().max(1.0),
            _ => false,
        }
    })
}
