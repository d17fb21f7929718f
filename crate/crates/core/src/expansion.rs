//! Bifurcation expansion `omega = omega0 + eps nu + eps^(1+tau) sigma`,
//! `phi = eps^(1/2) (phi0 + eps phi + eps^(1+tau) psi)` for the cubic nonlinearity.

use num_complex::Complex64;

use crate::banded::{BandedLu, BorderedSolver};
use crate::error::{invalid, Result, SppError};
use crate::grid::{assemble_l_with, assemble_multiplier, assemble_potential, gamma_nodes, inner, norm, BandedOperator};
use crate::materials::LayerStack;
use crate::spectrum::{project_q0, EigenData};

type Field = Vec<Complex64>;

const ALPHA: f64 = 0.5;
const FIXED_POINT_TOL: f64 = 1e-12;
const MAX_FIXED_POINT_ITERATIONS: usize = 200;

#[derive(Clone, Debug)]
pub struct ExpansionData {
    pub nu: Complex64,
    pub phi_corr: Field,
    pub alpha: f64,
    pub tau: f64,
    /// Multiplier `zeta` of the bordered solve, relative to `||r||`.
    pub solvability_defect: f64,
}

#[derive(Clone, Debug)]
pub struct SecondOrderData {
    pub sigma: Complex64,
    pub psi: Field,
    pub epsilon: f64,
    pub tau: f64,
    /// Outer iterations on sigma.
    pub iterations: usize,
    /// Total inner iterations on psi.
    pub inner_iterations: usize,
    /// Largest observed ratio of successive sigma updates.
    pub contraction_estimate: f64,
    /// Largest observed ratio of successive psi updates.
    pub inner_contraction_estimate: f64,
    pub sigma_residual: f64,
    pub psi_residual: f64,
}

/// Operators at `omega0` shared by all expansion steps.
pub struct Expander<'a> {
    pub eig: &'a EigenData,
    pub stack: &'a LayerStack,
    l0: BandedOperator,
    lu: BandedLu<Complex64>,
    dv1: BandedOperator,
    dv2: BandedOperator,
    gamma0: Field,
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn cubic(gamma: &[Complex64], u: &[Complex64]) -> Field {
    gamma.iter().zip(u).map(|(g, z)| g * z.norm_sqr() * z).collect()
}

fn axpy(acc: &mut [Complex64], a: Complex64, x: &[Complex64]) {
    for (y, v) in acc.iter_mut().zip(x) {
        *y += a * v;
    }
}

impl<'a> Expander<'a> {
    pub fn new(eig: &'a EigenData, stack: &'a LayerStack) -> Result<Self> {
        let w0 = c(eig.omega0);
        let l0 = assemble_l_with(&eig.grid, stack, w0, eig.treatment)?;
        let lu = match BandedLu::factor(&l0) {
            Ok(lu) => lu,
            Err(_) => {
                let mut shifted = l0.clone();
                shifted.add_diagonal(c(1e-14 * l0.max_abs()));
                BandedLu::factor(&shifted)?
            }
        };
        let dv1 = assemble_potential(&eig.grid, stack, w0, 1, eig.treatment)?;
        let dv2 = assemble_potential(&eig.grid, stack, w0, 2, eig.treatment)?;
        let gamma0 = gamma_nodes(&eig.grid, stack, w0, 0, eig.treatment);
        Ok(Expander { eig, stack, l0, lu, dv1, dv2, gamma0 })
    }

    fn h(&self) -> f64 {
        self.eig.grid.h
    }

    fn pair(&self, u: &[Complex64]) -> Complex64 {
        inner(u, &self.eig.phi0_star, self.h())
    }

    /// `<dW phi0, phi0*>`.
    pub fn transversality(&self) -> Complex64 {
        self.pair(&self.dv1.apply(&self.eig.phi0))
    }

    pub fn nu(&self) -> Result<Complex64> {
        let t = self.transversality();
        if t.norm() < 1e-14 {
            return Err(invalid("transversality", "vanishes, so nu is undefined"));
        }
        Ok(-self.pair(&cubic(&self.gamma0, &self.eig.phi0)) / t)
    }

    /// Solves `L0 u + zeta phi0 = r`, `<u, phi0*> = 0`.
    pub fn bordered_solve(&self, r: &[Complex64]) -> Result<(Field, Complex64)> {
        let h = self.h();
        let row: Field = self.eig.phi0_star.iter().map(|z| z.conj() * h).collect();
        let solver = BorderedSolver::new(&self.l0, &self.lu, self.eig.phi0.clone(), row)?;
        Ok(solver.solve(r, c(0.0)))
    }

    /// Correction `phi` solving `Q0 L0 Q0 phi = Gamma |phi0|^2 phi0 + nu dW phi0`.
    pub fn phi_correction(&self, nu: Complex64) -> Result<(Field, f64)> {
        let mut r = cubic(&self.gamma0, &self.eig.phi0);
        axpy(&mut r, nu, &self.dv1.apply(&self.eig.phi0));
        let rn = norm(&r, self.h());
        if rn == 0.0 {
            return Ok((vec![c(0.0); r.len()], 0.0));
        }
        let (phi, zeta) = self.bordered_solve(&r)?;
        Ok((phi, zeta.norm() / rn))
    }

    /// Residual `||Q0 L0 Q0 u - Q0 r|| / ||r||` of a correction.
    pub fn correction_residual(&self, u: &[Complex64], r: &[Complex64]) -> f64 {
        let qu = project_q0(u, self.eig);
        let lqu = self.l0.apply(&qu);
        let lhs = project_q0(&lqu, self.eig);
        let rhs = project_q0(r, self.eig);
        let d: Field = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
        norm(&d, self.h()) / norm(r, self.h()).max(f64::MIN_POSITIVE)
    }

    pub fn phi_rhs(&self, nu: Complex64) -> Field {
        let mut r = cubic(&self.gamma0, &self.eig.phi0);
        axpy(&mut r, nu, &self.dv1.apply(&self.eig.phi0));
        r
    }

    /// `v / eps^alpha` for the given state.
    pub fn v_scaled(&self, exp: &ExpansionData, eps: f64, tau: f64, sigma: Complex64, psi: &[Complex64]) -> Result<Field> {
        let nu = exp.nu;
        let phi = &exp.phi_corr;
        let et = eps.powf(tau);
        let omega = c(self.eig.omega0) + eps * nu + eps.powf(1.0 + tau) * sigma;
        let u = state(&self.eig.phi0, phi, psi, eps, tau);
        let d1phi = self.dv1.apply(phi);
        let d1psi = self.dv1.apply(psi);
        let phi_tau_psi: Field = phi.iter().zip(psi).map(|(a, b)| a + et * b).collect();
        let d2a = self.dv2.apply(&phi_tau_psi);
        let d2u = self.dv2.apply(&u);
        let rem_vals = self.stack.layer_taylor_remainder(c(self.eig.omega0), omega)?;
        let rem = assemble_multiplier(&self.eig.grid, self.stack, &rem_vals, self.eig.treatment);
        let iu = rem.apply(&u);

        let e2t = eps.powf(2.0 + tau);
        let mut v = vec![c(0.0); u.len()];
        axpy(&mut v, e2t * sigma, &d1phi);
        axpy(&mut v, e2t * (nu + et * sigma), &d1psi);
        axpy(&mut v, eps.powi(3) * nu * nu * 0.5, &d2a);
        axpy(&mut v, e2t * 0.5 * (2.0 * nu * sigma + et * sigma * sigma), &d2u);
        axpy(&mut v, c(1.0), &iu);
        Ok(v)
    }

    /// Nonlinear part `(f(omega, phi) - eps^(alpha+1) Gamma0 |phi0|^2 phi0) / eps^alpha`.
    fn nonlinear_defect(&self, eps: f64, omega: Complex64, u: &[Complex64]) -> Field {
        let gamma = gamma_nodes(&self.eig.grid, self.stack, omega, 0, self.eig.treatment);
        let full = cubic(&gamma, u);
        let lead = cubic(&self.gamma0, &self.eig.phi0);
        full.iter().zip(&lead).map(|(a, b)| (a - b) * eps).collect()
    }

    /// `R / eps^alpha` before projection.
    fn r_scaled(&self, exp: &ExpansionData, eps: f64, tau: f64, sigma: Complex64, psi: &[Complex64]) -> Result<Field> {
        let omega = c(self.eig.omega0) + eps * exp.nu + eps.powf(1.0 + tau) * sigma;
        let u = state(&self.eig.phi0, &exp.phi_corr, psi, eps, tau);
        let mut r = self.nonlinear_defect(eps, omega, &u);
        axpy(&mut r, eps.powf(1.0 + tau) * sigma, &self.dv1.apply(&self.eig.phi0));
        axpy(&mut r, c(eps * eps), &self.r3(exp));
        let v = self.v_scaled(exp, eps, tau, sigma, psi)?;
        axpy(&mut r, c(1.0), &v);
        Ok(r)
    }

    /// `nu^2/2 d2W phi0 + nu dW phi`.
    fn r3(&self, exp: &ExpansionData) -> Field {
        let mut r = self.dv2.apply(&self.eig.phi0);
        for z in &mut r {
            *z *= 0.5 * exp.nu * exp.nu;
        }
        axpy(&mut r, exp.nu, &self.dv1.apply(&exp.phi_corr));
        r
    }

    /// `G(sigma, psi) = eps^-(1+tau) [Q0 L0 Q0]^-1 Q0 R / eps^alpha`.
    pub fn g_map(&self, exp: &ExpansionData, eps: f64, tau: f64, sigma: Complex64, psi: &[Complex64]) -> Result<Field> {
        let r = self.r_scaled(exp, eps, tau, sigma, psi)?;
        let qr = project_q0(&r, self.eig);
        let (mut out, _) = self.bordered_solve(&qr)?;
        let s = eps.powf(-(1.0 + tau));
        for z in &mut out {
            *z *= s;
        }
        Ok(out)
    }

    /// `S(sigma)` with `psi` held fixed.
    pub fn s_map(&self, exp: &ExpansionData, eps: f64, tau: f64, sigma: Complex64, psi: &[Complex64]) -> Result<Complex64> {
        let omega = c(self.eig.omega0) + eps * exp.nu + eps.powf(1.0 + tau) * sigma;
        let u = state(&self.eig.phi0, &exp.phi_corr, psi, eps, tau);
        let t = self.transversality();
        let rhs = -eps * eps * self.pair(&self.r3(exp))
            - self.pair(&self.v_scaled(exp, eps, tau, sigma, psi)?)
            - self.pair(&self.nonlinear_defect(eps, omega, &u));
        Ok(rhs / (eps.powf(1.0 + tau) * t))
    }
}

/// `phi0 + eps phi + eps^(1+tau) psi`.
fn state(phi0: &[Complex64], phi: &[Complex64], psi: &[Complex64], eps: f64, tau: f64) -> Field {
    let e1 = eps.powf(1.0 + tau);
    phi0.iter().zip(phi).zip(psi).map(|((a, b), d)| a + eps * b + e1 * d).collect()
}

pub fn compute_nu(eig: &EigenData, stack: &LayerStack) -> Result<Complex64> {
    Expander::new(eig, stack)?.nu()
}

/// Returns the correction and the relative solvability defect `|zeta| / ||r||`.
pub fn solve_phi_correction(eig: &EigenData, stack: &LayerStack, nu: Complex64) -> Result<(Field, f64)> {
    Expander::new(eig, stack)?.phi_correction(nu)
}

pub fn expand(eig: &EigenData, stack: &LayerStack) -> Result<ExpansionData> {
    let ex = Expander::new(eig, stack)?;
    let nu = ex.nu()?;
    let (phi_corr, solvability_defect) = ex.phi_correction(nu)?;
    Ok(ExpansionData { nu, phi_corr, alpha: ALPHA, tau: 1.0, solvability_defect })
}

/// Truncated expansion at `eps`; the second-order terms are added when supplied.
pub fn predictor(exp: &ExpansionData, eig: &EigenData, eps: f64, second: Option<&SecondOrderData>) -> (Complex64, Field) {
    let a = eps.powf(exp.alpha);
    let mut omega = c(eig.omega0) + eps * exp.nu;
    let mut field: Field = eig.phi0.iter().zip(&exp.phi_corr).map(|(p0, p)| a * p0 + a * eps * p).collect();
    if let Some(s) = second {
        let e = eps.powf(1.0 + s.tau);
        omega += e * s.sigma;
        axpy(&mut field, c(a * e), &s.psi);
    }
    (omega, field)
}

/// Nested fixed-point iteration for `(sigma, psi)`: `psi = G(sigma, psi)` inside, `sigma = S(sigma)` outside.
pub fn second_order_fixed_point(eig: &EigenData, exp: &ExpansionData, stack: &LayerStack, eps: f64, tau: f64) -> Result<SecondOrderData> {
    if !(eps > 0.0) {
        return Err(invalid("epsilon", "must be positive"));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(invalid("tau", "must lie in (0, 1]"));
    }
    let ex = Expander::new(eig, stack)?;
    let n = eig.phi0.len();
    let h = eig.grid.h;
    let mut sigma = c(0.0);
    let mut psi = vec![c(0.0); n];
    let mut inner_total = 0;
    let mut outer_ratio: f64 = 0.0;
    let mut inner_ratio: f64 = 0.0;
    let mut last_dsigma = f64::INFINITY;

    let solve_psi = |sigma: Complex64, psi: &mut Field, inner_total: &mut usize, inner_ratio: &mut f64| -> Result<f64> {
        let mut last = f64::INFINITY;
        for it in 0..MAX_FIXED_POINT_ITERATIONS {
            let next = ex.g_map(exp, eps, tau, sigma, psi)?;
            let diff: Field = next.iter().zip(psi.iter()).map(|(a, b)| a - b).collect();
            let dn = norm(&diff, h);
            let scale = norm(&next, h).max(1.0);
            *psi = next;
            *inner_total += 1;
            if it >= 2 && last > 0.0 && last.is_finite() && dn > 1e3 * FIXED_POINT_TOL * scale {
                let ratio = dn / last;
                *inner_ratio = inner_ratio.max(ratio);
                if ratio >= 1.0 {
                    return Err(SppError::Divergence { ratio });
                }
            }
            if !dn.is_finite() {
                return Err(SppError::Divergence { ratio: f64::INFINITY });
            }
            if dn <= FIXED_POINT_TOL * scale {
                return Ok(dn);
            }
            last = dn;
        }
        Err(SppError::NoConvergence { what: "psi fixed point", iterations: MAX_FIXED_POINT_ITERATIONS, residual: last })
    };

    for it in 0..MAX_FIXED_POINT_ITERATIONS {
        solve_psi(sigma, &mut psi, &mut inner_total, &mut inner_ratio)?;
        let next = ex.s_map(exp, eps, tau, sigma, &psi)?;
        let ds = (next - sigma).norm();
        sigma = next;
        if !ds.is_finite() {
            return Err(SppError::Divergence { ratio: f64::INFINITY });
        }
        if it >= 1 && last_dsigma.is_finite() && last_dsigma > 0.0 && ds > 1e3 * FIXED_POINT_TOL * sigma.norm().max(1.0) {
            let ratio = ds / last_dsigma;
            outer_ratio = outer_ratio.max(ratio);
            if ratio >= 1.0 {
                return Err(SppError::Divergence { ratio });
            }
        }
        if ds <= FIXED_POINT_TOL * sigma.norm().max(1.0) {
            let psi_residual = solve_psi(sigma, &mut psi, &mut inner_total, &mut inner_ratio)?;
            let sigma_residual = (ex.s_map(exp, eps, tau, sigma, &psi)? - sigma).norm();
            return Ok(SecondOrderData {
                sigma,
                psi,
                epsilon: eps,
                tau,
                iterations: it + 1,
                inner_iterations: inner_total,
                contraction_estimate: outer_ratio,
                inner_contraction_estimate: inner_ratio,
                sigma_residual,
                psi_residual,
            });
        }
        last_dsigma = ds;
    }
    Err(SppError::NoConvergence { what: "sigma fixed point", iterations: MAX_FIXED_POINT_ITERATIONS, residual: last_dsigma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{assemble_potential, pt_defect};
    use crate::materials::MaterialModel;
    use crate::spectrum::{solve_linear_eigenpair, GridSpec};

    fn cx(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn case2() -> LayerStack {
        LayerStack::three_layer(
            MaterialModel::constant(cx(9.2, -1.28)),
            MaterialModel::drude(0.0),
            MaterialModel::constant(cx(9.2, 1.28)),
            1.0,
            2.0,
        )
        .unwrap()
    }

    fn eig2(stack: &LayerStack) -> EigenData {
        solve_linear_eigenpair(stack, GridSpec::new(1024), 3.8275, (3.6, 4.0)).unwrap()
    }

    #[test]
    fn zero_nonlinearity_gives_zero_corrections() {
        let stack = case2().with_chi3_scale(0.0);
        let eig = eig2(&stack);
        let exp = expand(&eig, &stack).unwrap();
        assert_eq!(exp.nu, cx(0.0, 0.0));
        assert!(exp.phi_corr.iter().all(|z| z.norm() == 0.0));
        let so = second_order_fixed_point(&eig, &exp, &stack, 1e-3, 1.0).unwrap();
        assert!(so.sigma.norm() < 1e-12);
        assert!(norm(&so.psi, eig.h()) < 1e-12);
    }

    #[test]
    fn correction_properties() {
        let stack = case2();
        let eig = eig2(&stack);
        let ex = Expander::new(&eig, &stack).unwrap();
        let nu = ex.nu().unwrap();
        assert!(nu.im.abs() <= 1e-6 * nu.norm());
        let (phi, defect) = ex.phi_correction(nu).unwrap();
        assert!(defect <= 1e-8);
        let r = ex.phi_rhs(nu);
        assert!(ex.correction_residual(&phi, &r) <= 1e-8);
        assert!(inner(&phi, &eig.phi0_star, eig.h()).norm() <= 1e-10);
        assert!(pt_defect(&phi) <= 1e-6);
        // nu balances the projected forcing.
        let proj_w = nu * ex.transversality();
        let proj_g = ex.pair(&cubic(&ex.gamma0, &eig.phi0));
        assert!((proj_w + proj_g).norm() <= 1e-10 * proj_g.norm());
    }

    #[test]
    fn v_collects_the_higher_order_terms() {
        let stack = case2();
        let eig = eig2(&stack);
        let ex = Expander::new(&eig, &stack).unwrap();
        let exp = expand(&eig, &stack).unwrap();
        let (eps, tau) = (0.05, 1.0);
        let sigma = cx(1.3, -0.4);
        let psi: Field = eig.phi0.iter().enumerate().map(|(j, z)| z * cx((j as f64 * 1e-3).cos(), 0.2)).collect();
        let omega = cx(eig.omega0, 0.0) + eps * exp.nu + eps.powf(1.0 + tau) * sigma;
        let u = state(&eig.phi0, &exp.phi_corr, &psi, eps, tau);
        let v_omega = assemble_potential(&eig.grid, &stack, omega, 0, eig.treatment).unwrap();
        let v0 = assemble_potential(&eig.grid, &stack, cx(eig.omega0, 0.0), 0, eig.treatment).unwrap();
        let lhs: Field = v_omega.apply(&u).iter().zip(v0.apply(&u)).map(|(a, b)| a - b).collect();
        let mut rhs = vec![cx(0.0, 0.0); u.len()];
        axpy(&mut rhs, eps * exp.nu + eps.powf(1.0 + tau) * sigma, &ex.dv1.apply(&eig.phi0));
        axpy(&mut rhs, cx(eps * eps, 0.0), &ex.r3(&exp));
        axpy(&mut rhs, cx(1.0, 0.0), &ex.v_scaled(&exp, eps, tau, sigma, &psi).unwrap());
        let d: Field = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
        assert!(norm(&d, eig.h()) <= 1e-10 * norm(&lhs, eig.h()));
    }

    #[test]
    fn second_order_is_real_and_pt() {
        let stack = case2();
        let eig = eig2(&stack);
        let exp = expand(&eig, &stack).unwrap();
        let so = second_order_fixed_point(&eig, &exp, &stack, 1e-3, 1.0).unwrap();
        assert!(so.sigma.im.abs() <= 1e-8 * so.sigma.norm().max(1.0));
        assert!(pt_defect(&so.psi) <= 1e-6);
        assert!(inner(&so.psi, &eig.phi0_star, eig.h()).norm() <= 1e-10);
        assert!(so.sigma_residual <= 1e-10 && so.psi_residual <= 1e-10 * norm(&so.psi, eig.h()).max(1.0));
        assert!(so.contraction_estimate < 1.0);
    }

    #[test]
    fn predictor_basics() {
        let stack = case2();
        let eig = eig2(&stack);
        let exp = expand(&eig, &stack).unwrap();
        let (w, f) = predictor(&exp, &eig, 0.0, None);
        assert_eq!(w, cx(eig.omega0, 0.0));
        assert!(f.iter().all(|z| z.norm() == 0.0));
        let eps = (eig.omega0 - 3.2) / exp.nu.norm();
        let (w, f) = predictor(&exp, &eig, eps, None);
        assert!((w.re - 3.2).abs() < 1e-6 * exp.nu.im.abs().max(1.0) + 1e-9);
        let small = 1e-4;
        let (_, f2) = predictor(&exp, &eig, small, None);
        assert!((norm(&f2, eig.h()) / small.sqrt() - 1.0).abs() < 1e-2);
        assert!(norm(&f, eig.h()) > 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        let stack = case2();
        let eig = eig2(&stack);
        let exp = expand(&eig, &stack).unwrap();
        assert!(second_order_fixed_point(&eig, &exp, &stack, 0.0, 1.0).is_err());
        assert!(second_order_fixed_point(&eig, &exp, &stack, 1e-3, 1.5).is_err());
    }
}
