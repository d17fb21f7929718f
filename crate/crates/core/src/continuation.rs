//! Newton solves of `phi'' + W phi + Gamma |phi|^2 phi = 0` restricted to
//! PT-symmetric fields, and natural continuation in omega.

use num_complex::Complex64;

use crate::banded::{BandedLu, BandedMatrix, BorderedSolver};
use crate::error::{invalid, Result, SppError};
use crate::expansion::{predictor, ExpansionData};
use crate::grid::{
    assemble_potential, fd4_second_derivative, gamma_nodes, inner, norm, pt_defect, BandedOperator, Grid, InterfaceTreatment,
};
use crate::materials::LayerStack;
use crate::spectrum::EigenData;

type Field = Vec<Complex64>;

const MAX_HALVINGS: usize = 6;
const MAX_STEP_BISECTIONS: usize = 5;
const TRIVIAL_NORM: f64 = 1e-8;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Index layout of PT-reduced coordinates on a grid with a center node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PtLayout {
    pub n: usize,
    pub center: usize,
}

impl PtLayout {
    pub fn new(grid: &Grid) -> Result<Self> {
        let center = grid.center_node().ok_or_else(|| SppError::Grid("PT reduction needs an odd number of nodes".into()))?;
        Ok(PtLayout { n: grid.n, center })
    }

    fn re_index(&self, node: usize) -> usize {
        if node == self.center {
            0
        } else {
            2 * (node - self.center) - 1
        }
    }

    fn im_index(&self, node: usize) -> Option<usize> {
        (node != self.center).then(|| 2 * (node - self.center))
    }

    /// Mirror of a node about the center.
    fn mirror(&self, node: usize) -> usize {
        2 * self.center - node
    }
}

/// Real coordinates of the PT part `(phi + B phi) / 2` of a field.
pub fn pt_reduce(field: &[Complex64], layout: &PtLayout) -> Vec<f64> {
    let mut out = vec![0.0; layout.n];
    let c0 = layout.center;
    out[0] = field[c0].re;
    for k in 1..=c0 {
        let sym = 0.5 * (field[c0 + k] + field[c0 - k].conj());
        out[2 * k - 1] = sym.re;
        out[2 * k] = sym.im;
    }
    out
}

pub fn pt_expand(coords: &[f64], layout: &PtLayout) -> Field {
    let c0 = layout.center;
    let mut out = vec![c(0.0); layout.n];
    out[c0] = c(coords[0]);
    for k in 1..=c0 {
        let z = Complex64::new(coords[2 * k - 1], coords[2 * k]);
        out[c0 + k] = z;
        out[c0 - k] = z.conj();
    }
    out
}

/// Discrete nonlinear operator at a fixed frequency.
pub struct NonlinearProblem<'a> {
    pub grid: &'a Grid,
    pub stack: &'a LayerStack,
    pub omega: f64,
    pub treatment: InterfaceTreatment,
    linear: BandedOperator,
    gamma: Field,
}

impl<'a> NonlinearProblem<'a> {
    pub fn new(grid: &'a Grid, stack: &'a LayerStack, omega: f64, treatment: InterfaceTreatment) -> Result<Self> {
        let d2 = fd4_second_derivative(grid);
        let v = assemble_potential(grid, stack, c(omega), 0, treatment)?;
        let linear = d2.add_scaled(c(1.0), &v);
        let gamma = gamma_nodes(grid, stack, c(omega), 0, treatment);
        Ok(NonlinearProblem { grid, stack, omega, treatment, linear, gamma })
    }

    /// `F(phi) = D2 phi + W phi + Gamma |phi|^2 phi`.
    pub fn residual(&self, phi: &[Complex64]) -> Field {
        let mut r = self.linear.apply(phi);
        for ((ri, g), z) in r.iter_mut().zip(&self.gamma).zip(phi) {
            *ri += g * z.norm_sqr() * z;
        }
        r
    }

    /// Real-linear Jacobian action `D2 d + W d + Gamma (2 |phi|^2 d + phi^2 conj(d))`.
    pub fn jacobian_apply(&self, phi: &[Complex64], dphi: &[Complex64]) -> Field {
        let mut r = self.linear.apply(dphi);
        for (((ri, g), z), d) in r.iter_mut().zip(&self.gamma).zip(phi).zip(dphi) {
            *ri += g * (2.0 * z.norm_sqr() * d + z * z * d.conj());
        }
        r
    }

    /// `dF/domega = dW phi + dGamma |phi|^2 phi`.
    pub fn omega_derivative(&self, phi: &[Complex64]) -> Result<Field> {
        let dv = assemble_potential(self.grid, self.stack, c(self.omega), 1, self.treatment)?;
        let dg = gamma_nodes(self.grid, self.stack, c(self.omega), 1, self.treatment);
        let mut r = dv.apply(phi);
        for ((ri, g), z) in r.iter_mut().zip(&dg).zip(phi) {
            *ri += g * z.norm_sqr() * z;
        }
        Ok(r)
    }

    /// Jacobian in PT-reduced coordinates as a real banded matrix.
    pub fn reduced_jacobian(&self, phi: &[Complex64], layout: &PtLayout) -> BandedMatrix<f64> {
        let n = layout.n;
        let c0 = layout.center;
        let mut jac = BandedMatrix::<f64>::zeros(n, 5, 5);
        for eq in c0..n {
            let mut pairs: Vec<(usize, Complex64, Complex64)> = Vec::with_capacity(6);
            for k in self.linear.row_range(eq) {
                let mut p = self.linear.get(eq, k);
                let mut q = c(0.0);
                if k == eq {
                    let z = phi[eq];
                    p += self.gamma[eq] * 2.0 * z.norm_sqr();
                    q = self.gamma[eq] * z * z;
                }
                if k >= c0 {
                    pairs.push((k, p, q));
                } else {
                    pairs.push((layout.mirror(k), q, p));
                }
            }
            let rows = [Some(layout.re_index(eq)), layout.im_index(eq)];
            for (node, p, q) in pairs {
                let (plus, minus) = (p + q, p - q);
                let re_col = layout.re_index(node);
                let im_col = layout.im_index(node);
                if let Some(r) = rows[0] {
                    jac.add_to(r, re_col, plus.re);
                    if let Some(ic) = im_col {
                        jac.add_to(r, ic, -minus.im);
                    }
                }
                if let Some(r) = rows[1] {
                    jac.add_to(r, re_col, plus.im);
                    if let Some(ic) = im_col {
                        jac.add_to(r, ic, minus.re);
                    }
                }
            }
        }
        jac
    }
}

pub fn nonlinear_residual(phi: &[Complex64], omega: f64, stack: &LayerStack, grid: &Grid) -> Result<Field> {
    Ok(NonlinearProblem::new(grid, stack, omega, InterfaceTreatment::default())?.residual(phi))
}

pub fn newton_jacobian_apply(phi: &[Complex64], omega: f64, dphi: &[Complex64], stack: &LayerStack, grid: &Grid) -> Result<Field> {
    Ok(NonlinearProblem::new(grid, stack, omega, InterfaceTreatment::default())?.jacobian_apply(phi, dphi))
}

#[derive(Clone, Debug)]
pub struct BranchPoint {
    pub omega: f64,
    pub phi: Field,
    /// `eps` from `<phi, phi0*> = eps^(1/2)`; zero when no reference eigenfunction is known.
    pub eps: f64,
    pub residual: f64,
    pub l2norm: f64,
    pub iterations: usize,
    /// Newton converged to (numerically) zero.
    pub trivial: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-10, max_iter: 50 }
    }
}

fn validate(opts: &NewtonOptions) -> Result<()> {
    if !(opts.tol >= 1e-13) {
        return Err(invalid("tol", "must be at least 1e-13"));
    }
    Ok(())
}

/// Damped Newton at fixed omega in PT-reduced coordinates.
pub fn newton_solve(
    phi_init: &[Complex64],
    omega: f64,
    stack: &LayerStack,
    grid: &Grid,
    treatment: InterfaceTreatment,
    opts: NewtonOptions,
) -> Result<BranchPoint> {
    validate(&opts)?;
    let layout = PtLayout::new(grid)?;
    let problem = NonlinearProblem::new(grid, stack, omega, treatment)?;
    let h = grid.h;
    let mut x = pt_reduce(phi_init, &layout);
    let mut phi = pt_expand(&x, &layout);
    let mut res = norm(&problem.residual(&phi), h);
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let target = opts.tol * 1e-2;
        if res <= target {
            break;
        }
        let jac = problem.reduced_jacobian(&phi, &layout);
        let lu = BandedLu::factor(&jac)?;
        let f = pt_reduce(&problem.residual(&phi), &layout);
        let mut dx: Vec<f64> = f.iter().map(|v| -v).collect();
        lu.solve_in_place(&mut dx);
        let (nx, nphi, nres) = line_search(&x, &dx, res, |cand| {
            let p = pt_expand(cand, &layout);
            let r = norm(&problem.residual(&p), h);
            (p, r)
        });
        iterations += 1;
        let stalled = nres >= 0.5 * res;
        x = nx;
        phi = nphi;
        let prev = res;
        res = nres;
        if stalled && res <= opts.tol {
            break;
        }
        if stalled && res >= prev && iterations > 3 {
            break;
        }
    }
    finish(phi, omega, res, iterations, h, &opts, None)
}

fn line_search<F>(x: &[f64], dx: &[f64], res: f64, eval: F) -> (Vec<f64>, Field, f64)
where
    F: Fn(&[f64]) -> (Field, f64),
{
    let mut step = 1.0;
    let mut best: Option<(Vec<f64>, Field, f64)> = None;
    for _ in 0..=MAX_HALVINGS {
        let cand: Vec<f64> = x.iter().zip(dx).map(|(a, b)| a + step * b).collect();
        let (p, r) = eval(&cand);
        if r.is_finite() && best.as_ref().is_none_or(|b| r < b.2) {
            best = Some((cand, p, r));
        }
        if r < res {
            break;
        }
        step *= 0.5;
    }
    best.expect("at least one candidate")
}

fn finish(
    phi: Field,
    omega: f64,
    res: f64,
    iterations: usize,
    h: f64,
    opts: &NewtonOptions,
    eig: Option<&EigenData>,
) -> Result<BranchPoint> {
    let l2norm = norm(&phi, h);
    if !(res <= opts.tol * l2norm.max(1.0)) {
        return Err(SppError::NoConvergence { what: "Newton", iterations, residual: res });
    }
    let eps = eig.map_or(0.0, |e| inner(&phi, &e.phi0_star, h).re.powi(2));
    Ok(BranchPoint { omega, phi, eps, residual: res, l2norm, iterations, trivial: l2norm < TRIVIAL_NORM })
}

/// Newton with omega as an extra unknown and the constraint `Re <phi, phi0*> = eps^(1/2)`.
pub fn newton_solve_at_eps(
    phi_init: &[Complex64],
    omega_init: f64,
    eps: f64,
    eig: &EigenData,
    stack: &LayerStack,
    opts: NewtonOptions,
) -> Result<BranchPoint> {
    validate(&opts)?;
    if !(eps > 0.0) {
        return Err(invalid("epsilon", "must be positive"));
    }
    let grid = &eig.grid;
    let layout = PtLayout::new(grid)?;
    let h = grid.h;
    let target = eps.sqrt();
    // Gradient of Re <phi, phi0*> in reduced coordinates.
    let star = pt_reduce(&eig.phi0_star, &layout);
    let mut grad = vec![0.0; layout.n];
    grad[0] = h * star[0];
    for k in 1..=layout.center {
        grad[2 * k - 1] = 2.0 * h * star[2 * k - 1];
        grad[2 * k] = 2.0 * h * star[2 * k];
    }
    let constraint = |x: &[f64]| x.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>() - target;

    let mut x = pt_reduce(phi_init, &layout);
    let mut omega = omega_init;
    let total = |x: &[f64], omega: f64| -> Result<(Field, f64)> {
        let p = pt_expand(x, &layout);
        let prob = NonlinearProblem::new(grid, stack, omega, eig.treatment)?;
        let r = norm(&prob.residual(&p), h);
        let g = constraint(x);
        Ok((p, (r * r + g * g).sqrt()))
    };
    let (mut phi, mut res) = total(&x, omega)?;
    let mut iterations = 0;
    while iterations < opts.max_iter && res > opts.tol * 1e-2 {
        let prob = NonlinearProblem::new(grid, stack, omega, eig.treatment)?;
        let jac = prob.reduced_jacobian(&phi, &layout);
        let lu = BandedLu::factor(&jac)?;
        let f_omega = pt_reduce(&prob.omega_derivative(&phi)?, &layout);
        let solver = BorderedSolver::new(&jac, &lu, f_omega, grad.clone())?;
        let f: Vec<f64> = pt_reduce(&prob.residual(&phi), &layout).iter().map(|v| -v).collect();
        let (dx, domega) = solver.solve(&f, -constraint(&x));
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + step * b).collect();
            let cw = omega + step * domega;
            let (p, r) = total(&cand, cw)?;
            if r.is_finite() && accepted.as_ref().is_none_or(|a: &(Vec<f64>, f64, Field, f64)| r < a.3) {
                accepted = Some((cand, cw, p, r));
            }
            if r < res {
                break;
            }
            step *= 0.5;
        }
        let (nx, nw, np, nr) = accepted.expect("at least one candidate");
        iterations += 1;
        let stalled = nr >= 0.5 * res;
        x = nx;
        omega = nw;
        phi = np;
        res = nr;
        if stalled && res <= opts.tol {
            break;
        }
    }
    let prob = NonlinearProblem::new(grid, stack, omega, eig.treatment)?;
    let pde_res = norm(&prob.residual(&phi), h);
    if constraint(&x).abs() > opts.tol {
        return Err(SppError::NoConvergence { what: "constrained Newton", iterations, residual: res });
    }
    finish(phi, omega, pde_res, iterations, h, &opts, Some(eig))
}

#[derive(Clone, Debug)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub label: String,
    pub grid: Grid,
    /// Set when continuation stopped before reaching the requested end.
    pub aborted: Option<String>,
}

/// Natural continuation in omega from the bifurcation point toward `omega_end`.
pub fn continue_branch(
    eig: &EigenData,
    exp: &ExpansionData,
    stack: &LayerStack,
    omega_end: f64,
    steps: usize,
    opts: NewtonOptions,
    label: &str,
) -> Result<Branch> {
    if steps == 0 {
        return Err(invalid("steps", "must be positive"));
    }
    let nu = exp.nu.re;
    if nu == 0.0 {
        return Err(SppError::NoBranch("first-order coefficient nu vanishes".into()));
    }
    let direction = (omega_end - eig.omega0).signum();
    if direction != nu.signum() {
        return Err(invalid("omega_end", format!("branch with eps > 0 leaves omega0 in the direction of sign(nu) = {}", nu.signum())));
    }
    let h_step = (omega_end - eig.omega0) / steps as f64;
    let mut points: Vec<BranchPoint> = Vec::with_capacity(steps);
    let mut aborted = None;
    let mut last_omega = eig.omega0;
    for i in 1..=steps {
        let target = eig.omega0 + h_step * i as f64;
        let target = if i == steps { omega_end } else { target };
        let mut sub = 0;
        let mut current_target = target;
        loop {
            let seed: Field = match points.last() {
                Some(p) => p.phi.clone(),
                None => predictor(exp, eig, (current_target - eig.omega0) / nu, None).1,
            };
            match newton_solve(&seed, current_target, stack, &eig.grid, eig.treatment, opts) {
                Ok(mut p) if !p.trivial => {
                    p.eps = inner(&p.phi, &eig.phi0_star, eig.h()).re.powi(2);
                    points.push(p);
                    last_omega = current_target;
                    if current_target == target {
                        break;
                    }
                    current_target = target;
                }
                Ok(_) if points.is_empty() && sub >= MAX_STEP_BISECTIONS => {
                    return Err(SppError::NoBranch("Newton converged to the trivial solution".into()));
                }
                result => {
                    sub += 1;
                    if sub > MAX_STEP_BISECTIONS {
                        let why = match result {
                            Err(e) => e.to_string(),
                            Ok(_) => "trivial solution".to_string(),
                        };
                        aborted = Some(format!("stopped near omega = {current_target}: {why}"));
                        break;
                    }
                    current_target = 0.5 * (last_omega + current_target);
                }
            }
        }
        if aborted.is_some() {
            break;
        }
    }
    if points.is_empty() {
        return Err(SppError::NoBranch(aborted.unwrap_or_else(|| "no point converged".into())));
    }
    Ok(Branch { points, label: label.to_string(), grid: eig.grid.clone(), aborted })
}

/// Largest relative PT defect along a branch.
pub fn branch_pt_defect(branch: &Branch) -> f64 {
    branch.points.iter().map(|p| pt_defect(&p.phi)).fold(0.0, f64::max)
}
