//! Discrete linear eigenpair `(omega0, phi0, phi0*)` and the search in omega.

use std::cell::RefCell;

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;

use crate::analytic::{analytic_eigenfunction, refine_root};
use crate::banded::{dot, BandedLu};
use crate::error::{invalid, Result, SppError};
use crate::grid::{assemble_l_with, assemble_potential, build_grid, inner, norm, BandedOperator, Grid, InterfaceTreatment};
use crate::materials::LayerStack;

const MAX_INVERSE_ITERATIONS: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub n: usize,
    pub padding_decades: f64,
    pub treatment: InterfaceTreatment,
}

impl GridSpec {
    pub fn new(n: usize) -> Self {
        GridSpec { n, padding_decades: 10.0, treatment: InterfaceTreatment::default() }
    }
}

#[derive(Clone, Debug)]
pub struct EigenData {
    pub omega0: f64,
    /// Smallest-modulus eigenvalue of `L(omega0)`; zero up to root-finding accuracy.
    pub mu_min: Complex64,
    pub phi0: Vec<Complex64>,
    pub phi0_star: Vec<Complex64>,
    pub transversality: Complex64,
    pub gap: f64,
    pub grid: Grid,
    pub treatment: InterfaceTreatment,
}

impl EigenData {
    pub fn h(&self) -> f64 {
        self.grid.h
    }
}

fn default_start(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|j| {
            let t = (j as f64 + 0.5) / n as f64;
            Complex64::new(1.0 + 0.3 * (7.0 * t).sin(), 0.2 * (3.0 * t).cos())
        })
        .collect()
}

fn euclid(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn scale_in_place(v: &mut [Complex64], s: Complex64) {
    for z in v {
        *z *= s;
    }
}

/// Eigenvalue of smallest modulus and its eigenvector (unit Euclidean norm).
pub fn smallest_eigenpair(op: &BandedOperator) -> Result<(Complex64, Vec<Complex64>)> {
    smallest_eigenpair_from(op, None)
}

/// Shift-invert inverse iteration about zero, optionally warm-started.
///
/// Falls back to Arnoldi plus inverse iteration at the Ritz value when two
/// eigenvalues of nearly equal modulus make the plain iteration stagnate.
pub fn smallest_eigenpair_from(op: &BandedOperator, start: Option<&[Complex64]>) -> Result<(Complex64, Vec<Complex64>)> {
    let n = op.n();
    let v = match start {
        Some(s) if s.len() == n && euclid(s) > 0.0 => s.to_vec(),
        _ => default_start(n),
    };
    match inverse_iteration(op, Complex64::new(0.0, 0.0), v.clone(), 80) {
        Ok(pair) => Ok(pair),
        Err(_) => {
            let ritz = eigenvalues_near_zero(op, 60.min(n))?;
            let theta = *ritz.first().ok_or(SppError::NoConvergence { what: "inverse iteration", iterations: 0, residual: f64::NAN })?;
            inverse_iteration(op, theta, v, MAX_INVERSE_ITERATIONS)
        }
    }
}

fn inverse_iteration(op: &BandedOperator, shift: Complex64, mut v: Vec<Complex64>, max_iter: usize) -> Result<(Complex64, Vec<Complex64>)> {
    let scale = op.max_abs().max(1.0);
    let mut shifted = op.clone();
    shifted.add_diagonal(-shift);
    let lu = match BandedLu::factor(&shifted) {
        Ok(lu) => lu,
        Err(_) => {
            shifted.add_diagonal(Complex64::new(1e-10 * scale, 0.0));
            BandedLu::factor(&shifted)?
        }
    };
    let symmetric = op.symmetry_defect() == 0.0;
    let nv = euclid(&v);
    scale_in_place(&mut v, Complex64::new(1.0 / nv, 0.0));
    let floor = 64.0 * f64::EPSILON * scale;
    let mut last_res = f64::INFINITY;
    for it in 0..max_iter {
        let mut w = lu.solve(&v);
        let nw = euclid(&w);
        if !nw.is_finite() || nw == 0.0 {
            return Err(SppError::NoConvergence { what: "inverse iteration", iterations: it, residual: f64::NAN });
        }
        scale_in_place(&mut w, Complex64::new(1.0 / nw, 0.0));
        let lw = op.apply(&w);
        let mu = if symmetric {
            dot(&w, &lw) / dot(&w, &w)
        } else {
            w.iter().zip(&lw).fold(Complex64::new(0.0, 0.0), |acc, (a, b)| acc + a.conj() * b)
        };
        let res = lw.iter().zip(&w).map(|(a, b)| (a - mu * b).norm_sqr()).sum::<f64>().sqrt();
        v = w;
        let tol = (1e-10 * mu.norm().max(1e-2)).max(floor);
        if res <= tol || (it > 20 && res <= 1e-8 * scale.sqrt() && res >= 0.9 * last_res) {
            return Ok((mu, v));
        }
        last_res = res;
    }
    Err(SppError::NoConvergence { what: "inverse iteration", iterations: max_iter, residual: last_res })
}

/// Eigenvalues of `op` nearest zero from shift-invert Arnoldi, sorted by modulus.
pub fn eigenvalues_near_zero(op: &BandedOperator, krylov_dim: usize) -> Result<Vec<Complex64>> {
    let n = op.n();
    let m = krylov_dim.min(n).max(2);
    let lu = BandedLu::factor(op)?;
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(m + 1);
    let mut v = default_start(n);
    let nv = euclid(&v);
    scale_in_place(&mut v, Complex64::new(1.0 / nv, 0.0));
    basis.push(v);
    let mut hess = DMatrix::<Complex64>::zeros(m, m);
    let mut size = m;
    for j in 0..m {
        let mut w = lu.solve(&basis[j]);
        for _ in 0..2 {
            for (i, b) in basis.iter().enumerate() {
                let c = b.iter().zip(&w).fold(Complex64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y);
                hess[(i, j)] += c;
                for (wk, bk) in w.iter_mut().zip(b) {
                    *wk -= c * bk;
                }
            }
        }
        let nw = euclid(&w);
        if j + 1 == m {
            break;
        }
        if nw <= 1e-14 * hess.column(j).norm().max(1.0) {
            size = j + 1;
            break;
        }
        hess[(j + 1, j)] = Complex64::new(nw, 0.0);
        scale_in_place(&mut w, Complex64::new(1.0 / nw, 0.0));
        basis.push(w);
    }
    let h = hess.view((0, 0), (size, size)).into_owned();
    let schur = Schur::try_new(h, 1e-15, 100_000).ok_or(SppError::NoConvergence {
        what: "Hessenberg Schur decomposition",
        iterations: 100_000,
        residual: f64::NAN,
    })?;
    let (_, t) = schur.unpack();
    let mut mus: Vec<Complex64> = (0..size).map(|i| t[(i, i)]).filter(|th| th.norm() > 0.0).map(|th| 1.0 / th).collect();
    mus.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    Ok(mus)
}

/// Linear eigenpair at the real frequency where `Re mu_min(omega) = 0`.
pub fn solve_linear_eigenpair(stack: &LayerStack, spec: GridSpec, omega_guess: f64, bracket: (f64, f64)) -> Result<EigenData> {
    let (lo, hi) = bracket;
    if !(lo < hi) || !(lo..=hi).contains(&omega_guess) {
        return Err(invalid("bracket", "must be increasing and contain the initial guess"));
    }
    let grid = build_grid(stack, omega_guess, spec.padding_decades, spec.n)?;
    let warm: RefCell<Option<Vec<Complex64>>> = RefCell::new(None);
    let mu_at = |omega: f64| -> Result<Complex64> {
        let l = assemble_l_with(&grid, stack, Complex64::new(omega, 0.0), spec.treatment)?;
        let start = warm.borrow().clone();
        let (mu, v) = smallest_eigenpair_from(&l, start.as_deref())?;
        *warm.borrow_mut() = Some(v);
        Ok(mu)
    };
    let f = |omega: f64| mu_at(omega).map(|mu| mu.re);

    // Bracket a sign change, preferring the sub-interval nearest the guess.
    let mut samples: Vec<f64> = (0..=16).map(|i| lo + (hi - lo) * i as f64 / 16.0).collect();
    samples.sort_by(|a, b| (a - omega_guess).abs().total_cmp(&(b - omega_guess).abs()));
    let f_guess = f(omega_guess)?;
    let mut found = None;
    for &s in &samples {
        if s == omega_guess {
            continue;
        }
        *warm.borrow_mut() = None;
        let fs = f(s)?;
        if fs.signum() != f_guess.signum() {
            found = Some(if s < omega_guess { (s, omega_guess, fs, f_guess) } else { (omega_guess, s, f_guess, fs) });
            break;
        }
    }
    let (a, b, fa, fb) = found.ok_or(SppError::NoRoot { lo, hi })?;
    *warm.borrow_mut() = None;
    let omega0 = refine_root(&f, a, b, fa, fb)?;

    let l0 = assemble_l_with(&grid, stack, Complex64::new(omega0, 0.0), spec.treatment)?;
    let (mu_min, v) = smallest_eigenpair(&l0)?;
    if mu_min.norm() > 1e-6 * l0.max_abs().max(1.0) {
        return Err(SppError::NoRoot { lo, hi });
    }
    if mu_min.im.abs() > 1e-6 {
        return Err(SppError::NonRealDrift { im: mu_min.im });
    }
    let (_, w) = smallest_eigenpair(&l0.conj_transpose())?;
    let h = grid.h;

    let mut phi0 = v;
    let nphi = norm(&phi0, h);
    scale_in_place(&mut phi0, Complex64::new(1.0 / nphi, 0.0));
    let anchor = grid.center_node().unwrap_or_else(|| (0..grid.n).max_by(|&i, &j| phi0[i].norm().total_cmp(&phi0[j].norm())).unwrap_or(0));
    let phase = phi0[anchor].conj() / phi0[anchor].norm();
    scale_in_place(&mut phi0, phase);

    let mut phi0_star = w;
    let nstar = norm(&phi0_star, h);
    scale_in_place(&mut phi0_star, Complex64::new(1.0 / nstar, 0.0));
    let overlap = inner(&phi0, &phi0_star, h);
    if overlap.norm() < 1e-10 {
        return Err(SppError::NotSimple { overlap: overlap.norm() });
    }
    scale_in_place(&mut phi0_star, 1.0 / overlap.conj());

    let dv = assemble_potential(&grid, stack, Complex64::new(omega0, 0.0), 1, spec.treatment)?;
    let transversality = inner(&dv.apply(&phi0), &phi0_star, h);

    let near = eigenvalues_near_zero(&l0, 40)?;
    let gap = near.get(1).map(|z| z.norm()).unwrap_or(f64::INFINITY);

    Ok(EigenData { omega0, mu_min, phi0, phi0_star, transversality, gap, grid, treatment: spec.treatment })
}

/// `P0 u = <u, phi0*> phi0`.
pub fn project_p0(u: &[Complex64], eig: &EigenData) -> Vec<Complex64> {
    let c = inner(u, &eig.phi0_star, eig.h());
    eig.phi0.iter().map(|p| c * p).collect()
}

/// `Q0 u = u - P0 u`.
pub fn project_q0(u: &[Complex64], eig: &EigenData) -> Vec<Complex64> {
    let p = project_p0(u, eig);
    u.iter().zip(p).map(|(a, b)| a - b).collect()
}

/// Relative distance between `phi0*` and the normalized `conj(phi0)`.
pub fn adjoint_is_conjugate_check(eig: &EigenData) -> f64 {
    let h = eig.h();
    let conj: Vec<Complex64> = eig.phi0.iter().map(|z| z.conj()).collect();
    let c = 1.0 / inner(&eig.phi0, &conj, h).conj();
    let diff: Vec<Complex64> = eig.phi0_star.iter().zip(&conj).map(|(a, b)| a - c * b).collect();
    norm(&diff, h) / norm(&eig.phi0_star, h)
}

/// `||L(omega0) phi0||_h` and `||L(omega0)^H phi0*||_h`.
pub fn eigen_residuals(eig: &EigenData, stack: &LayerStack) -> Result<(f64, f64)> {
    let l = assemble_l_with(&eig.grid, stack, Complex64::new(eig.omega0, 0.0), eig.treatment)?;
    let r1 = norm(&l.apply(&eig.phi0), eig.h());
    let r2 = norm(&l.conj_transpose().apply(&eig.phi0_star), eig.h());
    Ok((r1, r2))
}

/// Relative `h`-norm distance between `phi0` and the closed-form three-layer
/// eigenfunction at the exact root `omega_exact`, sampled on the same grid and
/// fitted in amplitude and phase.
pub fn analytic_profile_error(eig: &EigenData, stack: &LayerStack, omega_exact: f64) -> Result<f64> {
    let profile = analytic_eigenfunction(stack, omega_exact)?;
    let h = eig.h();
    let mut exact: Vec<Complex64> = eig.grid.nodes().iter().map(|&x| profile.eval(x)).collect();
    let c = inner(&eig.phi0, &exact, h) / inner(&exact, &exact, h);
    scale_in_place(&mut exact, c);
    let diff: Vec<Complex64> = eig.phi0.iter().zip(&exact).map(|(a, b)| a - b).collect();
    Ok(norm(&diff, h) / norm(&eig.phi0, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::fd4_second_derivative;
    use crate::materials::MaterialModel;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn oscillator(n: usize) -> BandedOperator {
        // -d2/dx2 + x^2 on [-10, 10]: eigenvalues 1, 3, 5, ...
        let g = Grid::uniform(-10.0, 10.0, n).unwrap();
        let mut l = fd4_second_derivative(&g).scaled(c(-1.0, 0.0));
        for j in 0..n {
            l.add_to(j, j, c(g.x(j).powi(2), 0.0));
        }
        l
    }

    #[test]
    fn oscillator_ground_state() {
        let mut errs = vec![];
        for n in [255, 511] {
            let (mu, v) = smallest_eigenpair(&oscillator(n)).unwrap();
            assert!((euclid(&v) - 1.0).abs() < 1e-12);
            errs.push((mu - c(1.0, 0.0)).norm());
        }
        assert!(errs[1] < 1e-6, "{errs:?}");
        assert!(errs[0] / errs[1] > 12.0, "{errs:?}");
    }

    #[test]
    fn dirichlet_laplacian_ground_state() {
        // Exterior zeros make the boundary rows first order, so the
        // Dirichlet eigenvalue converges to pi^2 only linearly.
        let mut errs = vec![];
        for n in [255, 511] {
            let g = Grid::uniform(0.0, 1.0, n).unwrap();
            let l = fd4_second_derivative(&g).scaled(c(-1.0, 0.0));
            let (mu, _) = smallest_eigenpair(&l).unwrap();
            errs.push((mu - c(PI * PI, 0.0)).norm());
        }
        assert!(errs[1] < 7e-3 && errs[0] / errs[1] > 1.8, "{errs:?}");
    }

    #[test]
    fn diagonal_matrix() {
        let a = BandedOperator::from_diagonal(&[c(3.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)]);
        let (mu, v) = smallest_eigenpair(&a).unwrap();
        assert!((mu - c(1.0, 0.0)).norm() < 1e-10);
        assert!((v[1].norm() - 1.0).abs() < 1e-8 && v[0].norm() < 1e-8);
        let near = eigenvalues_near_zero(&a, 10).unwrap();
        assert!((near[0] - c(1.0, 0.0)).norm() < 1e-10 && (near[1] - c(2.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn arnoldi_matches_laplacian_spectrum() {
        let near = eigenvalues_near_zero(&oscillator(511), 40).unwrap();
        for (k, mu) in near.iter().take(3).enumerate() {
            assert!((mu - c(2.0 * k as f64 + 1.0, 0.0)).norm() < 1e-5, "{:?}", &near[..3]);
        }
    }

    fn conservative_stack() -> LayerStack {
        // Real dielectric slab guide; the even mode satisfies
        // q tan(q/2) = p with q^2 = 4 omega^2 - 4, p^2 = 4 - omega^2.
        LayerStack::three_layer(
            MaterialModel::constant(c(0.0, 0.0)),
            MaterialModel::constant(c(3.0, 0.0)),
            MaterialModel::constant(c(0.0, 0.0)),
            1.0,
            2.0,
        )
        .unwrap()
    }

    #[test]
    fn conservative_adjoint_is_conjugate() {
        let s = conservative_stack();
        let eig = solve_linear_eigenpair(&s, GridSpec::new(600), 1.27, (1.15, 1.4)).unwrap();
        assert!((eig.omega0 - 1.2685838027771463).abs() < 1e-5, "{}", eig.omega0);
        assert!(adjoint_is_conjugate_check(&eig) < 1e-10);
        assert!(eig.phi0.iter().all(|z| z.im.abs() < 1e-10));
        let (r1, r2) = eigen_residuals(&eig, &s).unwrap();
        assert!(r1 < 1e-8 && r2 < 1e-8);
    }

    #[test]
    fn projections() {
        let s = conservative_stack();
        let eig = solve_linear_eigenpair(&s, GridSpec::new(300), 1.27, (1.15, 1.4)).unwrap();
        let h = eig.h();
        let p = project_p0(&eig.phi0, &eig);
        let diff: Vec<Complex64> = p.iter().zip(&eig.phi0).map(|(a, b)| a - b).collect();
        assert!(norm(&diff, h) < 1e-12);
        assert!(norm(&project_q0(&eig.phi0, &eig), h) < 1e-12);
        let u: Vec<Complex64> = (0..eig.grid.n).map(|j| c((j as f64 * 0.1).sin(), (j as f64 * 0.07).cos())).collect();
        let q = project_q0(&u, &eig);
        assert!(inner(&q, &eig.phi0_star, h).norm() <= 1e-12 * norm(&u, h));
        let pp = project_p0(&project_p0(&u, &eig), &eig);
        let p1 = project_p0(&u, &eig);
        let d: Vec<Complex64> = pp.iter().zip(&p1).map(|(a, b)| a - b).collect();
        assert!(norm(&d, h) <= 1e-12 * norm(&p1, h));
    }

    #[test]
    fn perturbed_adjoint_defect_grows() {
        let s = conservative_stack();
        let mut eig = solve_linear_eigenpair(&s, GridSpec::new(300), 1.27, (1.15, 1.4)).unwrap();
        let base = adjoint_is_conjugate_check(&eig);
        let n = eig.grid.n;
        for (j, z) in eig.phi0_star.iter_mut().enumerate() {
            *z += c(1e-3 * ((j * 13 % 7) as f64 - 3.0), 0.0) * (1.0 / (n as f64).sqrt());
        }
        let small = adjoint_is_conjugate_check(&eig);
        for (j, z) in eig.phi0_star.iter_mut().enumerate() {
            *z += c(9e-3 * ((j * 13 % 7) as f64 - 3.0), 0.0) * (1.0 / (n as f64).sqrt());
        }
        let large = adjoint_is_conjugate_check(&eig);
        assert!(base < small && small < large);
        assert!(large / small > 5.0 && large / small < 15.0);
    }
}
