//! Equispaced grids, the fourth-order Laplacian and assembly of `L(omega)`.

use num_complex::Complex64;

use crate::analytic::principal_sqrt;
use crate::banded::BandedMatrix;
use crate::error::{invalid, Result, SppError};
use crate::materials::LayerStack;

pub type BandedOperator = BandedMatrix<Complex64>;

/// Interior nodes `x_j = x_min + (j + 1) h`, `j = 0..n`, with `h = (x_max - x_min) / (n + 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
    pub h: f64,
    /// Node index of each stack interface, when the grid was built for a stack.
    pub interface_nodes: Vec<usize>,
}

impl Grid {
    pub fn uniform(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if n < 16 {
            return Err(invalid("n", "at least 16 interior points are required"));
        }
        if !(x_max > x_min) {
            return Err(invalid("x_max", "must exceed x_min"));
        }
        Ok(Grid { x_min, x_max, n, h: (x_max - x_min) / (n + 1) as f64, interface_nodes: vec![] })
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + (j + 1) as f64 * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    /// Index of the node at the midpoint of the domain, if there is one.
    pub fn center_node(&self) -> Option<usize> {
        (self.n % 2 == 1).then_some(self.n / 2)
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.x_min + self.x_max)
    }
}

/// Grid for a layered stack with every interface on a node and the domain
/// symmetric about the interface span.
///
/// The padding `X = padding_decades ln 10 / min Re(lambda)` makes the decaying
/// tails drop by `10^-padding_decades` before the boundary.
pub fn build_grid(stack: &LayerStack, omega: f64, padding_decades: f64, n: usize) -> Result<Grid> {
    if stack.interfaces.is_empty() {
        return Err(invalid("stack", "at least one interface is required"));
    }
    if !(padding_decades > 0.0) {
        return Err(invalid("padding_decades", "must be positive"));
    }
    if n < 16 {
        return Err(invalid("n", "at least 16 interior points are required"));
    }
    let w = stack.layer_w(Complex64::new(omega, 0.0), 0)?;
    let rate = |wv: Complex64| principal_sqrt(-wv).re;
    let min_rate = rate(w[0]).min(rate(w[w.len() - 1]));
    if !(min_rate > 0.0) {
        return Err(SppError::NoDecay { omega });
    }
    let padding = padding_decades * std::f64::consts::LN_10 / min_rate;
    let first = stack.interfaces[0];
    let last = stack.interfaces[stack.interfaces.len() - 1];
    let span = last - first;

    let h0 = (span + 2.0 * padding) / (n + 1) as f64;
    let (h, span_cells) = if span > 0.0 {
        let mut m = (span / h0).ceil() as usize;
        m = m.max(2);
        if m % 2 == 1 {
            m += 1;
        }
        (span / m as f64, m)
    } else {
        (h0, 0)
    };
    let pad_cells = (padding / h).ceil() as usize;
    let total_cells = span_cells + 2 * pad_cells;
    let n_actual = total_cells - 1;
    let x_min = first - pad_cells as f64 * h;
    let x_max = last + pad_cells as f64 * h;
    let interface_nodes = stack.interfaces.iter().map(|&p| (((p - first) / h).round() as usize) + pad_cells - 1).collect();
    Ok(Grid { x_min, x_max, n: n_actual, h, interface_nodes })
}

/// Fourth-order centered second derivative with zero exterior values.
pub fn fd4_second_derivative(grid: &Grid) -> BandedOperator {
    let n = grid.n;
    let s = 1.0 / (12.0 * grid.h * grid.h);
    let coeffs = [-1.0, 16.0, -30.0, 16.0, -1.0];
    let mut op = BandedOperator::zeros(n, 2, 2);
    for i in 0..n {
        for (k, &cf) in coeffs.iter().enumerate() {
            let j = i as isize + k as isize - 2;
            if j >= 0 && (j as usize) < n {
                op.set(i, j as usize, Complex64::new(cf * s, 0.0));
            }
        }
    }
    op
}

/// How a multiplication operator is discretized at an interface node.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InterfaceTreatment {
    /// Node takes the value of the layer on its right.
    RightLimit,
    /// Node takes the mean of the two one-sided values.
    Average,
    /// Mean at the node plus symmetric couplings `-/+ [W]/24` to the two
    /// neighbours, which cancels the leading truncation error of the
    /// fourth-order stencil next to the jump.
    #[default]
    JumpCorrected,
}

impl InterfaceTreatment {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "right-limit" => Some(Self::RightLimit),
            "average" => Some(Self::Average),
            "jump-corrected" => Some(Self::JumpCorrected),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::RightLimit => "right-limit",
            Self::Average => "average",
            Self::JumpCorrected => "jump-corrected",
        }
    }
}

/// Layer index of each node, or `None` at an interface node.
fn node_layers(grid: &Grid, stack: &LayerStack) -> Vec<Option<usize>> {
    if grid.interface_nodes.len() == stack.interfaces.len() && !grid.interface_nodes.is_empty() {
        (0..grid.n)
            .map(|j| if grid.interface_nodes.contains(&j) { None } else { Some(grid.interface_nodes.iter().filter(|&&p| p < j).count()) })
            .collect()
    } else {
        (0..grid.n).map(|j| Some(stack.layer_index(grid.x(j)))).collect()
    }
}

/// Node samples of a piecewise-constant quantity given by its per-layer values.
pub fn node_values(grid: &Grid, stack: &LayerStack, layer_values: &[Complex64], treatment: InterfaceTreatment) -> Vec<Complex64> {
    let layers = node_layers(grid, stack);
    let mut iface = 0;
    layers
        .iter()
        .map(|l| match l {
            Some(i) => layer_values[*i],
            None => {
                let (left, right) = (layer_values[iface], layer_values[iface + 1]);
                iface += 1;
                match treatment {
                    InterfaceTreatment::RightLimit => right,
                    _ => 0.5 * (left + right),
                }
            }
        })
        .collect()
}

/// Banded operator of multiplication by a piecewise-constant potential.
pub fn assemble_multiplier(grid: &Grid, stack: &LayerStack, layer_values: &[Complex64], treatment: InterfaceTreatment) -> BandedOperator {
    let diag = node_values(grid, stack, layer_values, treatment);
    let mut op = BandedOperator::zeros(grid.n, 2, 2);
    for (i, v) in diag.into_iter().enumerate() {
        op.set(i, i, v);
    }
    if treatment == InterfaceTreatment::JumpCorrected {
        let layers = node_layers(grid, stack);
        let mut iface = 0;
        for (i, l) in layers.iter().enumerate() {
            if l.is_some() {
                continue;
            }
            let delta = (layer_values[iface + 1] - layer_values[iface]) / 24.0;
            iface += 1;
            if i + 1 < grid.n {
                op.add_to(i, i + 1, delta);
                op.add_to(i + 1, i, delta);
            }
            if i > 0 {
                op.add_to(i, i - 1, -delta);
                op.add_to(i - 1, i, -delta);
            }
        }
    }
    op
}

/// Discrete potential `V(omega)` or its omega-derivative of the given order.
pub fn assemble_potential(
    grid: &Grid,
    stack: &LayerStack,
    omega: Complex64,
    order: u8,
    treatment: InterfaceTreatment,
) -> Result<BandedOperator> {
    Ok(assemble_multiplier(grid, stack, &stack.layer_w(omega, order)?, treatment))
}

/// Node samples of `Gamma` (order 0) or its omega-derivative (order 1).
pub fn gamma_nodes(grid: &Grid, stack: &LayerStack, omega: Complex64, order: u8, treatment: InterfaceTreatment) -> Vec<Complex64> {
    node_values(grid, stack, &stack.layer_gamma(omega, order), treatment)
}

/// Matrix of `L(omega) phi = -phi'' - W phi`.
pub fn assemble_l(grid: &Grid, stack: &LayerStack, omega: f64) -> Result<BandedOperator> {
    assemble_l_with(grid, stack, Complex64::new(omega, 0.0), InterfaceTreatment::default())
}

pub fn assemble_l_with(grid: &Grid, stack: &LayerStack, omega: Complex64, treatment: InterfaceTreatment) -> Result<BandedOperator> {
    let d2 = fd4_second_derivative(grid);
    let v = assemble_potential(grid, stack, omega, 0, treatment)?;
    let minus_one = Complex64::new(-1.0, 0.0);
    Ok(d2.scaled(minus_one).add_scaled(minus_one, &v))
}

/// `<u, v>_h = h sum u_j conj(v_j)`.
pub fn inner(u: &[Complex64], v: &[Complex64], h: f64) -> Complex64 {
    assert_eq!(u.len(), v.len(), "field length mismatch");
    u.iter().zip(v).fold(Complex64::new(0.0, 0.0), |acc, (a, b)| acc + a * b.conj()) * h
}

pub fn norm(u: &[Complex64], h: f64) -> f64 {
    (u.iter().map(|z| z.norm_sqr()).sum::<f64>() * h).sqrt()
}

/// `B phi (x) = conj(phi(2c - x))` on a grid symmetric about its midpoint.
pub fn pt_reflect(u: &[Complex64]) -> Vec<Complex64> {
    u.iter().rev().map(|z| z.conj()).collect()
}

/// Relative PT defect `||u - B u|| / ||u||` (zero for the zero field).
pub fn pt_defect(u: &[Complex64]) -> f64 {
    let total: f64 = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if total == 0.0 {
        return 0.0;
    }
    let diff: f64 = u.iter().zip(pt_reflect(u)).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    diff / total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::MaterialModel;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn case2() -> LayerStack {
        LayerStack::three_layer(
            MaterialModel::constant(c(9.2, -1.28)),
            MaterialModel::drude(0.0),
            MaterialModel::constant(c(9.2, 1.28)),
            1.0,
            2.0,
        )
        .unwrap()
    }

    #[test]
    fn case2_padding_and_snapping() {
        let s = case2();
        let g = build_grid(&s, 3.8275, 10.0, 1024).unwrap();
        assert!(g.n >= 1024 && g.n % 2 == 1);
        assert!((g.center() - 0.5).abs() <= g.h);
        for (&node, &p) in g.interface_nodes.iter().zip(&s.interfaces) {
            assert!((g.x(node) - p).abs() < 1e-9 * g.h);
        }
        let lm = principal_sqrt(-s.w_eval(-1.0, 3.8275).unwrap());
        let pad = 0.0 - g.x_min;
        assert!((-lm.re * pad).exp() <= 1e-10 * (1.0 + 1e-9));
        assert!((-lm.re * (pad - g.h)).exp() > 1e-10);
        assert_eq!(g.center_node().map(|j| g.x(j)), Some(g.x(g.n / 2)));
        assert!((g.x(g.n / 2) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn vacuum_has_no_decay() {
        let v = MaterialModel::constant(c(0.0, 0.0));
        let s = LayerStack::new(vec![v, v], vec![0.0], 0.0).unwrap();
        assert!(matches!(build_grid(&s, 1.0, 10.0, 64), Err(SppError::NoDecay { .. })));
    }

    fn sine_error(n: usize) -> f64 {
        let g = Grid::uniform(0.0, 1.0, n).unwrap();
        let d2 = fd4_second_derivative(&g);
        let u: Vec<Complex64> = g.nodes().iter().map(|&x| c((PI * x).sin(), 0.0)).collect();
        let du = d2.apply(&u);
        // Rows away from the closure.
        (4..n - 4).map(|j| (du[j] + PI * PI * u[j]).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn fd4_is_fourth_order() {
        let ratio = sine_error(63) / sine_error(127);
        assert!(ratio >= 14.0, "ratio {ratio}");
    }

    #[test]
    fn fd4_exact_on_low_degree() {
        let g = Grid::uniform(-1.0, 2.0, 40).unwrap();
        let d2 = fd4_second_derivative(&g);
        let ones = vec![c(1.0, 0.0); g.n];
        let sq: Vec<Complex64> = g.nodes().iter().map(|x| c(x * x, 0.0)).collect();
        let a = d2.apply(&ones);
        let b = d2.apply(&sq);
        let scale = 1.0 / (g.h * g.h);
        for j in 2..g.n - 2 {
            assert!(a[j].norm() <= 1e-12 * scale);
            assert!((b[j] - c(2.0, 0.0)).norm() <= 1e-10 * scale * g.h * g.h * 100.0);
        }
    }

    #[test]
    fn l_reduces_to_minus_laplacian() {
        let v = MaterialModel::constant(c(0.0, 0.0));
        let s = LayerStack::new(vec![v, v], vec![0.5], 0.0).unwrap();
        let g = Grid::uniform(0.0, 1.0, 31).unwrap();
        let l = assemble_l_with(&g, &s, c(1e-300, 0.0), InterfaceTreatment::JumpCorrected).unwrap();
        let d2 = fd4_second_derivative(&g);
        for i in 0..g.n {
            for j in 0..g.n {
                assert!((l.get(i, j) + d2.get(i, j)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn l_is_complex_symmetric() {
        let s = case2();
        let g = build_grid(&s, 3.8, 10.0, 256).unwrap();
        for t in [InterfaceTreatment::RightLimit, InterfaceTreatment::Average, InterfaceTreatment::JumpCorrected] {
            let l = assemble_l_with(&g, &s, c(3.8, 0.0), t).unwrap();
            assert_eq!(l.symmetry_defect(), 0.0);
        }
    }

    #[test]
    fn interface_values() {
        let s = case2();
        let g = build_grid(&s, 3.8, 10.0, 128).unwrap();
        let vals = [c(1.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)];
        let i0 = g.interface_nodes[0];
        let rl = node_values(&g, &s, &vals, InterfaceTreatment::RightLimit);
        let av = node_values(&g, &s, &vals, InterfaceTreatment::Average);
        assert_eq!(rl[i0], c(2.0, 0.0));
        assert_eq!(av[i0], c(1.5, 0.0));
        assert_eq!(av[i0 - 1], c(1.0, 0.0));
        assert_eq!(av[i0 + 1], c(2.0, 0.0));
        let op = assemble_multiplier(&g, &s, &vals, InterfaceTreatment::JumpCorrected);
        assert!((op.get(i0, i0 + 1) - c(1.0 / 24.0, 0.0)).norm() < 1e-15);
        assert!((op.get(i0, i0 - 1) + c(1.0 / 24.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn inner_product_properties() {
        let u = vec![c(1.0, 2.0), c(-0.5, 0.1), c(0.0, 3.0)];
        let v = vec![c(0.3, -1.0), c(2.0, 0.0), c(1.0, 1.0)];
        let uu = inner(&u, &u, 0.1);
        assert!(uu.im == 0.0 && uu.re >= 0.0);
        assert!((uu.re - norm(&u, 0.1).powi(2)).abs() < 1e-14);
        let a = c(0.0, 2.0);
        let av: Vec<Complex64> = v.iter().map(|z| a * z).collect();
        assert!((inner(&u, &av, 0.1) - a.conj() * inner(&u, &v, 0.1)).norm() < 1e-14);
    }

    #[test]
    fn pt_defect_of_symmetric_field() {
        let u = vec![c(1.0, 2.0), c(3.0, 0.0), c(1.0, -2.0)];
        assert_eq!(pt_defect(&u), 0.0);
        let w = vec![c(1.0, 2.0), c(3.0, 0.0), c(1.0, 2.0)];
        assert!(pt_defect(&w) > 0.1);
    }
}
