//! Dispersive susceptibilities, the layered potential `W(x, omega)` and the
//! cubic coefficient `Gamma(x, omega)`, all in dimensionless units.

use num_complex::Complex64;

use crate::error::{invalid, Result, SppError};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Bulk plasma frequency of silver in s^-1.
pub const OMEGA_P_SILVER: f64 = 8.85e15;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Dispersion {
    /// `chi(omega) = -plasma_sq / (omega^2 + i gamma omega)`.
    Drude {
        gamma: f64,
        plasma_sq: f64,
    },
    ConstantDielectric {
        eta: Complex64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialModel {
    pub dispersion: Dispersion,
    pub chi3: Complex64,
}

impl MaterialModel {
    pub fn drude(gamma: f64) -> Self {
        Self::drude_scaled(gamma, 1.0)
    }

    pub fn drude_scaled(gamma: f64, plasma_sq: f64) -> Self {
        MaterialModel { dispersion: Dispersion::Drude { gamma, plasma_sq }, chi3: Complex64::new(1.0, 0.0) }
    }

    pub fn constant(eta: Complex64) -> Self {
        MaterialModel { dispersion: Dispersion::ConstantDielectric { eta }, chi3: Complex64::new(1.0, 0.0) }
    }

    /// Dielectric with refractive index `n`, so that `eta = n^2 - 1`.
    pub fn from_refractive_index(n: Complex64) -> Self {
        Self::constant(n * n - 1.0)
    }

    pub fn with_chi3(mut self, chi3: Complex64) -> Self {
        self.chi3 = chi3;
        self
    }

    pub fn chi1(&self, omega: f64) -> Result<Complex64> {
        self.chi1_at(Complex64::new(omega, 0.0))
    }

    pub fn chi1_domega(&self, omega: f64, order: u8) -> Result<Complex64> {
        if !(1..=2).contains(&order) {
            return Err(invalid("order", "derivative order must be 1 or 2"));
        }
        self.chi1_derivative_at(Complex64::new(omega, 0.0), order)
    }

    /// Susceptibility at a possibly complex frequency.
    pub fn chi1_at(&self, omega: Complex64) -> Result<Complex64> {
        self.chi1_derivative_at(omega, 0)
    }

    pub fn chi1_derivative_at(&self, omega: Complex64, order: u8) -> Result<Complex64> {
        match self.dispersion {
            Dispersion::ConstantDielectric { eta } => Ok(if order == 0 { eta } else { Complex64::new(0.0, 0.0) }),
            Dispersion::Drude { gamma, plasma_sq } => {
                let i_gamma = Complex64::new(0.0, gamma);
                let q = omega * (omega + i_gamma);
                if omega.norm() == 0.0 || q.norm() == 0.0 {
                    return Err(SppError::Pole { omega: omega.re });
                }
                let dq = 2.0 * omega + i_gamma;
                Ok(match order {
                    0 => -plasma_sq / q,
                    1 => plasma_sq * dq / (q * q),
                    2 => plasma_sq * (2.0 * q - 2.0 * dq * dq) / (q * q * q),
                    _ => return Err(invalid("order", "derivative order must be 0, 1 or 2")),
                })
            }
        }
    }

    /// `W = omega^2 (1 + chi) - k^2` and its omega-derivatives up to order 2.
    pub fn w_derivative_at(&self, omega: Complex64, k: f64, order: u8) -> Result<Complex64> {
        let chi = self.chi1_at(omega)?;
        match order {
            0 => Ok(omega * omega * (1.0 + chi) - k * k),
            1 => {
                let d1 = self.chi1_derivative_at(omega, 1)?;
                Ok(2.0 * omega * (1.0 + chi) + omega * omega * d1)
            }
            2 => {
                let d1 = self.chi1_derivative_at(omega, 1)?;
                let d2 = self.chi1_derivative_at(omega, 2)?;
                Ok(2.0 * (1.0 + chi) + 4.0 * omega * d1 + omega * omega * d2)
            }
            _ => Err(invalid("order", "derivative order must be 0, 1 or 2")),
        }
    }

    /// Exact remainder `W(omega) - T2(omega)` of the second-order Taylor
    /// polynomial of `W` about `omega0`.
    ///
    /// `omega^2 chi` is `-P + i gamma P / (omega + i gamma)` for Drude and a
    /// quadratic for constant dielectrics, so the remainder has a closed form
    /// that does not suffer from cancellation.
    pub fn w_taylor_remainder(&self, omega0: Complex64, omega: Complex64) -> Result<Complex64> {
        match self.dispersion {
            Dispersion::ConstantDielectric { .. } => Ok(Complex64::new(0.0, 0.0)),
            Dispersion::Drude { gamma, plasma_sq } => {
                self.chi1_at(omega0)?;
                self.chi1_at(omega)?;
                let i_gamma = Complex64::new(0.0, gamma);
                let z0 = omega0 + i_gamma;
                let z = omega + i_gamma;
                let delta = omega - omega0;
                Ok(-i_gamma * plasma_sq * delta * delta * delta / (z0 * z0 * z0 * z))
            }
        }
    }

    /// True when the susceptibility is real at this frequency.
    pub fn is_conservative(&self, omega: f64) -> bool {
        self.chi1(omega).map(|c| c.im == 0.0).unwrap_or(false)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerStack {
    pub layers: Vec<MaterialModel>,
    pub interfaces: Vec<f64>,
    pub k: f64,
}

impl LayerStack {
    pub fn new(layers: Vec<MaterialModel>, interfaces: Vec<f64>, k: f64) -> Result<Self> {
        if layers.len() != interfaces.len() + 1 {
            return Err(invalid(
                "layers",
                format!("{} layers need {} interfaces, got {}", layers.len(), layers.len().saturating_sub(1), interfaces.len()),
            ));
        }
        if interfaces.iter().any(|x| !x.is_finite()) {
            return Err(invalid("interfaces", "positions must be finite"));
        }
        if interfaces.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("interfaces", "positions must be strictly increasing"));
        }
        if !k.is_finite() {
            return Err(invalid("k", "must be finite"));
        }
        Ok(LayerStack { layers, interfaces, k })
    }

    /// Symmetric sandwich `[minus | star | plus]` occupying `[0, d]`.
    pub fn three_layer(minus: MaterialModel, star: MaterialModel, plus: MaterialModel, d: f64, k: f64) -> Result<Self> {
        if !(d > 0.0) {
            return Err(invalid("d", "width must be positive"));
        }
        Self::new(vec![minus, star, plus], vec![0.0, d], k)
    }

    pub fn is_three_layer(&self) -> bool {
        self.layers.len() == 3
    }

    /// Width `x2 - x1` of the middle layer of a three-layer stack.
    pub fn width(&self) -> Option<f64> {
        self.is_three_layer().then(|| self.interfaces[1] - self.interfaces[0])
    }

    /// Midpoint of the interface span.
    pub fn center(&self) -> f64 {
        match (self.interfaces.first(), self.interfaces.last()) {
            (Some(a), Some(b)) => 0.5 * (a + b),
            _ => 0.0,
        }
    }

    /// Layer index at `x`; a point on an interface belongs to the layer on its right.
    pub fn layer_index(&self, x: f64) -> usize {
        self.interfaces.iter().take_while(|&&p| p <= x).count()
    }

    pub fn w_eval(&self, x: f64, omega: f64) -> Result<Complex64> {
        self.w_domega(x, omega, 0)
    }

    pub fn w_domega(&self, x: f64, omega: f64, order: u8) -> Result<Complex64> {
        self.layers[self.layer_index(x)].w_derivative_at(Complex64::new(omega, 0.0), self.k, order)
    }

    pub fn gamma_eval(&self, x: f64, omega: f64) -> Complex64 {
        self.layers[self.layer_index(x)].chi3 * (3.0 * omega * omega)
    }

    /// Per-layer values of `d^order W / d omega^order` at a complex frequency.
    pub fn layer_w(&self, omega: Complex64, order: u8) -> Result<Vec<Complex64>> {
        self.layers.iter().map(|m| m.w_derivative_at(omega, self.k, order)).collect()
    }

    /// Per-layer `Gamma = 3 omega^2 chi3` and its first omega-derivative.
    pub fn layer_gamma(&self, omega: Complex64, order: u8) -> Vec<Complex64> {
        self.layers
            .iter()
            .map(|m| match order {
                0 => 3.0 * omega * omega * m.chi3,
                1 => 6.0 * omega * m.chi3,
                _ => 6.0 * m.chi3,
            })
            .collect()
    }

    pub fn layer_taylor_remainder(&self, omega0: Complex64, omega: Complex64) -> Result<Vec<Complex64>> {
        self.layers.iter().map(|m| m.w_taylor_remainder(omega0, omega)).collect()
    }

    pub fn with_chi3_scale(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for layer in &mut out.layers {
            layer.chi3 *= factor;
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RescaleParams {
    pub omega_p: f64,
    pub c: f64,
}

impl RescaleParams {
    pub fn new(omega_p: f64, c: f64) -> Result<Self> {
        if !(omega_p > 0.0) {
            return Err(invalid("omega_p", "must be positive"));
        }
        if !(c > 0.0) {
            return Err(invalid("c", "must be positive"));
        }
        Ok(RescaleParams { omega_p, c })
    }

    pub fn silver() -> Self {
        RescaleParams { omega_p: OMEGA_P_SILVER, c: SPEED_OF_LIGHT }
    }
}

/// Maps `(omega, k, x)` in SI units to `(omega / omega_p, c k / omega_p, omega_p x / c)`.
pub fn rescale_to_dimensionless(params: &RescaleParams, omega_si: f64, k_si: f64, x_si: f64) -> (f64, f64, f64) {
    (omega_si / params.omega_p, params.c * k_si / params.omega_p, params.omega_p * x_si / params.c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn drude_lossless_at_unit_frequency() {
        assert_eq!(MaterialModel::drude(0.0).chi1(1.0).unwrap(), c(-1.0, 0.0));
    }

    #[test]
    fn refractive_index_to_susceptibility() {
        let m = MaterialModel::from_refractive_index(c(3.2, 0.2));
        match m.dispersion {
            Dispersion::ConstantDielectric { eta } => {
                assert!((eta - c(9.2, 1.28)).norm() < 1e-12);
            }
            _ => panic!("expected constant dielectric"),
        }
    }

    #[test]
    fn lossy_drude_matches_hand_arithmetic() {
        let chi = MaterialModel::drude(0.5).chi1(2.0).unwrap();
        assert!((chi - c(-4.0, 1.0) / 17.0).norm() < 1e-15);
    }

    #[test]
    fn drude_rejects_zero_frequency() {
        assert!(matches!(MaterialModel::drude(0.5).chi1(0.0), Err(SppError::Pole { .. })));
        assert!(MaterialModel::drude(0.0).chi1_domega(0.0, 1).is_err());
    }

    #[test]
    fn constant_has_zero_derivative() {
        let m = MaterialModel::constant(c(2.0, -0.3));
        assert_eq!(m.chi1_domega(1.7, 1).unwrap(), c(0.0, 0.0));
        assert_eq!(m.chi1_domega(1.7, 2).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn lossless_drude_derivative() {
        assert!((MaterialModel::drude(0.0).chi1_domega(1.0, 1).unwrap() - c(2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn derivatives_match_central_differences() {
        let m = MaterialModel::drude(0.5);
        let h = 1e-4;
        let fd1 = (m.chi1(2.0 + h).unwrap() - m.chi1(2.0 - h).unwrap()) / (2.0 * h);
        assert!((m.chi1_domega(2.0, 1).unwrap() - fd1).norm() < 1e-8);
        let fd2 = (m.chi1(2.0 + h).unwrap() - 2.0 * m.chi1(2.0).unwrap() + m.chi1(2.0 - h).unwrap()) / (h * h);
        assert!((m.chi1_domega(2.0, 2).unwrap() - fd2).norm() < 1e-6);
    }

    #[test]
    fn invalid_derivative_order() {
        assert!(MaterialModel::drude(0.0).chi1_domega(1.0, 3).is_err());
    }

    #[test]
    fn potential_examples() {
        let vacuum = LayerStack::new(vec![MaterialModel::constant(c(0.0, 0.0))], vec![], 1.0).unwrap();
        assert_eq!(vacuum.w_eval(0.3, 1.0).unwrap(), c(0.0, 0.0));

        let outer_p = MaterialModel::constant(c(9.2, 1.28));
        let outer_m = MaterialModel::constant(c(9.2, -1.28));
        let stack = LayerStack::three_layer(outer_m, MaterialModel::drude(0.0), outer_p, 1.0, 2.0).unwrap();
        assert!((stack.w_eval(0.5, 2.0).unwrap() - c(-1.0, 0.0)).norm() < 1e-14);

        let w = 3.8275_f64;
        let expected = w * w * c(10.2, 1.28) - 4.0;
        assert!((stack.w_eval(1.5, w).unwrap() - expected).norm() < 1e-12);
    }

    #[test]
    fn w_derivative_matches_central_difference() {
        let stack = LayerStack::three_layer(
            MaterialModel::drude_scaled(0.5, 2.0),
            MaterialModel::constant(c(0.2, 0.0)),
            MaterialModel::drude_scaled(-0.5, 2.0),
            0.5,
            2.0,
        )
        .unwrap();
        let h = 1e-4;
        for &x in &[-1.0, 0.25, 2.0] {
            let fd = (stack.w_eval(x, 2.8 + h).unwrap() - stack.w_eval(x, 2.8 - h).unwrap()) / (2.0 * h);
            let an = stack.w_domega(x, 2.8, 1).unwrap();
            assert!((fd - an).norm() <= 1e-7 * an.norm().max(1.0));
            let fd2 = (stack.w_domega(x, 2.8 + h, 1).unwrap() - stack.w_domega(x, 2.8 - h, 1).unwrap()) / (2.0 * h);
            let an2 = stack.w_domega(x, 2.8, 2).unwrap();
            assert!((fd2 - an2).norm() <= 1e-7 * an2.norm().max(1.0));
        }
    }

    #[test]
    fn taylor_remainder_matches_direct_difference() {
        for m in [MaterialModel::drude_scaled(0.5, 6.0), MaterialModel::constant(c(1.0, 0.4))] {
            let w0 = c(2.8, 0.0);
            let w = c(2.7, 0.05);
            let direct = m.w_derivative_at(w, 2.0, 0).unwrap()
                - m.w_derivative_at(w0, 2.0, 0).unwrap()
                - m.w_derivative_at(w0, 2.0, 1).unwrap() * (w - w0)
                - 0.5 * m.w_derivative_at(w0, 2.0, 2).unwrap() * (w - w0) * (w - w0);
            let closed = m.w_taylor_remainder(w0, w).unwrap();
            assert!((direct - closed).norm() < 1e-12, "{direct} vs {closed}");
        }
    }

    #[test]
    fn stack_validation() {
        let m = MaterialModel::drude(0.0);
        assert!(LayerStack::new(vec![m, m], vec![], 1.0).is_err());
        assert!(LayerStack::new(vec![m, m, m], vec![1.0, 0.0], 1.0).is_err());
        assert!(LayerStack::new(vec![m, m, m], vec![0.0, 1.0], 1.0).is_ok());
    }

    #[test]
    fn layer_lookup_uses_right_limit() {
        let m = MaterialModel::drude(0.0);
        let s = LayerStack::new(vec![m, m, m], vec![0.0, 1.0], 1.0).unwrap();
        assert_eq!(s.layer_index(-0.1), 0);
        assert_eq!(s.layer_index(0.0), 1);
        assert_eq!(s.layer_index(1.0), 2);
    }

    #[test]
    fn gamma_is_three_omega_squared_chi3() {
        let m = MaterialModel::drude(0.0).with_chi3(c(2.0, 0.0));
        let s = LayerStack::new(vec![m], vec![], 1.0).unwrap();
        assert_eq!(s.gamma_eval(0.0, 2.0), c(24.0, 0.0));
    }

    #[test]
    fn rescaling_examples() {
        let p = RescaleParams::silver();
        let (w, _, _) = rescale_to_dimensionless(&p, p.omega_p, 0.0, 0.0);
        assert_eq!(w, 1.0);
        let (w, _, _) = rescale_to_dimensionless(&p, 3.8275 * OMEGA_P_SILVER, 0.0, 0.0);
        assert!((w - 3.8275).abs() < 1e-12);
        let (_, _, x) = rescale_to_dimensionless(&p, 0.0, 0.0, p.c / p.omega_p);
        assert!((x - 1.0).abs() < 1e-12);
        let (_, k, _) = rescale_to_dimensionless(&p, 0.0, p.omega_p / p.c, 0.0);
        assert!((k - 1.0).abs() < 1e-12);
        assert!(RescaleParams::new(-1.0, 1.0).is_err());
        assert!(RescaleParams::new(1.0, 0.0).is_err());
    }
}
