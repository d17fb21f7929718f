use proptest::prelude::*;
use spp_core::analytic::{compute_rates, dtilde, width_multiplier, LogBranch};
use spp_core::continuation::{pt_expand, pt_reduce, PtLayout};
use spp_core::floquet::{det, fundamental_matrix};
use spp_core::grid::{inner, norm, pt_defect, pt_reflect, Grid};
use spp_core::materials::{LayerStack, MaterialModel};
use spp_core::Complex64;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn field(parts: &[(f64, f64)]) -> Vec<Complex64> {
    parts.iter().map(|&(a, b)| c(a, b)).collect()
}

fn eta_for(s: f64, omega: f64, k: f64) -> MaterialModel {
    MaterialModel::constant(c(s * k * k / (omega * omega) - 1.0, 0.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn conservative_stacks_have_negative_widths(
        omega in 0.3f64..4.0,
        k in 0.5f64..3.0,
        sm in 0.01f64..0.99,
        ss in 0.01f64..0.99,
        sp in 0.01f64..0.99,
        m in -3i32..=3,
    ) {
        let stack = LayerStack::three_layer(eta_for(sm, omega, k), eta_for(ss, omega, k), eta_for(sp, omega, k), 1.0, k).unwrap();
        for branch in [LogBranch::Principal, LogBranch::Clockwise] {
            if let Ok(d) = dtilde(&stack, omega, m, branch) {
                prop_assert!(d.re < 0.0, "Re d = {} at omega {omega}", d.re);
            }
        }
    }

    #[test]
    fn width_satisfies_exponential_identity(
        omega in 0.5f64..5.0,
        gamma in -1.0f64..1.0,
        em in 0.0f64..10.0,
        ep in 0.0f64..10.0,
        m in -3i32..=3,
    ) {
        let stack = LayerStack::three_layer(
            MaterialModel::constant(c(em, -0.1)),
            MaterialModel::drude(gamma),
            MaterialModel::constant(c(ep, 0.1)),
            1.0,
            1.0,
        ).unwrap();
        let Ok(rates) = compute_rates(&stack, omega) else { return Ok(()) };
        let Ok(b) = width_multiplier(&rates, omega) else { return Ok(()) };
        for branch in [LogBranch::Principal, LogBranch::Clockwise] {
            let d = dtilde(&stack, omega, m, branch).unwrap();
            let lhs = (2.0 * rates.mu * d).exp();
            prop_assert!((lhs - b).norm() <= 1e-9 * b.norm().max(1.0));
        }
    }

    #[test]
    fn pt_reduction_round_trips(half in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 8..40), center in -5.0f64..5.0) {
        let n = 2 * half.len() + 1;
        let grid = Grid::uniform(-1.0, 1.0, n).unwrap();
        let layout = PtLayout::new(&grid).unwrap();
        let mut right = field(&half);
        let mut u: Vec<Complex64> = right.iter().rev().map(|z| z.conj()).collect();
        u.push(c(center, 0.0));
        u.append(&mut right);
        prop_assert!(pt_defect(&u) < 1e-15);
        let back = pt_expand(&pt_reduce(&u, &layout), &layout);
        prop_assert_eq!(back, u);
    }

    #[test]
    fn pt_reduce_projects_onto_pt_fields(vals in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 17..60)) {
        let mut u = field(&vals);
        if u.len().is_multiple_of(2) {
            u.pop();
        }
        let grid = Grid::uniform(-1.0, 1.0, u.len()).unwrap();
        let layout = PtLayout::new(&grid).unwrap();
        let p = pt_expand(&pt_reduce(&u, &layout), &layout);
        prop_assert!(pt_defect(&p) < 1e-15);
        let pu = pt_reflect(&p);
        for (a, b) in p.iter().zip(&pu) {
            prop_assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn inner_product_is_hermitian_and_linear(
        pairs in proptest::collection::vec(((-3.0f64..3.0, -3.0f64..3.0), (-3.0f64..3.0, -3.0f64..3.0)), 1..50),
        h in 1e-3f64..1.0,
        a in (-2.0f64..2.0, -2.0f64..2.0),
    ) {
        let u: Vec<Complex64> = pairs.iter().map(|p| c(p.0 .0, p.0 .1)).collect();
        let v: Vec<Complex64> = pairs.iter().map(|p| c(p.1 .0, p.1 .1)).collect();
        let a = c(a.0, a.1);
        let uv = inner(&u, &v, h);
        prop_assert!((uv - inner(&v, &u, h).conj()).norm() < 1e-12);
        let au: Vec<Complex64> = u.iter().map(|z| a * z).collect();
        prop_assert!((inner(&au, &v, h) - a * uv).norm() < 1e-11);
        let uu = inner(&u, &u, h);
        prop_assert!(uu.im.abs() < 1e-12);
        prop_assert!((uu.re.sqrt() - norm(&u, h)).abs() < 1e-12);
    }

    #[test]
    fn monodromy_has_unit_determinant(
        mean in (-4.0f64..4.0, -1.0f64..1.0),
        amp in (-2.0f64..2.0, -1.0f64..1.0),
        period in 0.5f64..3.0,
    ) {
        let (mean, amp) = (c(mean.0, mean.1), c(amp.0, amp.1));
        let w = move |x: f64| mean + amp * (2.0 * std::f64::consts::PI * x / period).cos();
        let m = fundamental_matrix(w, period, 2048);
        prop_assert!((det(&m) - c(1.0, 0.0)).norm() < 1e-8);
    }
}
