//! Property tests across the library, each against an independent oracle.

use diffinc::field::{finite_diff_gradient, generate_test_field, FieldKind, Grid2};
use diffinc::gamma::{envelope_member, GammaSpec};
use diffinc::matalg::{cayley_map, cofactor, from_conformal, sym_eigen, to_conformal, Mat2};
use diffinc::minty::{
    admissible_check, comparability_ratio, dist_to_singular, dist_to_singular_sweep, envelope_inclusion_check,
    homeomorphism_probe, minty_transform, SingularSet,
};
use diffinc::mongeampere::MASolution;
use diffinc::weights::rh_ratio;
use proptest::prelude::*;

fn mat() -> impl Strategy<Value = Mat2> {
    (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b, c, d)| Mat2::new(a, b, c, d))
}

fn sym(r: f64) -> impl Strategy<Value = Mat2> {
    (-r..r, -r..r, -r..r).prop_map(|(a, b, c)| Mat2::new(a, b, b, c))
}

/// `Y = R diag(λ₁, det/λ₁) Rᵀ` with `det ∈ [1/λ, λ]`.
fn density_hessian(lambda: f64) -> impl Strategy<Value = Mat2> {
    (-3.0..3.0f64, -lambda.ln()..lambda.ln(), 0.0..std::f64::consts::PI).prop_map(|(l1, ld, t)| {
        let (l1, det) = (l1.exp(), ld.exp());
        let r = Mat2::rotation(t);
        (r * Mat2::diag(l1, det / l1) * r.transpose()).sym_part()
    })
}

/// Largest singular value from `σ² = (F² ± √(F⁴ − 4 det²))/2`.
fn svd_norm(m: Mat2) -> f64 {
    let f2 = m.m11 * m.m11 + m.m12 * m.m12 + m.m21 * m.m21 + m.m22 * m.m22;
    let d = m.det();
    ((f2 + (f2 * f2 - 4.0 * d * d).max(0.0).sqrt()) / 2.0).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn wirtinger_identities(m in mat()) {
        let c = to_conformal(m);
        prop_assert!((c.a_plus.norm() + c.a_minus.norm() - svd_norm(m)).abs() < 1e-12);
        prop_assert!((c.a_plus.norm_sqr() - c.a_minus.norm_sqr() - m.det()).abs() < 1e-12);
        prop_assert!((from_conformal(c) - m).max_abs() < 1e-15);
        prop_assert!((m.trace() - 2.0 * c.a_plus.re).abs() < 1e-14);
    }

    #[test]
    fn cofactor_is_adjugate(m in mat()) {
        let d = m.det();
        prop_assert!((m * cofactor(m) - Mat2::scalar(d)).max_abs() < 1e-13);
        prop_assert!((cofactor(m) * m - Mat2::scalar(d)).max_abs() < 1e-13);
    }

    #[test]
    fn cayley_eigenvalue_law(y in density_hessian(4.0)) {
        let x = cayley_map(y).unwrap();
        let (sy, sx) = (sym_eigen(y), sym_eigen(x));
        let f = |l: f64| (l - 1.0) / (l + 1.0);
        prop_assert!((sx.lam1 - f(sy.lam1)).abs() < 1e-10);
        prop_assert!((sx.lam2 - f(sy.lam2)).abs() < 1e-10);
        prop_assert!(x.is_symmetric(1e-12));
    }

    #[test]
    fn singular_distance_matches_sweep(m in mat(), s in sym(2.0)) {
        prop_assert!((dist_to_singular(m) - dist_to_singular_sweep(m)).abs() < 1e-8);
        prop_assert!((dist_to_singular(s) - dist_to_singular_sweep(s)).abs() < 1e-8);
    }

    #[test]
    fn singular_distance_is_conjugation_invariant(m in mat(), t in 0.0..6.3f64) {
        let r = Mat2::rotation(t);
        let c = r * m * r.transpose();
        prop_assert!((dist_to_singular(c) - dist_to_singular(m)).abs() < 1e-12);
        // A₀ swaps 𝒮 with SO(2).
        let so2 = GammaSpec::so2(2.0).unwrap();
        let to_so2 = diffinc::gamma::dist_matrix(Mat2::CONJUGATION * m, &so2);
        prop_assert!((to_so2 - dist_to_singular(m)).abs() < 1e-9);
    }

    #[test]
    fn admissible_implies_envelope(a in sym(1.0), lambda in 1.0..10.0f64) {
        if admissible_check(a, lambda) {
            prop_assert!(envelope_inclusion_check(a, lambda));
        }
    }

    #[test]
    fn so2_envelope_closed_form(x in mat(), kk in 1.0..6.0f64) {
        let g = GammaSpec::so2(kk).unwrap();
        let c = to_conformal(x);
        let k = (kk - 1.0) / (kk + 1.0);
        let lhs = c.a_minus.norm();
        let rhs = k * (1.0 - c.a_plus.norm()).abs();
        if (lhs - rhs).abs() > 1e-9 {
            prop_assert_eq!(envelope_member(x, &g).member, lhs <= rhs);
        }
    }

    /// `r(Y) ≥ 2s/(s + 1)` with `s = λ^{−1/2}`, and `r(Y) < 2λ`.
    #[test]
    fn comparability_ratio_range(y in density_hessian(2.0)) {
        let r = comparability_ratio(y).unwrap();
        let s = 0.5f64.sqrt();
        prop_assert!(r >= 2.0 * s / (s + 1.0) - 1e-12);
        prop_assert!(r < 4.0);
    }

    #[test]
    fn minty_jacobian_bound(y in density_hessian(3.0)) {
        // det DΦ₂ = det(Y + Id)/2 ≥ |Y|/2
        prop_assert!((y + Mat2::IDENTITY).det() / 2.0 >= y.norm() / 2.0 - 1e-12);
    }

    #[test]
    fn reverse_holder_ratio_bounds(v in proptest::collection::vec(0.01..10.0f64, 2..40), c in 0.1..100.0f64, eps in 0.01..4.0f64) {
        let r = rh_ratio(&v, eps);
        prop_assert!(r >= 1.0 - 1e-12);
        let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
        prop_assert!((rh_ratio(&scaled, eps) / r - 1.0).abs() < 1e-10);
        prop_assert!(rh_ratio(&v, 2.0 * eps) >= r - 1e-12);
    }

    #[test]
    fn affine_fields_differentiate_exactly(a in mat(), b0 in -2.0..2.0f64, b1 in -2.0..2.0f64) {
        let g = Grid2::square_masked(-1.0, 1.0, 0.1, |p| p[0].hypot(p[1]) < 1.0);
        let du = finite_diff_gradient(&generate_test_field(&FieldKind::Affine { a, b: [b0, b1] }, &g));
        for k in du.active_indices() {
            prop_assert!((du.values[k] - a).max_abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn quadratic_minty_transform(a in 0.3..3.0f64, b in 0.3..3.0f64, t in 0.0..std::f64::consts::PI) {
        // The fixture takes eigenvalues in decreasing order.
        let y = Mat2::diag(a.max(b), a.min(b));
        let sol = MASolution::quadratic_fixture(y, 1.0 / 24.0).unwrap();
        let (_, tm) = minty_transform(&sol).unwrap();
        let x = cayley_map(y).unwrap();
        let int = tm.interior();
        for k in tm.du.active_indices().filter(|&k| int[k]) {
            prop_assert!((tm.du.values[k] - x).max_abs() < 1e-9);
        }
        prop_assert!(homeomorphism_probe(&tm, SingularSet::member(t)).injective);
    }
}
