use eqmeasure::analytic_reference;
use eqmeasure::brute_oracles::{self, ParticleConfig};
use eqmeasure::eqm_solver::{self, Operators, ProblemParams, SolverConfig};
use eqmeasure::jacobi_basis::{self, BasisSpec};
use eqmeasure::potential_ops;
use eqmeasure::specfun::{self, HypergeometricArgs};
use proptest::prelude::*;

fn small() -> SolverConfig {
    SolverConfig { n: 8, ..Default::default() }
}

/// Repulsive powers on `d = 2` for which the quadratic-attraction closed form
/// is a nonnegative measure, kept away from the excluded zero.
fn alpha2_beta() -> impl Strategy<Value = f64> {
    prop_oneof![-1.5f64..-0.1, 0.1f64..1.5]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gamma_recurrence(x in 0.1f64..30.0) {
        let lhs = specfun::gamma(x + 1.0).unwrap();
        let rhs = x * specfun::gamma(x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-13 * rhs.abs());
    }

    #[test]
    fn hypergeometric_euler_transform(a in -3.0f64..3.0, b in -3.0f64..3.0, c in 0.3f64..4.0, z in 0.0f64..0.97) {
        let direct = specfun::gauss_2f1(HypergeometricArgs::new(a, b, c, z)).unwrap();
        let euler = (1.0 - z).powf(c - a - b) * specfun::gauss_2f1(HypergeometricArgs::new(c - a, c - b, c, z)).unwrap();
        let scale = direct.abs().max(euler.abs()).max(1.0);
        prop_assert!((direct - euler).abs() <= 1e-10 * scale, "{direct} vs {euler}");
    }

    #[test]
    fn jacobi_recurrence_matches_explicit_sum(a in -0.9f64..3.0, b in -0.5f64..3.0, n in 0usize..12, t in -1.0f64..1.0) {
        let rec = jacobi_basis::jacobi(a, b, n, t);
        let explicit = jacobi_basis::jacobi_explicit(a, b, n, 0.5 * (1.0 + t));
        // The monomial sum cancels; bound by the size of P_n at t = 1.
        let peak = jacobi_basis::jacobi(a, b, n, 1.0).abs().max(jacobi_basis::jacobi(a, b, n, -1.0).abs());
        prop_assert!((rec - explicit).abs() <= 1e-11 * peak.max(1.0) * (1u64 << n) as f64, "{rec} vs {explicit}");
    }

    #[test]
    fn gauss_jacobi_rule_is_orthonormalising(a in -0.9f64..2.0, b in -0.5f64..2.0, m in 0usize..6, k in 0usize..6) {
        let rule = jacobi_basis::gauss_jacobi_rule(a, b, 8).unwrap();
        let v = rule.integrate(|t| jacobi_basis::jacobi(a, b, m, t) * jacobi_basis::jacobi(a, b, k, t));
        let want = if m == k { jacobi_basis::norm_sq_t(a, b, k).unwrap() } else { 0.0 };
        let scale = jacobi_basis::norm_sq_t(a, b, m).unwrap().max(jacobi_basis::norm_sq_t(a, b, k).unwrap());
        prop_assert!((v - want).abs() <= 1e-12 * scale);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn matched_operator_is_banded(d in 1usize..7, shift in 0.05f64..5.9) {
        let alpha = -(d as f64) + shift;
        prop_assume!(alpha.abs() > 1e-3 && (alpha / 2.0 - (alpha / 2.0).round()).abs() > 1e-3);
        let basis = jacobi_basis::choose_basis(alpha, d).unwrap();
        let op = potential_ops::build_operator(alpha, &basis, 16).unwrap();
        prop_assert_eq!(op.numerical_bandwidth(1e-12), 2 * basis.ell + 1);
        prop_assert!(op.off_band_ratio(basis.ell) < 1e-12);
    }

    #[test]
    fn even_kernels_live_in_a_leading_block(d in 1usize..6, a in -0.9f64..1.5, half in 1usize..3) {
        let basis = BasisSpec::new(d, 1, a, true).unwrap();
        let kernel = 2.0 * half as f64;
        let op = potential_ops::build_operator(kernel, &basis, 12).unwrap();
        prop_assert!(op.outside_block_ratio(half + 1) < 1e-12);
    }

    #[test]
    fn recurrence_matches_direct_columns(d in 1usize..5, alpha_shift in 0.3f64..5.0, beta_frac in 0.05f64..0.95) {
        let df = d as f64;
        let alpha = -df + alpha_shift;
        let beta = -df + beta_frac * alpha_shift;
        prop_assume!(alpha.abs() > 0.05 && beta.abs() > 0.05);
        let params = ProblemParams::new(alpha, beta, d, 1.0).unwrap();
        let basis = eqm_solver::solver_basis(&params, &small()).unwrap();
        let rec = potential_ops::build_operator(beta, &basis, 8).unwrap();
        let direct = potential_ops::build_operator_direct(beta, &basis, 8).unwrap();
        let err = (&rec.matrix - &direct.matrix).amax() / direct.matrix.amax();
        prop_assert!(err < 1e-8, "{err:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn quadratic_attraction_closed_form_recovered(beta in alpha2_beta()) {
        let params = ProblemParams::new(2.0, beta, 2, 1.0).unwrap();
        let exact = analytic_reference::alpha2_solution(beta, 2, 1.0).unwrap();
        let (m, report) = eqm_solver::solve(&params, &small()).unwrap();
        prop_assert!((m.radius - exact.radius).abs() < 1e-8);
        prop_assert!(m.residual <= 1e-10, "residual {:e}", m.residual);
        prop_assert!(report.positivity.unwrap().feasible);
        let mass = jacobi_basis::mass_functional(&m.rho, m.radius).unwrap();
        prop_assert!((mass - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mass_scales_density_and_energy_not_radius(beta in alpha2_beta(), mass in 0.1f64..10.0) {
        let one = ProblemParams::new(2.0, beta, 2, mass).unwrap();
        let two = ProblemParams { mass: 2.0 * mass, ..one };
        let (m1, _) = eqm_solver::solve(&one, &small()).unwrap();
        let (m2, _) = eqm_solver::solve(&two, &small()).unwrap();
        prop_assert!((m1.radius - m2.radius).abs() <= 1e-10 * m1.radius);
        prop_assert!((m2.energy - 2.0 * m1.energy).abs() <= 1e-10 * m2.energy.abs());
        for r in [0.0, 0.3, 0.7] {
            let r = r * m1.radius;
            let v1 = eqm_solver::evaluate_measure(&m1, r).unwrap();
            let v2 = eqm_solver::evaluate_measure(&m2, r).unwrap();
            prop_assert!((v2 - 2.0 * v1).abs() <= 1e-10 * v2.abs());
        }
    }

    #[test]
    fn pairwise_flow_keeps_centre_of_mass(seed in any::<u64>(), d in 1usize..4) {
        let params = ProblemParams::new(2.0, -0.44, d, 1.0).unwrap();
        let initial = brute_oracles::uniform_in_ball(30, d, seed);
        let com0: Vec<f64> = (0..d).map(|k| initial.iter().skip(k).step_by(d).sum::<f64>() / 30.0).collect();
        let cfg = ParticleConfig { max_iterations: 20, ..Default::default() };
        let state = brute_oracles::particle_simulate(&params, 30, seed, &cfg).unwrap();
        for (a, b) in state.center_of_mass().iter().zip(&com0) {
            prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn invalid_orderings_rejected(alpha in -3.0f64..3.0, gap in 0.0f64..2.0) {
        prop_assert!(ProblemParams::new(alpha, alpha + gap, 3, 1.0).is_err());
    }
}

#[test]
fn solve_builds_each_operator_once() {
    let params = ProblemParams::new(1.9, 0.5, 2, 1.0).unwrap();
    let config = SolverConfig { n: 20, ..Default::default() };
    let before = potential_ops::builds_on_this_thread();
    eqm_solver::solve(&params, &config).unwrap();
    assert_eq!(potential_ops::builds_on_this_thread() - before, 2);

    let ops = Operators::build(&params, &config).unwrap();
    let before = potential_ops::builds_on_this_thread();
    eqm_solver::minimize_radius(&params, &config, &ops).unwrap();
    eqm_solver::energy_scan(&params, &config, &ops).unwrap();
    assert_eq!(potential_ops::builds_on_this_thread(), before);
}

#[test]
fn solve_is_deterministic() {
    let params = ProblemParams::new(1.0, 0.3, 2, 1.0).unwrap();
    let config = SolverConfig { n: 24, ..Default::default() };
    let (a, ra) = eqm_solver::solve(&params, &config).unwrap();
    let (b, rb) = eqm_solver::solve(&params, &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
}

#[test]
fn scaled_error_grows_linearly_in_radius_offset() {
    let params = ProblemParams::new(2.0, -1.2, 3, 1.0).unwrap();
    let exact = analytic_reference::alpha2_solution(-1.2, 3, 1.0).unwrap();
    let ops = Operators::build(&params, &small()).unwrap();
    let err = |dr: f64| {
        let m = eqm_solver::solve_fixed_radius(&params, exact.radius + dr, &small(), &ops).unwrap();
        eqm_solver::cosine_grid(101)
            .into_iter()
            .map(|x| (eqm_solver::evaluate_measure(&m, x * m.radius).unwrap() - exact.density(x * exact.radius).unwrap()).abs())
            .fold(0.0, f64::max)
    };
    let ratio = err(1e-4) / err(1e-5);
    assert!((ratio - 10.0).abs() < 1.5, "{ratio}");
}

#[test]
fn alpha4_solutions_have_constant_potential() {
    for (beta, d, mass) in [(0.5, 2, 1.0), (-1.1, 3, 1.0)] {
        let params = ProblemParams::new(4.0, beta, d, mass).unwrap();
        let (m, _) = eqm_solver::solve(&params, &small()).unwrap();
        let v: Vec<f64> = [0.2, 0.5, 0.8]
            .iter()
            .map(|x| brute_oracles::combined_potential(&m, x * m.radius, &params).unwrap())
            .collect();
        for value in &v {
            assert!((value - m.energy).abs() < 1e-7 * m.energy.abs(), "{value} vs {}", m.energy);
        }
    }
}
