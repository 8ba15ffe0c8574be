//! Acceptance criteria 1-10, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`); the process exits nonzero if
//! any criterion fails. Pass `--only 3,7` to run a subset.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use eqmeasure::analytic_reference::{self, AnalyticSolution};
use eqmeasure::brute_oracles::{self, ParticleConfig};
use eqmeasure::eqm_solver::{self, Measure, Operators, ProblemParams, SolverConfig};
use eqmeasure::jacobi_basis;
use eqmeasure::potential_ops;
use eqmeasure::specfun::{self, Real};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok { Ok(detail) } else { Err(detail) }
}

fn rel(got: Real, want: Real) -> Real {
    (got - want).abs() / want.abs()
}

/// ℓ = 0 operator: diagonal, `n = 0` entry equal to the ball constant and
/// entries up to `n = 20` matching the quadrature potential.
fn diagonal_ground_truth() -> Outcome {
    let pairs: [(Real, usize); 10] = [
        (0.5, 1),
        (-0.3, 1),
        (-0.44, 2),
        (-1.5, 2),
        (-1.2, 3),
        (-2.5, 3),
        (-2.7, 4),
        (-3.5, 4),
        (-PI, 5),
        (-4.2, 6),
    ];
    let n_max = 20;
    let mut worst_const: Real = 0.0;
    let mut worst_quad: Real = 0.0;
    for (alpha, d) in pairs {
        let basis = jacobi_basis::choose_basis(alpha, d).map_err(|e| e.to_string())?;
        if basis.ell != 0 {
            return Err(format!("({alpha}, {d}) is not an ell = 0 pair"));
        }
        let op = potential_ops::build_operator(alpha, &basis, n_max + 1).map_err(|e| e.to_string())?;
        let df = d as Real;
        let constant = PI.powf(df / 2.0 + 1.0) / (specfun::gamma(df / 2.0).unwrap() * ((alpha + df) * PI / 2.0).sin());
        worst_const = worst_const.max(rel(op.matrix[(0, 0)], constant));
        // Diagonal entries times P_n(2x²-1) are the potentials at radius x;
        // fit each entry over radii where the angular integral is nontrivial
        // and at the origin, where P_n(-1) is far from zero.
        let radii = [0.0, 0.35, 0.6, 0.85];
        let mut num = vec![0.0; n_max + 1];
        let mut den = vec![0.0; n_max + 1];
        for x in radii {
            let potentials =
                brute_oracles::potential_quadrature_all(alpha, &basis, n_max, x).map_err(|e| e.to_string())?;
            for (n, v) in potentials.iter().enumerate() {
                let p = jacobi_basis::jacobi(basis.a, basis.b, n, 2.0 * x * x - 1.0);
                num[n] += v * p;
                den[n] += p * p;
            }
        }
        for n in 0..=n_max {
            worst_quad = worst_quad.max(rel(op.matrix[(n, n)], num[n] / den[n]));
        }
    }
    check(
        worst_const <= 1e-12 && worst_quad <= 1e-7,
        format!("n=0 vs constant {worst_const:.2e} (tol 1e-12), n<=20 vs quadrature {worst_quad:.2e} (tol 1e-7)"),
    )
}

/// Recurrence-built operators against the ₂F₁ projection and quadrature.
fn recurrence_vs_direct() -> Outcome {
    let n = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut triples = Vec::new();
    while triples.len() < 6 {
        let d = rng.random_range(1..=5usize);
        let df = d as Real;
        let alpha = rng.random_range(-df + 0.3..4.5);
        let beta = rng.random_range(-df + 0.3..alpha);
        if alpha.abs() < 0.05 || beta.abs() < 0.05 || (alpha - beta).abs() < 0.1 {
            continue;
        }
        triples.push((alpha, beta, d));
    }
    let mut worst_proj: Real = 0.0;
    let mut worst_quad: Real = 0.0;
    let mut built = 0;
    for &(alpha, beta, d) in &triples {
        let params = ProblemParams::new(alpha, beta, d, 1.0).map_err(|e| e.to_string())?;
        let config = SolverConfig { n, ..Default::default() };
        let basis = eqm_solver::solver_basis(&params, &config).map_err(|e| e.to_string())?;
        for kernel in [alpha, beta] {
            let op = potential_ops::build_operator(kernel, &basis, n).map_err(|e| format!("({alpha}, {beta}, {d}): {e}"))?;
            built += 1;
            let scale = op.matrix.amax();
            for c in 0..n {
                let col = potential_ops::projected_column(kernel, &basis, c, n, None).map_err(|e| e.to_string())?;
                for (r, v) in col.iter().enumerate() {
                    worst_proj = worst_proj.max((op.matrix[(r, c)] - v).abs() / scale);
                }
            }
            let quad = brute_oracles::projected_entries_quadrature(kernel, &basis, n, n, 1e-10)
                .map_err(|e| format!("({alpha}, {beta}, {d}) kernel {kernel}: {e}"))?;
            for r in 0..n {
                for c in 0..n {
                    worst_quad = worst_quad.max((op.matrix[(r, c)] - quad[r * n + c]).abs() / scale);
                }
            }
        }
    }
    check(
        worst_proj <= 1e-8 && worst_quad <= 1e-7,
        format!(
            "{built} operators from {} triples: vs 2F1 projection {worst_proj:.2e} (tol 1e-8), vs quadrature {worst_quad:.2e} (tol 1e-7)",
            triples.len()
        ),
    )
}

/// Band count of matched operators and block support of even kernels.
fn bandedness() -> Outcome {
    let n = 30;
    let matched: [(Real, usize); 7] = [(-PI, 5), (0.5, 2), (3.6, 3), (1.9, 2), (-1.1, 3), (2.5, 1), (5.3, 4)];
    let mut lines = Vec::new();
    let mut ok = true;
    for (alpha, d) in matched {
        let basis = jacobi_basis::choose_basis(alpha, d).map_err(|e| e.to_string())?;
        let op = potential_ops::build_operator(alpha, &basis, n).map_err(|e| e.to_string())?;
        let bands = op.numerical_bandwidth(1e-12);
        let off = op.off_band_ratio(basis.ell);
        let good = bands == 2 * basis.ell + 1 && off < 1e-12;
        ok &= good;
        if !good {
            lines.push(format!("({alpha}, {d}): {bands} bands, off-band {off:.1e}"));
        }
    }
    let mut worst_block: Real = 0.0;
    for (basis_power, d) in [(1.9, 2), (-1.1, 3), (3.6, 3), (0.5, 2)] {
        let basis = jacobi_basis::choose_basis(basis_power, d).map_err(|e| e.to_string())?;
        for kernel in [2.0, 4.0] {
            let op = potential_ops::build_operator(kernel, &basis, n).map_err(|e| e.to_string())?;
            let block = kernel as usize / 2 + 1;
            worst_block = worst_block.max(op.outside_block_ratio(block));
        }
    }
    ok &= worst_block < 1e-12;
    lines.push(format!("even kernels outside leading block {worst_block:.1e}"));
    check(ok, lines.join("; "))
}

fn analytic(params: &ProblemParams) -> Result<AnalyticSolution, String> {
    analytic_reference::solution_for(params.alpha, params.beta, params.d, params.mass)
        .ok_or("no closed form")?
        .map_err(|e| e.to_string())
}

/// Largest pointwise relative density error over `R·i/50`, `i < 50`.
fn density_error(measure: &Measure, exact: &AnalyticSolution) -> Result<Real, String> {
    let limit = exact.radius.min(measure.radius);
    let mut worst: Real = 0.0;
    for i in 0..50 {
        let r = limit * i as Real / 50.0;
        let want = exact.density(r).map_err(|e| e.to_string())?;
        let got = eqm_solver::evaluate_measure(measure, r).map_err(|e| e.to_string())?;
        worst = worst.max(rel(got, want));
    }
    Ok(worst)
}

fn alpha2_cases() -> Vec<ProblemParams> {
    [
        (1.2, 1, 1.0),
        (1.0 / 3.0, 2, 2.6),
        (-0.5, 3, 1.0),
        (-2.5, 4, 0.5),
        (-4.0 * PI / 5.0, 5, 1.0),
        (-3.2, 6, 1.0),
    ]
    .into_iter()
    .map(|(beta, d, mass)| ProblemParams { alpha: 2.0, beta, d, mass })
    .collect()
}

fn alpha4_cases() -> Vec<ProblemParams> {
    [(0.5, 2, 1.0), (-1.1, 3, 1.0), (-3.9, 6, 2.0)]
        .into_iter()
        .map(|(beta, d, mass)| ProblemParams { alpha: 4.0, beta, d, mass })
        .collect()
}

fn small_config() -> SolverConfig {
    SolverConfig { n: 8, ..Default::default() }
}

fn reproduce(cases: &[ProblemParams], density_tol: Real) -> Outcome {
    let config = small_config();
    let mut worst_r: Real = 0.0;
    let mut worst_rho: Real = 0.0;
    for p in cases {
        let exact = analytic(p)?;
        let (m, _) = eqm_solver::solve(p, &config).map_err(|e| format!("{p:?}: {e}"))?;
        worst_r = worst_r.max((m.radius - exact.radius).abs());
        worst_rho = worst_rho.max(density_error(&m, &exact)?);
    }
    check(
        worst_r <= 1e-8 && worst_rho <= density_tol,
        format!(
            "{} cases at N=8: radius {worst_r:.2e} (tol 1e-8), density {worst_rho:.2e} (tol {density_tol:.0e})",
            cases.len()
        ),
    )
}

/// Last feasible and first infeasible β along an α = 4 line.
fn feasibility_flip(d: usize, betas: (Real, Real), config: &SolverConfig) -> Result<(Real, Real), String> {
    let cells = eqm_solver::gap_scan((4.0, 4.0), betas, 0.05, d, config);
    let flips: Vec<usize> = (1..cells.len()).filter(|&i| cells[i - 1].feasible != cells[i].feasible).collect();
    match flips.as_slice() {
        [i] if cells[*i - 1].feasible => Ok((cells[*i - 1].beta, cells[*i].beta)),
        _ => Err(format!(
            "d={d}: expected one feasible-to-infeasible flip, got pattern {}",
            cells.iter().map(|c| if c.feasible { '+' } else { '-' }).collect::<String>()
        )),
    }
}

fn gap_boundary() -> Outcome {
    let config = SolverConfig::default();
    let mut ok = true;
    let mut lines = Vec::new();
    for (d, betas) in [(2usize, (0.3, 1.0)), (3, (-0.6, 0.1))] {
        let (last, first) = feasibility_flip(d, betas, &config)?;
        let target = analytic_reference::alpha4_gap_boundary(d);
        let flip = 0.5 * (last + first);
        let good = (flip - target).abs() <= 0.05;
        ok &= good;
        lines.push(format!("d={d}: flip between {last:.2} and {first:.2}, boundary {target:.4}"));
    }
    check(ok, lines.join("; "))
}

/// Error of the fixed-radius measure against the closed form grows like ΔR.
/// Both measures are compared at the same fraction of their own radius: on
/// a shared physical grid the boundary factor `(R²-r²)^{0.1}` makes the
/// difference near the edge scale like `ΔR^{0.1}`.
fn radius_linearity() -> Outcome {
    let params = ProblemParams::new(2.0, -1.2, 3, 1.0).map_err(|e| e.to_string())?;
    let exact = analytic(&params)?;
    let config = small_config();
    let ops = Operators::build(&params, &config).map_err(|e| e.to_string())?;
    let grid = eqm_solver::cosine_grid(201);
    let mut points = Vec::new();
    for dr in [1e-6, 1e-5, 1e-4, 1e-3] {
        let m = eqm_solver::solve_fixed_radius(&params, exact.radius + dr, &config, &ops).map_err(|e| e.to_string())?;
        let mut err: Real = 0.0;
        for x in &grid {
            let got = eqm_solver::evaluate_measure(&m, x * m.radius).map_err(|e| e.to_string())?;
            let want = exact.density(x * exact.radius).map_err(|e| e.to_string())?;
            err = err.max((got - want).abs());
        }
        points.push((dr.ln(), err.ln()));
    }
    let k = points.len() as Real;
    let mx = points.iter().map(|p| p.0).sum::<Real>() / k;
    let my = points.iter().map(|p| p.1).sum::<Real>() / k;
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<Real>()
        / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<Real>();
    check((slope - 1.0).abs() <= 0.15, format!("log-log slope {slope:.4} (want 1 +- 0.15)"))
}

/// Max-abs difference on the cosine grid scaled to the smaller radius.
fn grid_difference(a: &Measure, b: &Measure) -> Result<Real, String> {
    let limit = a.radius.min(b.radius);
    let mut worst: Real = 0.0;
    for x in eqm_solver::cosine_grid(1001) {
        let r = x * limit;
        let va = eqm_solver::evaluate_measure(a, r).map_err(|e| e.to_string())?;
        let vb = eqm_solver::evaluate_measure(b, r).map_err(|e| e.to_string())?;
        worst = worst.max((va - vb).abs());
    }
    Ok(worst)
}

fn regularisation_convergence() -> Outcome {
    let params = ProblemParams::new(1.0, 0.3, 2, 1.0).map_err(|e| e.to_string())?;
    let at = |n: usize, s_rel: Real| {
        eqm_solver::solve(&params, &SolverConfig { n, s_rel, ..Default::default() })
    };
    let (m60, r60) = at(60, 1e-12).map_err(|e| e.to_string())?;
    let (m100, r100) = at(100, 1e-12).map_err(|e| e.to_string())?;
    let regularised = grid_difference(&m60, &m100)?;
    // Blocks of ten: block 2 starts at n = 20. At N = 60 the envelope falls
    // strictly; at N = 100 it reaches the regularisation floor, so there it
    // must only stay below its level at n = 20.
    let env60 = r60.decay.ok_or("no decay record")?;
    let env100 = r100.decay.ok_or("no decay record")?.block_envelope;
    let floor = env100[3..].iter().cloned().fold(0.0, Real::max);
    let decays = env60.decays_from_block(2) && floor < env100[2];
    let unregularised = match at(100, 0.0) {
        Ok((m, _)) => grid_difference(&m60, &m)?,
        Err(_) => Real::INFINITY,
    };
    check(
        regularised <= 1e-4 && decays && unregularised > regularised,
        format!(
            "N=60 vs N=100 {regularised:.2e} (tol 1e-4), envelope decays past n=20: {decays} (N=100 tail {floor:.1e} vs {:.1e}), unregularised N=100 {unregularised:.2e}",
            env100[2]
        ),
    )
}

fn particles() -> Outcome {
    let params = ProblemParams::new(2.0, -0.44, 2, 1.0).map_err(|e| e.to_string())?;
    let exact = analytic(&params)?;
    let (spectral, _) = eqm_solver::solve(&params, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let pconf = ParticleConfig { max_iterations: 1000, ..Default::default() };
    let state = brute_oracles::particle_simulate(&params, 1000, 42, &pconf).map_err(|e| e.to_string())?;
    let rmax = state.radii().into_iter().fold(0.0, Real::max);
    let outer = spectral.radius.max(rmax);
    let hist = brute_oracles::radial_histogram(&state, 20, Some(outer)).map_err(|e| e.to_string())?;
    let mut l1 = 0.0;
    for k in 0..20 {
        let lo = hist.edges[k].min(spectral.radius);
        let hi = hist.edges[k + 1].min(spectral.radius);
        let want = if hi > lo {
            brute_oracles::shell_mass(|r| eqm_solver::evaluate_measure(&spectral, r).unwrap_or(0.0), 2, lo, hi)
                .map_err(|e| e.to_string())?
        } else {
            0.0
        };
        l1 += (hist.mass[k] - want).abs();
    }
    l1 /= params.mass;
    let radius_gap = rel(rmax, exact.radius);
    check(
        radius_gap <= 0.05 && l1 <= 0.15,
        format!(
            "{} iterations, max radius {rmax:.4} vs {:.4} ({:.2}%, tol 5%), histogram L1 {l1:.3} (tol 0.15)",
            state.iterations,
            exact.radius,
            100.0 * radius_gap
        ),
    )
}

fn mass_and_constancy() -> Outcome {
    let config = small_config();
    let mut worst_mass: Real = 0.0;
    let mut worst_spread: Real = 0.0;
    let mut worst_energy: Real = 0.0;
    for p in alpha2_cases().into_iter().chain(alpha4_cases()) {
        let (m, _) = eqm_solver::solve(&p, &config).map_err(|e| format!("{p:?}: {e}"))?;
        let closed = jacobi_basis::mass_functional(&m.rho, m.radius).map_err(|e| e.to_string())?;
        let quad = brute_oracles::mass_quadrature(&m).map_err(|e| e.to_string())?;
        worst_mass = worst_mass.max(rel(closed, p.mass)).max(rel(quad, p.mass));
        let values = (1..=9)
            .map(|i| brute_oracles::combined_potential(&m, m.radius * i as Real / 10.0, &p))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let mean = values.iter().sum::<Real>() / values.len() as Real;
        for v in &values {
            worst_spread = worst_spread.max(rel(*v, mean));
        }
        worst_energy = worst_energy.max(rel(mean, m.energy));
    }
    check(
        worst_mass <= 1e-10 && worst_spread <= 1e-5,
        format!(
            "9 cases: mass {worst_mass:.2e} (tol 1e-10), potential spread {worst_spread:.2e} (tol 1e-5), potential vs E {worst_energy:.2e}"
        ),
    )
}

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let only: Option<Vec<usize>> = {
        let args: Vec<String> = std::env::args().collect();
        args.iter()
            .position(|a| a == "--only")
            .and_then(|i| args.get(i + 1))
            .map(|list| list.split(',').filter_map(|s| s.trim().parse().ok()).collect())
    };
    let minutes = |m: u64| Duration::from_secs(60 * m);
    let criteria = [
        Criterion { id: 1, name: "diagonal operator ground truth", budget: minutes(1), run: diagonal_ground_truth },
        Criterion { id: 2, name: "recurrence vs direct operators", budget: minutes(5), run: recurrence_vs_direct },
        Criterion { id: 3, name: "bandedness", budget: minutes(1), run: bandedness },
        Criterion { id: 4, name: "attraction power 2 closed forms", budget: minutes(2), run: || reproduce(&alpha2_cases(), 1e-8) },
        Criterion { id: 5, name: "attraction power 4 closed forms", budget: minutes(2), run: || reproduce(&alpha4_cases(), 1e-6) },
        Criterion { id: 6, name: "gap boundary", budget: minutes(10), run: gap_boundary },
        Criterion { id: 7, name: "radius perturbation linearity", budget: minutes(2), run: radius_linearity },
        Criterion { id: 8, name: "regularisation and convergence", budget: minutes(5), run: regularisation_convergence },
        Criterion { id: 9, name: "particle cross-validation", budget: minutes(10), run: particles },
        Criterion { id: 10, name: "mass and potential constancy", budget: minutes(5), run: mass_and_constancy },
    ];
    let mut failed = 0;
    for c in criteria.iter().filter(|c| only.as_ref().is_none_or(|o| o.contains(&c.id))) {
        let start = Instant::now();
        let outcome = (c.run)();
        let took = start.elapsed();
        let in_time = took < c.budget;
        let (pass, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {}: {} [{:.1}s of {}s]",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            detail,
            took.as_secs_f64(),
            c.budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
