//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use aihs::blaschke::{self, BlaschkeKind};
use aihs::chains::{self, ChainOutcome, ChainStart, ChainTolerances};
use aihs::config::RunConfig;
use aihs::duality;
use aihs::entire;
use aihs::halfspace::{self, HalfSpaceCertificate};
use aihs::linalg::{self, CMatrix, CVector, C64};
use aihs::operator::{build_operator, MatrixSpec, OperatorFamily, OperatorModel, OperatorSpec, WeightSpec};
use aihs::report;
use aihs::resolvent::{self, ProbeConfig, ResolventMethod, ShiftedSolver};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn shift(family: OperatorFamily, weights: WeightSpec, dim: usize) -> OperatorModel {
    build_operator(&OperatorSpec {
        family,
        weights: Some(weights),
        matrix: None,
        dim,
    })
    .unwrap()
}

fn dense(matrix: MatrixSpec, dim: usize) -> OperatorModel {
    build_operator(&OperatorSpec {
        family: OperatorFamily::DenseMatrix,
        weights: None,
        matrix: Some(matrix),
        dim,
    })
    .unwrap()
}

/// 50 points spiralling out from `r_min` to `r_max`.
fn lambda_grid(r_min: f64, r_max: f64) -> Vec<C64> {
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    (0..50)
        .map(|j| {
            let t = j as f64 / 49.0;
            C64::from_polar(r_min * (r_max / r_min).powf(t), 2.0 * PI * golden * j as f64)
        })
        .collect()
}

fn seed(op: &OperatorModel) -> CVector {
    match op.family() {
        OperatorFamily::DonoghueBackwardShift => linalg::basis_vector(op.dim(), op.dim() - 1),
        _ => linalg::basis_vector(op.dim(), 0),
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let n = 256;
    let dense_op = dense(MatrixSpec::Random { seed: 7, scale: 1.0 }, n);
    let dense_radius = 0.5 / dense_op.norm();
    let cases = [
        (shift(OperatorFamily::ForwardWeightedShift, WeightSpec::Geometric { ratio: 0.5, scale: 1.0 }, n), lambda_grid(0.5, 20.0)),
        (shift(OperatorFamily::DonoghueBackwardShift, WeightSpec::Geometric { ratio: 0.9, scale: 1.0 }, n), lambda_grid(0.5, 20.0)),
        (dense_op, lambda_grid(0.05 * dense_radius, dense_radius)),
    ];
    let (mut th, mut repl, mut neumann) = (0.0f64, 0.0f64, 0.0f64);
    for (op, grid) in &cases {
        let e = seed(op);
        // one factorization per point serves both h(lambda) and the nested solve
        let solvers: Vec<ShiftedSolver> = grid.iter().map(|&l| ShiftedSolver::new(op, l).unwrap()).collect();
        let hs: Vec<CVector> = solvers.iter().map(|s| s.solve(&e).unwrap()).collect();
        for (i, &l) in grid.iter().enumerate() {
            let h = &hs[i];
            let th_res = linalg::norm(&(op.apply(h) - (h * l.inv() - &e)));
            th = th.max(th_res / (linalg::norm(h) / l.norm() + linalg::norm(&op.apply(h)) + linalg::norm(&e)));
            let j = (i + 1) % grid.len();
            let mu = grid[j];
            let nested = solvers[i].solve(&hs[j]).unwrap() * (mu.inv() - l.inv());
            let scale = linalg::norm(h) + linalg::norm(&hs[j]) + linalg::norm(&nested);
            repl = repl.max(linalg::norm(&(h - &hs[j] - nested)) / scale);
            if op.is_nilpotent() {
                let series = resolvent::resolvent_vector(op, l, &e, ResolventMethod::NeumannPartialSum { terms: n })
                    .unwrap()
                    .vector;
                neumann = neumann.max(linalg::norm(&(series - h)) / linalg::norm(h));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        th < 1e-8 && repl < 1e-8 && neumann < 1e-12 && secs < 5.0,
        format!("Th {th:.2e}, replacement {repl:.2e}, Neumann vs direct {neumann:.2e}, {secs:.2} s"),
    )
}

fn criterion_2_config() -> RunConfig {
    RunConfig::from_json(
        r#"{"operator": {"family": "forward-weighted-shift",
             "weights": {"kind": "geometric", "params": {"ratio": 0.5}}, "dim": 256},
            "m": 8, "k_max": 5}"#,
    )
    .unwrap()
}

fn criterion_2() -> (Outcome, Option<(OperatorModel, HalfSpaceCertificate)>) {
    let start = Instant::now();
    let (op, cert) = match report::build_certificate(&criterion_2_config()) {
        Ok(v) => v,
        Err(e) => return (outcome(false, format!("build failed: {e}")), None),
    };
    let secs = start.elapsed().as_secs_f64();
    let m = &cert.metrics;
    let grid: Vec<C64> = lambda_grid(0.5, 20.0).into_iter().chain(cert.lambdas.iter().copied()).collect();
    let identity = halfspace::identity_error(&op, &cert, &grid).unwrap();
    let passed = cert.passed()
        && m.ai_defect_rank <= 1
        && m.independence_sigma_min > 1e-10
        && m.max_annihilation_residual < m.annihilation_tolerance
        && m.functional_independence_sigma_min > 1e-10
        && identity < 1e-10
        && secs < 10.0;
    let detail = format!(
        "defect rank {}, sigma_min {:.2e}, annihilation {:.2e} < {:.2e} (relative {:.2e}), functional sigma_min {:.2e}, identity {:.2e}, {secs:.2} s{}",
        m.ai_defect_rank,
        m.independence_sigma_min,
        m.max_annihilation_residual,
        m.annihilation_tolerance,
        m.max_annihilation_relative,
        m.functional_independence_sigma_min,
        identity,
        if cert.passed() { String::new() } else { format!(", failed: {}", cert.failed_checks().join(",")) }
    );
    (outcome(passed, detail), Some((op, cert)))
}

fn check_coefficient_bound(r: &[f64], degree: usize, k_max: usize, exact: bool) -> Result<usize, String> {
    let cs = entire::coefficients_from_norms(r, degree, k_max).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for k in 0..=k_max {
        for i in k..=degree {
            let lhs = cs.c[i] * r[i + k];
            let bound = 0.5f64.powi(i as i32);
            let slack = if exact { 0.0 } else { 4.0 * f64::EPSILON * bound };
            if lhs > bound + slack {
                return Err(format!("c_{i} r_{} = {lhs:e} > 2^-{i}", i + k));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

fn criterion_3() -> Outcome {
    let (degree, k_max) = (20, 6);
    let len = entire::required_norms(degree, k_max);
    let mut cases: Vec<(Vec<f64>, bool)> = Vec::new();
    // powers of two, up and down
    cases.push(((0..len).map(|i| 2f64.powi(i as i32 % 7 - 3)).collect(), true));
    cases.push(((0..len).map(|i| 2f64.powi(-(i as i32))).collect(), true));
    // biorthogonal norms of an actual orbit
    let op = shift(OperatorFamily::ForwardWeightedShift, WeightSpec::Geometric { ratio: 0.8, scale: 1.0 }, len + 1);
    let orbit = aihs::operator::compute_orbit(&op, &linalg::basis_vector(len + 1, 0), len).unwrap();
    cases.push((orbit.biorthogonal_norms, false));
    cases.push(((0..len).map(|i| 1.0 + (i as f64 * 0.37).sin().abs() * 10.0).collect(), false));
    let mut total = 0;
    for (r, exact) in &cases {
        match check_coefficient_bound(r, degree, k_max, *exact) {
            Ok(n) => total += n,
            Err(e) => return outcome(false, e),
        }
    }
    outcome(true, format!("{total} inequalities over {} norm sequences", cases.len()))
}

fn criterion_4() -> Outcome {
    let a = 0.5;
    let single = blaschke::blaschke_taylor(&[C64::new(a, 0.0)], 40).unwrap();
    // (a - z) / (1 - a z) = a + sum_{n>=1} a^(n-1) (a^2 - 1) z^n
    let symbolic = single
        .taylor
        .iter()
        .enumerate()
        .map(|(n, b)| {
            let want = if n == 0 { a } else { a.powi(n as i32 - 1) * (a * a - 1.0) };
            (b - C64::new(want, 0.0)).norm()
        })
        .fold(0.0, f64::max);
    let first = (single.taylor[0] - C64::new(0.5, 0.0)).norm().max((single.taylor[1] - C64::new(-0.75, 0.0)).norm());

    let points = blaschke::blaschke_sequence(&BlaschkeKind::Dyadic, 4).unwrap();
    let bd = blaschke::blaschke_taylor(&points, 600).unwrap();
    let table = blaschke::fm_coefficient_table(&bd, 4, 600).unwrap();
    let at_zeros = (0..=table.m_max)
        .flat_map(|m| points.iter().map(move |&z| (m, z)))
        .map(|(m, z)| table.evaluate(m, z).norm())
        .fold(0.0, f64::max);

    let many = blaschke::blaschke_sequence(&BlaschkeKind::InverseSquare, 200).unwrap();
    let big = blaschke::blaschke_taylor(&many, 400).unwrap();
    let modulus = big.grid_max_modulus.max(bd.grid_max_modulus);
    let growth = big.growth_constant;
    outcome(
        first < 1e-12 && symbolic < 1e-12 && at_zeros < 1e-9 && modulus <= 1.0 + 1e-12 && growth.is_finite(),
        format!(
            "b_0, b_1 error {first:.1e}, series error {symbolic:.1e}, F_m at zeros {at_zeros:.2e}, max |B| {modulus:.15}, growth constant {growth:.3}"
        ),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let trips = match duality::round_trip_sweep(1, 100, 64, duality::DEFAULT_TOL_RANK) {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("sweep failed: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    let worst = trips.iter().map(|t| t.record.residual_fwd).fold(0.0, f64::max);
    let worst_bwd = trips.iter().map(|t| t.record.residual_bwd).fold(0.0, f64::max);
    let ranks_ok = trips.iter().all(|t| t.record.rank_k == t.record.dim_f);
    let converse_ok = trips.iter().all(|t| t.converse_rank_excess == 0);
    outcome(
        trips.len() == 100 && worst < 1e-9 && ranks_ok && converse_ok && secs < 10.0,
        format!(
            "{} instances, (T+K) residual {worst:.2e}, converse residual {worst_bwd:.2e}, rank K = dim F: {ranks_ok}, converse rank test: {converse_ok}, {secs:.2} s",
            trips.len()
        ),
    )
}

fn criterion_6(built: Option<&(OperatorModel, HalfSpaceCertificate)>) -> Outcome {
    let Some((op, cert)) = built else {
        return outcome(false, "no certificate from criterion 2".into());
    };
    let f = CMatrix::from_column_slice(op.dim(), 1, cert.defect_vector.as_slice());
    let adj = duality::adjoint_halfspace(op, &cert.basis, &f);
    outcome(
        adj.residual < 1e-9 && adj.dim_y_perp == adj.dim_z + adj.dim_f && adj.dimensions_consistent(),
        format!(
            "T*Z in Y-perp residual {:.2e}, dim Y-perp {} = dim Z {} + dim F {}",
            adj.residual, adj.dim_y_perp, adj.dim_z, adj.dim_f
        ),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let tol = ChainTolerances::default();
    let n = 64;
    let shifts = [
        shift(OperatorFamily::ForwardWeightedShift, WeightSpec::Constant { value: aihs::operator::ComplexLiteral::Real(1.0) }, n),
        shift(OperatorFamily::DonoghueBackwardShift, WeightSpec::Harmonic { power: 1.0, scale: 1.0 }, n),
    ];
    let mut worst = 0.0f64;
    let mut shifts_ok = true;
    for op in &shifts {
        match chains::run_chain(op, 10, ChainStart::Auto, &tol) {
            Ok(run) => {
                shifts_ok &= matches!(run.outcome, ChainOutcome::Completed) && run.state.depth() == 10;
                for s in &run.steps {
                    worst = worst.max(s.worst());
                    shifts_ok &= s.passed(1e-8);
                }
            }
            Err(_) => shifts_ok = false,
        }
    }
    let identity = dense(MatrixSpec::Identity, n);
    let identity_ok = match chains::run_chain(&identity, 10, ChainStart::Auto, &tol) {
        Ok(run) => match run.outcome {
            ChainOutcome::InvariantSubspace { witness } => witness.depth == 1 && witness.verified(),
            ChainOutcome::Completed => false,
        },
        Err(_) => false,
    };
    let sweep = chains::dichotomy_sweep(100, 50, 16, 10, &tol);
    let consistent = sweep.iter().filter(|r| r.consistent).count();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        shifts_ok && identity_ok && consistent == 50 && sweep.len() == 50 && secs < 20.0,
        format!(
            "shift chains to depth 10: {shifts_ok} (worst residual {worst:.2e}), identity stops at depth 1 with witness: {identity_ok}, dichotomy {consistent}/50, {secs:.2} s"
        ),
    )
}

/// `sum_{m=n+1}^{n+len} n!/m!`, nested from the inside out.
fn tail_sum(n: usize, len: usize) -> f64 {
    (1..=len).rev().fold(0.0, |acc, j| (1.0 + acc) / (n + j) as f64)
}

fn criterion_8() -> Outcome {
    let config = ProbeConfig { p: 1.0, dim: 64, k_max: 1, n_max: 12 };
    let probe = resolvent::dense_subsequence_probe(config).unwrap();
    let errs = &probe.errors[0];
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let oracle = probe
        .n_values
        .iter()
        .zip(errs)
        .map(|(&n, &e)| {
            let t = tail_sum(n, config.dim - 1);
            (e - t).abs() / t
        })
        .fold(0.0, f64::max);
    let at_six = errs[5];
    outcome(
        decreasing && at_six < 0.05 && oracle < 1e-12,
        format!("strictly decreasing: {decreasing}, error at n = 6 {at_six:.4} (need < 0.05), oracle agreement {oracle:.1e}"),
    )
}

fn criterion_9() -> Outcome {
    let config = criterion_2_config();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        if let Err(e) = report::cmd_build(&config, d.path()) {
            return outcome(false, format!("build failed: {e}"));
        }
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join(report::CERTIFICATE_FILE)).unwrap();
    let identical = read(&dirs[0]) == read(&dirs[1]);
    let audit = report::cmd_verify(&dirs[0].path().join(report::CERTIFICATE_FILE)).unwrap();
    let diff = audit.max_relative_difference();
    outcome(
        identical && audit.passed() && diff < 1e-12,
        format!("bit-identical certificates: {identical}, re-audit max difference {diff:.1e}"),
    )
}

fn main() -> ExitCode {
    let (c2, built) = criterion_2();
    let results = [
        criterion_1(),
        c2,
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(built.as_ref()),
        criterion_7(),
        criterion_8(),
        criterion_9(),
    ];
    for (i, r) in results.iter().enumerate() {
        println!("criterion {} {} {}", i + 1, if r.passed { "PASS" } else { "FAIL" }, r.detail);
    }
    if results.iter().all(|r| r.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
