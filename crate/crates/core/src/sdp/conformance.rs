//! Analytic conformance suite: small programs with closed-form optima used
//! to gate the solver. Run by the library tests and by `selftest`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{residuals, solve, BlockKind, BlockValue, ConeProgram, Relation, SolveStatus, SolverOptions};

/// Expected outcome of a case.
#[derive(Debug, Clone)]
pub enum Expected {
    Optimal {
        objective: f64,
        /// `(constraint index, multiplier)` pairs with analytic values.
        dual_checks: Vec<(usize, f64)>,
    },
    Infeasible,
    Unbounded,
}

pub struct ConformanceCase {
    pub name: &'static str,
    pub build: fn() -> ConeProgram,
    pub expected: Expected,
}

#[derive(Debug, Clone)]
pub struct CaseReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn rm(entries: &[f64], n: usize) -> BlockValue {
    BlockValue::Matrix(DMatrix::from_fn(n, n, |i, j| Complex64::new(entries[i * n + j], 0.0)))
}

fn cm(entries: &[(f64, f64)], n: usize) -> BlockValue {
    BlockValue::Matrix(DMatrix::from_fn(n, n, |i, j| {
        Complex64::new(entries[i * n + j].0, entries[i * n + j].1)
    }))
}

fn eye(n: usize) -> BlockValue {
    BlockValue::Matrix(DMatrix::identity(n, n))
}

fn trace_identity() -> ConeProgram {
    let mut p = ConeProgram::new(vec![BlockKind::Hermitian(2)]);
    p.add_objective(0, eye(2));
    p.add_constraint(vec![(0, eye(2))], Relation::Eq, 1.0);
    p
}

fn det_boundary() -> ConeProgram {
    // min X11 with X12 = X21 = 1 and X22 = 1: optimum X11 = 1
    let mut p = ConeProgram::new(vec![BlockKind::Hermitian(2)]);
    p.add_objective(0, rm(&[1.0, 0.0, 0.0, 0.0], 2));
    p.add_constraint(vec![(0, rm(&[0.0, 0.5, 0.5, 0.0], 2))], Relation::Eq, 1.0);
    p.add_constraint(vec![(0, rm(&[0.0, 0.0, 0.0, 1.0], 2))], Relation::Eq, 1.0);
    p
}

fn lp_corner() -> ConeProgram {
    // min x1 + 2 x2 with x1 + x2 >= 1: optimum 1 at (1, 0), multiplier 1
    let mut p = ConeProgram::new(vec![BlockKind::Scalar, BlockKind::Scalar]);
    p.add_objective(0, BlockValue::Scalar(1.0));
    p.add_objective(1, BlockValue::Scalar(2.0));
    p.add_constraint(
        vec![(0, BlockValue::Scalar(1.0)), (1, BlockValue::Scalar(1.0))],
        Relation::Ge,
        1.0,
    );
    p
}

fn smallest_eigenvalue() -> ConeProgram {
    // min <diag(1,2), X> with Tr X = 1: optimum 1, equality multiplier -1
    let mut p = ConeProgram::new(vec![BlockKind::Hermitian(2)]);
    p.add_objective(0, rm(&[1.0, 0.0, 0.0, 2.0], 2));
    p.add_constraint(vec![(0, eye(2))], Relation::Eq, 1.0);
    p
}

fn smallest_eigenvalue_scaled() -> ConeProgram {
    let mut p = ConeProgram::new(vec![BlockKind::Hermitian(2)]);
    p.add_objective(0, rm(&[7.0, 0.0, 0.0, 14.0], 2));
    p.add_constraint(vec![(0, eye(2))], Relation::Eq, 1.0);
    p
}

fn pauli_like_extreme() -> ConeProgram {
    // min <[[0,-i],[i,0]], X> with Tr X = 1: optimum -1 (smallest eigenvalue)
    let mut p = ConeProgram::new(vec![BlockKind::Hermitian(2)]);
    p.add_objective(
        0,
        cm(&[(0.0, 0.0), (0.0, -1.0), (0.0, 1.0), (0.0, 0.0)], 2),
    );
    p.add_constraint(vec![(0, eye(2))], Relation::Eq, 1.0);
    p
}

fn scalar_cap() -> ConeProgram {
    // min -x with x <= 3: optimum -3, multiplier 1
    let mut p = ConeProgram::new(vec![BlockKind::Scalar]);
    p.add_objective(0, BlockValue::Scalar(-1.0));
    p.add_constraint(vec![(0, BlockValue::Scalar(1.0))], Relation::Le, 3.0);
    p
}

fn real_completion() -> ConeProgram {
    // min Tr X with Re X12 = 1: optimum 2 at the rank-one [[1,1],[1,1]]
    let mut p = ConeProgram::new(vec![BlockKind::Hermitian(2)]);
    p.add_objective(0, eye(2));
    p.add_constraint(vec![(0, rm(&[0.0, 0.5, 0.5, 0.0], 2))], Relation::Eq, 1.0);
    p
}

fn complex_completion() -> ConeProgram {
    // min Tr X with X12 pinned to 0.6 + 0.8i: optimum 2|X12| = 2
    let mut p = ConeProgram::new(vec![BlockKind::Hermitian(2)]);
    p.add_objective(0, eye(2));
    p.add_constraint(vec![(0, rm(&[0.0, 0.5, 0.5, 0.0], 2))], Relation::Eq, 0.6);
    p.add_constraint(
        vec![(0, cm(&[(0.0, 0.0), (0.0, 0.5), (0.0, -0.5), (0.0, 0.0)], 2))],
        Relation::Eq,
        0.8,
    );
    p
}

fn mixed_blocks() -> ConeProgram {
    // separable sum of lp_corner and smallest_eigenvalue: optimum 2
    let mut p = ConeProgram::new(vec![
        BlockKind::Scalar,
        BlockKind::Scalar,
        BlockKind::Hermitian(2),
    ]);
    p.add_objective(0, BlockValue::Scalar(1.0));
    p.add_objective(1, BlockValue::Scalar(2.0));
    p.add_objective(2, rm(&[1.0, 0.0, 0.0, 2.0], 2));
    p.add_constraint(
        vec![(0, BlockValue::Scalar(1.0)), (1, BlockValue::Scalar(1.0))],
        Relation::Ge,
        1.0,
    );
    p.add_constraint(vec![(2, eye(2))], Relation::Eq, 1.0);
    p
}

fn psd_bounded_trace_min() -> ConeProgram {
    // min Tr(X) with <diag(1,0), X> >= 2 and <diag(0,1), X> >= 3: optimum 5
    let mut p = ConeProgram::new(vec![BlockKind::Hermitian(2)]);
    p.add_objective(0, eye(2));
    p.add_constraint(vec![(0, rm(&[1.0, 0.0, 0.0, 0.0], 2))], Relation::Ge, 2.0);
    p.add_constraint(vec![(0, rm(&[0.0, 0.0, 0.0, 1.0], 2))], Relation::Ge, 3.0);
    p
}

fn infeasible_scalar() -> ConeProgram {
    let mut p = ConeProgram::new(vec![BlockKind::Scalar]);
    p.add_objective(0, BlockValue::Scalar(1.0));
    p.add_constraint(vec![(0, BlockValue::Scalar(1.0))], Relation::Le, -1.0);
    p
}

fn infeasible_psd_trace() -> ConeProgram {
    let mut p = ConeProgram::new(vec![BlockKind::Hermitian(2)]);
    p.add_objective(0, eye(2));
    p.add_constraint(vec![(0, eye(2))], Relation::Eq, -1.0);
    p
}

fn unbounded_ray() -> ConeProgram {
    let mut p = ConeProgram::new(vec![BlockKind::Scalar]);
    p.add_objective(0, BlockValue::Scalar(-1.0));
    p.add_constraint(vec![(0, BlockValue::Scalar(1.0))], Relation::Ge, 1.0);
    p
}

/// The full suite, in a fixed order.
pub fn suite() -> Vec<ConformanceCase> {
    vec![
        ConformanceCase {
            name: "trace-identity-analytic-center",
            build: trace_identity,
            expected: Expected::Optimal { objective: 1.0, dual_checks: vec![] },
        },
        ConformanceCase {
            name: "determinant-boundary",
            build: det_boundary,
            expected: Expected::Optimal { objective: 1.0, dual_checks: vec![] },
        },
        ConformanceCase {
            name: "lp-corner",
            build: lp_corner,
            expected: Expected::Optimal { objective: 1.0, dual_checks: vec![(0, 1.0)] },
        },
        ConformanceCase {
            name: "smallest-eigenvalue",
            build: smallest_eigenvalue,
            expected: Expected::Optimal { objective: 1.0, dual_checks: vec![(0, -1.0)] },
        },
        ConformanceCase {
            name: "smallest-eigenvalue-scaled-7x",
            build: smallest_eigenvalue_scaled,
            expected: Expected::Optimal { objective: 7.0, dual_checks: vec![(0, -7.0)] },
        },
        ConformanceCase {
            name: "complex-extreme-eigenvalue",
            build: pauli_like_extreme,
            expected: Expected::Optimal { objective: -1.0, dual_checks: vec![(0, 1.0)] },
        },
        ConformanceCase {
            name: "scalar-cap",
            build: scalar_cap,
            expected: Expected::Optimal { objective: -3.0, dual_checks: vec![(0, 1.0)] },
        },
        ConformanceCase {
            name: "real-completion-rank-one",
            build: real_completion,
            expected: Expected::Optimal { objective: 2.0, dual_checks: vec![] },
        },
        ConformanceCase {
            name: "complex-completion",
            build: complex_completion,
            expected: Expected::Optimal { objective: 2.0, dual_checks: vec![] },
        },
        ConformanceCase {
            name: "mixed-scalar-psd-blocks",
            build: mixed_blocks,
            expected: Expected::Optimal { objective: 2.0, dual_checks: vec![] },
        },
        ConformanceCase {
            name: "psd-bounded-trace-min",
            build: psd_bounded_trace_min,
            expected: Expected::Optimal { objective: 5.0, dual_checks: vec![(0, 1.0), (1, 1.0)] },
        },
        ConformanceCase {
            name: "infeasible-scalar",
            build: infeasible_scalar,
            expected: Expected::Infeasible,
        },
        ConformanceCase {
            name: "infeasible-psd-trace",
            build: infeasible_psd_trace,
            expected: Expected::Infeasible,
        },
        ConformanceCase {
            name: "unbounded-ray",
            build: unbounded_ray,
            expected: Expected::Unbounded,
        },
    ]
}

/// Runs every case and checks objective accuracy (1e-7 absolute), duality
/// gap (<= gap_tol), recomputed residuals (<= feas_tol), per-block
/// complementarity (<= 10 gap_tol) and any analytic dual values.
pub fn run_suite(options: &SolverOptions) -> Vec<CaseReport> {
    suite()
        .into_iter()
        .map(|case| {
            let program = (case.build)();
            let detail = check_case(&program, &case.expected, options);
            CaseReport {
                name: case.name,
                passed: detail.is_none(),
                detail: detail.unwrap_or_else(|| "ok".to_string()),
            }
        })
        .collect()
}

fn check_case(program: &ConeProgram, expected: &Expected, options: &SolverOptions) -> Option<String> {
    let sol = match solve(program, options) {
        Ok(s) => s,
        Err(e) => return Some(format!("solve error: {e}")),
    };
    match expected {
        Expected::Infeasible => {
            (sol.status != SolveStatus::Infeasible).then(|| format!("status {:?}", sol.status))
        }
        Expected::Unbounded => {
            (sol.status != SolveStatus::Unbounded).then(|| format!("status {:?}", sol.status))
        }
        Expected::Optimal { objective, dual_checks } => {
            if sol.status != SolveStatus::Optimal {
                return Some(format!("status {:?}", sol.status));
            }
            if (sol.objective - objective).abs() > 1e-7 {
                return Some(format!("objective {} vs {}", sol.objective, objective));
            }
            if sol.duality_gap > options.gap_tol {
                return Some(format!("duality gap {}", sol.duality_gap));
            }
            let r = match residuals(program, &sol) {
                Ok(r) => r,
                Err(e) => return Some(format!("residual recomputation: {e}")),
            };
            if r.primal_infeas > options.feas_tol || r.dual_infeas > options.feas_tol {
                return Some(format!(
                    "residuals p={} d={}",
                    r.primal_infeas, r.dual_infeas
                ));
            }
            for (block, (x, z)) in sol.primal.iter().zip(&sol.dual_blocks).enumerate() {
                let slack = x.pair(z).abs();
                if slack > 10.0 * options.gap_tol {
                    return Some(format!("complementarity {slack} on block {block}"));
                }
            }
            for min_eig in &r.min_eigenvalues {
                if *min_eig < -options.feas_tol {
                    return Some(format!("primal block eigenvalue {min_eig}"));
                }
            }
            for (idx, value) in dual_checks {
                let got = sol.dual[*idx];
                if (got - value).abs() > 1e-6 {
                    return Some(format!("dual[{idx}] = {got}, expected {value}"));
                }
            }
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn full_suite_passes_at_default_tolerances() {
        for report in run_suite(&SolverOptions::default()) {
            assert!(report.passed, "{}: {}", report.name, report.detail);
        }
    }

    #[test]
    fn suite_fails_under_corrupted_tolerances() {
        // loosening the working tolerances must be caught by the gap check
        let broken = SolverOptions {
            gap_tol: 1e-2,
            feas_tol: 1e-2,
            max_iterations: 4,
            ..SolverOptions::default()
        };
        let reports = run_suite(&broken);
        assert!(reports.iter().any(|r| !r.passed));
    }

    #[test]
    fn solving_twice_is_bitwise_identical() {
        for case in suite() {
            let program = (case.build)();
            let a = solve(&program, &SolverOptions::default()).unwrap();
            let b = solve(&program, &SolverOptions::default()).unwrap();
            assert_eq!(a.objective.to_bits(), b.objective.to_bits(), "{}", case.name);
            assert_eq!(a.dual.len(), b.dual.len());
            for (x, y) in a.dual.iter().zip(&b.dual) {
                assert_eq!(x.to_bits(), y.to_bits(), "{}", case.name);
            }
        }
    }

    #[test]
    fn objective_scaling_scales_value_and_keeps_optimizer() {
        let base = (suite()[3].build)();
        let scaled = (suite()[4].build)();
        let opts = SolverOptions::default();
        let a = solve(&base, &opts).unwrap();
        let b = solve(&scaled, &opts).unwrap();
        assert_relative_eq!(b.objective, 7.0 * a.objective, max_relative = 1e-7);
        let (crate::sdp::BlockValue::Matrix(xa), crate::sdp::BlockValue::Matrix(xb)) =
            (&a.primal[0], &b.primal[0])
        else {
            panic!("matrix blocks expected");
        };
        for i in 0..2 {
            for j in 0..2 {
                assert!((xa[(i, j)] - xb[(i, j)]).norm() <= 1e-6);
            }
        }
    }

    #[test]
    fn weak_duality_along_feasible_iterates() {
        let opts = SolverOptions::default();
        for case in suite() {
            if !matches!(case.expected, Expected::Optimal { .. }) {
                continue;
            }
            let sol = solve(&(case.build)(), &opts).unwrap();
            for rec in &sol.history {
                if rec.primal_infeasibility <= opts.feas_tol
                    && rec.dual_infeasibility <= opts.feas_tol
                {
                    assert!(
                        rec.primal_objective - rec.dual_objective >= -opts.feas_tol,
                        "{}: weak duality violated ({} < {})",
                        case.name,
                        rec.primal_objective,
                        rec.dual_objective
                    );
                }
            }
        }
    }

    #[test]
    fn residuals_detect_perturbations_and_match_reported_gap() {
        let program = (suite()[3].build)();
        let opts = SolverOptions::default();
        let sol = solve(&program, &opts).unwrap();
        let r = residuals(&program, &sol).unwrap();
        assert!(r.primal_infeas <= 1e-8 && r.dual_infeas <= 1e-8);
        let relgap = r.gap.abs() / (1.0 + sol.objective.abs() + sol.dual_objective.abs());
        assert!((relgap - sol.duality_gap).abs() <= 1e-10);

        // perturb one diagonal entry of the primal block by +0.1
        let mut bumped = sol.clone();
        if let crate::sdp::BlockValue::Matrix(x) = &mut bumped.primal[0] {
            x[(0, 0)] += num_complex::Complex64::new(0.1, 0.0);
        }
        let rb = residuals(&program, &bumped).unwrap();
        assert!(rb.primal_infeas > 0.04, "perturbation not reflected: {}", rb.primal_infeas);
    }
}
