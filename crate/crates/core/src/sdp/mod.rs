//! A self-contained solver for small block-structured cone programs.
//!
//! Programs minimize a linear functional over a product of complex
//! Hermitian PSD blocks and nonnegative scalars subject to linear
//! equality/inequality constraints:
//!
//! ```text
//! minimize    sum_b <C_b, X_b>
//! subject to  sum_b <A_ib, X_b>  (=, <=, >=)  rhs_i    for each i
//!             X_b  PSD  or  X_b >= 0
//! ```
//!
//! where `<A, X> = Re Tr(A X)` for Hermitian blocks and a plain product for
//! scalars. Complex blocks are solved through their real symmetric
//! embedding, and the solve itself is a homogeneous self-dual
//! primal-dual path-following method with HKM directions and a Mehrotra
//! predictor-corrector; see [`solver`] for details.
//!
//! # Dual convention
//!
//! The reported multiplier `mu_i` of constraint `i` is the coefficient in
//! the Lagrangian
//!
//! ```text
//! L = <C, X> + sum_{<=} mu_i (<A_i,X> - b_i) - sum_{>=} mu_i (<A_i,X> - b_i)
//!            + sum_{=} mu_i (<A_i,X> - b_i) - sum_b <Z_b, X_b>
//! ```
//!
//! so multipliers of inequalities are nonnegative and the stationarity
//! residual `C + sum_{<=} mu A - sum_{>=} mu A + sum_{=} mu A - Z` vanishes
//! at optimality.

mod program;
pub mod conformance;
pub mod solver;

pub use program::{
    dump_program, embed_hermitian, BlockKind, BlockValue, ConeProgram, Constraint, Relation,
    SdpError,
};

use nalgebra::DMatrix;

use crate::hermitian;

/// Solver tolerances and iteration limits.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Relative duality-gap tolerance.
    pub gap_tol: f64,
    /// Relative primal/dual feasibility tolerance.
    pub feas_tol: f64,
    /// Iteration cap.
    pub max_iterations: usize,
    /// Fraction-to-boundary step damping, in (0, 1).
    pub step_fraction: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            gap_tol: 1e-8,
            feas_tol: 1e-8,
            max_iterations: 100,
            step_fraction: 0.98,
        }
    }
}

impl SolverOptions {
    /// Tightened tolerances for oracle comparisons and small certificates.
    pub fn tight() -> Self {
        SolverOptions {
            gap_tol: 1e-10,
            feas_tol: 1e-10,
            ..SolverOptions::default()
        }
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        if !(self.gap_tol > 0.0 && self.feas_tol > 0.0) {
            return Err(SdpError::InvalidOptions("tolerances must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(SdpError::InvalidOptions("max_iterations must be positive".into()));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction < 1.0) {
            return Err(SdpError::InvalidOptions("step_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Outcome classification of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
    NumericalFailure,
}

/// One line of solver progress, kept for diagnostics and invariant tests.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub mu: f64,
    pub step: f64,
}

/// Primal/dual solution of a [`ConeProgram`].
///
/// On `Infeasible` the `dual` vector carries the Farkas certificate (a
/// multiplier ray proving emptiness); on `Unbounded` the `primal` blocks
/// carry an improving ray. On `MaxIterations` the best iterate reached is
/// attached.
#[derive(Debug, Clone)]
pub struct ConeSolution {
    pub status: SolveStatus,
    /// Per-block primal values.
    pub primal: Vec<BlockValue>,
    /// One multiplier per constraint; see the module-level dual convention.
    pub dual: Vec<f64>,
    /// Dual cone variable per block (`Y`/`Z` matrices, scalar reduced costs).
    pub dual_blocks: Vec<BlockValue>,
    pub objective: f64,
    pub dual_objective: f64,
    /// Relative duality gap `|p - d| / (1 + |p| + |d|)`.
    pub duality_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
}

/// Solves the program; errors only on malformed input, with solve outcomes
/// reported through [`ConeSolution::status`].
pub fn solve(program: &ConeProgram, options: &SolverOptions) -> Result<ConeSolution, SdpError> {
    program.validate()?;
    options.validate()?;
    Ok(solver::solve_hsd(program, options))
}

/// Residuals of a primal/dual pair, recomputed from the program data alone.
#[derive(Debug, Clone)]
pub struct Residuals {
    /// Relative norm of the constraint violations.
    pub primal_infeas: f64,
    /// Relative norm of the dual stationarity violation.
    pub dual_infeas: f64,
    /// Signed duality gap `objective - dual objective`.
    pub gap: f64,
    /// Minimum eigenvalue (or scalar value) per primal block.
    pub min_eigenvalues: Vec<f64>,
}

/// Recomputes all residuals of `solution` against `program` from scratch,
/// independent of the solver's internal bookkeeping.
pub fn residuals(program: &ConeProgram, solution: &ConeSolution) -> Result<Residuals, SdpError> {
    program.validate()?;
    if solution.primal.len() != program.blocks.len() || solution.dual.len() != program.constraints.len()
    {
        return Err(SdpError::ShapeMismatch(
            "solution block/multiplier counts do not match the program".into(),
        ));
    }

    let mut viol_sq = 0.0;
    let mut rhs_sq = 0.0;
    for (constraint, _mult) in program.constraints.iter().zip(&solution.dual) {
        let lhs = eval_row(constraint, &solution.primal);
        let v = match constraint.relation {
            Relation::Eq => lhs - constraint.rhs,
            Relation::Le => (lhs - constraint.rhs).max(0.0),
            Relation::Ge => (constraint.rhs - lhs).max(0.0),
        };
        viol_sq += v * v;
        rhs_sq += constraint.rhs * constraint.rhs;
    }
    let primal_infeas = viol_sq.sqrt() / (1.0 + rhs_sq.sqrt());

    // stationarity: C + sum(+-mu) A - Z per block
    let mut station: Vec<BlockValue> = program
        .blocks
        .iter()
        .map(|b| match b {
            BlockKind::Hermitian(n) => BlockValue::Matrix(DMatrix::zeros(*n, *n)),
            BlockKind::Scalar => BlockValue::Scalar(0.0),
        })
        .collect();
    for (block, coeff) in &program.objective {
        station[*block].add_scaled(coeff, 1.0);
    }
    for (constraint, mult) in program.constraints.iter().zip(&solution.dual) {
        let sign = match constraint.relation {
            Relation::Le | Relation::Eq => 1.0,
            Relation::Ge => -1.0,
        };
        for (block, coeff) in &constraint.terms {
            station[*block].add_scaled(coeff, sign * mult);
        }
    }
    let mut dual_norm_sq = 0.0;
    let mut obj_norm_sq = 1.0;
    for (block, coeff) in &program.objective {
        let _ = block;
        obj_norm_sq += coeff.norm_squared();
    }
    for (expr, z) in station.iter().zip(&solution.dual_blocks) {
        dual_norm_sq += expr.difference_norm_squared(z);
    }
    let dual_infeas = dual_norm_sq.sqrt() / obj_norm_sq.sqrt();

    let pobj = eval_objective(program, &solution.primal);
    let mut dobj = 0.0;
    for (constraint, mult) in program.constraints.iter().zip(&solution.dual) {
        let sign = match constraint.relation {
            Relation::Le | Relation::Eq => -1.0,
            Relation::Ge => 1.0,
        };
        dobj += sign * mult * constraint.rhs;
    }

    let min_eigenvalues = solution
        .primal
        .iter()
        .map(|v| match v {
            BlockValue::Matrix(m) => hermitian::min_eigenvalue(m),
            BlockValue::Scalar(s) => *s,
        })
        .collect();

    Ok(Residuals {
        primal_infeas,
        dual_infeas,
        gap: pobj - dobj,
        min_eigenvalues,
    })
}

pub(crate) fn eval_row(constraint: &Constraint, primal: &[BlockValue]) -> f64 {
    constraint
        .terms
        .iter()
        .map(|(block, coeff)| coeff.pair(&primal[*block]))
        .sum()
}

pub(crate) fn eval_objective(program: &ConeProgram, primal: &[BlockValue]) -> f64 {
    program
        .objective
        .iter()
        .map(|(block, coeff)| coeff.pair(&primal[*block]))
        .sum()
}

