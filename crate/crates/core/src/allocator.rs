//! Power-allocation schemes built on the SDP relaxation of the transformed
//! problems.
//!
//! After the change of variables `W = W_bar/xi`, `V = V_bar/xi`,
//! `xi = 1/(Tr W + Tr V)`, the three designs become linear cone programs
//! over the blocks `(W_bar, V_bar, xi)` (plus an epigraph scalar `tau` and a
//! 2x2 hyperbolic block for the multi-objective form):
//!
//! * harvest maximization: `min -sum_k eps_k Tr(G_k (W_bar + V_bar))`,
//! * power minimization: `max xi` (the reported optimum is `1/xi*`),
//! * weighted scalarization: `min tau` with
//!   `lambda_j (F_bar_j - F_j*) <= tau`.
//!
//! The rank constraint on `W_bar` is dropped; tightness is certified after
//! the fact through the eigenvalue ratio of `W_bar` and the dual condition
//! `theta_k >= kappa_1` on the multipliers. Suboptimal scheme 1 shrinks the
//! feasible set so that the condition always holds; scheme 2 is the hybrid
//! that keeps the relaxed solution whenever it is already rank-one.
//! Baseline 1 restricts the noise covariance to the null space of the
//! desired channel, baseline 2 fixes the beam to maximum ratio
//! transmission.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::GramSet;
use crate::hermitian;
use crate::metrics::{self, Allocation, QosTargets};
use crate::sdp::{
    self, BlockKind, BlockValue, ConeProgram, ConeSolution, Relation, SolveStatus, SolverOptions,
};

/// Eigenvalue-ratio threshold for declaring a matrix rank-one.
pub const RANK_ONE_TOL: f64 = 1e-6;
/// Dual slack allowed in the sufficient-condition check.
pub const PROP2_TOL: f64 = 1e-7;
/// Leading eigenvalues at or below this are treated as a degenerate beam.
pub const DEGENERATE_EIGENVALUE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum AllocatorError {
    #[error("harvest objective is degenerate without idle receivers")]
    DegenerateObjective,
    #[error("weights ({0}, {1}) are not on the unit simplex")]
    LambdaOutsideSimplex(f64, f64),
    #[error("inputs are inconsistent: {0}")]
    ShapeMismatch(String),
    #[error("instance is infeasible ({context}); dominant certificate rows {certificate_rows:?}")]
    Infeasible {
        context: String,
        certificate_rows: Vec<usize>,
    },
    #[error("solver failed numerically ({context}, status {status:?})")]
    Numerical { context: String, status: SolveStatus },
    #[error("recovery failed: {0}")]
    Recovery(String),
    #[error("utopia values are invalid: {0}")]
    BadUtopia(String),
    #[error(transparent)]
    Sdp(#[from] sdp::SdpError),
}

/// Scalarization weights `(lambda_1, lambda_2)` on the unit simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub l1: f64,
    pub l2: f64,
}

impl Weights {
    pub fn new(l1: f64, l2: f64) -> Result<Self, AllocatorError> {
        if !(l1 >= 0.0 && l2 >= 0.0 && (l1 + l2 - 1.0).abs() <= 1e-9) {
            return Err(AllocatorError::LambdaOutsideSimplex(l1, l2));
        }
        Ok(Weights { l1, l2 })
    }

    /// `count` weights with `lambda_1` equally spaced on `[0, 1]`, starting
    /// from the power-minimization endpoint `(0, 1)`.
    pub fn grid(count: usize) -> Vec<Weights> {
        if count == 1 {
            return vec![Weights { l1: 0.5, l2: 0.5 }];
        }
        (0..count)
            .map(|i| {
                let l1 = i as f64 / (count - 1) as f64;
                Weights { l1, l2: 1.0 - l1 }
            })
            .collect()
    }
}

/// Anchor values of the scalarization: the relaxed single-objective optima.
#[derive(Debug, Clone, Copy)]
pub struct UtopiaValues {
    /// Relaxed optimum of the (negated) harvest objective, `<= 0`.
    pub f1_star: f64,
    /// Relaxed minimum transmit power in Watts, `> 0`.
    pub f2_star: f64,
}

impl UtopiaValues {
    pub fn new(f1_star: f64, f2_star: f64) -> Result<Self, AllocatorError> {
        if !(f2_star > 0.0) {
            return Err(AllocatorError::BadUtopia(format!(
                "f2_star = {f2_star} must be positive"
            )));
        }
        if f1_star > 1e-9 {
            return Err(AllocatorError::BadUtopia(format!(
                "f1_star = {f1_star} must be <= 0"
            )));
        }
        Ok(UtopiaValues {
            f1_star: f1_star.min(0.0),
            f2_star,
        })
    }
}

/// Multipliers of the transformed constraints, in the Lagrangian convention
/// of the dual problem.
#[derive(Debug, Clone)]
pub struct DualCertificate {
    /// Desired-receiver SINR constraint.
    pub beta: f64,
    /// Idle-receiver SINR constraints.
    pub theta: Vec<f64>,
    /// Power-budget constraint.
    pub alpha: f64,
    /// Trace normalization.
    pub mu: f64,
    /// Nonnegativity of `xi` (reduced cost).
    pub nu: f64,
    /// Scalarization rows; `kappa[1]` is derived from the stationarity
    /// identity `kappa_1 + kappa_2 = 1`.
    pub kappa: [f64; 2],
    /// Dual matrix of the `W_bar` cone constraint (full-block schemes only).
    pub y_mat: Option<DMatrix<Complex64>>,
    /// Dual matrix of the `V_bar` cone constraint (full-block schemes only).
    pub z_mat: Option<DMatrix<Complex64>>,
}

/// Solution of one transformed program in the transformed variables.
#[derive(Debug, Clone)]
pub struct TransformedSolution {
    pub w_bar: DMatrix<Complex64>,
    pub v_bar: DMatrix<Complex64>,
    pub xi: f64,
    pub tau: Option<f64>,
    pub objective_value: f64,
    pub duals: DualCertificate,
}

impl TransformedSolution {
    /// `Tr(W_bar) + Tr(V_bar)`, equal to one at any optimum.
    pub fn trace_sum(&self) -> f64 {
        hermitian::real_trace(&self.w_bar) + hermitian::real_trace(&self.v_bar)
    }
}

/// Result of the eigenvalue-ratio rank test.
#[derive(Debug, Clone, Copy)]
pub struct RankOneCheck {
    pub rank_one: bool,
    /// `lambda_2 / lambda_1` with eigenvalues in descending order.
    pub eigen_ratio: f64,
    /// Set when the leading eigenvalue is numerically zero.
    pub degenerate: bool,
}

/// `lambda_2/lambda_1` test against `tol`; a zero matrix is flagged
/// degenerate with ratio zero.
pub fn check_rank_one(w_bar: &DMatrix<Complex64>, tol: f64) -> RankOneCheck {
    let (vals, _) = hermitian::eigh_descending(w_bar);
    let leading = vals[0];
    if leading <= DEGENERATE_EIGENVALUE {
        return RankOneCheck {
            rank_one: false,
            eigen_ratio: 0.0,
            degenerate: true,
        };
    }
    let second = if vals.len() > 1 { vals[1].max(0.0) } else { 0.0 };
    let ratio = second / leading;
    RankOneCheck {
        rank_one: ratio <= tol,
        eigen_ratio: ratio,
        degenerate: false,
    }
}

/// Undoes the change of variables: `W = W_bar/xi`, `V = V_bar/xi`,
/// `w = sqrt(lambda_1(W)) u_1` with the global phase fixed so the
/// largest-magnitude entry of `w` is real nonnegative.
pub fn recover(solution: &TransformedSolution) -> Result<Allocation, AllocatorError> {
    if solution.xi <= 1e-8 {
        return Err(AllocatorError::Recovery(format!(
            "xi = {} is too small to invert the transformation",
            solution.xi
        )));
    }
    let check = check_rank_one(&solution.w_bar, RANK_ONE_TOL);
    if check.degenerate {
        return Err(AllocatorError::Recovery("W_bar is numerically zero".into()));
    }
    if !check.rank_one {
        return Err(AllocatorError::Recovery(format!(
            "W_bar is not rank-one (eigen ratio {})",
            check.eigen_ratio
        )));
    }
    let (vals, vecs) = hermitian::eigh_descending(&solution.w_bar);
    let scale = (vals[0] / solution.xi).sqrt();
    let mut w: DVector<Complex64> = vecs.column(0).into_owned() * Complex64::new(scale, 0.0);
    let pivot = (0..w.len())
        .max_by(|&i, &j| w[i].norm().partial_cmp(&w[j].norm()).unwrap().then(j.cmp(&i)))
        .expect("beamformer is non-empty");
    if w[pivot].norm() > 0.0 {
        let phase = w[pivot] / Complex64::new(w[pivot].norm(), 0.0);
        w = w.map(|z| z * phase.conj());
    }
    let v = &solution.v_bar / Complex64::new(solution.xi, 0.0);
    Allocation::new(w, hermitian::hermitianize(&v))
        .map_err(|e| AllocatorError::Recovery(e.to_string()))
}

/// Scheme identifiers, also used as CSV tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    RelaxedP3,
    Suboptimal1,
    Suboptimal2,
    Baseline1,
    Baseline2,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::RelaxedP3,
        Scheme::Suboptimal1,
        Scheme::Suboptimal2,
        Scheme::Baseline1,
        Scheme::Baseline2,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Scheme::RelaxedP3 => "relaxed_p3",
            Scheme::Suboptimal1 => "suboptimal1",
            Scheme::Suboptimal2 => "suboptimal2",
            Scheme::Baseline1 => "baseline1",
            Scheme::Baseline2 => "baseline2",
        }
    }

    pub fn parse(s: &str) -> Option<Scheme> {
        Scheme::ALL.iter().copied().find(|sch| sch.tag() == s)
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Metrics of the point a scheme achieves.
#[derive(Debug, Clone, Copy)]
pub struct ReportMetrics {
    pub transmit_power: f64,
    pub efficiency: f64,
    pub secrecy_capacity: f64,
}

impl ReportMetrics {
    /// Weighted-max scalarized objective of this point.
    pub fn scalarized(&self, lambda: Weights, utopia: &UtopiaValues) -> f64 {
        let row1 = lambda.l1 * (-self.efficiency - utopia.f1_star);
        let row2 = lambda.l2 * (self.transmit_power - utopia.f2_star);
        row1.max(row2)
    }
}

/// Everything produced by one scheme solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub scheme: Scheme,
    pub transformed: TransformedSolution,
    pub recovered: Option<Allocation>,
    pub rank_one: bool,
    pub eigen_ratio: f64,
    pub prop2_holds: bool,
    pub metrics: ReportMetrics,
    /// Which branch a hybrid scheme selected.
    pub hybrid_source: Option<Scheme>,
}

/// One entry of a trade-off sweep.
#[derive(Debug, Clone)]
pub struct ParetoPoint {
    pub lambda: Weights,
    pub scheme: Scheme,
    pub outcome: Result<SolveReport, SchemeFailure>,
}

/// Failure of one scheme at one weight, kept in sweep output instead of
/// dropping the row.
#[derive(Debug, Clone, Error)]
pub enum SchemeFailure {
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("numerical: {0}")]
    Numerical(String),
}

impl ParetoPoint {
    pub fn achieved(&self) -> Option<(f64, f64)> {
        self.outcome
            .as_ref()
            .ok()
            .map(|r| (r.metrics.transmit_power, r.metrics.efficiency))
    }
}

// ---------------------------------------------------------------------------
// Program construction
// ---------------------------------------------------------------------------

/// Whether a matrix variable is a free PSD block or a nonnegative multiple
/// of a fixed direction.
#[derive(Debug, Clone)]
enum VarStyle {
    FullPsd,
    ScaledFixed(DMatrix<Complex64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingleObjective {
    HarvestMax,
    PowerMin,
}

/// Which program to build.
#[derive(Debug, Clone)]
pub enum ProblemKind {
    P1,
    P2,
    P3 { lambda: Weights, utopia: UtopiaValues },
}

struct Layout {
    w_block: usize,
    v_block: usize,
    xi_block: usize,
    tau_block: Option<usize>,
    row_c1: usize,
    rows_c2: std::ops::Range<usize>,
    row_c3: usize,
    row_c6: usize,
    row_c8r1: Option<usize>,
    xi_unit: f64,
    tau_unit: f64,
    w_style: VarStyle,
    v_style: VarStyle,
}

struct BuildSpec<'a> {
    grams: &'a GramSet,
    qos: &'a QosTargets,
    eps: &'a [f64],
    kind: ProblemKind,
    w_style: VarStyle,
    v_style: VarStyle,
    /// Drop the `W_bar` harvest term from the scalarization row.
    neglect_w_harvest: bool,
}

fn validate_inputs(grams: &GramSet, qos: &QosTargets, eps: &[f64]) -> Result<(), AllocatorError> {
    if eps.len() != grams.num_idle() {
        return Err(AllocatorError::ShapeMismatch(format!(
            "{} efficiencies for {} idle receivers",
            eps.len(),
            grams.num_idle()
        )));
    }
    if qos.gamma_tol.len() != grams.num_idle() {
        return Err(AllocatorError::ShapeMismatch(format!(
            "{} SINR tolerances for {} idle receivers",
            qos.gamma_tol.len(),
            grams.num_idle()
        )));
    }
    Ok(())
}

/// Harvest coupling matrix `sum_k eps_k G_k`.
fn harvest_matrix(grams: &GramSet, eps: &[f64]) -> DMatrix<Complex64> {
    let n = grams.dim();
    let mut acc = DMatrix::<Complex64>::zeros(n, n);
    for (g, &e) in grams.g.iter().zip(eps) {
        acc += g * Complex64::new(e, 0.0);
    }
    acc
}

fn build_program(spec: &BuildSpec) -> Result<(ConeProgram, Layout), AllocatorError> {
    let grams = spec.grams;
    let qos = spec.qos;
    validate_inputs(grams, qos, spec.eps)?;
    let n = grams.dim();
    let k_idle = grams.num_idle();
    let tr_h = hermitian::real_trace(&grams.h);
    if !(tr_h > 1e-30) {
        return Err(AllocatorError::ShapeMismatch("desired channel is zero".into()));
    }
    if matches!(spec.kind, ProblemKind::P1) && k_idle == 0 {
        return Err(AllocatorError::DegenerateObjective);
    }

    // The xi and tau variables are re-parameterized to order-one internal
    // units; multipliers of the written rows are unaffected.
    let xi_unit = match &spec.kind {
        ProblemKind::P3 { utopia, .. } => 1.0 / utopia.f2_star,
        _ => tr_h / (qos.gamma_req * qos.sigma_s2),
    };
    let tau_unit = match &spec.kind {
        ProblemKind::P3 { lambda, utopia } => (lambda.l2 * utopia.f2_star)
            .max(lambda.l1 * utopia.f1_star.abs())
            .max(1e-3 * utopia.f2_star),
        _ => 1.0,
    };

    let mut blocks = Vec::new();
    let mut push_var = |style: &VarStyle| -> usize {
        let idx = blocks.len();
        match style {
            VarStyle::FullPsd => blocks.push(BlockKind::Hermitian(n)),
            VarStyle::ScaledFixed(_) => blocks.push(BlockKind::Scalar),
        }
        idx
    };
    let w_block = push_var(&spec.w_style);
    let v_block = push_var(&spec.v_style);
    let xi_block = blocks.len();
    blocks.push(BlockKind::Scalar);
    let is_p3 = matches!(spec.kind, ProblemKind::P3 { .. });
    let tau_block = if is_p3 {
        blocks.push(BlockKind::Scalar);
        Some(blocks.len() - 1)
    } else {
        None
    };
    let epi_block = match &spec.kind {
        ProblemKind::P3 { lambda, .. } if lambda.l2 > 0.0 => {
            blocks.push(BlockKind::Hermitian(2));
            Some(blocks.len() - 1)
        }
        _ => None,
    };

    let mut program = ConeProgram::new(blocks);

    // Maps a Hermitian coefficient on a matrix-slot variable into a program
    // term, collapsing to a scalar coefficient for direction-restricted
    // variables.
    let term_on = |style: &VarStyle, block: usize, m: DMatrix<Complex64>| -> (usize, BlockValue) {
        match style {
            VarStyle::FullPsd => (block, BlockValue::Matrix(m)),
            VarStyle::ScaledFixed(dir) => (block, BlockValue::Scalar(hermitian::inner(&m, dir))),
        }
    };
    let w_term = |m: DMatrix<Complex64>| term_on(&spec.w_style, w_block, m);
    let v_term = |m: DMatrix<Complex64>| term_on(&spec.v_style, v_block, m);
    let eye = || DMatrix::<Complex64>::identity(n, n);

    // C1: Tr(H W) - gamma_req Tr(H V) - gamma_req sigma^2 xi >= 0
    let row_c1 = program.num_constraints();
    program.add_constraint(
        vec![
            w_term(grams.h.clone()),
            v_term(&grams.h * Complex64::new(-qos.gamma_req, 0.0)),
            (xi_block, BlockValue::Scalar(-qos.gamma_req * qos.sigma_s2 * xi_unit)),
        ],
        Relation::Ge,
        0.0,
    );

    // C2_k: Tr(G_k W) - gamma_tol_k Tr(G_k V) - gamma_tol_k sigma^2 xi <= 0
    let rows_c2 = program.num_constraints()..program.num_constraints() + k_idle;
    for (g, &tol) in grams.g.iter().zip(&qos.gamma_tol) {
        program.add_constraint(
            vec![
                w_term(g.clone()),
                v_term(g * Complex64::new(-tol, 0.0)),
                (xi_block, BlockValue::Scalar(-tol * qos.sigma_s2 * xi_unit)),
            ],
            Relation::Le,
            0.0,
        );
    }

    // C3: Tr(W) + Tr(V) - P_max xi <= 0
    let row_c3 = program.num_constraints();
    program.add_constraint(
        vec![
            w_term(eye()),
            v_term(eye()),
            (xi_block, BlockValue::Scalar(-qos.p_max * xi_unit)),
        ],
        Relation::Le,
        0.0,
    );

    // C6: Tr(W) + Tr(V) <= 1
    let row_c6 = program.num_constraints();
    program.add_constraint(vec![w_term(eye()), v_term(eye())], Relation::Le, 1.0);

    let mut row_c8r1 = None;
    if let ProblemKind::P3 { lambda, utopia } = &spec.kind {
        let tau = tau_block.expect("tau block exists for P3");
        let coupling = harvest_matrix(grams, spec.eps);

        // C8 row 1: lambda_1 F_bar_1 - tau <= lambda_1 F_1*
        let mut terms = Vec::new();
        if !spec.neglect_w_harvest {
            terms.push(w_term(&coupling * Complex64::new(-lambda.l1, 0.0)));
        }
        terms.push(v_term(&coupling * Complex64::new(-lambda.l1, 0.0)));
        terms.push((tau, BlockValue::Scalar(-tau_unit)));
        row_c8r1 = Some(program.num_constraints());
        program.add_constraint(terms, Relation::Le, lambda.l1 * utopia.f1_star);

        // C8 row 2 via the hyperbolic block
        // E = [[xi, sqrt(l2)], [sqrt(l2), tau + l2 F_2*]] >= 0,
        // stored in the rescaled units of xi and tau.
        if let Some(epi) = epi_block {
            let pin = |i: usize, j: usize, z: Complex64| {
                let mut m = DMatrix::<Complex64>::zeros(2, 2);
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
                m
            };
            let one = Complex64::new(1.0, 0.0);
            // E11 = xi (in xi units)
            program.add_constraint(
                vec![
                    (epi, BlockValue::Matrix(pin(0, 0, one))),
                    (xi_block, BlockValue::Scalar(-1.0)),
                ],
                Relation::Eq,
                0.0,
            );
            // Re E12 pinned
            let s_lambda = (lambda.l2 * xi_unit / tau_unit).sqrt();
            program.add_constraint(
                vec![(epi, BlockValue::Matrix(pin(0, 1, Complex64::new(0.5, 0.0))))],
                Relation::Eq,
                s_lambda,
            );
            // Im E12 pinned to zero
            program.add_constraint(
                vec![(epi, BlockValue::Matrix(pin(0, 1, Complex64::new(0.0, 0.5))))],
                Relation::Eq,
                0.0,
            );
            // E22 = tau + l2 F_2* (in tau units)
            program.add_constraint(
                vec![
                    (epi, BlockValue::Matrix(pin(1, 1, one))),
                    (tau, BlockValue::Scalar(-1.0)),
                ],
                Relation::Eq,
                lambda.l2 * utopia.f2_star / tau_unit,
            );
        }
    }

    match &spec.kind {
        ProblemKind::P1 => {
            let coupling = harvest_matrix(grams, spec.eps);
            let minus = Complex64::new(-1.0, 0.0);
            let (b, val) = w_term(&coupling * minus);
            program.add_objective(b, val);
            let (b, val) = v_term(&coupling * minus);
            program.add_objective(b, val);
        }
        ProblemKind::P2 => {
            program.add_objective(xi_block, BlockValue::Scalar(-xi_unit));
        }
        ProblemKind::P3 { .. } => {
            program.add_objective(tau_block.unwrap(), BlockValue::Scalar(tau_unit));
        }
    }

    let layout = Layout {
        w_block,
        v_block,
        xi_block,
        tau_block,
        row_c1,
        rows_c2,
        row_c3,
        row_c6,
        row_c8r1,
        xi_unit,
        tau_unit,
        w_style: spec.w_style.clone(),
        v_style: spec.v_style.clone(),
    };
    Ok((program, layout))
}

/// Builds the cone program of a transformed problem with both matrix
/// variables free, mainly for inspection and cross-checking.
pub fn build_transformed(
    grams: &GramSet,
    qos: &QosTargets,
    eps: &[f64],
    kind: ProblemKind,
) -> Result<ConeProgram, AllocatorError> {
    let spec = BuildSpec {
        grams,
        qos,
        eps,
        kind,
        w_style: VarStyle::FullPsd,
        v_style: VarStyle::FullPsd,
        neglect_w_harvest: false,
    };
    Ok(build_program(&spec)?.0)
}

// ---------------------------------------------------------------------------
// Solving and extraction
// ---------------------------------------------------------------------------

fn certificate_rows(solution: &ConeSolution) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..solution.dual.len()).collect();
    idx.sort_by(|&a, &b| solution.dual[b].abs().partial_cmp(&solution.dual[a].abs()).unwrap());
    idx.truncate(3);
    idx
}

fn run_solver(
    program: &ConeProgram,
    options: &SolverOptions,
    context: &str,
) -> Result<ConeSolution, AllocatorError> {
    let solution = sdp::solve(program, options)?;
    match solution.status {
        SolveStatus::Optimal => Ok(solution),
        SolveStatus::Infeasible => Err(AllocatorError::Infeasible {
            context: context.to_string(),
            certificate_rows: certificate_rows(&solution),
        }),
        status => Err(AllocatorError::Numerical {
            context: context.to_string(),
            status,
        }),
    }
}

fn matrix_of(style: &VarStyle, value: &BlockValue, n: usize) -> DMatrix<Complex64> {
    let _ = n;
    match (style, value) {
        (VarStyle::FullPsd, BlockValue::Matrix(m)) => m.clone(),
        (VarStyle::ScaledFixed(dir), BlockValue::Scalar(p)) => dir * Complex64::new(*p, 0.0),
        _ => panic!("variable style does not match solved block"),
    }
}

fn extract_transformed(
    solution: &ConeSolution,
    layout: &Layout,
    kind: &ProblemKind,
    n: usize,
) -> TransformedSolution {
    let w_bar = matrix_of(&layout.w_style, &solution.primal[layout.w_block], n);
    let v_bar = matrix_of(&layout.v_style, &solution.primal[layout.v_block], n);
    let xi = match &solution.primal[layout.xi_block] {
        BlockValue::Scalar(s) => s * layout.xi_unit,
        _ => unreachable!("xi is a scalar block"),
    };
    let tau = layout.tau_block.map(|b| match &solution.primal[b] {
        BlockValue::Scalar(s) => s * layout.tau_unit,
        _ => unreachable!("tau is a scalar block"),
    });

    let objective_value = match kind {
        ProblemKind::P2 => 1.0 / xi,
        _ => solution.objective,
    };

    let kappa1 = layout.row_c8r1.map(|r| solution.dual[r]).unwrap_or(0.0);
    let dual_matrix = |style: &VarStyle, block: usize| -> Option<DMatrix<Complex64>> {
        match (style, &solution.dual_blocks[block]) {
            (VarStyle::FullPsd, BlockValue::Matrix(m)) => Some(m.clone()),
            _ => None,
        }
    };
    let nu = match &solution.dual_blocks[layout.xi_block] {
        BlockValue::Scalar(s) => s / layout.xi_unit,
        _ => unreachable!("xi is a scalar block"),
    };

    TransformedSolution {
        w_bar,
        v_bar,
        xi,
        tau,
        objective_value,
        duals: DualCertificate {
            beta: solution.dual[layout.row_c1],
            theta: layout.rows_c2.clone().map(|r| solution.dual[r]).collect(),
            alpha: solution.dual[layout.row_c3],
            mu: solution.dual[layout.row_c6],
            nu,
            kappa: [kappa1, (1.0 - kappa1).max(0.0)],
            y_mat: dual_matrix(&layout.w_style, layout.w_block),
            z_mat: dual_matrix(&layout.v_style, layout.v_block),
        },
    }
}

/// Secrecy capacity evaluated on the transformed variables; identical to
/// the recovered-allocation value whenever recovery is exact.
fn transformed_secrecy(ts: &TransformedSolution, grams: &GramSet, sigma_s2: f64) -> f64 {
    let own_sinr = hermitian::inner(&grams.h, &ts.w_bar)
        / (hermitian::inner(&grams.h, &ts.v_bar) + sigma_s2 * ts.xi);
    let own = (1.0 + own_sinr.max(0.0)).log2();
    let leak = grams
        .g
        .iter()
        .map(|g| {
            let s = hermitian::inner(g, &ts.w_bar)
                / (hermitian::inner(g, &ts.v_bar) + sigma_s2 * ts.xi);
            (1.0 + s.max(0.0)).log2()
        })
        .fold(0.0f64, f64::max);
    (own - leak).max(0.0)
}

fn report_metrics(
    ts: &TransformedSolution,
    recovered: Option<&Allocation>,
    grams: &GramSet,
    qos: &QosTargets,
    eps: &[f64],
) -> ReportMetrics {
    match recovered {
        Some(alloc) => ReportMetrics {
            transmit_power: metrics::transmit_power(alloc),
            efficiency: metrics::harvesting_efficiency(alloc, grams, eps).unwrap_or(0.0),
            secrecy_capacity: metrics::secrecy_capacity(alloc, grams, qos.sigma_s2),
        },
        None => {
            // bound-valued point of a non-tight relaxation
            let coupling = harvest_matrix(grams, eps);
            let harvested =
                hermitian::inner(&coupling, &ts.w_bar) + hermitian::inner(&coupling, &ts.v_bar);
            ReportMetrics {
                transmit_power: 1.0 / ts.xi,
                efficiency: harvested / ts.trace_sum(),
                secrecy_capacity: transformed_secrecy(ts, grams, qos.sigma_s2),
            }
        }
    }
}

fn prop2_from(ts: &TransformedSolution) -> bool {
    let kappa1 = ts.duals.kappa[0];
    ts.duals.theta.iter().all(|&t| t >= kappa1 - PROP2_TOL)
}

fn solve_scheme(
    spec: &BuildSpec,
    scheme: Scheme,
    options: &SolverOptions,
) -> Result<SolveReport, AllocatorError> {
    let (program, layout) = build_program(spec)?;
    let solution = run_solver(&program, options, scheme.tag())?;
    let ts = extract_transformed(&solution, &layout, &spec.kind, spec.grams.dim());

    let check = match &layout.w_style {
        VarStyle::FullPsd => check_rank_one(&ts.w_bar, RANK_ONE_TOL),
        VarStyle::ScaledFixed(_) => RankOneCheck {
            rank_one: true,
            eigen_ratio: 0.0,
            degenerate: false,
        },
    };
    let recovered = if check.rank_one { Some(recover(&ts)?) } else { None };
    let metrics = report_metrics(&ts, recovered.as_ref(), spec.grams, spec.qos, spec.eps);
    Ok(SolveReport {
        scheme,
        prop2_holds: prop2_from(&ts),
        rank_one: check.rank_one,
        eigen_ratio: check.eigen_ratio,
        transformed: ts,
        recovered,
        metrics,
        hybrid_source: None,
    })
}

/// Solves the relaxed single-objective problems; for the power minimization
/// the returned value is `1/xi*` (the minimum transmit power in Watts).
pub fn solve_single_objective(
    grams: &GramSet,
    qos: &QosTargets,
    eps: &[f64],
    kind: SingleObjective,
    options: &SolverOptions,
) -> Result<(f64, TransformedSolution), AllocatorError> {
    let problem = match kind {
        SingleObjective::HarvestMax => ProblemKind::P1,
        SingleObjective::PowerMin => ProblemKind::P2,
    };
    let spec = BuildSpec {
        grams,
        qos,
        eps,
        kind: problem.clone(),
        w_style: VarStyle::FullPsd,
        v_style: VarStyle::FullPsd,
        neglect_w_harvest: false,
    };
    let (program, layout) = build_program(&spec)?;
    let context = match kind {
        SingleObjective::HarvestMax => "transformed harvest maximization",
        SingleObjective::PowerMin => "transformed power minimization",
    };
    let solution = run_solver(&program, options, context)?;
    let ts = extract_transformed(&solution, &layout, &problem, grams.dim());
    Ok((ts.objective_value, ts))
}

/// Computes both utopia anchors on one instance.
pub fn compute_utopia(
    grams: &GramSet,
    qos: &QosTargets,
    eps: &[f64],
    options: &SolverOptions,
) -> Result<UtopiaValues, AllocatorError> {
    let (f1, _) = solve_single_objective(grams, qos, eps, SingleObjective::HarvestMax, options)?;
    let (f2, _) = solve_single_objective(grams, qos, eps, SingleObjective::PowerMin, options)?;
    UtopiaValues::new(f1.min(0.0), f2)
}

fn p3_spec<'a>(
    grams: &'a GramSet,
    qos: &'a QosTargets,
    eps: &'a [f64],
    lambda: Weights,
    utopia: &UtopiaValues,
) -> BuildSpec<'a> {
    BuildSpec {
        grams,
        qos,
        eps,
        kind: ProblemKind::P3 {
            lambda,
            utopia: *utopia,
        },
        w_style: VarStyle::FullPsd,
        v_style: VarStyle::FullPsd,
        neglect_w_harvest: false,
    }
}

/// SDP relaxation of the scalarized multi-objective problem. The report is
/// an upper-bound point when the relaxation is not tight.
pub fn solve_relaxed_p3(
    grams: &GramSet,
    qos: &QosTargets,
    eps: &[f64],
    lambda: Weights,
    utopia: &UtopiaValues,
    options: &SolverOptions,
) -> Result<SolveReport, AllocatorError> {
    solve_scheme(&p3_spec(grams, qos, eps, lambda, utopia), Scheme::RelaxedP3, options)
}

/// Scheme 1: the beam's harvest contribution is dropped from the
/// scalarization row, which makes the rank-one condition hold by
/// construction at the price of a smaller feasible set.
pub fn suboptimal1(
    grams: &GramSet,
    qos: &QosTargets,
    eps: &[f64],
    lambda: Weights,
    utopia: &UtopiaValues,
    options: &SolverOptions,
) -> Result<SolveReport, AllocatorError> {
    let mut spec = p3_spec(grams, qos, eps, lambda, utopia);
    spec.neglect_w_harvest = true;
    solve_scheme(&spec, Scheme::Suboptimal1, options)
}

/// Combines the two branch reports into the hybrid scheme-2 report.
pub fn suboptimal2_from(relaxed: &SolveReport, scheme1: &SolveReport) -> SolveReport {
    let branch = if relaxed.rank_one { relaxed } else { scheme1 };
    SolveReport {
        scheme: Scheme::Suboptimal2,
        hybrid_source: Some(branch.scheme),
        ..branch.clone()
    }
}

/// Scheme 2: solves the relaxation and scheme 1, keeping the relaxed
/// solution whenever it is rank-one (then it is globally optimal) and the
/// scheme-1 solution otherwise.
pub fn suboptimal2(
    grams: &GramSet,
    qos: &QosTargets,
    eps: &[f64],
    lambda: Weights,
    utopia: &UtopiaValues,
    options: &SolverOptions,
) -> Result<SolveReport, AllocatorError> {
    let relaxed = solve_relaxed_p3(grams, qos, eps, lambda, utopia, options);
    let scheme1 = suboptimal1(grams, qos, eps, lambda, utopia, options);
    match (relaxed, scheme1) {
        (Ok(r), Ok(s)) => Ok(suboptimal2_from(&r, &s)),
        // the scheme-1 feasible set is contained in the relaxed one, so a
        // sound scheme-1 solve can stand in when the relaxation failed
        // numerically
        (Err(AllocatorError::Numerical { .. }), Ok(s)) => Ok(SolveReport {
            scheme: Scheme::Suboptimal2,
            hybrid_source: Some(Scheme::Suboptimal1),
            ..s
        }),
        (Err(e), _) => Err(e),
        (_, Err(e)) => Err(e),
    }
}

/// Baseline 1: artificial noise restricted to the null space of the desired
/// channel (`V_bar = p_v Pi/(N_t - 1)`), with the scheme-2 style hybrid
/// applied to the restricted program.
pub fn baseline1(
    grams: &GramSet,
    qos: &QosTargets,
    eps: &[f64],
    lambda: Weights,
    utopia: &UtopiaValues,
    options: &SolverOptions,
) -> Result<SolveReport, AllocatorError> {
    let n = grams.dim();
    if n < 2 {
        return Err(AllocatorError::ShapeMismatch(
            "null-space noise needs at least two antennas".into(),
        ));
    }
    let tr_h = hermitian::real_trace(&grams.h);
    let projector = DMatrix::<Complex64>::identity(n, n) - &grams.h / Complex64::new(tr_h, 0.0);
    let v_dir = hermitian::hermitianize(&(projector / Complex64::new((n - 1) as f64, 0.0)));

    let mut spec = p3_spec(grams, qos, eps, lambda, utopia);
    spec.v_style = VarStyle::ScaledFixed(v_dir.clone());
    let relaxed = solve_scheme(&spec, Scheme::Baseline1, options)?;
    if relaxed.rank_one {
        return Ok(relaxed);
    }
    let mut fallback_spec = p3_spec(grams, qos, eps, lambda, utopia);
    fallback_spec.v_style = VarStyle::ScaledFixed(v_dir);
    fallback_spec.neglect_w_harvest = true;
    let fallback = solve_scheme(&fallback_spec, Scheme::Baseline1, options)?;
    Ok(SolveReport {
        hybrid_source: Some(Scheme::Suboptimal1),
        ..fallback
    })
}

/// Baseline 2: maximum ratio transmission (`W_bar = p_w h h^H / ||h||^2`)
/// with a free noise covariance.
pub fn baseline2(
    grams: &GramSet,
    qos: &QosTargets,
    eps: &[f64],
    lambda: Weights,
    utopia: &UtopiaValues,
    options: &SolverOptions,
) -> Result<SolveReport, AllocatorError> {
    let tr_h = hermitian::real_trace(&grams.h);
    if !(tr_h > 1e-30) {
        return Err(AllocatorError::ShapeMismatch(
            "MRT needs a nonzero desired channel".into(),
        ));
    }
    let w_dir = hermitian::hermitianize(&(&grams.h / Complex64::new(tr_h, 0.0)));
    let mut spec = p3_spec(grams, qos, eps, lambda, utopia);
    spec.w_style = VarStyle::ScaledFixed(w_dir);
    solve_scheme(&spec, Scheme::Baseline2, options)
}

/// Solves one scheme at one weight.
pub fn solve_with_scheme(
    grams: &GramSet,
    qos: &QosTargets,
    eps: &[f64],
    lambda: Weights,
    utopia: &UtopiaValues,
    scheme: Scheme,
    options: &SolverOptions,
) -> Result<SolveReport, AllocatorError> {
    match scheme {
        Scheme::RelaxedP3 => solve_relaxed_p3(grams, qos, eps, lambda, utopia, options),
        Scheme::Suboptimal1 => suboptimal1(grams, qos, eps, lambda, utopia, options),
        Scheme::Suboptimal2 => suboptimal2(grams, qos, eps, lambda, utopia, options),
        Scheme::Baseline1 => baseline1(grams, qos, eps, lambda, utopia, options),
        Scheme::Baseline2 => baseline2(grams, qos, eps, lambda, utopia, options),
    }
}

fn failure_of(err: AllocatorError) -> SchemeFailure {
    failure_of_ref(&err)
}

fn failure_of_ref(err: &AllocatorError) -> SchemeFailure {
    match err {
        AllocatorError::Infeasible { .. } => SchemeFailure::Infeasible(err.to_string()),
        other => SchemeFailure::Numerical(other.to_string()),
    }
}

/// One realization's trade-off sweep: one point per weight per scheme, with
/// the utopia anchors computed once and shared. Infeasible entries are
/// marked rather than dropped.
pub fn pareto_sweep(
    grams: &GramSet,
    qos: &QosTargets,
    eps: &[f64],
    lambda_grid: &[Weights],
    schemes: &[Scheme],
    options: &SolverOptions,
) -> Result<Vec<ParetoPoint>, AllocatorError> {
    if lambda_grid.is_empty() || schemes.is_empty() {
        return Err(AllocatorError::ShapeMismatch("empty weight grid or scheme set".into()));
    }
    let utopia = compute_utopia(grams, qos, eps, options)?;

    let mut per_lambda: Vec<Vec<ParetoPoint>> = lambda_grid
        .par_iter()
        .map(|&lambda| sweep_one_lambda(grams, qos, eps, lambda, &utopia, schemes, options))
        .collect();
    Ok(per_lambda.drain(..).flatten().collect())
}

fn sweep_one_lambda(
    grams: &GramSet,
    qos: &QosTargets,
    eps: &[f64],
    lambda: Weights,
    utopia: &UtopiaValues,
    schemes: &[Scheme],
    options: &SolverOptions,
) -> Vec<ParetoPoint> {
    // scheme 2 reuses the relaxed and scheme-1 branch solves
    let mut relaxed: Option<Result<SolveReport, AllocatorError>> = None;
    let mut scheme1: Option<Result<SolveReport, AllocatorError>> = None;
    let mut points = Vec::with_capacity(schemes.len());
    for &scheme in schemes {
        let outcome = match scheme {
            Scheme::RelaxedP3 => relaxed
                .get_or_insert_with(|| solve_relaxed_p3(grams, qos, eps, lambda, utopia, options))
                .as_ref()
                .map(Clone::clone)
                .map_err(failure_of_ref),
            Scheme::Suboptimal1 => scheme1
                .get_or_insert_with(|| suboptimal1(grams, qos, eps, lambda, utopia, options))
                .as_ref()
                .map(Clone::clone)
                .map_err(failure_of_ref),
            Scheme::Suboptimal2 => {
                let r = relaxed.get_or_insert_with(|| {
                    solve_relaxed_p3(grams, qos, eps, lambda, utopia, options)
                });
                match r.as_ref().map(Clone::clone) {
                    Ok(rr) => {
                        let s = scheme1.get_or_insert_with(|| {
                            suboptimal1(grams, qos, eps, lambda, utopia, options)
                        });
                        match s.as_ref() {
                            Ok(ss) => Ok(suboptimal2_from(&rr, ss)),
                            Err(e) => Err(failure_of_ref(e)),
                        }
                    }
                    Err(AllocatorError::Numerical { .. }) => {
                        let s = scheme1.get_or_insert_with(|| {
                            suboptimal1(grams, qos, eps, lambda, utopia, options)
                        });
                        match s.as_ref() {
                            Ok(ss) => Ok(SolveReport {
                                scheme: Scheme::Suboptimal2,
                                hybrid_source: Some(Scheme::Suboptimal1),
                                ..ss.clone()
                            }),
                            Err(e) => Err(failure_of_ref(e)),
                        }
                    }
                    Err(e) => Err(failure_of_ref(&e)),
                }
            }
            other => {
                solve_with_scheme(grams, qos, eps, lambda, utopia, other, options).map_err(failure_of)
            }
        };
        points.push(ParetoPoint {
            lambda,
            scheme,
            outcome,
        });
    }
    points
}
