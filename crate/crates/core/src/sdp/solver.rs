//! Homogeneous self-dual interior-point solver.
//!
//! The user-facing program is converted to a standard-form SDP over real
//! symmetric blocks: complex Hermitian blocks through the symmetric
//! embedding (coefficients halved so inner products are preserved),
//! inequalities through nonnegative slack scalars, and every constraint row
//! normalized by its coefficient norm. The solver then runs on the
//! homogeneous self-dual model
//!
//! ```text
//! A(X) - b tau          = 0
//! tau C - A^T(y) - S    = 0
//! b.y - <C, X> - kappa  = 0
//! X, S in PSD cone, tau, kappa >= 0
//! ```
//!
//! with HKM search directions and a Mehrotra predictor-corrector. Each
//! iteration eliminates (dX, dS, dkappa) and solves the Schur system
//!
//! ```text
//! [ M      -(b + v) ] [ dy  ]   [ g ]           M_ij = <A_i, X A_j S^-1>
//! [ (b-v)^T   w     ] [ dtau] = [ h ]           v_i  = <A_i, X C S^-1>
//! ```
//!
//! by a Cholesky factorization of `M` with one round of iterative
//! refinement. Optimality is declared on the de-homogenized point
//! `(X, y, S)/tau`; a vanishing `tau` against `kappa` (threshold `1e-8`)
//! yields an infeasibility or unboundedness certificate from the ray.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{
    eval_objective, residuals, BlockKind, BlockValue, ConeProgram, ConeSolution, IterationRecord,
    Relation, SolveStatus, SolverOptions,
};
use crate::hermitian;

/// Ratio `tau / max(1, kappa)` below which the iterate is treated as a ray.
const RAY_TAU_THRESHOLD: f64 = 1e-8;
/// Relative residual required of a certificate ray.
const RAY_RESIDUAL_TOL: f64 = 1e-6;

struct Internal {
    dims: Vec<usize>,
    c: Vec<DMatrix<f64>>,
    rows: Vec<Vec<(usize, DMatrix<f64>)>>,
    b: DVector<f64>,
    /// Per-block list of (constraint index, term index) touching the block.
    block_rows: Vec<Vec<(usize, usize)>>,
    nu: f64,
    /// User block -> (internal block, is_complex).
    block_map: Vec<(usize, bool)>,
    row_scale: Vec<f64>,
    obj_scale: f64,
}

fn to_internal(program: &ConeProgram) -> Internal {
    let mut dims = Vec::new();
    let mut block_map = Vec::new();
    for kind in &program.blocks {
        match kind {
            BlockKind::Hermitian(n) => {
                block_map.push((dims.len(), true));
                dims.push(2 * n);
            }
            BlockKind::Scalar => {
                block_map.push((dims.len(), false));
                dims.push(1);
            }
        }
    }

    let embed_coeff = |coeff: &BlockValue, complex: bool| -> DMatrix<f64> {
        match coeff {
            BlockValue::Matrix(m) => {
                debug_assert!(complex);
                hermitian::embed(&hermitian::hermitianize(m)) * 0.5
            }
            BlockValue::Scalar(s) => {
                debug_assert!(!complex);
                DMatrix::from_element(1, 1, *s)
            }
        }
    };

    let mut c: Vec<DMatrix<f64>> = dims.iter().map(|&d| DMatrix::zeros(d, d)).collect();
    for (block, coeff) in &program.objective {
        let (ib, complex) = block_map[*block];
        c[ib] += embed_coeff(coeff, complex);
    }
    let obj_norm: f64 = c.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();
    let obj_scale = if obj_norm > 1e-12 { obj_norm } else { 1.0 };
    for m in &mut c {
        *m /= obj_scale;
    }

    let mut rows = Vec::with_capacity(program.constraints.len());
    let mut b = DVector::zeros(program.constraints.len());
    let mut row_scale = Vec::with_capacity(program.constraints.len());
    for (i, constraint) in program.constraints.iter().enumerate() {
        let flip = match constraint.relation {
            Relation::Ge => -1.0,
            _ => 1.0,
        };
        let mut terms: Vec<(usize, DMatrix<f64>)> = Vec::with_capacity(constraint.terms.len() + 1);
        let mut norm_sq = 0.0;
        for (block, coeff) in &constraint.terms {
            let (ib, complex) = block_map[*block];
            let m = embed_coeff(coeff, complex);
            norm_sq += m.norm_squared();
            match terms.iter_mut().find(|(tb, _)| *tb == ib) {
                Some((_, existing)) => *existing += m,
                None => terms.push((ib, m)),
            }
        }
        let scale = norm_sq.sqrt().clamp(1e-10, 1e10);
        for (_, m) in &mut terms {
            *m *= flip / scale;
        }
        b[i] = flip * constraint.rhs / scale;
        row_scale.push(scale);
        if constraint.relation != Relation::Eq {
            let slack = dims.len();
            dims.push(1);
            c.push(DMatrix::zeros(1, 1));
            terms.push((slack, DMatrix::from_element(1, 1, 1.0)));
        }
        rows.push(terms);
        let _ = i;
    }

    let mut block_rows = vec![Vec::new(); dims.len()];
    for (ri, terms) in rows.iter().enumerate() {
        for (ti, (block, _)) in terms.iter().enumerate() {
            block_rows[*block].push((ri, ti));
        }
    }

    Internal {
        nu: dims.iter().map(|&d| d as f64).sum(),
        dims,
        c,
        rows,
        b,
        block_rows,
        block_map,
        row_scale,
        obj_scale,
    }
}

struct State {
    x: Vec<DMatrix<f64>>,
    s: Vec<DMatrix<f64>>,
    y: DVector<f64>,
    tau: f64,
    kappa: f64,
}

impl State {
    fn fresh(internal: &Internal) -> Self {
        State {
            x: internal.dims.iter().map(|&d| DMatrix::identity(d, d)).collect(),
            s: internal.dims.iter().map(|&d| DMatrix::identity(d, d)).collect(),
            y: DVector::zeros(internal.rows.len()),
            tau: 1.0,
            kappa: 1.0,
        }
    }
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    ds: Vec<DMatrix<f64>>,
    dy: DVector<f64>,
    dtau: f64,
    dkappa: f64,
}

fn apply_a(internal: &Internal, x: &[DMatrix<f64>]) -> DVector<f64> {
    DVector::from_fn(internal.rows.len(), |i, _| {
        internal.rows[i].iter().map(|(b, a)| a.dot(&x[*b])).sum()
    })
}

fn apply_at(internal: &Internal, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
    let mut out: Vec<DMatrix<f64>> =
        internal.dims.iter().map(|&d| DMatrix::zeros(d, d)).collect();
    for (i, terms) in internal.rows.iter().enumerate() {
        for (b, a) in terms {
            out[*b] += a * y[i];
        }
    }
    out
}

fn inner_blocks(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p.dot(q)).sum()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Largest step `alpha` keeping `X + alpha D` in the PSD cone, given the
/// Cholesky factor of `X`.
fn max_step(chol: &Cholesky<f64, Dyn>, d: &DMatrix<f64>) -> f64 {
    if d.nrows() == 1 {
        let x = chol.l()[(0, 0)].powi(2);
        let dd = d[(0, 0)];
        return if dd >= 0.0 { f64::INFINITY } else { -x / dd };
    }
    let l = chol.l();
    let t1 = l
        .solve_lower_triangular(d)
        .expect("cholesky factor is nonsingular");
    let mut t2 = l
        .solve_lower_triangular(&t1.transpose())
        .expect("cholesky factor is nonsingular");
    symmetrize(&mut t2);
    let lam_min = t2.symmetric_eigen().eigenvalues.min();
    if lam_min >= -1e-16 {
        f64::INFINITY
    } else {
        -1.0 / lam_min
    }
}

fn cholesky_with_jitter(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let n = m.nrows();
    let base = m.trace().abs() / n as f64 + 1.0;
    for k in [1e-14, 1e-12, 1e-10] {
        let jittered = m + DMatrix::identity(n, n) * (k * base);
        if let Some(c) = Cholesky::new(jittered) {
            return Some(c);
        }
    }
    None
}

struct Factored {
    chol_x: Vec<Cholesky<f64, Dyn>>,
    chol_s: Vec<Cholesky<f64, Dyn>>,
    s_inv: Vec<DMatrix<f64>>,
    chol_m: Cholesky<f64, Dyn>,
    m_mat: DMatrix<f64>,
    v: DVector<f64>,
    /// `b^T M^-1 b`, evaluated as a stable squared norm.
    b_minv_b: f64,
    /// Schur complement of `M` in the objective-bordered Schur matrix,
    /// i.e. `<C, X C S^-1> - v^T M^-1 v >= 0`.
    cc_schur: f64,
}

fn factor(internal: &Internal, state: &State) -> Option<Factored> {
    let nb = internal.dims.len();
    let m = internal.rows.len();

    let mut chol_x = Vec::with_capacity(nb);
    let mut chol_s = Vec::with_capacity(nb);
    let mut s_inv = Vec::with_capacity(nb);
    for b in 0..nb {
        chol_x.push(cholesky_with_jitter(&state.x[b])?);
        let cs = cholesky_with_jitter(&state.s[b])?;
        s_inv.push(cs.inverse());
        chol_s.push(cs);
    }

    // Schur matrix with the objective appended as a virtual row m.
    let mut mtilde = DMatrix::zeros(m + 1, m + 1);
    for b in 0..nb {
        let touching = &internal.block_rows[b];
        if touching.is_empty() && internal.c[b].norm_squared() == 0.0 {
            continue;
        }
        let coeff_of = |g: usize| -> &DMatrix<f64> {
            if g == m {
                &internal.c[b]
            } else {
                let (_, ti) = touching[touching.iter().position(|(ri, _)| *ri == g).unwrap()];
                &internal.rows[g][ti].1
            }
        };
        let mut globals: Vec<usize> = touching.iter().map(|(ri, _)| *ri).collect();
        globals.push(m);
        let products: Vec<DMatrix<f64>> = globals
            .iter()
            .map(|&g| &state.x[b] * coeff_of(g) * &s_inv[b])
            .collect();
        for &gi in globals.iter() {
            let ai = coeff_of(gi);
            for (pj, &gj) in globals.iter().enumerate() {
                mtilde[(gi, gj)] += ai.dot(&products[pj]);
            }
        }
    }
    symmetrize(&mut mtilde);

    let m_mat = mtilde.view((0, 0), (m, m)).into_owned();
    let v = DVector::from_fn(m, |i, _| mtilde[(i, m)]);
    let chol_m = cholesky_with_jitter(&m_mat)?;

    // b^T M^-1 b as a squared norm: forward-stable, never cancels.
    let w = chol_m
        .l()
        .solve_lower_triangular(&internal.b)
        .expect("cholesky factor is nonsingular");
    let b_minv_b = w.norm_squared();

    // <C, X C S^-1> - v^T M^-1 v is the last Schur pivot of the bordered
    // matrix; taking it from a Cholesky of the full bordered matrix keeps it
    // nonnegative where the naive difference cancels catastrophically. A
    // factorization failure means the objective lies in the span of the
    // constraint matrices, i.e. the complement is zero.
    let cc_schur = match cholesky_with_jitter(&mtilde) {
        Some(full) => full.l()[(m, m)].powi(2),
        None => 0.0,
    };

    Some(Factored {
        chol_x,
        chol_s,
        s_inv,
        chol_m,
        m_mat,
        v,
        b_minv_b,
        cc_schur,
    })
}

struct Residual {
    e1: DVector<f64>,
    e2: Vec<DMatrix<f64>>,
    e3: f64,
}

fn hsd_residuals(internal: &Internal, state: &State) -> Residual {
    let e1 = apply_a(internal, &state.x) - &internal.b * state.tau;
    let aty = apply_at(internal, &state.y);
    let e2: Vec<DMatrix<f64>> = (0..internal.dims.len())
        .map(|b| &internal.c[b] * state.tau - &aty[b] - &state.s[b])
        .collect();
    let e3 = internal.b.dot(&state.y) - inner_blocks(&internal.c, &state.x) - state.kappa;
    Residual { e1, e2, e3 }
}

/// Solves the Newton system for the given residual targets and
/// complementarity right-hand sides.
fn solve_direction(
    internal: &Internal,
    state: &State,
    fac: &Factored,
    res: &Residual,
    rc: &[DMatrix<f64>],
    rc_s: f64,
) -> Option<Direction> {
    let nb = internal.dims.len();
    let m = internal.rows.len();

    // U_b = (Rc_b - X_b e2_b) S_b^-1
    let u: Vec<DMatrix<f64>> = (0..nb)
        .map(|b| (&rc[b] - &state.x[b] * &res.e2[b]) * &fac.s_inv[b])
        .collect();

    let mut g = DVector::zeros(m);
    for (i, terms) in internal.rows.iter().enumerate() {
        let mut acc = 0.0;
        for (b, a) in terms {
            acc += a.dot(&u[*b]);
        }
        g[i] = -res.e1[i] - acc;
    }
    let h = -res.e3 + inner_blocks(&internal.c, &u) + rc_s / state.tau;

    let solve_refined = |rhs: &DVector<f64>| -> DVector<f64> {
        let mut sol = fac.chol_m.solve(rhs);
        let resid = rhs - &fac.m_mat * &sol;
        sol += fac.chol_m.solve(&resid);
        sol
    };

    let b_plus_v = &internal.b + &fac.v;
    let b_minus_v = &internal.b - &fac.v;
    let m1 = solve_refined(&g);
    let m2 = solve_refined(&b_plus_v);
    // den = wcc + (b-v)^T M^-1 (b+v) rewritten as a sum of nonnegative
    // terms (the mixed b/v products cancel exactly by symmetry of M^-1):
    let den = state.kappa / state.tau + fac.b_minv_b + fac.cc_schur;
    if !den.is_finite() || den < 1e-300 {
        return None;
    }
    let dtau = (h - b_minus_v.dot(&m1)) / den;
    let dy = &m1 + &m2 * dtau;

    let aty = apply_at(internal, &dy);
    let mut ds = Vec::with_capacity(nb);
    let mut dx = Vec::with_capacity(nb);
    for b in 0..nb {
        let dsb = &res.e2[b] + &internal.c[b] * dtau - &aty[b];
        let mut dxb = (&rc[b] - &state.x[b] * &dsb) * &fac.s_inv[b];
        symmetrize(&mut dxb);
        dx.push(dxb);
        ds.push(dsb);
    }
    let dkappa = (rc_s - state.kappa * dtau) / state.tau;

    Some(Direction {
        dx,
        ds,
        dy,
        dtau,
        dkappa,
    })
}

fn boundary_step(state: &State, fac: &Factored, dir: &Direction) -> f64 {
    let mut alpha = f64::INFINITY;
    for b in 0..state.x.len() {
        alpha = alpha.min(max_step(&fac.chol_x[b], &dir.dx[b]));
        alpha = alpha.min(max_step(&fac.chol_s[b], &dir.ds[b]));
    }
    if dir.dtau < 0.0 {
        alpha = alpha.min(-state.tau / dir.dtau);
    }
    if dir.dkappa < 0.0 {
        alpha = alpha.min(-state.kappa / dir.dkappa);
    }
    alpha
}

fn mu_of(internal: &Internal, state: &State) -> f64 {
    (inner_blocks(&state.x, &state.s) + state.tau * state.kappa) / (internal.nu + 1.0)
}

/// De-homogenized convergence measures (primal inf, dual inf, rel gap).
fn convergence(internal: &Internal, state: &State) -> (f64, f64, f64, f64, f64) {
    let tau = state.tau;
    let pres = apply_a(internal, &state.x) / tau - &internal.b;
    let pinf = pres.norm() / (1.0 + internal.b.norm());
    let aty = apply_at(internal, &state.y);
    let mut dres_sq = 0.0;
    for b in 0..internal.dims.len() {
        dres_sq += (&internal.c[b] - (&aty[b] + &state.s[b]) / tau).norm_squared();
    }
    let dinf = dres_sq.sqrt() / 2.0_f64.sqrt();
    let pobj = inner_blocks(&internal.c, &state.x) / tau;
    let dobj = internal.b.dot(&state.y) / tau;
    let relgap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
    (pinf, dinf, relgap, pobj, dobj)
}

fn extract_solution(
    program: &ConeProgram,
    internal: &Internal,
    state: &State,
    status: SolveStatus,
    iterations: usize,
    history: Vec<IterationRecord>,
) -> ConeSolution {
    let tau = if state.tau > 0.0 { state.tau } else { 1.0 };

    let unembed_block = |m: &DMatrix<f64>, complex: bool, scale: f64| -> BlockValue {
        if complex {
            BlockValue::Matrix(hermitian::unembed(&(m * scale)))
        } else {
            BlockValue::Scalar(m[(0, 0)] * scale)
        }
    };

    let primal: Vec<BlockValue> = internal
        .block_map
        .iter()
        .map(|&(ib, complex)| unembed_block(&state.x[ib], complex, 1.0 / tau))
        .collect();

    let dual: Vec<f64> = (0..internal.rows.len())
        .map(|i| -(state.y[i] / tau) * internal.obj_scale / internal.row_scale[i])
        .collect();

    let dual_blocks: Vec<BlockValue> = internal
        .block_map
        .iter()
        .map(|&(ib, complex)| {
            let factor = if complex { 2.0 } else { 1.0 };
            unembed_block(&state.s[ib], complex, factor * internal.obj_scale / tau)
        })
        .collect();

    let objective = eval_objective(program, &primal);
    let mut dual_objective = 0.0;
    for (constraint, mult) in program.constraints.iter().zip(&dual) {
        let sign = match constraint.relation {
            Relation::Le | Relation::Eq => -1.0,
            Relation::Ge => 1.0,
        };
        dual_objective += sign * mult * constraint.rhs;
    }
    let duality_gap =
        (objective - dual_objective).abs() / (1.0 + objective.abs() + dual_objective.abs());

    let mut solution = ConeSolution {
        status,
        primal,
        dual,
        dual_blocks,
        objective,
        dual_objective,
        duality_gap,
        primal_infeasibility: f64::NAN,
        dual_infeasibility: f64::NAN,
        iterations,
        history,
    };
    if let Ok(r) = residuals(program, &solution) {
        solution.primal_infeasibility = r.primal_infeas;
        solution.dual_infeasibility = r.dual_infeas;
    }
    solution
}

fn extract_certificate(
    program: &ConeProgram,
    internal: &Internal,
    state: &State,
    status: SolveStatus,
    iterations: usize,
    history: Vec<IterationRecord>,
) -> ConeSolution {
    // Rays are reported unnormalized by tau: the dual ray in `dual`, the
    // primal ray in `primal`.
    let y_norm = state.y.norm().max(1e-300);
    let dual: Vec<f64> = (0..internal.rows.len())
        .map(|i| -(state.y[i] / y_norm) * internal.obj_scale / internal.row_scale[i])
        .collect();
    let trace_sum: f64 = state.x.iter().map(|m| m.trace()).sum();
    let x_scale = 1.0 / trace_sum.max(1e-300);
    let primal: Vec<BlockValue> = internal
        .block_map
        .iter()
        .map(|&(ib, complex)| {
            if complex {
                BlockValue::Matrix(hermitian::unembed(&(&state.x[ib] * x_scale)))
            } else {
                BlockValue::Scalar(state.x[ib][(0, 0)] * x_scale)
            }
        })
        .collect();
    let dual_blocks: Vec<BlockValue> = internal
        .block_map
        .iter()
        .map(|&(ib, complex)| {
            let factor = if complex { 2.0 } else { 1.0 };
            if complex {
                BlockValue::Matrix(hermitian::unembed(
                    &(&state.s[ib] * (factor * internal.obj_scale / y_norm)),
                ))
            } else {
                BlockValue::Scalar(state.s[ib][(0, 0)] * factor * internal.obj_scale / y_norm)
            }
        })
        .collect();
    let _ = program;
    ConeSolution {
        status,
        primal,
        dual,
        dual_blocks,
        objective: f64::NAN,
        dual_objective: f64::NAN,
        duality_gap: f64::NAN,
        primal_infeasibility: f64::NAN,
        dual_infeasibility: f64::NAN,
        iterations,
        history,
    }
}

pub(crate) fn solve_hsd(program: &ConeProgram, options: &SolverOptions) -> ConeSolution {
    let internal = to_internal(program);
    let mut state = State::fresh(&internal);
    let mut history: Vec<IterationRecord> = Vec::new();

    // Converge internally below the requested tolerances, then verify on the
    // user-level data; tighten and continue if the mapped residuals miss.
    let mut gap_goal = options.gap_tol * 0.5;
    let mut feas_goal = options.feas_tol * 0.5;
    let mut tighten_rounds = 0;
    let mut consecutive_tiny_steps = 0;

    for iter in 0..options.max_iterations {
        let res = hsd_residuals(&internal, &state);
        let mu = mu_of(&internal, &state);
        let (pinf, dinf, relgap, pobj, dobj) = convergence(&internal, &state);
        history.push(IterationRecord {
            primal_objective: pobj * internal.obj_scale,
            dual_objective: dobj * internal.obj_scale,
            primal_infeasibility: pinf,
            dual_infeasibility: dinf,
            mu,
            step: f64::NAN,
        });

        if pinf <= feas_goal && dinf <= feas_goal && relgap <= gap_goal {
            let candidate = extract_solution(
                program,
                &internal,
                &state,
                SolveStatus::Optimal,
                iter,
                history.clone(),
            );
            let ok = candidate.primal_infeasibility <= options.feas_tol
                && candidate.dual_infeasibility <= options.feas_tol
                && candidate.duality_gap <= options.gap_tol;
            if ok {
                return candidate;
            }
            if tighten_rounds >= 2 {
                return ConeSolution {
                    status: SolveStatus::NumericalFailure,
                    ..candidate
                };
            }
            tighten_rounds += 1;
            gap_goal *= 0.1;
            feas_goal *= 0.1;
        }

        if state.tau < RAY_TAU_THRESHOLD * state.kappa.max(1.0) {
            // A ray is only a certificate when its residual is small
            // relative to the strict-inequality value it certifies.
            let aty = apply_at(&internal, &state.y);
            let mut dray_sq = 0.0;
            for b in 0..internal.dims.len() {
                dray_sq += (&aty[b] + &state.s[b]).norm_squared();
            }
            let by = internal.b.dot(&state.y);
            if by > 0.0 && dray_sq.sqrt() <= RAY_RESIDUAL_TOL * by {
                return extract_certificate(
                    program,
                    &internal,
                    &state,
                    SolveStatus::Infeasible,
                    iter,
                    history,
                );
            }
            let pray = apply_a(&internal, &state.x).norm();
            let cx = inner_blocks(&internal.c, &state.x);
            if cx < 0.0 && pray <= RAY_RESIDUAL_TOL * (-cx) {
                return extract_certificate(
                    program,
                    &internal,
                    &state,
                    SolveStatus::Unbounded,
                    iter,
                    history,
                );
            }
            return extract_certificate(
                program,
                &internal,
                &state,
                SolveStatus::NumericalFailure,
                iter,
                history,
            );
        }

        let fac = match factor(&internal, &state) {
            Some(f) => f,
            None => {
                return extract_solution(
                    program,
                    &internal,
                    &state,
                    SolveStatus::NumericalFailure,
                    iter,
                    history,
                )
            }
        };

        // Predictor.
        let rc_aff: Vec<DMatrix<f64>> =
            (0..internal.dims.len()).map(|b| -(&state.x[b] * &state.s[b])).collect();
        let aff = match solve_direction(&internal, &state, &fac, &res, &rc_aff, -state.tau * state.kappa)
        {
            Some(d) => d,
            None => {
                return extract_solution(
                    program,
                    &internal,
                    &state,
                    SolveStatus::NumericalFailure,
                    iter,
                    history,
                )
            }
        };
        let alpha_aff = boundary_step(&state, &fac, &aff).min(1.0);

        let mut gap_aff = state.tau + alpha_aff * aff.dtau;
        gap_aff *= state.kappa + alpha_aff * aff.dkappa;
        for b in 0..internal.dims.len() {
            let xa = &state.x[b] + &aff.dx[b] * alpha_aff;
            let sa = &state.s[b] + &aff.ds[b] * alpha_aff;
            gap_aff += xa.dot(&sa);
        }
        let mu_aff = gap_aff / (internal.nu + 1.0);
        let sigma = (mu_aff / mu).max(0.0).powi(3).min(1.0);

        // Corrector with second-order terms.
        let rc: Vec<DMatrix<f64>> = (0..internal.dims.len())
            .map(|b| {
                let mut r = DMatrix::identity(internal.dims[b], internal.dims[b]) * (sigma * mu);
                r -= &state.x[b] * &state.s[b];
                r -= &aff.dx[b] * &aff.ds[b];
                r
            })
            .collect();
        let rc_s = sigma * mu - state.tau * state.kappa - aff.dtau * aff.dkappa;
        let dir = match solve_direction(&internal, &state, &fac, &res, &rc, rc_s) {
            Some(d) => d,
            None => {
                return extract_solution(
                    program,
                    &internal,
                    &state,
                    SolveStatus::NumericalFailure,
                    iter,
                    history,
                )
            }
        };

        let alpha = (options.step_fraction * boundary_step(&state, &fac, &dir)).min(1.0);
        if let Some(last) = history.last_mut() {
            last.step = alpha;
        }
        if alpha < 1e-7 {
            consecutive_tiny_steps += 1;
            if consecutive_tiny_steps >= 3 {
                return extract_solution(
                    program,
                    &internal,
                    &state,
                    SolveStatus::NumericalFailure,
                    iter,
                    history,
                );
            }
        } else {
            consecutive_tiny_steps = 0;
        }

        for b in 0..internal.dims.len() {
            state.x[b] += &dir.dx[b] * alpha;
            state.s[b] += &dir.ds[b] * alpha;
            symmetrize(&mut state.x[b]);
            symmetrize(&mut state.s[b]);
        }
        state.y += &dir.dy * alpha;
        state.tau += alpha * dir.dtau;
        state.kappa += alpha * dir.dkappa;
    }

    extract_solution(
        program,
        &internal,
        &state,
        SolveStatus::MaxIterations,
        options.max_iterations,
        history,
    )
}
