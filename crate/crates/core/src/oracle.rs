//! Independent verification: constraint residuals in the original
//! variables, and a brute-force grid solver for two-antenna instances that
//! certifies the SDP pipeline end to end.
//!
//! # Grid parameterization
//!
//! The instance is first rotated into a canonical basis where the desired
//! channel is `(||h||, 0)`; remaining per-channel phases are gauged away
//! where possible (always for a single idle receiver, in which case all
//! data become real and both the beam and the noise eigenbasis can be
//! searched over real rotations without loss). The search then runs over
//!
//! * beam direction: `w_hat = (cos phi, sin phi e^{i psi})`,
//! * noise eigenbasis `u_1 = (cos theta, sin theta e^{i delta})` with
//!   eigenvalues `v_1, v_2` on `[0, P_max]`,
//!
//! with `psi`/`delta` dropped in the real-reducible case. For every grid
//! point the remaining beam power `p` enters all constraints linearly and
//! both scalarization rows monotonically, so the best `p` is found in
//! closed form among the constraint-interval endpoints and the crossing of
//! the two rows; the power variable therefore carries no grid error. After
//! an exhaustive pass the incumbent box is re-gridded and shrunk
//! deterministically, which never loses the best value of a coarser pass
//! (coarser grids are subsets of finer ones).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::allocator::{UtopiaValues, Weights};
use crate::channel::GramSet;
use crate::hermitian;
use crate::metrics::{self, Allocation, QosTargets};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("grid oracle supports exactly two antennas and at most two idle receivers, got {0}")]
    UnsupportedSize(String),
    #[error("resolution {given} is below the minimum of {minimum} points per parameter")]
    TooCoarse { given: usize, minimum: usize },
    #[error("no feasible grid point at this resolution")]
    NoFeasiblePoint,
}

/// Margins of the original constraints for one allocation.
///
/// `feasible` applies per-constraint relative tolerances: the SINR margins
/// against their targets, the power margin against the budget, and the PSD
/// margin against the covariance trace scale.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    /// Desired SINR minus the requirement.
    pub c1_margin: f64,
    /// Tolerance minus the idle-receiver SINR, per receiver.
    pub c2_margins: Vec<f64>,
    /// Power budget minus the transmit power, in Watts.
    pub c3_margin: f64,
    /// Smallest eigenvalue of the noise covariance.
    pub c4_min_eigenvalue: f64,
    pub feasible: bool,
    pub tolerance: f64,
}

/// Residuals of C1-C4 at the default relative tolerance of `1e-6`.
pub fn feasibility_residuals(
    alloc: &Allocation,
    grams: &GramSet,
    qos: &QosTargets,
) -> FeasibilityReport {
    feasibility_residuals_with_tol(alloc, grams, qos, 1e-6)
}

pub fn feasibility_residuals_with_tol(
    alloc: &Allocation,
    grams: &GramSet,
    qos: &QosTargets,
    tol: f64,
) -> FeasibilityReport {
    let c1_margin = metrics::sinr_desired(alloc, &grams.h, qos.sigma_s2) - qos.gamma_req;
    let c2_margins: Vec<f64> = grams
        .g
        .iter()
        .zip(&qos.gamma_tol)
        .map(|(g, &tol_k)| tol_k - metrics::sinr_idle(alloc, g, qos.sigma_s2))
        .collect();
    let c3_margin = qos.p_max - metrics::transmit_power(alloc);
    let c4_min_eigenvalue = hermitian::min_eigenvalue(&alloc.noise_cov);

    let trace_v = hermitian::real_trace(&alloc.noise_cov);
    let feasible = c1_margin >= -tol * qos.gamma_req
        && c2_margins
            .iter()
            .zip(&qos.gamma_tol)
            .all(|(m, &tol_k)| *m >= -tol * tol_k)
        && c3_margin >= -tol * qos.p_max
        && c4_min_eigenvalue >= -(tol * trace_v).max(1e-12);

    FeasibilityReport {
        c1_margin,
        c2_margins,
        c3_margin,
        c4_min_eigenvalue,
        feasible,
        tolerance: tol,
    }
}

/// Noise-covariance search space of the grid solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseSearch {
    /// Any PSD covariance.
    Free,
    /// Covariances proportional to the null-space projector of the desired
    /// channel, matching the restricted baseline design.
    NullSpace,
}

/// Best point found by the grid solver.
#[derive(Debug, Clone)]
pub struct GridSolution {
    /// Scalarized objective value at the best feasible point.
    pub objective: f64,
    /// Best beamformer, in the original coordinates.
    pub beamformer: DVector<Complex64>,
    /// Best noise covariance, in the original coordinates.
    pub noise_cov: DMatrix<Complex64>,
    pub evaluations: u64,
    pub refinement_levels: usize,
}

impl GridSolution {
    pub fn allocation(&self) -> Allocation {
        Allocation::new(self.beamformer.clone(), self.noise_cov.clone())
            .expect("grid argument is a valid allocation")
    }
}

const MIN_RESOLUTION: usize = 64;
const REFINE_LEVELS: usize = 10;
const REFINE_POINTS: usize = 17;

/// Exhaustive scalarized-objective minimization for `N_t = 2`, `K <= 3`.
pub fn grid_oracle(
    grams: &GramSet,
    qos: &QosTargets,
    eps: &[f64],
    lambda: Weights,
    utopia: &UtopiaValues,
    resolution: usize,
) -> Result<GridSolution, OracleError> {
    grid_oracle_with(grams, qos, eps, lambda, utopia, resolution, NoiseSearch::Free)
}

pub fn grid_oracle_with(
    grams: &GramSet,
    qos: &QosTargets,
    eps: &[f64],
    lambda: Weights,
    utopia: &UtopiaValues,
    resolution: usize,
    noise: NoiseSearch,
) -> Result<GridSolution, OracleError> {
    if resolution < MIN_RESOLUTION {
        return Err(OracleError::TooCoarse {
            given: resolution,
            minimum: MIN_RESOLUTION,
        });
    }
    grid_oracle_unchecked(grams, qos, eps, lambda, utopia, resolution, noise)
}

/// Runs the oracle twice (half and full resolution) and reports the
/// empirical grid slack `value(res/2) - value(res)` alongside the result.
pub fn grid_oracle_with_slack(
    grams: &GramSet,
    qos: &QosTargets,
    eps: &[f64],
    lambda: Weights,
    utopia: &UtopiaValues,
    resolution: usize,
    noise: NoiseSearch,
) -> Result<(GridSolution, f64), OracleError> {
    if resolution < MIN_RESOLUTION {
        return Err(OracleError::TooCoarse {
            given: resolution,
            minimum: MIN_RESOLUTION,
        });
    }
    let coarse = grid_oracle_unchecked(grams, qos, eps, lambda, utopia, resolution / 2, noise)?;
    let fine = grid_oracle_unchecked(grams, qos, eps, lambda, utopia, resolution, noise)?;
    let slack = coarse.objective - fine.objective;
    Ok((fine, slack))
}

// ---------------------------------------------------------------------------
// Canonical form
// ---------------------------------------------------------------------------

struct Canonical {
    /// Maps original coordinates to canonical ones.
    basis: DMatrix<Complex64>,
    h: DVector<Complex64>,
    g: Vec<DVector<Complex64>>,
    all_real: bool,
}

fn canonicalize(grams: &GramSet) -> Result<Canonical, OracleError> {
    if grams.dim() != 2 || grams.num_idle() > 2 {
        return Err(OracleError::UnsupportedSize(format!(
            "{} antennas, {} idle receivers",
            grams.dim(),
            grams.num_idle()
        )));
    }
    // recover channel vectors from the rank-one Gram matrices
    let vec_of = |m: &DMatrix<Complex64>| -> DVector<Complex64> {
        let (vals, vecs) = hermitian::eigh_descending(m);
        vecs.column(0).into_owned() * Complex64::new(vals[0].max(0.0).sqrt(), 0.0)
    };
    let h = vec_of(&grams.h);
    let g: Vec<DVector<Complex64>> = grams.g.iter().map(vec_of).collect();

    let h_norm = h.norm();
    if !(h_norm > 1e-30) {
        return Err(OracleError::UnsupportedSize("desired channel is zero".into()));
    }
    let h_hat = &h / Complex64::new(h_norm, 0.0);
    // rows: h_hat^H and an orthonormal complement
    let perp = DVector::from_vec(vec![-h_hat[1].conj(), h_hat[0].conj()]);
    let mut basis = DMatrix::<Complex64>::zeros(2, 2);
    basis.set_row(0, &h_hat.adjoint().row(0).into_owned());
    basis.set_row(1, &perp.adjoint().row(0).into_owned());

    let mut g_c: Vec<DVector<Complex64>> = g.iter().map(|gk| &basis * gk).collect();

    // second-coordinate gauge: make the first idle receiver's second entry
    // real nonnegative
    if let Some(first) = g_c.first() {
        let z = first[1];
        if z.norm() > 1e-30 {
            let rot = (z / Complex64::new(z.norm(), 0.0)).conj();
            for gk in &mut g_c {
                gk[1] *= rot;
            }
            let second_row = basis.row(1) * rot;
            basis.set_row(1, &second_row);
        }
    }
    // per-channel global phases are free: make first entries real
    for gk in &mut g_c {
        let z = gk[0];
        if z.norm() > 1e-30 {
            let rot = (z / Complex64::new(z.norm(), 0.0)).conj();
            *gk *= rot;
        } else {
            let z1 = gk[1];
            if z1.norm() > 1e-30 {
                *gk *= (z1 / Complex64::new(z1.norm(), 0.0)).conj();
            }
        }
    }

    let all_real = g_c
        .iter()
        .all(|gk| gk.iter().all(|z| z.im.abs() <= 1e-10 * (1.0 + z.norm())));
    Ok(Canonical {
        basis,
        h: DVector::from_vec(vec![Complex64::new(h_norm, 0.0), Complex64::new(0.0, 0.0)]),
        g: g_c,
        all_real,
    })
}

// ---------------------------------------------------------------------------
// Search
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    points: usize,
    /// Periodic axes exclude the upper endpoint from the grid.
    periodic: bool,
}

impl Axis {
    fn value(&self, i: usize) -> f64 {
        let n = if self.periodic { self.points } else { self.points - 1 };
        if n == 0 {
            return self.lo;
        }
        self.lo + (self.hi - self.lo) * i as f64 / n as f64
    }

    fn spacing(&self) -> f64 {
        let n = if self.periodic { self.points } else { self.points - 1 };
        if n == 0 {
            0.0
        } else {
            (self.hi - self.lo) / n as f64
        }
    }
}

struct Instance<'a> {
    h_norm_sq: f64,
    g: &'a [DVector<Complex64>],
    eps: &'a [f64],
    qos: &'a QosTargets,
    lambda: Weights,
    utopia: &'a UtopiaValues,
    noise: NoiseSearch,
    complex_mode: bool,
}

/// Search coordinates `[phi, psi, theta, delta, v1, v2]`; unused entries
/// are pinned by single-point axes.
type Coords = [f64; 6];

#[derive(Clone, Copy)]
struct Best {
    objective: f64,
    coords: Coords,
    p: f64,
    index: u64,
}

impl Best {
    fn none() -> Self {
        Best {
            objective: f64::INFINITY,
            coords: [0.0; 6],
            p: 0.0,
            index: u64::MAX,
        }
    }

    fn better_than(&self, other: &Best) -> bool {
        self.objective < other.objective
            || (self.objective == other.objective && self.index < other.index)
    }
}

fn unit_beam(phi: f64, psi: f64) -> DVector<Complex64> {
    DVector::from_vec(vec![
        Complex64::new(phi.cos(), 0.0),
        Complex64::from_polar(phi.sin(), psi),
    ])
}

fn noise_basis(theta: f64, delta: f64) -> (DVector<Complex64>, DVector<Complex64>) {
    let u1 = DVector::from_vec(vec![
        Complex64::new(theta.cos(), 0.0),
        Complex64::from_polar(theta.sin(), delta),
    ]);
    let u2 = DVector::from_vec(vec![
        -Complex64::from_polar(theta.sin(), -delta),
        Complex64::new(theta.cos(), 0.0),
    ]);
    (u1, u2)
}

/// Best feasible beam power for fixed directions and noise eigenvalues,
/// evaluated in closed form; returns `(objective, p)`.
fn best_power(
    inst: &Instance,
    ch: f64,
    cg: &[f64],
    va_h: f64,
    va_g: &[f64],
    s: f64,
) -> Option<(f64, f64)> {
    let qos = inst.qos;
    if ch <= 0.0 {
        return None;
    }
    let mut p_lo = qos.gamma_req * (va_h + qos.sigma_s2) / ch;
    let mut p_hi = qos.p_max - s;
    for (k, &c) in cg.iter().enumerate() {
        if c > 0.0 {
            p_hi = p_hi.min(qos.gamma_tol[k] * (va_g[k] + qos.sigma_s2) / c);
        }
    }
    if p_lo < 0.0 {
        p_lo = 0.0;
    }
    if p_lo > p_hi {
        return None;
    }

    // harvest terms: HP(p) = a p + c0, TP(p) = p + s
    let a: f64 = cg.iter().zip(inst.eps).map(|(&c, &e)| e * c).sum();
    let c0: f64 = va_g.iter().zip(inst.eps).map(|(&v, &e)| e * v).sum();
    let l1 = inst.lambda.l1;
    let l2 = inst.lambda.l2;
    let f1s = inst.utopia.f1_star;
    let f2s = inst.utopia.f2_star;

    let objective_at = |p: f64| -> f64 {
        let tp = p + s;
        let row1 = if l1 > 0.0 { l1 * (-(a * p + c0) / tp - f1s) } else { 0.0 };
        let row2 = l2 * (tp - f2s);
        row1.max(row2)
    };

    let mut candidates = [p_lo, p_hi, f64::NAN, f64::NAN];
    if l1 > 0.0 && l2 > 0.0 {
        // crossing of the two rows: quadratic in u = p + s
        let qa = l2;
        let qb = l1 * f1s - l2 * f2s + l1 * a;
        let qc = l1 * (c0 - a * s);
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let root = disc.sqrt();
            candidates[2] = (-qb + root) / (2.0 * qa) - s;
            candidates[3] = (-qb - root) / (2.0 * qa) - s;
        }
    }

    let mut best = f64::INFINITY;
    let mut best_p = p_lo;
    for &cand in &candidates {
        if !cand.is_finite() {
            continue;
        }
        let p = cand.clamp(p_lo, p_hi);
        let value = objective_at(p);
        if value < best {
            best = value;
            best_p = p;
        }
    }
    Some((best, best_p))
}

fn evaluate(inst: &Instance, coords: &Coords) -> Option<(f64, f64)> {
    let [phi, psi, theta, delta, v1, v2] = *coords;
    let w_hat = unit_beam(phi, psi);
    let ch = inst.h_norm_sq * w_hat[0].norm_sqr();
    let mut cg = [0.0f64; 2];
    for (k, gk) in inst.g.iter().enumerate() {
        cg[k] = gk.dotc(&w_hat).norm_sqr();
    }

    let (va_h, va_g, s) = match inst.noise {
        NoiseSearch::NullSpace => {
            // V = v2 e2 e2^H never disturbs the canonical desired channel
            let mut va_g = [0.0f64; 2];
            for (k, gk) in inst.g.iter().enumerate() {
                va_g[k] = v2 * gk[1].norm_sqr();
            }
            (0.0, va_g, v2)
        }
        NoiseSearch::Free => {
            let (u1, u2) = noise_basis(theta, delta);
            let va_h = inst.h_norm_sq * (v1 * u1[0].norm_sqr() + v2 * u2[0].norm_sqr());
            let mut va_g = [0.0f64; 2];
            for (k, gk) in inst.g.iter().enumerate() {
                va_g[k] = v1 * gk.dotc(&u1).norm_sqr() + v2 * gk.dotc(&u2).norm_sqr();
            }
            (va_h, va_g, v1 + v2)
        }
    };
    let k = inst.g.len();
    best_power(inst, ch, &cg[..k], va_h, &va_g[..k], s)
}

fn axes_for(inst: &Instance, resolution: usize) -> [Axis; 6] {
    let single = |at: f64| Axis {
        lo: at,
        hi: at,
        points: 1,
        periodic: false,
    };
    let phi = if inst.complex_mode {
        Axis {
            lo: 0.0,
            hi: std::f64::consts::FRAC_PI_2,
            points: resolution + 1,
            periodic: false,
        }
    } else {
        Axis {
            lo: 0.0,
            hi: std::f64::consts::PI,
            points: resolution,
            periodic: true,
        }
    };
    let psi = if inst.complex_mode {
        Axis {
            lo: 0.0,
            hi: std::f64::consts::TAU,
            points: resolution,
            periodic: true,
        }
    } else {
        single(0.0)
    };
    let (theta, delta, v1) = match inst.noise {
        NoiseSearch::NullSpace => (single(0.0), single(0.0), single(0.0)),
        NoiseSearch::Free => {
            let theta = Axis {
                lo: 0.0,
                hi: std::f64::consts::FRAC_PI_2,
                points: resolution,
                periodic: true,
            };
            let delta = if inst.complex_mode {
                Axis {
                    lo: 0.0,
                    hi: std::f64::consts::TAU,
                    points: resolution,
                    periodic: true,
                }
            } else {
                single(0.0)
            };
            let v1 = Axis {
                lo: 0.0,
                hi: inst.qos.p_max,
                points: resolution + 1,
                periodic: false,
            };
            (theta, delta, v1)
        }
    };
    let v2 = Axis {
        lo: 0.0,
        hi: inst.qos.p_max,
        points: resolution + 1,
        periodic: false,
    };
    [phi, psi, theta, delta, v1, v2]
}

/// One exhaustive pass over the axis grid; parallel over the first axis,
/// with the global argmin resolved by `(value, flat index)` so the result
/// does not depend on thread scheduling.
fn sweep(inst: &Instance, axes: &[Axis; 6]) -> (Best, u64) {
    let counts: [usize; 6] = std::array::from_fn(|d| axes[d].points);
    let results: Vec<(Best, u64)> = (0..counts[0])
        .into_par_iter()
        .map(|i0| {
            let mut best = Best::none();
            let mut evals: u64 = 0;
            let mut coords: Coords = [0.0; 6];
            coords[0] = axes[0].value(i0);
            let mut idx = [0usize; 6];
            idx[0] = i0;
            let mut i = [0usize; 5];
            'scan: loop {
                for d in 0..5 {
                    coords[d + 1] = axes[d + 1].value(i[d]);
                    idx[d + 1] = i[d];
                }
                evals += 1;
                if let Some((value, p)) = evaluate(inst, &coords) {
                    let flat: u64 = idx
                        .iter()
                        .zip(axes.iter())
                        .fold(0u64, |acc, (&ix, ax)| acc * ax.points as u64 + ix as u64);
                    let cand = Best {
                        objective: value,
                        coords,
                        p,
                        index: flat,
                    };
                    if cand.better_than(&best) {
                        best = cand;
                    }
                }
                // odometer increment over the trailing five axes
                let mut d = 4;
                loop {
                    i[d] += 1;
                    if i[d] < counts[d + 1] {
                        break;
                    }
                    i[d] = 0;
                    if d == 0 {
                        break 'scan;
                    }
                    d -= 1;
                }
            }
            (best, evals)
        })
        .collect();

    let mut best = Best::none();
    let mut evals = 0;
    for (b, e) in results {
        evals += e;
        if b.better_than(&best) {
            best = b;
        }
    }
    (best, evals)
}

fn grid_oracle_unchecked(
    grams: &GramSet,
    qos: &QosTargets,
    eps: &[f64],
    lambda: Weights,
    utopia: &UtopiaValues,
    resolution: usize,
    noise: NoiseSearch,
) -> Result<GridSolution, OracleError> {
    let canon = canonicalize(grams)?;
    let inst = Instance {
        h_norm_sq: canon.h[0].re * canon.h[0].re,
        g: &canon.g,
        eps,
        qos,
        lambda,
        utopia,
        noise,
        complex_mode: !canon.all_real,
    };

    let base_axes = axes_for(&inst, resolution);
    let (mut best, mut evaluations) = sweep(&inst, &base_axes);
    if !best.objective.is_finite() {
        return Err(OracleError::NoFeasiblePoint);
    }

    // deterministic zoom refinement around the incumbent
    let mut axes = base_axes;
    let mut levels = 0;
    for _ in 0..REFINE_LEVELS {
        let mut refined = axes;
        let mut any = false;
        for d in 0..6 {
            if axes[d].points <= 1 {
                continue;
            }
            let span = 2.0 * axes[d].spacing();
            if span <= 0.0 {
                continue;
            }
            let center = best.coords[d];
            refined[d] = Axis {
                lo: (center - span).max(base_axes[d].lo),
                hi: (center + span).min(base_axes[d].hi),
                points: REFINE_POINTS,
                periodic: false,
            };
            any = true;
        }
        if !any {
            break;
        }
        axes = refined;
        levels += 1;
        let (cand, evals) = sweep(&inst, &axes);
        evaluations += evals;
        if cand.better_than(&best) {
            best = cand;
        }
    }

    // reconstruct the argument in canonical coordinates, then map back
    let [phi, psi, theta, delta, v1, v2] = best.coords;
    let w_c = unit_beam(phi, psi) * Complex64::new(best.p.sqrt(), 0.0);
    let v_c = match noise {
        NoiseSearch::NullSpace => {
            let e2 = DVector::from_vec(vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]);
            hermitian::outer(&e2) * Complex64::new(v2, 0.0)
        }
        NoiseSearch::Free => {
            let (u1, u2) = noise_basis(theta, delta);
            hermitian::outer(&u1) * Complex64::new(v1, 0.0)
                + hermitian::outer(&u2) * Complex64::new(v2, 0.0)
        }
    };
    let back = canon.basis.adjoint();
    let beamformer = &back * w_c;
    let noise_cov = hermitian::hermitianize(&(&back * v_c * &canon.basis));

    Ok(GridSolution {
        objective: best.objective,
        beamformer,
        noise_cov,
        evaluations,
        refinement_levels: levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator;
    use crate::channel::{gram_matrices, ChannelRealization};
    use crate::sdp::SolverOptions;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cv(entries: &[(f64, f64)]) -> DVector<Complex64> {
        DVector::from_iterator(entries.len(), entries.iter().map(|&(r, i)| Complex64::new(r, i)))
    }

    fn tiny_instance(seed: u64) -> (GramSet, QosTargets, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rand_vec = |n: usize| -> DVector<Complex64> {
            DVector::from_fn(n, |_, _| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            })
        };
        let real = ChannelRealization {
            desired: rand_vec(2),
            idle: vec![rand_vec(2)],
            distances: vec![2.0, 2.0],
        };
        let grams = gram_matrices(&real);
        let qos = QosTargets::new(10.0, vec![0.1], 10.0, 0.1).unwrap();
        (grams, qos, vec![0.5])
    }

    #[test]
    fn feasibility_margins_reflect_constraint_state() {
        let real = ChannelRealization {
            desired: cv(&[(1.0, 0.0), (1.0, 0.0)]),
            idle: vec![],
            distances: vec![2.0],
        };
        let grams = gram_matrices(&real);
        let qos = QosTargets::new(10.0, vec![], 100.0, 1.0).unwrap();

        // matched-filter optimum: w = sqrt(5/2) (1, 1), tight C1
        let amp = (2.5f64).sqrt();
        let alloc = Allocation::new(cv(&[(amp, 0.0), (amp, 0.0)]), DMatrix::zeros(2, 2)).unwrap();
        let report = feasibility_residuals(&alloc, &grams, &qos);
        assert!(report.feasible);
        assert!(report.c1_margin.abs() <= 1e-9 * qos.gamma_req);
        assert_relative_eq!(report.c3_margin, 100.0 - 5.0, max_relative = 1e-12);

        let zero = Allocation::zero(2);
        let report = feasibility_residuals(&zero, &grams, &qos);
        assert!(!report.feasible);
        assert_relative_eq!(report.c1_margin, -10.0, epsilon = 1e-12);
    }

    #[test]
    fn oracle_rejects_wrong_shapes_and_coarse_grids() {
        let (grams, qos, eps) = tiny_instance(1);
        let utopia = UtopiaValues::new(-0.1, 1.0).unwrap();
        let lambda = Weights::new(0.5, 0.5).unwrap();
        assert!(matches!(
            grid_oracle(&grams, &qos, &eps, lambda, &utopia, 32),
            Err(OracleError::TooCoarse { .. })
        ));

        let big = ChannelRealization {
            desired: cv(&[(1.0, 0.0), (0.0, 0.0), (0.0, 0.0)]),
            idle: vec![],
            distances: vec![2.0],
        };
        let big_grams = gram_matrices(&big);
        let qos1 = QosTargets::new(10.0, vec![], 10.0, 0.1).unwrap();
        assert!(matches!(
            grid_oracle(&big_grams, &qos1, &[], lambda, &utopia, 64),
            Err(OracleError::UnsupportedSize(_))
        ));
    }

    #[test]
    fn oracle_finds_matched_filter_power_without_eavesdroppers() {
        // K = 1: at the power endpoint the best TP is gamma sigma^2/||h||^2
        let real = ChannelRealization {
            desired: cv(&[(1.0, 0.0), (1.0, 0.0)]),
            idle: vec![],
            distances: vec![2.0],
        };
        let grams = gram_matrices(&real);
        let qos = QosTargets::new(10.0, vec![], 100.0, 1.0).unwrap();
        let utopia = UtopiaValues::new(0.0, 5.0).unwrap();
        let sol =
            grid_oracle(&grams, &qos, &[], Weights::new(0.0, 1.0).unwrap(), &utopia, 64).unwrap();
        let tp = metrics::transmit_power(&sol.allocation());
        assert_relative_eq!(tp, 5.0, max_relative = 1e-6);
        assert!(sol.objective.abs() <= 1e-5);
    }

    #[test]
    fn oracle_argument_is_feasible_and_brackets_the_relaxation() {
        let opts = SolverOptions::tight();
        let lambda = Weights::new(0.5, 0.5).unwrap();
        for seed in 0..4 {
            let (grams, qos, eps) = tiny_instance(seed);
            let Ok(utopia) = allocator::compute_utopia(&grams, &qos, &eps, &opts) else {
                continue;
            };
            let Ok(sol) = grid_oracle(&grams, &qos, &eps, lambda, &utopia, 64) else {
                continue;
            };
            let report = feasibility_residuals(&sol.allocation(), &grams, &qos);
            assert!(report.feasible, "seed {seed}: {report:?}");

            let relaxed =
                allocator::solve_relaxed_p3(&grams, &qos, &eps, lambda, &utopia, &opts).unwrap();
            assert!(
                relaxed.transformed.objective_value <= sol.objective + 1e-9,
                "seed {seed}: relaxed {} vs oracle {}",
                relaxed.transformed.objective_value,
                sol.objective
            );
        }
    }

    #[test]
    fn doubling_resolution_never_worsens() {
        let opts = SolverOptions::tight();
        let lambda = Weights::new(0.4, 0.6).unwrap();
        for seed in 10..13 {
            let (grams, qos, eps) = tiny_instance(seed);
            let Ok(utopia) = allocator::compute_utopia(&grams, &qos, &eps, &opts) else {
                continue;
            };
            let coarse =
                grid_oracle_unchecked(&grams, &qos, &eps, lambda, &utopia, 32, NoiseSearch::Free);
            let fine =
                grid_oracle_unchecked(&grams, &qos, &eps, lambda, &utopia, 64, NoiseSearch::Free);
            if let (Ok(c), Ok(f)) = (coarse, fine) {
                assert!(
                    f.objective <= c.objective + 1e-12,
                    "seed {seed}: {} vs {}",
                    f.objective,
                    c.objective
                );
            }
        }
    }

    #[test]
    fn complex_mode_brackets_and_stays_feasible() {
        // two idle receivers with cross phases exercise the complex branch
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut rand_vec = || {
            DVector::from_fn(2, |_, _| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            })
        };
        let real = ChannelRealization {
            desired: rand_vec(),
            idle: vec![rand_vec(), rand_vec()],
            distances: vec![2.0, 2.0, 2.0],
        };
        let grams = gram_matrices(&real);
        let qos = QosTargets::new(10.0, vec![0.1, 0.1], 10.0, 0.1).unwrap();
        let eps = vec![0.5, 0.5];
        let opts = SolverOptions::tight();
        let lambda = Weights::new(0.5, 0.5).unwrap();
        let Ok(utopia) = allocator::compute_utopia(&grams, &qos, &eps, &opts) else {
            panic!("fixture instance should be feasible");
        };
        let sol =
            grid_oracle_unchecked(&grams, &qos, &eps, lambda, &utopia, 20, NoiseSearch::Free)
                .unwrap();
        let report = feasibility_residuals(&sol.allocation(), &grams, &qos);
        assert!(report.feasible, "{report:?}");
        let relaxed =
            allocator::solve_relaxed_p3(&grams, &qos, &eps, lambda, &utopia, &opts).unwrap();
        assert!(relaxed.transformed.objective_value <= sol.objective + 1e-9);
    }

    #[test]
    fn null_space_restriction_matches_projected_noise() {
        let (grams, qos, eps) = tiny_instance(30);
        let opts = SolverOptions::tight();
        let utopia = allocator::compute_utopia(&grams, &qos, &eps, &opts).unwrap();
        let lambda = Weights::new(0.5, 0.5).unwrap();
        if let Ok(sol) =
            grid_oracle_with(&grams, &qos, &eps, lambda, &utopia, 64, NoiseSearch::NullSpace)
        {
            // restricted noise never disturbs the desired receiver
            let leak = hermitian::inner(&grams.h, &sol.noise_cov);
            assert!(leak.abs() <= 1e-9 * hermitian::real_trace(&grams.h));
            // restricted search can never beat the free one
            let free = grid_oracle(&grams, &qos, &eps, lambda, &utopia, 64).unwrap();
            assert!(free.objective <= sol.objective + 1e-9);
        }
    }
}
