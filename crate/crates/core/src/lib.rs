//! Power allocation for secure MISO downlink systems with RF energy
//! harvesting receivers.
//!
//! The library is organized around the pipeline used by the `swiptbeam`
//! binary:
//!
//! * [`channel`] — Rician/path-loss channel realizations and their Gram
//!   matrices.
//! * [`metrics`] — SINR, capacity, secrecy and energy-harvesting figures of
//!   merit for a candidate beamformer/noise-covariance pair.
//! * [`sdp`] — a self-contained primal-dual interior-point solver for the
//!   small block-structured cone programs produced here.
//! * [`allocator`] — transformed-problem builders, SDP-relaxation solves,
//!   rank-one certification, recovery, suboptimal and baseline schemes, and
//!   the Pareto sweep.
//! * [`oracle`] — independent feasibility checks and a brute-force grid
//!   solver for tiny instances.
//! * [`harness`] — configuration, Monte-Carlo orchestration and CSV output.

pub mod allocator;
pub mod channel;
pub mod harness;
pub mod hermitian;
pub mod metrics;
pub mod oracle;
pub mod sdp;

pub use num_complex::Complex64;
