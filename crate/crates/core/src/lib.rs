//! Device-independent certification pipeline for a qubit SIC-POVM.
//!
//! The crate is organised bottom-up:
//!
//! * [`qmath`]: dense complex operators, Born rule, Bloch decomposition, fidelity.
//! * [`scenario`]: the 4x4 Bell scenario, correlation tables and Bell functionals.
//! * [`sdpcore`]: a small dense primal-dual interior-point SDP solver.
//! * [`npa`]: moment-matrix relaxations giving quantum upper bounds.
//! * [`varopt`]: Nelder-Mead, see-saw lower bounds and coefficient search.
//! * [`expsim`]: Monte Carlo of the photonic experiment and count estimators.
//! * [`tomo`]: projective, SIC and two-qubit linear-inversion tomography.
//! * [`pipeline`]: config-driven orchestration used by the command line tool.

pub mod expsim;
pub mod npa;
pub mod pipeline;
pub mod qmath;
pub mod scenario;
pub mod sdpcore;
pub mod svg;
pub mod tomo;
pub mod varopt;
