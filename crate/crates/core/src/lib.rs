//! Regularized least squares in a reproducing kernel Hilbert space with a
//! sublinear norm penalty, and a synthetic spectral laboratory for checking
//! the complexity bounds, fixed points and excess-risk rates that justify it.
//!
//! The modules mirror the pipeline:
//!
//! * [`spectrum`]: Mercer kernels on `[0, 1]` with power-law eigenvalues.
//! * [`synth`]: regression targets under a source condition, samples, exact
//!   population risks and best-in-ball projections.
//! * [`regfunc`]: regularization functionals, thresholds and fixed points.
//! * [`solver`]: the ridge frontier and regularized empirical risk minimization.
//! * [`complexity`]: intersection ellipsoids, Gaussian complexities, entropy
//!   integrals and Monte-Carlo checks.
//! * [`experiment`]: rate studies, the check suite, CSV and SVG output.

pub mod complexity;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod plot;
pub mod regfunc;
pub mod seeding;
pub mod solver;
pub mod spectrum;
pub mod stats;
pub mod synth;
pub mod trig;

pub use error::{Error, Result};
pub use regfunc::{Constants, RegularizerKind, RegularizerSpec};
pub use solver::{FittedFunction, Frontier};
pub use spectrum::{EigenSpec, FourierBasis};
pub use synth::{RegressionTask, SampleSet};
