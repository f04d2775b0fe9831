//! Neural eigenpair solver for 1-D self-adjoint operators.
//!
//! A small tanh network `u_theta: R -> R^m` is trained so that each output
//! satisfies `u'' + lambda u = 0` with Dirichlet data, fixed energy and, when
//! `m > 1`, mutual orthogonality. Eigenvalues are either supplied or estimated
//! on the fly by the Rayleigh quotient `-<u'', u> / <u, u>`.
//!
//! - [`jet`] and [`net`]: the network with exact `u'` and `u''` and closed-form
//!   parameter gradients.
//! - [`sampling`]: problem description, Monte Carlo batches and quadrature.
//! - [`loss`]: every term of the objective and its gradient.
//! - [`optim`]: Adam, step-decay schedule and the training loop.
//! - [`oracle`]: analytic solutions, finite-difference spectrum, error metrics.
//! - [`experiment`]: configuration, experiment runner and CSV artifacts.

pub mod error;
pub mod experiment;
pub mod jet;
pub mod loss;
pub mod net;
pub mod optim;
pub mod oracle;
pub mod sampling;

pub use error::{Error, Result};
pub use jet::Jet2;
pub use loss::{LossBreakdown, LossWeights};
pub use net::{MlpParams, ParamGrad};
pub use optim::{LrSchedule, TrainConfig, TrainRecord, Trainer};
pub use sampling::{Batch, BoundaryCondition, Mode, ProblemSpec};
