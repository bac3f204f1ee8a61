//! Robustness properties for small dense classifiers: training, attacks,
//! sampling metrics, and a complete verifier.
//!
//! The crate covers one pipeline end to end:
//!
//! * [`nn`] / [`optim`]: feed-forward networks with exact reverse-mode
//!   gradients and Adam/SGD updates.
//! * [`properties`]: robustness properties over an input ball (standard,
//!   classification, strong classification, Lipschitz), their quantifier-free
//!   right-hand sides, violation margins, and translation to linear
//!   constraint ASTs.
//! * [`loss`]: differentiable constraint losses and the combined
//!   cross-entropy + constraint objective used for property-guided training.
//! * [`attack`]: FGSM and PGD against the task loss or against a property's
//!   violation margin, plus uniform ball sampling.
//! * [`data`]: synthetic datasets and IDX parsing from byte slices.
//! * [`train`]: the training regimes (baseline, augmentation, adversarial,
//!   constraint-guided).
//! * [`metrics`]: constraint security / accuracy / satisfaction reports.
//! * [`verifier`]: sound and complete branch-and-bound verification with
//!   interval bound propagation and an exact-on-floats simplex core.
//!
//! `no_std` + `alloc` is supported by disabling the default `std` feature;
//! only wall-clock bookkeeping (time fields, second-based budgets) degrades.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod attack;
pub mod data;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod properties;
pub mod nn;
pub mod optim;
pub mod train;
pub mod verifier;

pub use attack::{fgsm, pgd, property_pgd, sample_ball, AttackParams};
pub use data::{Dataset, InputDomain};
pub use linalg::Matrix;
pub use loss::{combined_loss, constraint_loss, Aggregate, LossConfig, Sampler};
pub use nn::{cross_entropy, softmax, Activation, GradientTape, Gradients, Layer, Network, NetworkError};
pub use optim::{adam_step, sgd_step, AdamParams, AdamState, Optimizer};
pub use metrics::{constraint_accuracy, constraint_satisfaction, constraint_security, MetricKind, MetricReport};
pub use properties::{Constraint, Metric, PropertyError, PropertyKind, PropertySpec};
pub use train::{accuracy, train, TrainConfig, TrainError, TrainLog, TrainingMode};
pub use verifier::{ibp, lp_feasible, verify, BoxBounds, Budget, LinearProgram, VerdictStatus, VerifierVerdict};
