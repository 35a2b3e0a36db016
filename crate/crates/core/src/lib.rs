//! Numerical laboratory for the max-plus recursion
//! `X_{n+1} = max(X_n^(1) + X_n^(2) - 1, 0)` on binary trees.

pub mod config;
pub mod convolution;
pub mod criticality;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod law;
pub mod limit_tree;
pub mod montecarlo;
pub mod numeric;
pub mod oracle;
pub mod output;
pub mod pmf;
pub mod scaling;
pub mod tree;
pub mod trajectory;

pub use convolution::{ConvolutionMethod, Convolver};
pub use error::{Error, Result};
pub use law::{pmf_from_law, InitialLaw};
pub use pmf::{convolve, evolve_step, TiltedPmf, Truncation};
pub use trajectory::{
    evolve_trajectory, evolve_trajectory_with, Evolver, TrajectoryOptions, TrajectorySummary,
    TruncationPolicy,
};
