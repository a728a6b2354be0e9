//! Quadratic Weyl sums `w_N(x,t) = sum_{n=1}^N e(nx + n^2 t)`: exact-phase evaluation,
//! certified maximal functions, Diophantine classification of large values and
//! scaling experiments for the associated exponents.

pub mod bounds;
pub mod constants;
pub mod diophant;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod io;
pub mod maximal;
pub mod phase;
pub mod structures;

pub use bounds::{BoundCheckRecord, Grouping, RatioSummary};
pub use diophant::{DiophClass, Rational};
pub use error::{Result, WeylError};
pub use eval::{
    completion_sum, completion_sum_exact, eval_naive, eval_naive_exact, eval_point, eval_point_exact,
    eval_progression, eval_progression_exact, eval_t_grid, eval_t_grid_exact, eval_x_grid, eval_x_grid_exact,
    ComplexAmplitude, GridSpec, WeylScale,
};
pub use experiments::{CampaignConfig, ProfileCache, ScalingFit};
pub use maximal::{MaxGridOptions, MaxProfile, ResolutionCertificate, SupResult};
pub use num_complex::Complex64;
pub use phase::{Coord, PhaseAccumulator};
pub use structures::{OneDimCollection, Rect, Witness};
