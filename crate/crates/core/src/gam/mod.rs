//! Additive models fitted by penalized IRLS.

mod family;
mod fit;
mod model;

pub use family::{corr_link, corr_link_inv, Family, CORR_CLAMP, GAMMA_FLOOR};
pub use fit::{
    fit_gam, gcv_profile, lambda_grid, DEVIANCE_TOL, GCV_SWEEPS, LAMBDA_GRID_LEN, LAMBDA_MAX, LAMBDA_MIN, MAX_ITER,
};
pub use model::{FittedTerm, Frame, Prediction, SmoothModel, Term};
