//! Core numerics for the torus bubble laboratory.
//!
//! The library is organised around the pipeline
//!
//! * [`torus`] — the unit-area flat torus, its periodic grid and stencils,
//! * [`greens`] — the torus Green's function via Ewald summation,
//! * [`model`] — the family of near-bubble maps `z_{λ,a,R}` and the z-norm,
//! * [`energy`] — the ε-regularized Dirichlet energy, its variations and the
//!   closed-form expansion oracles,
//! * [`minimize`] — sphere-constrained descent producing numerical
//!   ε-harmonic maps,
//! * [`fit`] — recovery of bubble parameters `(a, λ, R)` from a computed field.

pub mod energy;
pub mod fit;
pub mod greens;
pub mod linalg;
pub mod minimize;
pub mod model;
pub mod torus;

pub use energy::{
    degree, el_residual, energy, energy_unchecked, expansion_da, expansion_dlambda,
    expansion_energy, first_variation, predicted_lambda, second_variation, EnergyBreakdown,
    EnergyError, ExpansionInputs,
};
pub use fit::{fit, fit_rotation, locate, refine, scale_estimate, FitError, FitResult};
pub use greens::{ChartGreensTable, GreensError, GreensEvaluator, GreensSource, RegularPartJet};
pub use linalg::Mat3;
pub use minimize::{
    continuation_sweep, minimize, retract, MinimizeError, MinimizeOptions, MinimizeResult,
};
pub use model::{
    build_z, rho_z, rho_z_squared_field, stereo, stereo_jet, tangent_basis, z_inner, BubbleParams,
    CutoffProfile, ModelError, ModelField, StereoJet, CHART_RADIUS, CUTOFF_INNER_RADIUS,
    INJECTIVITY_HALF,
};
pub use torus::{
    geodesic_distance, wrap_displacement, ChartDisplacement, Grid, GridError, ScalarField,
    TorusPoint, Vec3Field,
};
