//! Deterministic second-moment machinery: the chaos engine, the scalar `h` recursion, and sweeps of
//! the integral estimates behind the `L_1` bound.

pub mod hseries;

pub use hseries::{
    h_lambda, h_lambda_envelope, h_recursion, power_law_h, power_law_tail, HLambdaReport, HSeries,
};
pub mod engine;

pub use engine::{
    exact_mesh_resolution, ChaosEngine, ChaosTensor, EngineSettings, MomentSeriesResult,
};
pub mod estimates;

pub use estimates::{
    bridge_quotient, fit_c_h, k1_functions, verify_all_integral_estimates,
    verify_integral_estimate, verify_l1_structure, EstimateSettings, GaussianBoundFamily,
    IntegralEstimate, IntegralEstimateReport, K1Report, K1Settings, K1Terms, RieszQuadrature,
};
