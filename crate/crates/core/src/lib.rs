//! Street-level exercise-deprivation analytics.

pub mod error;
pub mod features;
pub mod geometry;
pub mod graph;
pub mod intervention;
pub mod io;
pub mod lisa;
pub mod matrix;
pub mod pipeline;
pub mod real;
pub mod regressors;
pub mod rng;
pub mod schema;
pub mod shap;
pub mod synth;
pub mod typology;

pub use error::{Error, Result};
pub use real::Real;

pub type FeatureTable = schema::FeatureTable<f64>;
pub type RoadSegment = schema::RoadSegment<f64>;
pub type Matrix = matrix::Matrix<f64>;
pub type GbdtModel = regressors::GbdtModel<f64>;
pub type ShapMatrix = shap::ShapMatrix<f64>;
pub type SynthCity = synth::SynthCity<f64>;

pub type FeatureTable32 = schema::FeatureTable<f32>;
pub type RoadSegment32 = schema::RoadSegment<f32>;
pub type Matrix32 = matrix::Matrix<f32>;
pub type GbdtModel32 = regressors::GbdtModel<f32>;
pub type ShapMatrix32 = shap::ShapMatrix<f32>;
pub type SynthCity32 = synth::SynthCity<f32>;
