pub mod curve;
pub mod error;
pub mod experts;
pub mod harness;
pub mod meanflow;
pub mod net;
pub mod noiserl;
pub mod rng;
pub mod scalar;
pub mod simulator;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mlp64 = net::Mlp<f64>;
pub type Mlp32 = net::Mlp<f32>;
pub type FilmMlp64 = net::FilmMlp<f64>;
pub type FilmMlp32 = net::FilmMlp<f32>;
pub type MeanFlow64 = meanflow::MeanFlowNet<f64>;
pub type MeanFlow32 = meanflow::MeanFlowNet<f32>;
pub type NoisePolicy64 = noiserl::NoisePolicy<f64>;
pub type NoisePolicy32 = noiserl::NoisePolicy<f32>;
