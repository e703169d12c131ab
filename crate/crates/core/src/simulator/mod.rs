//! Market-making simulator: fBm jump-diffusion mid-price, bivariate Hawkes
//! order flow, exponential fill model, and the chunked episode loop scored by
//! terminal wealth minus a quadratic inventory penalty.

mod config;
mod episode;
pub mod fbm;
mod hawkes;
mod market;
mod observation;
mod params;

pub use config::{Scenario, ScenarioFile, SCENARIO_FORMAT_VERSION};
pub use episode::{
    run_batch, run_episode, run_episodes, run_episodes_blocked, write_episode_dump, ChunkPolicy,
    EpisodeBatch, EpisodeResult, StepRecord,
};
pub use fbm::{aggregated_variance_hurst, fgn_autocovariance, simulate_fbm, FgnSampler};
pub use hawkes::{hawkes_intensities, simulate_hawkes_step, HawkesState};
pub use market::{apply_fills, count_fills, fill_probability, step_price, MarketPath};
pub use observation::{ActionChunk, ChunkConfig, Observation, INVENTORY_SCALE, STEP_FEATURES};
pub use params::{HawkesParams, MarketParams, MAX_JUMP_PROB};
