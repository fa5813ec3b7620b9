pub mod accounting;
pub mod campaign;
pub mod config;
pub mod dcc;
pub mod error;
pub mod estimation;
pub mod linalg;
pub mod performance;
pub mod power;
pub mod processing;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod topology;

pub use campaign::run_campaign;
pub use config::{parse_config, Scheme, SimulationConfig};
pub use error::{Error, Result};
pub use report::{emit_results, SeReport};

// Book chapters, compiled and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/channel-model.md")]
    mod channel_model {}
    #[doc = include_str!("../../../book/src/clustering.md")]
    mod clustering {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/combining.md")]
    mod combining {}
    #[doc = include_str!("../../../book/src/spectral-efficiency.md")]
    mod spectral_efficiency {}
    #[doc = include_str!("../../../book/src/duality.md")]
    mod duality {}
    #[doc = include_str!("../../../book/src/accounting.md")]
    mod accounting {}
    #[doc = include_str!("../../../book/src/campaigns.md")]
    mod campaigns {}
}
