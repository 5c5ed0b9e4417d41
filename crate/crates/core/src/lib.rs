//! Directed polymers on diamond hierarchical graphs: exact moment
//! recursions, critical scaling schedules, Monte Carlo samplers for the
//! finite-size and limit laws, and distance/Stein diagnostics.

pub mod arrays;
pub mod dd;
pub mod disorder;
pub mod error;
pub mod graph;
pub mod io;
pub mod montecarlo;
pub mod quad;
pub mod recursion;
pub mod rng;
pub mod scaling;
pub mod stats;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};

/// Where the disorder lives: on edges (bond) or on non-root vertices (site).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Bond,
    Site,
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bond" => Ok(Model::Bond),
            "site" => Ok(Model::Site),
            other => Err(Error::Parse(format!("unknown model `{other}`"))),
        }
    }
}
