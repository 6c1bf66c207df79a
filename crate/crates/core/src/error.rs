use thiserror::Error;

use crate::addressing::Site;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("site {site:?} outside lattice {dims:?}")]
    SiteOutOfRange { site: Site, dims: (usize, usize, usize) },
    #[error("Zeeman manifold is degenerate at B = {0} T; three-photon drive frequency undefined")]
    DegenerateManifold(f64),
    #[error("gradient planning failed: {0}")]
    Planning(String),
    #[error("sites {0:?} and {1:?} are not spectrally resolved ({2:.3} Hz < {3:.3} Hz required)")]
    Addressing(Site, Site, f64, f64),
    #[error("integrator step deviates from unitarity by {deviation:.3e}; reduce dt (currently {dt:e} s)")]
    Integrator { deviation: f64, dt: f64 },
    #[error("protocol order violated: {0}")]
    ProtocolOrder(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("unsupported circuit topology: {0}")]
    Topology(String),
    #[error("circuit parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
