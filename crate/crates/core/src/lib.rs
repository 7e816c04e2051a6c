pub mod cli;
pub mod energy;
pub mod error;
pub mod io;
pub mod minimize;
pub mod reduced2d;
pub mod spectral;
pub mod tensor;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/concepts.md")]
    struct Concepts;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
    #[doc = include_str!("../../../book/src/config.md")]
    struct Config;
    #[doc = include_str!("../../../book/src/artifacts.md")]
    struct Artifacts;
    #[doc = include_str!("../../../book/src/vtk.md")]
    struct Vtk;
    #[doc = include_str!("../../../book/src/reduced2d.md")]
    struct Reduced2d;
}
