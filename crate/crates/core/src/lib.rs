//! Limits of hitting times for semi-Markov processes with perturbed
//! transition probabilities and times.
//!
//! [`hitting::analyze`] is the entry point. The guide in `book/` walks
//! through the model format and each stage.

pub mod asymptotics;
pub mod cli;
pub mod hitting;
pub mod laplace;
pub mod model;
pub mod oracle;
pub mod prelimit;
pub mod rational;
pub mod reduction;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/functions.md")]
    mod functions {}
    #[doc = include_str!("../../../book/src/laws.md")]
    mod laws {}
    #[doc = include_str!("../../../book/src/reduction.md")]
    mod reduction {}
    #[doc = include_str!("../../../book/src/hitting.md")]
    mod hitting {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
