//! Spacecraft attitude and gyro-bias estimation with multiplicative
//! extended Kalman filters.

pub mod attitude;
pub mod bench;
pub mod config;
pub mod filter;
pub mod gekf;
pub mod gmekf;
pub mod mekf;
pub mod sim;

#[cfg(test)]
mod testutil;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/attitude.md")]
    mod attitude {}
    #[doc = include_str!("../../../book/src/measurement-update.md")]
    mod measurement_update {}
    #[doc = include_str!("../../../book/src/reset.md")]
    mod reset {}
    #[doc = include_str!("../../../book/src/propagation.md")]
    mod propagation {}
    #[doc = include_str!("../../../book/src/gekf.md")]
    mod gekf {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
