//! Query-efficient approximate equilibria for large games.
//!
//! Games are accessed through counted oracles ([`oracle::OracleSession`]).
//! Binary-action algorithms live in [`binary`], the continuous-time dynamic in
//! [`continuous`], and the k-action block-update method in [`blocks`].

pub mod binary;
pub mod blocks;
pub mod continuous;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod families;
pub mod game;
pub mod oracle;
pub mod report;
pub mod verify;

pub use error::{Error, Result};
pub use exec::Parallelism;
pub use game::{Game, MixedProfile, PayoffTable, PureProfile};
pub use oracle::OracleSession;
