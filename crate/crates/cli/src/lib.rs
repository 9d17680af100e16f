//! Subcommand implementations behind the `kineverse` binary.
//!
//! Each module exposes the computation separately from its printing, so the
//! same code paths are exercised by the binary and by the test suites.

pub mod convert;
pub mod ekf;
pub mod fk;
pub mod garage;
pub mod gradcheck;
pub mod io;
pub mod rollout;
