//! Command-line surface for the CTMC-GP inference engine: `simulate`,
//! `infer`, `grad-check`, and `bench`, plus the posterior summary helpers
//! they share. The binary in `main.rs` is a thin wrapper over these modules.

pub mod bench;
pub mod gradcheck;
pub mod infer;
pub mod simulate;
pub mod summary;

use ctmcgp_core::error::Error;

/// Process exit code for an error: 1 input, 2 numerical, 3 guard refusal.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Input(_) | Error::State(_) | Error::Io { .. } => 1,
        Error::Numerical(_) => 2,
        Error::Guard(_) => 3,
    }
}
