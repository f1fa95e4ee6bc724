//! Query-by-example keyword spotting: log-mel features, a residual
//! embedding network trained with cross-entropy and circle loss, a
//! phoneme-to-embedding regressor, few-shot enrollment, sliding-window
//! detection and the evaluation protocols.

pub mod audio;
pub mod autodiff;
pub mod cli;
pub mod data;
pub mod enroll;
pub mod error;
pub mod eval;
pub mod io;
pub mod losses;
pub mod model;
pub mod stream;
pub mod train;

pub use error::{KwsError, Result};
