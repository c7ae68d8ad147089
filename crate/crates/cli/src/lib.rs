//! Command-line driver: runs the four analysis steps, writes CSV/SVG outputs and
//! assembles the markdown report.

pub mod config;
pub mod output;
pub mod report;
pub mod steps;
pub mod table;

use std::fmt;

pub use config::{AnalysisConfig, Overrides};

/// Problems with the user's inputs or flags (exit status 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserError(pub String);

impl fmt::Display for UserError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UserError {}

/// 1 for input, config and data problems; 2 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<UserError>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<repmeta::Error>() {
            return if e.is_user_error() { 1 } else { 2 };
        }
    }
    2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let e = anyhow::Error::new(UserError("x".into())).context("step");
        assert_eq!(exit_code(&e), 1);
        let e = anyhow::Error::new(repmeta::Error::NoData).context("step");
        assert_eq!(exit_code(&e), 1);
        let e = anyhow::Error::new(repmeta::Error::NoConvergence("lmm".into()));
        assert_eq!(exit_code(&e), 2);
        assert_eq!(exit_code(&anyhow::anyhow!("boom")), 2);
    }
}
