use std::fmt::Display;

use serde_json::json;

/// Exit status 1 for bad input, 2 for failures of the tool itself.
#[derive(Debug)]
pub enum Failure {
    User(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    pub fn user(msg: impl Display) -> Self {
        Failure::User(anyhow::anyhow!("{msg}"))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::User(_) => 1,
            Failure::Internal(_) => 2,
        }
    }

    /// One-line JSON error record for stderr.
    pub fn to_json(&self) -> String {
        let (kind, err) = match self {
            Failure::User(e) => ("user", e),
            Failure::Internal(e) => ("internal", e),
        };
        let causes: Vec<String> = err.chain().skip(1).map(|c| c.to_string()).collect();
        json!({
            "error": {
                "kind": kind,
                "message": err.to_string(),
                "causes": causes,
            }
        })
        .to_string()
    }
}

pub trait ResultExt<T> {
    fn user_ctx<C: Display>(self, ctx: impl FnOnce() -> C) -> Result<T, Failure>;
    fn internal_ctx<C: Display>(self, ctx: impl FnOnce() -> C) -> Result<T, Failure>;
}

impl<T, E> ResultExt<T> for Result<T, E>
where
    E: std::error::Error + Send + Sync + 'static,
{
    fn user_ctx<C: Display>(self, ctx: impl FnOnce() -> C) -> Result<T, Failure> {
        self.map_err(|e| Failure::User(anyhow::Error::new(e).context(ctx().to_string())))
    }

    fn internal_ctx<C: Display>(self, ctx: impl FnOnce() -> C) -> Result<T, Failure> {
        self.map_err(|e| Failure::Internal(anyhow::Error::new(e).context(ctx().to_string())))
    }
}
