use std::fmt;

use kinegraph::model::ModelError;
use kinegraph::Error;

#[derive(Debug)]
pub enum CliError {
    /// Bad input or configuration (exit 2).
    Input(String),
    /// The numerics failed on valid input (exit 3).
    Numerical(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Numerical(m) => write!(f, "error: {m}"),
        }
    }
}

/// Variant name of the innermost library error, e.g. `ShapeMismatch`.
fn kind(e: &Error) -> String {
    let debug = match e {
        Error::Skeleton(x) => format!("{x:?}"),
        Error::Prior(x) => format!("{x:?}"),
        Error::Bone(x) => format!("{x:?}"),
        Error::Graph(x) | Error::Model(ModelError::Graph(x)) => format!("{x:?}"),
        Error::Model(ModelError::Prior(x)) => format!("{x:?}"),
        Error::Model(x) => format!("{x:?}"),
        Error::Shape(_) => "ShapeError".into(),
        Error::Json(_) => "Json".into(),
        Error::Io(_) => "Io".into(),
    };
    debug
        .split(|c: char| !c.is_alphanumeric() && c != '_')
        .next()
        .unwrap_or_default()
        .to_owned()
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = format!("[{}] {e}", kind(&e));
        if e.is_numerical() {
            CliError::Numerical(msg)
        } else {
            CliError::Input(msg)
        }
    }
}

macro_rules! via_library_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Error::from(e).into()
            }
        }
    )*};
}

via_library_error!(
    kinegraph::SkeletonError,
    kinegraph::PriorError,
    kinegraph::BoneError,
    kinegraph::GraphError,
    kinegraph::ModelError,
    kinegraph::ShapeError,
    serde_json::Error
);
