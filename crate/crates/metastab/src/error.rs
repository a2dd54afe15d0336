use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: no frames", .0.display())]
    NoFrames(PathBuf),
    #[error("gap at {0}")]
    Gap(u64),
    #[error("{}: mixed resolutions ({first:?} then {found:?})", path.display())]
    MixedResolution {
        path: PathBuf,
        first: (u32, u32),
        found: (u32, u32),
    },
    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("{}: {msg}", path.display())]
    Config { path: PathBuf, msg: String },
    #[error(transparent)]
    Core(#[from] metastab_core::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Error {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Short machine-readable tag for structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::NoFrames(_) | Error::Gap(_) | Error::MixedResolution { .. } | Error::Image { .. } => "frames",
            Error::Format { .. } => "format",
            Error::Config { .. } => "config",
            Error::Core(_) => "core",
            Error::Json(_) => "json",
        }
    }
}
