use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] abxkit_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 for bad input, 3 for internal failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Core(abxkit_core::Error::Invariant(_)) => 3,
            _ => 2,
        }
    }
}

macro_rules! data_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Data(format!($($arg)*))
    };
}
pub(crate) use data_err;
