use geomag::GeomagError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure in {module}: {source}")]
    Numerical {
        module: &'static str,
        #[source]
        source: GeomagError,
    },
    #[error("numerical failure in {module}: {msg}")]
    Output { module: &'static str, msg: String },
    #[error("acceptance failure: {0}")]
    Acceptance(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numerical { .. } | CliError::Output { .. } => 2,
            CliError::Acceptance(_) => 3,
        }
    }
}

/// Library errors tagged with the module that raised them. Argument and
/// domain errors come from the input values, so they count as config errors.
pub trait InModule<T> {
    fn in_module(self, module: &'static str) -> Result<T, CliError>;
}

impl<T> InModule<T> for geomag::Result<T> {
    fn in_module(self, module: &'static str) -> Result<T, CliError> {
        self.map_err(|e| match e {
            GeomagError::Argument(m) | GeomagError::Domain(m) => {
                CliError::Config(format!("{module}: {m}"))
            }
            source => CliError::Numerical { module, source },
        })
    }
}
