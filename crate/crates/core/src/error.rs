use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-level error: each variant names the module that failed.
#[derive(Debug, Error)]
pub enum Error {
    #[error("ingest: {0}")]
    Ingest(#[from] crate::ingest::IngestError),
    #[error("tessellate: {0}")]
    Tessellate(#[from] crate::tessellate::TessellateError),
    #[error("concentration: {0}")]
    Concentration(#[from] crate::concentration::ConcentrationError),
    #[error("rankdyn: {0}")]
    RankDyn(#[from] crate::rankdyn::RankError),
    #[error("independence: {0}")]
    Independence(#[from] crate::independence::IndependenceError),
    #[error("rhythms: {0}")]
    Rhythms(#[from] crate::rhythms::RhythmsError),
    #[error("synth: {0}")]
    Synth(#[from] crate::synth::SynthError),
    #[error("cli: {0}")]
    Cli(String),
    #[error("io: {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Module name used in structured CLI error output.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Ingest(_) => "ingest",
            Error::Tessellate(_) => "tessellate",
            Error::Concentration(_) => "concentration",
            Error::RankDyn(_) => "rankdyn",
            Error::Independence(_) => "independence",
            Error::Rhythms(_) => "rhythms",
            Error::Synth(_) => "synth",
            Error::Cli(_) => "cli",
            Error::Io { .. } => "io",
        }
    }

    /// The message without the module prefix.
    pub fn detail(&self) -> String {
        match self {
            Error::Ingest(e) => e.to_string(),
            Error::Tessellate(e) => e.to_string(),
            Error::Concentration(e) => e.to_string(),
            Error::RankDyn(e) => e.to_string(),
            Error::Independence(e) => e.to_string(),
            Error::Rhythms(e) => e.to_string(),
            Error::Synth(e) => e.to_string(),
            Error::Cli(m) => m.clone(),
            Error::Io { path, source } => format!("{path}: {source}"),
        }
    }
}
