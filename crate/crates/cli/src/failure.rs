//! One-line, machine-parsable failures: `error stage=<s> file=<f> msg=<m>`.

use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub struct Failure {
    pub stage: &'static str,
    pub file: Option<PathBuf>,
    pub source: anyhow::Error,
}

pub type Outcome<T> = Result<T, Failure>;

impl Failure {
    pub fn new(stage: &'static str, file: Option<&Path>, source: anyhow::Error) -> Self {
        let file = file.map(Path::to_path_buf).or_else(|| path_in(&source));
        Self { stage, file, source }
    }
}

/// A path carried by a library error, used when the caller has none.
fn path_in(err: &anyhow::Error) -> Option<PathBuf> {
    match err.downcast_ref::<instrclass::Error>()? {
        instrclass::Error::Io { path, .. } | instrclass::Error::UnsupportedWav { path, .. } => Some(path.clone()),
        _ => None,
    }
}

impl fmt::Display for Failure {
    /// `file` and `msg` are double-quoted with escapes, so the line never
    /// wraps and splits cleanly on spaces outside quotes.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let file = self.file.as_ref().map_or_else(|| "-".to_string(), |p| format!("{:?}", p.display().to_string()));
        let msg = format!("{:#}", self.source);
        write!(f, "error stage={} file={} msg={:?}", self.stage, file, msg)
    }
}

pub trait Stage<T> {
    fn at(self, stage: &'static str, file: &Path) -> Outcome<T>;
    fn stage(self, stage: &'static str) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Stage<T> for Result<T, E> {
    fn at(self, stage: &'static str, file: &Path) -> Outcome<T> {
        self.map_err(|e| Failure::new(stage, Some(file), e.into()))
    }

    fn stage(self, stage: &'static str) -> Outcome<T> {
        self.map_err(|e| Failure::new(stage, None, e.into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line_with_quoted_fields() {
        let f = Failure::new("train", Some(Path::new("/tmp/a b.csv")), anyhow::anyhow!("bad\nrow"));
        assert_eq!(f.to_string(), r#"error stage=train file="/tmp/a b.csv" msg="bad\nrow""#);
        assert_eq!(f.to_string().lines().count(), 1);
    }

    #[test]
    fn library_paths_fill_missing_file() {
        let io = instrclass::Error::Io { path: "/x/y.wav".into(), source: std::io::Error::other("gone") };
        let f: Failure = Err::<(), _>(io).stage("build").unwrap_err();
        assert_eq!(f.file.as_deref(), Some(Path::new("/x/y.wav")));
        let f = Failure::new("eval", None, anyhow::anyhow!("nothing"));
        assert!(f.to_string().contains("file=- "));
    }
}
