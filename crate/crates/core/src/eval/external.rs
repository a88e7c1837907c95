use std::path::PathBuf;
use std::process::Command;

use super::{EvalError, PairMatcher};
use crate::codec::MinutiaeRecord;
use crate::dataset::ImageRef;

/// Runs a third-party matcher as `program [args...] <probe> <gallery>` and
/// reads one decimal score from its standard output.
#[derive(Debug, Clone)]
pub struct ExternalMatcher {
    pub program: String,
    pub args: Vec<String>,
    /// Directory holding `<finger>_<impression>.iso-fmr`.
    pub template_dir: PathBuf,
}

impl ExternalMatcher {
    /// Split a command line on whitespace into program and arguments.
    pub fn from_command_line(command: &str, template_dir: PathBuf) -> Result<Self, EvalError> {
        let mut parts = command.split_whitespace().map(String::from);
        let program = parts.next().ok_or_else(|| EvalError::Other("empty matcher command".into()))?;
        Ok(Self { program, args: parts.collect(), template_dir })
    }

    fn path(&self, image: &ImageRef) -> PathBuf {
        self.template_dir.join(image.template_file_name())
    }
}

impl PairMatcher for ExternalMatcher {
    fn label(&self) -> String {
        self.program.clone()
    }

    fn score(
        &self,
        probe: &ImageRef,
        _: &MinutiaeRecord,
        gallery: &ImageRef,
        _: &MinutiaeRecord,
    ) -> Result<f64, EvalError> {
        let fail = |reason: String| EvalError::Matcher { probe: probe.clone(), gallery: gallery.clone(), reason };
        let output = Command::new(&self.program)
            .args(&self.args)
            .arg(self.path(probe))
            .arg(self.path(gallery))
            .output()
            .map_err(|e| fail(format!("cannot run `{}`: {e}", self.program)))?;
        if !output.status.success() {
            return Err(fail(format!(
                "exited with {}: {}",
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        let text = String::from_utf8_lossy(&output.stdout);
        text.trim().parse::<f64>().map_err(|_| fail(format!("expected one decimal score, got `{}`", text.trim())))
    }
}
