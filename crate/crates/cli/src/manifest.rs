//! Run manifests: flat `key=value` text files that record everything needed
//! to re-run a command.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use crate::output;

pub struct Manifest {
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub timings: Vec<(String, Duration)>,
}

impl Manifest {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "command={}", self.command);
        let _ = writeln!(out, "version={}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "seed={}", self.seed);
        for (i, p) in self.inputs.iter().enumerate() {
            let _ = writeln!(out, "input.{i}={p}");
        }
        for (i, p) in self.outputs.iter().enumerate() {
            let _ = writeln!(out, "output.{i}={p}");
        }
        for (i, a) in self.args.iter().enumerate() {
            let _ = writeln!(out, "arg.{i}={a}");
        }
        for (name, t) in &self.timings {
            let _ = writeln!(out, "time.{name}_seconds={:.6}", t.as_secs_f64());
        }
        out
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        output::write_atomic(path, self.render().as_bytes())
    }
}

/// Reads back the recorded argument vector (without the program name).
pub fn read_args(path: &Path) -> Result<Vec<String>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut args: Vec<(usize, String)> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("{}:{}: expected key=value", path.display(), ln + 1));
        };
        if let Some(i) = key.strip_prefix("arg.") {
            let i = i
                .parse()
                .map_err(|_| format!("{}:{}: bad argument index {i:?}", path.display(), ln + 1))?;
            args.push((i, value.to_string()));
        }
    }
    args.sort_by_key(|a| a.0);
    if args.iter().enumerate().any(|(want, (got, _))| want != *got) {
        return Err(format!("{}: argument indices are not contiguous", path.display()));
    }
    if args.is_empty() {
        return Err(format!("{}: no recorded arguments", path.display()));
    }
    Ok(args.into_iter().map(|a| a.1).collect())
}
