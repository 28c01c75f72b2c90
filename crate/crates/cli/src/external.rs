//! Placeholder substitution and shell execution for user-supplied commands.

use std::path::Path;
use std::process::Command;

/// Replaces each `{key}` in `template` with its value. Unknown placeholders
/// are left as written.
pub fn fill(template: &str, values: &[(&str, String)]) -> String {
    let mut out = template.to_string();
    for (key, value) in values {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

/// Single-quotes `s` for POSIX `sh`.
pub fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

/// Runs `line` with `sh -c` and returns its stdout, or a failure reason.
pub fn run_shell(line: &str, cwd: Option<&Path>) -> Result<String, String> {
    let mut cmd = Command::new("sh");
    cmd.arg("-c").arg(line);
    if let Some(dir) = cwd {
        cmd.current_dir(dir);
    }
    let out = cmd.output().map_err(|e| format!("cannot start sh: {e}"))?;
    if !out.status.success() {
        let stderr = String::from_utf8_lossy(&out.stderr);
        let last = stderr.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("").trim();
        return Err(match out.status.code() {
            Some(code) if last.is_empty() => format!("exit status {code}"),
            Some(code) => format!("exit status {code}: {last}"),
            None => "terminated by signal".to_string(),
        });
    }
    String::from_utf8(out.stdout).map_err(|_| "stdout is not UTF-8".to_string())
}

/// The score a trial command reports: its last non-empty stdout line.
pub fn parse_score(stdout: &str) -> Result<f64, String> {
    let line = stdout
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .ok_or_else(|| "no output".to_string())?;
    line.parse::<f64>().map_err(|_| format!("last line {line:?} is not a number"))
}
