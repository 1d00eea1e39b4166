//! `key = value` option files.
//!
//! Each non-comment line names a long flag without its dashes. The options are
//! spliced in front of the command-line flags, so the command line wins when
//! both set the same key.

use std::ffi::OsString;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("{path}: line {line}: {message}")]
    Syntax { path: String, line: usize, message: String },
    #[error("--config needs a file argument")]
    MissingPath,
}

/// Parses option text into `--key value` argument pairs.
pub fn parse_options(text: &str, path: &Path) -> Result<Vec<OsString>, ConfigError> {
    let mut args = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let syntax = |message: &str| ConfigError::Syntax {
            path: path.display().to_string(),
            line: i + 1,
            message: message.into(),
        };
        let (key, value) = line.split_once('=').ok_or_else(|| syntax("expected 'key = value'"))?;
        let key = key.trim().trim_start_matches("--");
        let value = value.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(syntax("invalid key"));
        }
        if key == "config" {
            return Err(syntax("config files cannot include other config files"));
        }
        args.push(OsString::from(format!("--{key}")));
        args.push(OsString::from(value));
    }
    Ok(args)
}

/// Removes every `--config FILE` / `--config=FILE` from `argv` and inserts the
/// file options right after the subcommand name (`argv[1]`).
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>, ConfigError> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut files = Vec::new();
    let mut it = argv.into_iter();
    while let Some(arg) = it.next() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            files.push(it.next().ok_or(ConfigError::MissingPath)?);
        } else if let Some(p) = s.strip_prefix("--config=") {
            files.push(OsString::from(p));
        } else {
            rest.push(arg);
        }
    }
    if files.is_empty() {
        return Ok(rest);
    }
    let mut injected = Vec::new();
    for f in files {
        let path = Path::new(&f);
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        injected.extend(parse_options(&text, path)?);
    }
    let at = rest.len().min(2);
    rest.splice(at..at, injected);
    Ok(rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn options_become_flags() {
        let args = parse_options("# c\nm = 8\n--strategy=obs  # inline\n\n", Path::new("c")).unwrap();
        assert_eq!(args, ["--m", "8", "--strategy", "obs"].map(OsString::from));
        assert!(parse_options("novalue\n", Path::new("c")).is_err());
        assert!(parse_options("config = x\n", Path::new("c")).is_err());
    }

    #[test]
    fn file_options_precede_command_line() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("opts.cfg");
        std::fs::write(&cfg, "m = 4\n").unwrap();
        let argv: Vec<OsString> = ["bin", "sample", "--m", "8", "--config"]
            .iter()
            .map(OsString::from)
            .chain([cfg.clone().into_os_string()])
            .collect();
        let got = expand(argv).unwrap();
        assert_eq!(got, ["bin", "sample", "--m", "4", "--m", "8"].map(OsString::from));
    }
}
