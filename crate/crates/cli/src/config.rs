//! `key = value` config files, spliced into the argument list before the
//! explicit flags so that the latter win.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use crate::error::CliError;

/// Parse config text into flag arguments. `#` starts a comment, keys may be
/// written with or without the leading `--`, `true` gives a bare flag and
/// `false` omits it.
pub fn config_args(text: &str, path: &Path) -> Result<Vec<OsString>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "{}:{}: expected `key = value`",
                path.display(),
                i + 1
            )));
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim().trim_matches('"');
        if key.is_empty() {
            return Err(CliError::Usage(format!("{}:{}: empty key", path.display(), i + 1)));
        }
        match value {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            v => {
                out.push(format!("--{key}").into());
                out.push(v.into());
            }
        }
    }
    Ok(out)
}

/// Options that take a value and may precede the subcommand.
const GLOBAL_WITH_VALUE: [&str; 2] = ["--config", "--threads"];

/// Strip `--config FILE` from `argv` and insert the file's flags right after
/// the subcommand name. Returns the new argument list and the config path.
pub fn expand(argv: Vec<OsString>) -> Result<(Vec<OsString>, Option<PathBuf>), CliError> {
    let mut args = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut iter = argv.into_iter();
    if let Some(bin) = iter.next() {
        args.push(bin);
    }
    while let Some(a) = iter.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            let v = iter
                .next()
                .ok_or_else(|| CliError::Usage("--config needs a file".into()))?;
            config = Some(PathBuf::from(v));
        } else if let Some(v) = s.strip_prefix("--config=") {
            config = Some(PathBuf::from(v));
        } else {
            args.push(a);
        }
    }
    let Some(path) = config else {
        return Ok((args, None));
    };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let extra = config_args(&text, &path)?;

    let mut pos = 1;
    while pos < args.len() {
        let s = args[pos].to_string_lossy();
        if GLOBAL_WITH_VALUE.contains(&s.as_ref()) {
            pos += 2;
        } else if s.starts_with('-') {
            pos += 1;
        } else {
            break;
        }
    }
    if pos >= args.len() {
        return Err(CliError::Usage("--config needs a subcommand".into()));
    }
    let tail = args.split_off(pos + 1);
    args.extend(extra);
    args.extend(tail);
    Ok((args, Some(path)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[OsString]) -> Vec<String> {
        v.iter().map(|s| s.to_string_lossy().into_owned()).collect()
    }

    #[test]
    fn parses_pairs_flags_and_comments() {
        let text = "# comment\nbeta = 0.2\nkeep_ties = true\nlenient = false\n--steps=10  # trailing\n";
        let args = config_args(text, Path::new("c")).unwrap();
        assert_eq!(strings(&args), ["--beta", "0.2", "--keep-ties", "--steps", "10"]);
    }

    #[test]
    fn rejects_lines_without_equals() {
        assert!(config_args("beta 0.2", Path::new("c")).is_err());
    }

    #[test]
    fn splices_after_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "steps = 5\n").unwrap();
        let argv: Vec<OsString> = [
            "rapref",
            "--threads",
            "2",
            "toy",
            "--config",
            path.to_str().unwrap(),
            "table1",
            "--steps",
            "9",
        ]
        .iter()
        .map(OsString::from)
        .collect();
        let (args, found) = expand(argv).unwrap();
        assert_eq!(found.as_deref(), Some(path.as_path()));
        assert_eq!(
            strings(&args),
            [
                "rapref",
                "--threads",
                "2",
                "toy",
                "--steps",
                "5",
                "table1",
                "--steps",
                "9"
            ]
        );
    }
}
