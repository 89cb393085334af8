use std::ffi::OsString;
use std::path::Path;

use crate::error::{Error, Result};

const SUBCOMMANDS: [&str; 6] = ["train", "transform", "eval", "cluster", "features", "demo1d"];

/// `key = value` pairs; `#` starts a comment, underscores in keys become hyphens.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("config line {}: expected key = value", n + 1)))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(Error::Usage(format!("config line {}: empty key", n + 1)));
        }
        pairs.push((key, v.trim().to_string()));
    }
    Ok(pairs)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

/// Inserts the flags of a `--config` file right after the subcommand name so
/// that explicit flags, which come later, take precedence.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", Path::new(&path).display())))?;
    let Some(at) = args.iter().position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref())) else {
        return Ok(args);
    };
    let mut injected = Vec::new();
    for (key, value) in parse_config(&text)? {
        match value.as_str() {
            "true" => injected.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                injected.push(format!("--{key}").into());
                injected.push(value.into());
            }
        }
    }
    let mut out = args[..=at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[at + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_comments() {
        let pairs = parse_config("# run\narch = 200x1\n\nbatch_size=32 # smaller\n").unwrap();
        assert_eq!(pairs, vec![("arch".into(), "200x1".into()), ("batch-size".into(), "32".into())]);
        assert!(parse_config("novalue\n").is_err());
    }

    #[test]
    fn config_flags_precede_explicit_ones() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "epochs = 5\nglobal_norm = true\nnormalize = false\n").unwrap();
        let args: Vec<OsString> = ["ccs", "--config", cfg.to_str().unwrap(), "train", "--epochs", "7"]
            .iter()
            .map(OsString::from)
            .collect();
        let out = expand_config(args).unwrap();
        let out: Vec<String> = out.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(&out[3..], ["train", "--epochs", "5", "--global-norm", "--epochs", "7"]);
    }
}
