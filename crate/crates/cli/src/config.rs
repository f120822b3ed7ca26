//! Flat `key = value` config files with `[subcommand]` sections.
//!
//! Keys before any section apply to every subcommand. Values become
//! `--key value` arguments placed in front of the command-line flags, so the
//! command line wins when both give a key.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config line {line}: {msg}")]
    Syntax { line: usize, msg: String },
}

/// Section name → ordered (key, value) pairs. The global section is "".
#[derive(Debug, Default, Clone, PartialEq)]
pub struct ConfigFile {
    pub sections: BTreeMap<String, Vec<(String, String)>>,
}

fn valid_key(k: &str) -> bool {
    !k.is_empty() && k.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut out = ConfigFile::default();
        let mut section = String::new();
        out.sections.entry(section.clone()).or_default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            let syntax = |msg: &str| ConfigError::Syntax { line: i + 1, msg: msg.into() };
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| syntax("unterminated section header"))?.trim();
                if !valid_key(name) {
                    return Err(syntax("bad section name"));
                }
                section = name.to_string();
                out.sections.entry(section.clone()).or_default();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| syntax("expected key = value"))?;
            let (k, v) = (k.trim(), v.trim());
            if !valid_key(k) {
                return Err(syntax("bad key"));
            }
            if v.is_empty() {
                return Err(syntax("empty value"));
            }
            out.sections.get_mut(&section).unwrap().push((k.to_string(), v.to_string()));
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Arguments for `subcommand`: global keys first, then the section.
    /// Global keys the subcommand does not `accept` are skipped; unknown
    /// section keys are kept so the parser reports them.
    /// `true` turns into a bare flag and `false` drops the key; a key given
    /// as a list (`force = a; b`) repeats the flag.
    pub fn args_for(&self, subcommand: &str, accepts: impl Fn(&str) -> bool) -> Vec<String> {
        let mut args = Vec::new();
        for name in ["", subcommand] {
            let Some(pairs) = self.sections.get(name) else { continue };
            for (k, v) in pairs {
                if name.is_empty() && !accepts(k) {
                    continue;
                }
                let flag = format!("--{k}");
                match v.as_str() {
                    "true" => args.push(flag),
                    "false" => {}
                    _ => {
                        for part in v.split(';').map(str::trim).filter(|p| !p.is_empty()) {
                            args.push(flag.clone());
                            args.push(part.to_string());
                        }
                    }
                }
            }
        }
        args
    }
}

/// Locate `--config PATH` (or `--config=PATH`) in raw arguments.
pub fn find_config_arg(args: &[String]) -> Option<String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

/// Splice config arguments right after the subcommand token so that flags
/// typed later on the command line override them.
pub fn splice(args: &[String], subcommands: &[&str], cfg: &ConfigFile, accepts: impl Fn(&str, &str) -> bool) -> Vec<String> {
    let pos = args.iter().skip(1).position(|a| subcommands.contains(&a.as_str())).map(|p| p + 1);
    match pos {
        Some(p) => {
            let mut out = args[..=p].to_vec();
            let sub = args[p].as_str();
            out.extend(cfg.args_for(sub, |k| accepts(sub, k)));
            out.extend_from_slice(&args[p + 1..]);
            out
        }
        None => args.to_vec(),
    }
}
