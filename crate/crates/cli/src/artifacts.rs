//! Output files. JSON artifacts carry a `meta` object; CSV artifacts start
//! with a `#` comment line holding the same fields, then the header row.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Meta {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Self { command: command.into(), config_hash: config.hash(), seed: config.seed, version: VERSION.into() }
    }

    pub fn csv_comment(&self) -> String {
        format!(
            "# longsurv {} command={} seed={} config_hash={}\n",
            self.version, self.command, self.seed, self.config_hash
        )
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("meta serializes")
    }
}

pub struct OutDir {
    root: PathBuf,
    quiet: bool,
}

impl OutDir {
    pub fn create(root: &Path, quiet: bool) -> anyhow::Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root: root.to_path_buf(), quiet })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn announce(&self, path: &Path) {
        if !self.quiet {
            eprintln!("wrote {}", path.display());
        }
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    /// `body` must start with its header row.
    pub fn write_csv(&self, name: &str, meta: &Meta, body: &str) -> anyhow::Result<PathBuf> {
        self.write_text(name, &(meta.csv_comment() + body))
    }

    pub fn write_text(&self, name: &str, text: &str) -> anyhow::Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.announce(&path);
        Ok(path)
    }
}

/// Quotes a CSV field when needed.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn csv_row<I, S>(fields: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut row = fields.into_iter().map(|f| csv_field(f.as_ref())).collect::<Vec<_>>().join(",");
    row.push('\n');
    row
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_row(["a", "b,c", "d\"e"]), "a,\"b,c\",\"d\"\"e\"\n");
    }

    #[test]
    fn meta_comment_is_one_line() {
        let m = Meta::new("train", &ExperimentConfig::default());
        let c = m.csv_comment();
        assert!(c.starts_with("# longsurv "));
        assert_eq!(c.matches('\n').count(), 1);
        assert!(c.contains(&m.config_hash));
    }
}
