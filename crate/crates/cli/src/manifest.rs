//! Run manifests and the `#` header block stamped on every output file.

use cvqkd::params::SystemParams;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub const TOOL: &str = "cvqkd";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    /// Hash of everything that determines the data: tool version, command,
    /// resolved flags and parameters. Output paths and times are excluded.
    pub id: String,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub flags: BTreeMap<String, String>,
    pub seed: u64,
    pub params: BTreeMap<String, String>,
    pub outputs: Vec<PathBuf>,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub wall_time_s: f64,
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn params_map(p: &SystemParams) -> BTreeMap<String, String> {
    p.to_config_text()
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

impl RunManifest {
    pub fn new(command: &str, flags: BTreeMap<String, String>, params: &SystemParams) -> Self {
        let params_text = params.to_config_text();
        let mut h = Sha256::new();
        h.update(format!("{TOOL} {VERSION}\n{command}\n").as_bytes());
        for (k, v) in &flags {
            h.update(format!("{k}={v}\n").as_bytes());
        }
        h.update(params_text.as_bytes());
        let id = hex::encode(&h.finalize()[..8]);
        let t = now();
        Self {
            id,
            tool: TOOL,
            version: VERSION,
            command: command.to_string(),
            flags,
            seed: params.seed,
            params: params_map(params),
            outputs: Vec::new(),
            started_unix_s: t,
            finished_unix_s: t,
            wall_time_s: 0.0,
        }
    }

    /// `#` lines placed at the top of every data file.
    pub fn header(&self) -> String {
        let mut s = format!("# {TOOL} {VERSION} {}\n# manifest_id: {}\n", self.command, self.id);
        for (k, v) in &self.flags {
            s.push_str(&format!("# flag {k} = {v}\n"));
        }
        s
    }

    /// Writes `body` (prefixed by the header) to `path`, or to stdout.
    pub fn emit(&mut self, path: Option<&Path>, body: &str) -> io::Result<()> {
        let text = format!("{}{body}", self.header());
        match path {
            Some(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir)?;
                }
                fs::write(p, text)?;
                self.outputs.push(p.to_path_buf());
            }
            None => io::stdout().write_all(text.as_bytes())?,
        }
        Ok(())
    }

    /// Stamps the finish time and writes `<primary>.manifest.json`.
    pub fn finish(&mut self, primary: Option<&Path>) -> io::Result<Option<PathBuf>> {
        self.finished_unix_s = now();
        self.wall_time_s = self.finished_unix_s - self.started_unix_s;
        let Some(primary) = primary else {
            return Ok(None);
        };
        let mut name = primary.as_os_str().to_owned();
        name.push(".manifest.json");
        let path = PathBuf::from(name);
        let json = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        fs::write(&path, json + "\n")?;
        Ok(Some(path))
    }
}
