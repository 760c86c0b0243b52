//! Output directory with provenance-stamped files.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    /// SHA-256 of the resolved settings as JSON.
    pub config_sha256: String,
}

impl Provenance {
    pub fn new<S: Serialize>(
        command: &'static str,
        seed: u64,
        settings: &S,
    ) -> Result<Self, Failure> {
        let json = serde_json::to_vec(&(command, seed, settings))
            .map_err(|e| Failure::Runtime(e.to_string()))?;
        Ok(Provenance {
            tool: "gr2d2",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            config_sha256: hex::encode(Sha256::digest(&json)),
        })
    }

    /// Comment line placed above CSV headers.
    pub fn csv_line(&self) -> String {
        format!(
            "# {} {} command={} seed={} config_sha256={}\n",
            self.tool, self.version, self.command, self.seed, self.config_sha256
        )
    }
}

#[derive(Serialize)]
struct Envelope<'a, S, R> {
    provenance: &'a Provenance,
    settings: &'a S,
    report: &'a R,
}

pub struct Output {
    dir: PathBuf,
    pub provenance: Provenance,
    pub written: Vec<PathBuf>,
}

impl Output {
    pub fn create(dir: &Path, provenance: Provenance) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir).map_err(|e| {
            Failure::Runtime(format!(
                "cannot create output directory {}: {e}",
                dir.display()
            ))
        })?;
        Ok(Output {
            dir: dir.to_path_buf(),
            provenance,
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        let path = self.dir.join(name);
        let mut f = std::fs::File::create(&path)
            .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
        f.write_all(bytes)
            .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }

    pub fn csv<F>(&mut self, name: &str, body: F) -> Result<(), Failure>
    where
        F: FnOnce(&mut Vec<u8>) -> gr2d2::Result<()>,
    {
        let mut buf = self.provenance.csv_line().into_bytes();
        body(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn json<S: Serialize, R: Serialize>(
        &mut self,
        name: &str,
        settings: &S,
        report: &R,
    ) -> Result<(), Failure> {
        let env = Envelope {
            provenance: &self.provenance,
            settings,
            report,
        };
        let mut text =
            serde_json::to_string_pretty(&env).map_err(|e| Failure::Runtime(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn files(&self) -> Vec<String> {
        self.written
            .iter()
            .map(|p| p.display().to_string())
            .collect()
    }
}
