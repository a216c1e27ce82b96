use std::fs;
use std::path::Path;

use raymimo::rng::RNG_ALGORITHM;
use raymimo::TOOLKIT_VERSION;
use serde::Serialize;

use crate::config::Loaded;
use crate::error::{io, CliError};

pub const PROVENANCE_FILE: &str = "provenance.toml";

/// What produced an artifact. Contains nothing run-specific (no paths,
/// clock times or thread counts) so reruns stay byte-identical.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub toolkit: &'static str,
    pub toolkit_version: &'static str,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub rng_algorithm: &'static str,
}

impl Provenance {
    pub fn new(command: &str, cfg: &Loaded) -> Self {
        Provenance {
            toolkit: "raymimo",
            toolkit_version: TOOLKIT_VERSION,
            command: command.to_string(),
            config_sha256: cfg.sha256.clone(),
            seed: cfg.config.dataset.seed,
            rng_algorithm: RNG_ALGORITHM,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(PROVENANCE_FILE);
        let text = toml::to_string(self).expect("provenance serializes");
        fs::write(&path, text).map_err(io(path))
    }

    /// `#`-prefixed lines placed ahead of a CSV table.
    pub fn csv_preamble(&self, schema: &str) -> String {
        format!(
            "# {} {} {}\n# schema: {schema}\n# config_sha256: {}\n# seed: {}\n# rng: {}\n",
            self.toolkit, self.toolkit_version, self.command, self.config_sha256, self.seed, self.rng_algorithm
        )
    }

    pub fn write_csv(&self, path: &Path, schema: &str, table: &[u8]) -> Result<(), CliError> {
        let mut out = self.csv_preamble(schema).into_bytes();
        out.extend_from_slice(table);
        fs::write(path, out).map_err(io(path))
    }
}
