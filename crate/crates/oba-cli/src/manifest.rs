//! Every subcommand drops a `run_manifest.txt` next to its primary output:
//! the command, the seed, a sha256 per input file, and the effective
//! configuration. No timestamps — reruns must be byte-identical.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use oba_core::Result;
use sha2::{Digest, Sha256};

pub struct RunManifest {
    command: String,
    seed: Option<u64>,
    inputs: Vec<(PathBuf, String)>,
    config_text: String,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            seed: None,
            inputs: Vec::new(),
            config_text: String::new(),
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn input(mut self, path: &Path) -> Result<Self> {
        self.inputs.push((path.to_path_buf(), sha256_file(path)?));
        Ok(self)
    }

    pub fn config(mut self, text: &str) -> Self {
        self.config_text = text.to_string();
        self
    }

    /// Write `run_manifest.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!("command = {}\n", self.command));
        if let Some(seed) = self.seed {
            out.push_str(&format!("seed = {seed}\n"));
        }
        for (path, digest) in &self.inputs {
            out.push_str(&format!("input {} sha256 = {digest}\n", path.display()));
        }
        if !self.config_text.is_empty() {
            out.push('\n');
            out.push_str(&self.config_text);
        }
        fs::write(dir.join("run_manifest.txt"), out)?;
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

/// Directory a file-valued output lives in (empty parent means the cwd).
pub fn output_dir(output: &Path) -> PathBuf {
    match output.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}
