use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::Failure;

/// Header lines identifying the configuration, seed and tool version.
#[derive(Clone, Debug)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new(canonical_config: &str, seed: Option<u64>) -> Self {
        Self { config_hash: hex::encode(Sha256::digest(canonical_config.as_bytes())), seed }
    }

    pub fn lines(&self) -> Vec<String> {
        vec![
            format!("quadest {}", env!("CARGO_PKG_VERSION")),
            format!("config_sha256={}", self.config_hash),
            format!("seed={}", self.seed.map(|s| s.to_string()).unwrap_or_else(|| "none".into())),
        ]
    }

    /// `# `-prefixed header for CSV outputs.
    pub fn csv_header(&self) -> String {
        self.lines().iter().map(|l| format!("# {l}\n")).collect()
    }

    pub fn write_csv(&self, out: &mut dyn Write, body: &[u8]) -> Result<(), Failure> {
        out.write_all(self.csv_header().as_bytes()).map_err(Failure::io("output"))?;
        out.write_all(body).map_err(Failure::io("output"))
    }

    pub fn write_csv_file(&self, path: &Path, body: &[u8]) -> Result<(), Failure> {
        let mut f = fs::File::create(path).map_err(Failure::io(path.display()))?;
        self.write_csv(&mut f, body)
    }

    /// Inserts the header as an XML comment after the SVG prolog.
    pub fn stamp_svg(&self, path: &Path) -> Result<(), Failure> {
        let text = fs::read_to_string(path).map_err(Failure::io(path.display()))?;
        let comment = format!("<!-- {} -->\n", self.lines().join("; "));
        let stamped = match text.find("?>") {
            Some(i) => format!("{}\n{comment}{}", &text[..i + 2], text[i + 2..].trim_start_matches('\n')),
            None => format!("{comment}{text}"),
        };
        fs::write(path, stamped).map_err(Failure::io(path.display()))
    }
}
