//! Result bundles: a schema-versioned JSON document holding the scenario,
//! the solved objects and the residual ledger.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use risk_sharing::limits::BothLimitRow;
use risk_sharing::{
    ArrowDebreuEquilibrium, BestResponse, LimitReport, Market, Measure, NashDiagnostics, NashEquilibrium, Residual,
};

use crate::error::{IoError, Result};
use crate::histogram::Histogram;
use crate::scenario::Scenario;
use crate::states::StateInfo;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub artifact: String,
    pub version: String,
    #[serde(flatten)]
    pub states: StateInfo,
}

impl Provenance {
    pub fn new(states: StateInfo) -> Self {
        Self {
            artifact: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            states,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponseSection {
    pub agent: usize,
    pub truthful_others: bool,
    /// Reports of the other agents, in agent order with `agent` left out.
    pub reports_others: Vec<Measure>,
    pub response: BestResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum LimitsSection {
    OneAgent(LimitReport),
    Both { rows: Vec<BothLimitRow> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub schema_version: u32,
    pub command: String,
    pub provenance: Provenance,
    pub scenario: Scenario,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub market: Option<Market>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrow_debreu: Option<ArrowDebreuEquilibrium>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nash: Option<NashEquilibrium>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<NashDiagnostics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_response: Option<BestResponseSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<LimitsSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub histograms: Vec<Histogram>,
    pub ledger: Vec<Residual>,
    pub certified: bool,
}

impl ResultBundle {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundle serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let b: ResultBundle = serde_json::from_str(text).map_err(|e| IoError::Parse {
            what: "bundle".into(),
            detail: e.to_string(),
        })?;
        if b.schema_version != SCHEMA_VERSION {
            return Err(IoError::validation(format!(
                "bundle schema version {} is not supported (expected {SCHEMA_VERSION})",
                b.schema_version
            )));
        }
        Ok(b)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&read_text(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn failed(&self) -> impl Iterator<Item = &Residual> {
        self.ledger.iter().filter(|r| !r.passed())
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

/// Writes to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_err = |source: std::io::Error| IoError::File {
        path: path.display().to_string(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(file_err)?;
    tmp.write_all(bytes).map_err(file_err)?;
    tmp.as_file().sync_all().map_err(file_err)?;
    tmp.persist(path).map_err(|e| file_err(e.error))?;
    Ok(())
}
