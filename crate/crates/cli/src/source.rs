//! Loading catalogs and mission files named on the command line.

use std::path::Path;
use std::time::Duration;

use orbitrl_core::tle::{fetch_catalog, Catalog};
use orbitrl_core::{MissionConfig, ISS_TLE};

use crate::CliError;

/// Overrides the URL `ingest` downloads when no source is given.
pub const CATALOG_URL_ENV: &str = "ORBITRL_CATALOG_URL";
pub const DEFAULT_CATALOG_URL: &str = "https://celestrak.org/NORAD/elements/gp.php?GROUP=stations&FORMAT=tle";
pub const BUILTIN_CATALOG: &str = "builtin:iss";
const FETCH_TIMEOUT: Duration = Duration::from_secs(30);

pub fn is_url(source: &str) -> bool {
    source.starts_with("http://") || source.starts_with("https://")
}

/// Raw bytes of a catalog given as a path, URL or the built-in ISS set.
pub fn read_catalog_bytes(source: &str) -> Result<Vec<u8>, CliError> {
    if source == BUILTIN_CATALOG {
        return Ok(ISS_TLE.as_bytes().to_vec());
    }
    if is_url(source) {
        return fetch_catalog(source, FETCH_TIMEOUT).map_err(|e| CliError::data(format!("{source}: {e}")));
    }
    std::fs::read(source).map_err(|e| CliError::data(format!("cannot read catalog {source}: {e}")))
}

#[derive(Debug, Clone)]
pub struct LoadedCatalog {
    pub source: String,
    pub bytes: Vec<u8>,
    pub catalog: Catalog,
}

/// Reads and parses a catalog; a catalog without a single valid record is
/// a data error.
pub fn load_catalog(source: Option<&str>) -> Result<LoadedCatalog, CliError> {
    let source = source.unwrap_or(BUILTIN_CATALOG).to_string();
    let bytes = read_catalog_bytes(&source)?;
    let catalog = Catalog::parse(&String::from_utf8_lossy(&bytes));
    if catalog.records.is_empty() {
        return Err(CliError::data(format!(
            "{source}: no valid element sets ({} rejected)",
            catalog.issues.len()
        )));
    }
    Ok(LoadedCatalog { source, bytes, catalog })
}

pub fn load_mission(path: Option<&Path>) -> Result<MissionConfig, CliError> {
    match path {
        None => Ok(MissionConfig::default()),
        Some(p) => MissionConfig::load(p).map_err(CliError::config),
    }
}
