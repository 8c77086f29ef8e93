//! Layered application configuration: flags over `FFC_CONFIG` over defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::grid::GridSpec;

pub const CONFIG_ENV: &str = "FFC_CONFIG";

/// Optional grid settings; unset fields fall through to the next layer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridOverrides {
    pub field_min_x: Option<f64>,
    pub field_min_y: Option<f64>,
    pub field_width: Option<f64>,
    pub field_height: Option<f64>,
    pub cells_x: Option<u32>,
    pub cells_y: Option<u32>,
}

impl GridOverrides {
    /// `self` wins over `lower` field by field.
    pub fn over(self, lower: GridOverrides) -> GridOverrides {
        GridOverrides {
            field_min_x: self.field_min_x.or(lower.field_min_x),
            field_min_y: self.field_min_y.or(lower.field_min_y),
            field_width: self.field_width.or(lower.field_width),
            field_height: self.field_height.or(lower.field_height),
            cells_x: self.cells_x.or(lower.cells_x),
            cells_y: self.cells_y.or(lower.cells_y),
        }
    }

    pub fn resolve(&self) -> Result<GridSpec> {
        let d = GridSpec::default();
        GridSpec::new(
            self.field_min_x.unwrap_or(d.field_min_x()),
            self.field_min_y.unwrap_or(d.field_min_y()),
            self.field_width.unwrap_or(d.field_width()),
            self.field_height.unwrap_or(d.field_height()),
            self.cells_x.unwrap_or(d.cells_x()),
            self.cells_y.unwrap_or(d.cells_y()),
        )
    }
}

/// Contents of a config file (TOML).
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub grid: GridOverrides,
    pub plays: Option<PathBuf>,
    pub verbosity: Option<u8>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppConfig {
    pub grid: GridSpec,
    /// Plays file; `None` means the bundled plays.
    pub plays: Option<PathBuf>,
    pub verbosity: u8,
}

impl AppConfig {
    /// Merges flag values over the optional config file. The resulting grid
    /// is always validated.
    pub fn resolve(
        flags: GridOverrides,
        plays_flag: Option<PathBuf>,
        verbosity_flag: u8,
        file: Option<&ConfigFile>,
    ) -> Result<Self> {
        let file_grid = file.map(|f| f.grid).unwrap_or_default();
        let grid = flags.over(file_grid).resolve()?;
        let plays = plays_flag.or_else(|| file.and_then(|f| f.plays.clone()));
        let verbosity = if verbosity_flag > 0 {
            verbosity_flag
        } else {
            file.and_then(|f| f.verbosity).unwrap_or(0)
        };
        Ok(AppConfig {
            grid,
            plays,
            verbosity,
        })
    }

    /// Reads the file named by `FFC_CONFIG`, if set.
    pub fn file_from_env() -> Result<Option<ConfigFile>> {
        match std::env::var_os(CONFIG_ENV) {
            Some(path) if !path.is_empty() => ConfigFile::load(Path::new(&path)).map(Some),
            _ => Ok(None),
        }
    }
}
