use std::path::Path;

use anyhow::Context;
use clap::Args;
use dstk::{DescriptionStyle, PrefixScope};
use serde::{Deserialize, Serialize};

/// Options shared by several subcommands. Every field may also come from the
/// TOML file given with `--config`; flags win.
#[derive(Debug, Clone, Default, Args)]
pub struct SharedFlags {
    /// TOML file with defaults for the options below
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    /// Description style: language, name, random or random:<seed>
    #[arg(long)]
    pub style: Option<DescriptionStyle>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Maximum input length in characters
    #[arg(long)]
    pub budget: Option<usize>,
    /// Randomise slot and intent indices per example
    #[arg(long)]
    pub shuffle: bool,
    /// Randomise the letter order of categorical values per example
    #[arg(long)]
    pub shuffle_values: bool,
    /// Which schemata go into each prefix: active-services, dialogue-services or all
    #[arg(long, value_parser = parse_scope)]
    pub scope: Option<PrefixScope>,
    /// Prepend "<domain>-" to language descriptions
    #[arg(long)]
    pub domain_prefix: bool,
    /// Append the requested-slot section to targets
    #[arg(long)]
    pub include_requested: bool,
    /// Drop a trailing "train station" from train departure/destination values
    #[arg(long)]
    pub strip_train_station: bool,
    /// Keep the valid part of a turn when some entries fail to decode
    #[arg(long)]
    pub lenient: bool,
}

fn parse_scope(s: &str) -> Result<PrefixScope, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
        format!("unknown scope {s:?} (expected active-services, dialogue-services or all)")
    })
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    style: Option<String>,
    seed: Option<u64>,
    budget: Option<usize>,
    shuffle: Option<bool>,
    shuffle_values: Option<bool>,
    scope: Option<PrefixScope>,
    domain_prefix: Option<bool>,
    include_requested: Option<bool>,
    strip_train_station: Option<bool>,
    lenient: Option<bool>,
}

/// Fully resolved settings; this is what output headers record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub style: DescriptionStyle,
    pub seed: u64,
    pub budget: Option<usize>,
    pub shuffle: bool,
    pub shuffle_values: bool,
    pub scope: PrefixScope,
    pub domain_prefix: bool,
    pub include_requested: bool,
    pub strip_train_station: bool,
    pub lenient: bool,
}

impl SharedFlags {
    pub fn resolve(&self, default_scope: PrefixScope) -> anyhow::Result<Settings> {
        let file = match &self.config {
            Some(path) => read_config(path)?,
            None => FileConfig::default(),
        };
        let style = match (self.style, &file.style) {
            (Some(style), _) => style,
            (None, Some(s)) => s
                .parse()
                .map_err(anyhow::Error::msg)
                .context("style in config file")?,
            (None, None) => DescriptionStyle::Language,
        };
        Ok(Settings {
            style,
            seed: self.seed.or(file.seed).unwrap_or(0),
            budget: self.budget.or(file.budget),
            shuffle: self.shuffle || file.shuffle.unwrap_or(false),
            shuffle_values: self.shuffle_values || file.shuffle_values.unwrap_or(false),
            scope: self.scope.or(file.scope).unwrap_or(default_scope),
            domain_prefix: self.domain_prefix || file.domain_prefix.unwrap_or(false),
            include_requested: self.include_requested || file.include_requested.unwrap_or(false),
            strip_train_station: self.strip_train_station
                || file.strip_train_station.unwrap_or(false),
            lenient: self.lenient || file.lenient.unwrap_or(false),
        })
    }
}

fn read_config(path: &Path) -> anyhow::Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}
