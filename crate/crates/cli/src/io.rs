use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use dstk::corpus::{read_canonical, read_sgd_layout, FrameLayout};
use dstk::schema::load_schemas;
use dstk::{Catalog, Dialogue};

pub fn is_stdio(path: &Path) -> bool {
    path.as_os_str() == "-"
}

/// Fails unless every path is `-` or exists.
pub fn require_paths<'a>(paths: impl IntoIterator<Item = &'a Path>) -> anyhow::Result<()> {
    for path in paths {
        if !is_stdio(path) && !path.exists() {
            bail!("{}: no such file or directory", path.display());
        }
    }
    Ok(())
}

pub fn open_input(path: &Path) -> anyhow::Result<Box<dyn BufRead>> {
    if is_stdio(path) {
        return Ok(Box::new(BufReader::new(io::stdin().lock())));
    }
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Box::new(BufReader::new(file)))
}

pub fn open_output(path: &Path) -> anyhow::Result<Box<dyn Write>> {
    if is_stdio(path) {
        return Ok(Box::new(BufWriter::new(io::stdout().lock())));
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(Box::new(BufWriter::new(file)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Layout {
    Sgd,
    Multiwoz22,
}

impl From<Layout> for FrameLayout {
    fn from(layout: Layout) -> Self {
        match layout {
            Layout::Sgd => FrameLayout::Sgd,
            Layout::Multiwoz22 => FrameLayout::MultiWoz22,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    /// Schema file: SGD schema.json, a directory holding one, or canonical schema JSONL
    #[arg(long)]
    pub schemas: Option<PathBuf>,
    /// Dialogues: canonical JSONL (or - for stdin), or an SGD-layout file or directory
    #[arg(long)]
    pub dialogues: PathBuf,
    /// Frame layout of SGD-style dialogue files
    #[arg(long, value_enum, default_value = "sgd")]
    pub layout: Layout,
}

impl CorpusArgs {
    pub fn paths(&self) -> Vec<&Path> {
        self.schemas
            .iter()
            .map(PathBuf::as_path)
            .chain([self.dialogues.as_path()])
            .collect()
    }

    fn is_canonical(&self) -> bool {
        is_stdio(&self.dialogues) || self.dialogues.extension().is_some_and(|e| e == "jsonl")
    }

    pub fn catalog(&self) -> anyhow::Result<Option<Catalog>> {
        let Some(path) = &self.schemas else {
            return Ok(None);
        };
        let path = if path.is_dir() {
            path.join("schema.json")
        } else {
            path.clone()
        };
        let schemas = load_schemas(&path)
            .with_context(|| format!("loading schemas from {}", path.display()))?;
        Ok(Some(Catalog::new(schemas)?))
    }

    pub fn dialogues(&self, catalog: Option<&Catalog>) -> anyhow::Result<Vec<Dialogue>> {
        let path = &self.dialogues;
        if self.is_canonical() {
            return read_canonical(open_input(path)?)
                .with_context(|| format!("reading {}", path.display()));
        }
        let Some(catalog) = catalog else {
            bail!("{} is in SGD layout, which needs --schemas", path.display());
        };
        read_sgd_layout(path, catalog, self.layout.into())
            .with_context(|| format!("reading {}", path.display()))
    }
}
