//! Task schemata: slot and intent definitions and their rendered descriptions.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::jsonl::{self, JsonlError};
use crate::rng;

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema file is not a JSON array of services: {0}")]
    Layout(#[source] serde_json::Error),
    #[error("service {service}: {message}")]
    Service { service: String, message: String },
    #[error("service {service}, slot {slot}: {message}")]
    Slot {
        service: String,
        slot: String,
        message: String,
    },
    #[error("duplicate element id {id:?} (in {schema})")]
    DuplicateId { schema: String, id: String },
    #[error("cannot scramble an empty name")]
    EmptyName,
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotDef {
    pub id: String,
    pub domain: String,
    pub description: String,
    pub is_categorical: bool,
    #[serde(default)]
    pub values: Vec<String>,
}

impl SlotDef {
    pub fn free_text(id: &str, domain: &str, description: &str) -> Self {
        SlotDef {
            id: id.to_string(),
            domain: domain.to_string(),
            description: description.to_string(),
            is_categorical: false,
            values: Vec::new(),
        }
    }

    pub fn categorical(id: &str, domain: &str, description: &str, values: &[&str]) -> Self {
        SlotDef {
            id: id.to_string(),
            domain: domain.to_string(),
            description: description.to_string(),
            is_categorical: true,
            values: values.iter().map(|v| v.to_string()).collect(),
        }
    }

    fn validate(&self, schema: &str) -> Result<(), SchemaError> {
        let fail = |message: &str| SchemaError::Slot {
            service: schema.to_string(),
            slot: self.id.clone(),
            message: message.to_string(),
        };
        if self.is_categorical && self.values.is_empty() {
            return Err(fail("categorical slot has no possible values"));
        }
        if !self.is_categorical && !self.values.is_empty() {
            return Err(fail("non-categorical slot lists possible values"));
        }
        let mut seen = HashSet::new();
        for value in &self.values {
            if !seen.insert(value.as_str()) {
                return Err(fail(&format!("duplicate possible value {value:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentDef {
    pub id: String,
    pub domain: String,
    pub description: String,
}

impl IntentDef {
    pub fn new(id: &str, domain: &str, description: &str) -> Self {
        IntentDef {
            id: id.to_string(),
            domain: domain.to_string(),
            description: description.to_string(),
        }
    }
}

/// One service (SGD) or domain (MultiWOZ).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub name: String,
    pub slots: Vec<SlotDef>,
    pub intents: Vec<IntentDef>,
}

impl Schema {
    pub fn validate(&self) -> Result<(), SchemaError> {
        let mut ids = HashSet::new();
        for slot in &self.slots {
            slot.validate(&self.name)?;
            if !ids.insert(slot.id.as_str()) {
                return Err(SchemaError::DuplicateId {
                    schema: self.name.clone(),
                    id: slot.id.clone(),
                });
            }
        }
        let mut intent_ids = HashSet::new();
        for intent in &self.intents {
            if !intent_ids.insert(intent.id.as_str()) {
                return Err(SchemaError::DuplicateId {
                    schema: self.name.clone(),
                    id: intent.id.clone(),
                });
            }
        }
        Ok(())
    }
}

/// How a schema element is presented in the model input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DescriptionStyle {
    /// Human-written description text.
    Language,
    /// The canonical element id.
    Name,
    /// A seeded character permutation of the element id.
    Random { seed: u64 },
}

impl fmt::Display for DescriptionStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DescriptionStyle::Language => f.write_str("language"),
            DescriptionStyle::Name => f.write_str("name"),
            DescriptionStyle::Random { seed } => write!(f, "random:{seed}"),
        }
    }
}

impl FromStr for DescriptionStyle {
    type Err = String;

    /// Accepts `language`, `name`, `random` (seed 0) and `random:<seed>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "language" => Ok(DescriptionStyle::Language),
            "name" => Ok(DescriptionStyle::Name),
            "random" => Ok(DescriptionStyle::Random { seed: 0 }),
            other => match other.strip_prefix("random:") {
                Some(seed) => seed
                    .parse()
                    .map(|seed| DescriptionStyle::Random { seed })
                    .map_err(|_| format!("invalid random seed {seed:?}")),
                None => Err(format!(
                    "unknown description style {s:?} (expected language, name or random[:seed])"
                )),
            },
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Element<'a> {
    Slot(&'a SlotDef),
    Intent(&'a IntentDef),
}

impl<'a> Element<'a> {
    pub fn id(&self) -> &'a str {
        match self {
            Element::Slot(s) => &s.id,
            Element::Intent(i) => &i.id,
        }
    }

    pub fn domain(&self) -> &'a str {
        match self {
            Element::Slot(s) => &s.domain,
            Element::Intent(i) => &i.domain,
        }
    }

    pub fn description(&self) -> &'a str {
        match self {
            Element::Slot(s) => &s.description,
            Element::Intent(i) => &i.description,
        }
    }
}

/// Renders the description of one element under `style`.
///
/// `domain_prefix` only affects the language style, where it prepends
/// `"<domain>-"` to the description. Name and random styles already carry the
/// domain inside the id.
pub fn describe(element: Element<'_>, style: DescriptionStyle, domain_prefix: bool) -> String {
    match style {
        DescriptionStyle::Language if domain_prefix => {
            format!("{}-{}", element.domain(), element.description())
        }
        DescriptionStyle::Language => element.description().to_string(),
        DescriptionStyle::Name => element.id().to_string(),
        DescriptionStyle::Random { seed } => {
            let mut rng = rng::derive(seed, &[b"scramble", element.id().as_bytes()]);
            // ids are validated non-empty on load; an empty id scrambles to itself
            scramble(element.id(), &mut rng).unwrap_or_default()
        }
    }
}

/// Uniformly random permutation of the characters of `name`.
pub fn scramble(name: &str, rng: &mut impl Rng) -> Result<String, SchemaError> {
    if name.is_empty() {
        return Err(SchemaError::EmptyName);
    }
    let mut chars: Vec<char> = name.chars().collect();
    chars.shuffle(rng);
    Ok(chars.into_iter().collect())
}

/// Canonical element id: lowercase `"<service>-<name>"`. Names that already
/// carry the service prefix (MultiWOZ 2.2 slots) are kept as they are.
pub fn canonical_id(service: &str, name: &str) -> String {
    let service = service.to_lowercase();
    let name = name.to_lowercase();
    if name.starts_with(&format!("{service}-")) {
        name
    } else {
        format!("{service}-{name}")
    }
}

#[derive(Deserialize)]
struct SgdService {
    service_name: String,
    #[serde(default)]
    slots: Vec<SgdSlot>,
    #[serde(default)]
    intents: Vec<SgdIntent>,
}

#[derive(Deserialize)]
struct SgdSlot {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    is_categorical: bool,
    #[serde(default)]
    possible_values: Vec<String>,
}

#[derive(Deserialize)]
struct SgdIntent {
    name: String,
    #[serde(default)]
    description: String,
}

/// Parses the SGD `schema.json` layout (also used by MultiWOZ 2.2).
pub fn parse_sgd_schemas(text: &str) -> Result<Vec<Schema>, SchemaError> {
    let services: Vec<Value> = serde_json::from_str(text).map_err(SchemaError::Layout)?;
    services
        .into_iter()
        .enumerate()
        .map(|(i, raw)| {
            let label = raw
                .get("service_name")
                .and_then(Value::as_str)
                .map(str::to_string)
                .unwrap_or_else(|| format!("#{i}"));
            let service: SgdService =
                serde_json::from_value(raw).map_err(|e| SchemaError::Service {
                    service: label.clone(),
                    message: e.to_string(),
                })?;
            sgd_to_schema(service)
        })
        .collect()
}

fn sgd_to_schema(service: SgdService) -> Result<Schema, SchemaError> {
    let name = service.service_name;
    let mut slots = Vec::with_capacity(service.slots.len());
    for slot in service.slots {
        if slot.is_categorical && slot.possible_values.is_empty() {
            return Err(SchemaError::Slot {
                service: name.clone(),
                slot: slot.name,
                message: "categorical slot has no possible values".into(),
            });
        }
        slots.push(SlotDef {
            id: canonical_id(&name, &slot.name),
            domain: name.clone(),
            description: slot.description,
            is_categorical: slot.is_categorical,
            // SGD lists no values for free-text slots; anything there is unused
            values: if slot.is_categorical {
                slot.possible_values
            } else {
                Vec::new()
            },
        });
    }
    let intents = service
        .intents
        .into_iter()
        .map(|intent| IntentDef {
            id: canonical_id(&name, &intent.name),
            domain: name.clone(),
            description: intent.description,
        })
        .collect();
    let schema = Schema {
        name,
        slots,
        intents,
    };
    schema.validate()?;
    Ok(schema)
}

pub fn load_sgd_schemas(path: impl AsRef<Path>) -> Result<Vec<Schema>, SchemaError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SchemaError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_sgd_schemas(&text)
}

/// Canonical export: one [`Schema`] per line.
pub fn write_schemas_jsonl(writer: impl Write, schemas: &[Schema]) -> Result<(), SchemaError> {
    jsonl::write(writer, schemas)?;
    Ok(())
}

pub fn read_schemas_jsonl(reader: impl BufRead) -> Result<Vec<Schema>, SchemaError> {
    let schemas: Vec<Schema> = jsonl::read(reader)?;
    for schema in &schemas {
        schema.validate()?;
    }
    Ok(schemas)
}

/// Loads either layout: a `.jsonl` file is read as the canonical export,
/// anything else as SGD `schema.json`.
pub fn load_schemas(path: impl AsRef<Path>) -> Result<Vec<Schema>, SchemaError> {
    let path = path.as_ref();
    if path.extension().is_some_and(|ext| ext == "jsonl") {
        let file = std::fs::File::open(path).map_err(|source| SchemaError::Io {
            path: path.display().to_string(),
            source,
        })?;
        read_schemas_jsonl(std::io::BufReader::new(file))
    } else {
        load_sgd_schemas(path)
    }
}

/// Lookup tables over a set of schemata.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    schemas: Vec<Schema>,
    by_name: HashMap<String, usize>,
    slots: HashMap<String, (usize, usize)>,
    intents: HashMap<String, (usize, usize)>,
}

impl Catalog {
    /// Element ids must be unique across the whole catalog.
    pub fn new(schemas: Vec<Schema>) -> Result<Self, SchemaError> {
        let mut catalog = Catalog::default();
        for (si, schema) in schemas.iter().enumerate() {
            schema.validate()?;
            if catalog
                .by_name
                .insert(schema.name.to_lowercase(), si)
                .is_some()
            {
                return Err(SchemaError::Service {
                    service: schema.name.clone(),
                    message: "service defined twice".into(),
                });
            }
            for (i, slot) in schema.slots.iter().enumerate() {
                if catalog.slots.insert(slot.id.clone(), (si, i)).is_some() {
                    return Err(SchemaError::DuplicateId {
                        schema: schema.name.clone(),
                        id: slot.id.clone(),
                    });
                }
            }
            for (i, intent) in schema.intents.iter().enumerate() {
                if catalog.intents.insert(intent.id.clone(), (si, i)).is_some() {
                    return Err(SchemaError::DuplicateId {
                        schema: schema.name.clone(),
                        id: intent.id.clone(),
                    });
                }
            }
        }
        catalog.schemas = schemas;
        Ok(catalog)
    }

    pub fn schemas(&self) -> &[Schema] {
        &self.schemas
    }

    /// Case-insensitive lookup by service name.
    pub fn schema(&self, name: &str) -> Option<&Schema> {
        self.by_name
            .get(&name.to_lowercase())
            .map(|&i| &self.schemas[i])
    }

    pub fn slot(&self, id: &str) -> Option<&SlotDef> {
        self.slots.get(id).map(|&(s, i)| &self.schemas[s].slots[i])
    }

    pub fn intent(&self, id: &str) -> Option<&IntentDef> {
        self.intents
            .get(id)
            .map(|&(s, i)| &self.schemas[s].intents[i])
    }

    /// Schemata whose names are in `names`, in catalog order.
    pub fn select<'a>(&'a self, names: impl IntoIterator<Item = &'a str>) -> Vec<&'a Schema> {
        let wanted: HashSet<String> = names.into_iter().map(str::to_lowercase).collect();
        self.schemas
            .iter()
            .filter(|s| wanted.contains(&s.name.to_lowercase()))
            .collect()
    }
}
