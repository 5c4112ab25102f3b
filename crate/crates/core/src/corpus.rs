//! Dialogue model with cumulative per-turn gold states, plus readers for the
//! SGD-native layout and the canonical JSONL interchange format.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::jsonl::{self, JsonlError};
use crate::schema::{canonical_id, Catalog};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("dialogue {dialogue}, turn {turn}: unknown service {service:?}")]
    UnknownService {
        dialogue: String,
        turn: usize,
        service: String,
    },
    #[error("dialogue {dialogue}, turn {turn}: unknown slot {slot:?}")]
    UnknownSlot {
        dialogue: String,
        turn: usize,
        slot: String,
    },
    #[error("dialogue {dialogue}, turn {turn}: unknown intent {intent:?}")]
    UnknownIntent {
        dialogue: String,
        turn: usize,
        intent: String,
    },
    #[error("dialogue {dialogue}, turn {turn}: unknown speaker {speaker:?}")]
    UnknownSpeaker {
        dialogue: String,
        turn: usize,
        speaker: String,
    },
    #[error("line {line}: {message}")]
    InvalidLine { line: usize, message: String },
    #[error("dialogue {dialogue}: {message}")]
    Invalid { dialogue: String, message: String },
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Speaker {
    User,
    System,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
}

impl Utterance {
    pub fn user(text: impl Into<String>) -> Self {
        Utterance {
            speaker: Speaker::User,
            text: text.into(),
        }
    }

    pub fn system(text: impl Into<String>) -> Self {
        Utterance {
            speaker: Speaker::System,
            text: text.into(),
        }
    }
}

/// Cumulative belief state after a user utterance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnState {
    pub slot_values: BTreeMap<String, String>,
    pub active_intents: BTreeSet<String>,
    pub requested_slots: BTreeSet<String>,
    /// Every acceptable surface string for slots that have more than one;
    /// the first entry equals the value in `slot_values`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub slot_alternatives: BTreeMap<String, Vec<String>>,
}

impl TurnState {
    pub fn is_empty(&self) -> bool {
        self.slot_values.is_empty()
            && self.active_intents.is_empty()
            && self.requested_slots.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub index: usize,
    #[serde(with = "user_text")]
    pub user: Utterance,
    #[serde(with = "system_text")]
    pub system_response: Option<Utterance>,
    pub state: TurnState,
    pub active_services: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub services: Vec<String>,
    pub turns: Vec<DialogueTurn>,
}

impl Dialogue {
    pub fn validate(&self) -> Result<(), String> {
        for (i, turn) in self.turns.iter().enumerate() {
            if turn.index != i {
                return Err(format!("turn indices not contiguous at position {i}"));
            }
            if turn.user.speaker != Speaker::User {
                return Err(format!("turn {i}: user utterance has speaker SYSTEM"));
            }
            if turn
                .system_response
                .as_ref()
                .is_some_and(|u| u.speaker != Speaker::System)
            {
                return Err(format!("turn {i}: system response has speaker USER"));
            }
            if let Some((slot, _)) = turn.state.slot_values.iter().find(|(_, v)| v.is_empty()) {
                return Err(format!("turn {i}: empty value for slot {slot}"));
            }
            if let Some(service) = turn
                .active_services
                .iter()
                .find(|s| !self.services.contains(s))
            {
                return Err(format!(
                    "turn {i}: active service {service} not in services"
                ));
            }
        }
        Ok(())
    }

    /// The service a dialogue is bucketed under: its first listed service.
    pub fn primary_domain(&self) -> Option<&str> {
        self.services.first().map(String::as_str)
    }
}

mod user_text {
    use super::Utterance;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(u: &Utterance, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&u.text)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Utterance, D::Error> {
        String::deserialize(d).map(Utterance::user)
    }
}

mod system_text {
    use super::Utterance;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(u: &Option<Utterance>, s: S) -> Result<S::Ok, S::Error> {
        match u {
            Some(u) => s.serialize_some(&u.text),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Utterance>, D::Error> {
        Option::<String>::deserialize(d).map(|t| t.map(Utterance::system))
    }
}

pub fn read_canonical(reader: impl BufRead) -> Result<Vec<Dialogue>, CorpusError> {
    let mut dialogues = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: "<canonical>".into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let invalid = |message: String| CorpusError::InvalidLine {
            line: i + 1,
            message,
        };
        let dialogue: Dialogue = serde_json::from_str(&line).map_err(|e| invalid(e.to_string()))?;
        dialogue.validate().map_err(invalid)?;
        dialogues.push(dialogue);
    }
    Ok(dialogues)
}

pub fn write_canonical(writer: impl Write, dialogues: &[Dialogue]) -> Result<(), CorpusError> {
    jsonl::write(writer, dialogues)?;
    Ok(())
}

pub fn load_canonical(path: impl AsRef<Path>) -> Result<Vec<Dialogue>, CorpusError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_canonical(std::io::BufReader::new(file))
}

/// Which frames of a user turn mark a service as active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameLayout {
    /// SGD: only active services have frames.
    Sgd,
    /// MultiWOZ 2.2: every domain has a frame; active ones carry an intent,
    /// slot values or requests.
    MultiWoz22,
}

#[derive(Deserialize)]
struct RawDialogue {
    dialogue_id: String,
    #[serde(default)]
    services: Vec<String>,
    turns: Vec<RawTurn>,
}

#[derive(Deserialize)]
struct RawTurn {
    speaker: String,
    utterance: String,
    #[serde(default)]
    frames: Vec<RawFrame>,
}

#[derive(Deserialize)]
struct RawFrame {
    service: String,
    #[serde(default)]
    state: Option<RawState>,
}

#[derive(Deserialize, Default)]
struct RawState {
    #[serde(default)]
    active_intent: Option<String>,
    #[serde(default)]
    requested_slots: Vec<String>,
    #[serde(default)]
    slot_values: BTreeMap<String, Vec<String>>,
}

/// Reads every `dialogues_*.json` file under `dir` (sorted by file name), or
/// a single file when `dir` is a file.
pub fn read_sgd(dir: impl AsRef<Path>, catalog: &Catalog) -> Result<Vec<Dialogue>, CorpusError> {
    read_sgd_layout(dir, catalog, FrameLayout::Sgd)
}

/// MultiWOZ 2.2 ships in the SGD layout with one frame per domain.
pub fn read_multiwoz22(
    dir: impl AsRef<Path>,
    catalog: &Catalog,
) -> Result<Vec<Dialogue>, CorpusError> {
    read_sgd_layout(dir, catalog, FrameLayout::MultiWoz22)
}

pub fn read_sgd_layout(
    dir: impl AsRef<Path>,
    catalog: &Catalog,
    layout: FrameLayout,
) -> Result<Vec<Dialogue>, CorpusError> {
    let mut dialogues = Vec::new();
    for path in dialogue_files(dir.as_ref())? {
        let text = std::fs::read_to_string(&path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        dialogues.extend(
            parse_sgd_dialogues(&text, catalog, layout).map_err(|e| match e {
                CorpusError::Json { source, .. } => CorpusError::Json {
                    path: path.display().to_string(),
                    source,
                },
                other => other,
            })?,
        );
    }
    Ok(dialogues)
}

fn dialogue_files(dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    if dir.is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let io = |source| CorpusError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        let is_dialogue_file = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("dialogues_") && n.ends_with(".json"));
        if is_dialogue_file {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Parses one SGD-layout dialogue file (a JSON array of dialogues).
pub fn parse_sgd_dialogues(
    text: &str,
    catalog: &Catalog,
    layout: FrameLayout,
) -> Result<Vec<Dialogue>, CorpusError> {
    let raw: Vec<RawDialogue> = serde_json::from_str(text).map_err(|source| CorpusError::Json {
        path: "<input>".into(),
        source,
    })?;
    raw.into_iter()
        .map(|d| convert_dialogue(d, catalog, layout))
        .collect()
}

fn convert_dialogue(
    raw: RawDialogue,
    catalog: &Catalog,
    layout: FrameLayout,
) -> Result<Dialogue, CorpusError> {
    let id = raw.dialogue_id;
    let mut services = raw.services;
    let mut turns: Vec<DialogueTurn> = Vec::new();
    // a user turn waiting for its system response
    let mut open = false;

    for (position, raw_turn) in raw.turns.into_iter().enumerate() {
        match raw_turn.speaker.to_ascii_uppercase().as_str() {
            "USER" => {
                let (state, active) =
                    merge_frames(&id, position, &raw_turn.frames, catalog, layout)?;
                for service in &active {
                    if !services.contains(service) {
                        services.push(service.clone());
                    }
                }
                turns.push(DialogueTurn {
                    index: turns.len(),
                    user: Utterance::user(raw_turn.utterance),
                    system_response: None,
                    state,
                    active_services: active,
                });
                open = true;
            }
            "SYSTEM" => {
                if !open {
                    // system-initiated exchange: empty user segment, no state
                    turns.push(DialogueTurn {
                        index: turns.len(),
                        user: Utterance::user(""),
                        system_response: None,
                        state: TurnState::default(),
                        active_services: BTreeSet::new(),
                    });
                }
                if let Some(last) = turns.last_mut() {
                    last.system_response = Some(Utterance::system(raw_turn.utterance));
                }
                open = false;
            }
            other => {
                return Err(CorpusError::UnknownSpeaker {
                    dialogue: id,
                    turn: position,
                    speaker: other.to_string(),
                })
            }
        }
    }
    let dialogue = Dialogue {
        id,
        services,
        turns,
    };
    dialogue
        .validate()
        .map_err(|message| CorpusError::Invalid {
            dialogue: dialogue.id.clone(),
            message,
        })?;
    Ok(dialogue)
}

fn merge_frames(
    dialogue: &str,
    position: usize,
    frames: &[RawFrame],
    catalog: &Catalog,
    layout: FrameLayout,
) -> Result<(TurnState, BTreeSet<String>), CorpusError> {
    let mut state = TurnState::default();
    let mut active = BTreeSet::new();
    let empty = RawState::default();
    for frame in frames {
        let schema = catalog
            .schema(&frame.service)
            .ok_or_else(|| CorpusError::UnknownService {
                dialogue: dialogue.to_string(),
                turn: position,
                service: frame.service.clone(),
            })?;
        let raw_state = frame.state.as_ref().unwrap_or(&empty);
        let intent = raw_state
            .active_intent
            .as_deref()
            .filter(|i| !i.eq_ignore_ascii_case("NONE") && !i.is_empty());
        let carries_state = intent.is_some()
            || !raw_state.slot_values.is_empty()
            || !raw_state.requested_slots.is_empty();
        if layout == FrameLayout::Sgd || carries_state {
            active.insert(schema.name.clone());
        }

        for (slot, values) in &raw_state.slot_values {
            let id = canonical_id(&schema.name, slot);
            if catalog.slot(&id).is_none() {
                return Err(CorpusError::UnknownSlot {
                    dialogue: dialogue.to_string(),
                    turn: position,
                    slot: id,
                });
            }
            let values: Vec<String> = values.iter().filter(|v| !v.is_empty()).cloned().collect();
            let Some(first) = values.first() else {
                continue;
            };
            state.slot_values.insert(id.clone(), first.clone());
            if values.len() > 1 {
                state.slot_alternatives.insert(id, values);
            }
        }
        for slot in &raw_state.requested_slots {
            let id = canonical_id(&schema.name, slot);
            if catalog.slot(&id).is_none() {
                return Err(CorpusError::UnknownSlot {
                    dialogue: dialogue.to_string(),
                    turn: position,
                    slot: id,
                });
            }
            state.requested_slots.insert(id);
        }
        if let Some(intent) = intent {
            let id = canonical_id(&schema.name, intent);
            if catalog.intent(&id).is_none() {
                return Err(CorpusError::UnknownIntent {
                    dialogue: dialogue.to_string(),
                    turn: position,
                    intent: id,
                });
            }
            state.active_intents.insert(id);
        }
    }
    Ok((state, active))
}
