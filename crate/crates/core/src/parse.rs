//! Parsing of generated target text and decoding of display indices back to
//! canonical schema elements.
//!
//! Parsing never fails. Anything that does not fit the grammar is reported as
//! a [`Diagnostic`] rather than dropped silently.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::prompt::{IndexAssignment, INTENTS_MARKER, REQUESTED_MARKER, STATES_MARKER};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotEntry {
    pub index: usize,
    pub value: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Preamble,
    States,
    Intents,
    Requested,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    MissingStatesMarker,
    MissingIntentsMarker,
    /// Text before `[states]`.
    LeadingText {
        text: String,
    },
    UnrecognizedToken {
        section: Section,
        token: String,
    },
    RepeatedMarker {
        marker: String,
    },
    EmptyValue {
        index: usize,
    },
    IndexOverflow {
        token: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedPrediction {
    pub slot_entries: Vec<SlotEntry>,
    pub intent_indices: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requested_indices: Option<Vec<usize>>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Byte spans of whitespace-delimited tokens.
fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

/// Length of the leading `<digits>:` of a token, if it has one.
fn entry_head(token: &str) -> Option<usize> {
    let digits = token.bytes().take_while(u8::is_ascii_digit).count();
    (digits > 0 && token.as_bytes().get(digits) == Some(&b':')).then_some(digits)
}

fn parse_index(digits: &str, diagnostics: &mut Vec<Diagnostic>, token: &str) -> Option<usize> {
    match digits.parse() {
        Ok(i) => Some(i),
        Err(_) => {
            diagnostics.push(Diagnostic::IndexOverflow {
                token: token.to_string(),
            });
            None
        }
    }
}

/// Splits raw model output into slot entries, intent indices and (when the
/// `[req]` section is present) requested-slot indices.
///
/// Within `[states]`, an entry starts at every token of the form
/// `<digits>:...` and its value runs to the next entry or section marker, so
/// values keep their interior spaces and colons.
pub fn parse(raw: &str) -> ParsedPrediction {
    let spans = token_spans(raw);
    let mut out = ParsedPrediction::default();
    let mut section = Section::Preamble;
    let mut saw_intents = false;
    // (index, value start byte) of the entry being read
    let mut open: Option<(usize, usize)> = None;
    let mut preamble_end = None;

    let close = |open: &mut Option<(usize, usize)>, end: usize, out: &mut ParsedPrediction| {
        if let Some((index, start)) = open.take() {
            let value = raw[start..end].trim();
            if value.is_empty() {
                out.diagnostics.push(Diagnostic::EmptyValue { index });
            } else {
                out.slot_entries.push(SlotEntry {
                    index,
                    value: value.to_string(),
                });
            }
        }
    };

    for &(start, end) in &spans {
        let token = &raw[start..end];
        let marker = match token {
            STATES_MARKER => Some(Section::States),
            INTENTS_MARKER => Some(Section::Intents),
            REQUESTED_MARKER => Some(Section::Requested),
            _ => None,
        };
        if let Some(next) = marker {
            if section == Section::Preamble {
                if next != Section::States {
                    preamble_end = Some(end);
                    continue;
                }
                if let Some(e) = preamble_end {
                    out.diagnostics.push(Diagnostic::LeadingText {
                        text: raw[..e].trim().to_string(),
                    });
                }
                section = Section::States;
                continue;
            }
            close(&mut open, start, &mut out);
            let repeated = match next {
                Section::States | Section::Preamble => true,
                Section::Intents => saw_intents,
                Section::Requested => out.requested_indices.is_some(),
            };
            if repeated {
                out.diagnostics.push(Diagnostic::RepeatedMarker {
                    marker: token.to_string(),
                });
                continue;
            }
            match next {
                Section::Intents => saw_intents = true,
                Section::Requested => out.requested_indices = Some(Vec::new()),
                _ => {}
            }
            section = next;
            continue;
        }

        match section {
            Section::Preamble => preamble_end = Some(end),
            Section::States => {
                if let Some(digits) = entry_head(token) {
                    if let Some(index) = parse_index(&token[..digits], &mut out.diagnostics, token)
                    {
                        close(&mut open, start, &mut out);
                        open = Some((index, start + digits + 1));
                        continue;
                    }
                }
                if open.is_none() {
                    out.diagnostics.push(Diagnostic::UnrecognizedToken {
                        section,
                        token: token.to_string(),
                    });
                }
            }
            Section::Intents => {
                let index = token
                    .strip_prefix('i')
                    .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
                    .and_then(|d| parse_index(d, &mut out.diagnostics, token));
                match index {
                    Some(i) => out.intent_indices.push(i),
                    None => out.diagnostics.push(Diagnostic::UnrecognizedToken {
                        section,
                        token: token.to_string(),
                    }),
                }
            }
            Section::Requested => {
                let index = Some(token)
                    .filter(|d| d.bytes().all(|b| b.is_ascii_digit()))
                    .and_then(|d| parse_index(d, &mut out.diagnostics, token));
                match (index, out.requested_indices.as_mut()) {
                    (Some(i), Some(req)) => req.push(i),
                    _ => out.diagnostics.push(Diagnostic::UnrecognizedToken {
                        section,
                        token: token.to_string(),
                    }),
                }
            }
        }
    }
    close(&mut open, raw.len(), &mut out);

    if section == Section::Preamble {
        out.diagnostics.push(Diagnostic::MissingStatesMarker);
        if let Some(e) = preamble_end {
            out.diagnostics.push(Diagnostic::LeadingText {
                text: raw[..e].trim().to_string(),
            });
        }
    } else if !saw_intents {
        out.diagnostics.push(Diagnostic::MissingIntentsMarker);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum DecodeError {
    UnknownSlotIndex { index: usize },
    UnknownIntentIndex { index: usize },
    UnknownValueLetter { slot: String, raw: String },
    DuplicateSlot { slot: String, index: usize },
    UnknownRequestedIndex { index: usize },
}

impl DecodeError {
    /// Errors that concern the slot-value map (and so joint correctness).
    pub fn affects_slots(&self) -> bool {
        matches!(
            self,
            DecodeError::UnknownSlotIndex { .. }
                | DecodeError::UnknownValueLetter { .. }
                | DecodeError::DuplicateSlot { .. }
        )
    }
}

/// How categorical values are read back.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    /// Only `<idx><letter>` is accepted.
    #[default]
    Strict,
    /// Also accepts the value string itself (case-insensitive).
    Lenient,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodedState {
    pub slot_values: BTreeMap<String, String>,
    pub active_intents: BTreeSet<String>,
    #[serde(default)]
    pub requested_slots: BTreeSet<String>,
    #[serde(default)]
    pub errors: Vec<DecodeError>,
}

impl DecodedState {
    pub fn has_slot_errors(&self) -> bool {
        self.errors.iter().any(DecodeError::affects_slots)
    }
}

fn categorical_value(
    assignment: &IndexAssignment,
    slot: &str,
    index: usize,
    raw: &str,
    mode: DecodeMode,
) -> Option<String> {
    let by_letter = raw
        .strip_prefix(&index.to_string())
        .and_then(|letter| assignment.value_of(slot, letter));
    if let Some(value) = by_letter {
        return Some(value.to_string());
    }
    match mode {
        DecodeMode::Strict => None,
        DecodeMode::Lenient => {
            let wanted = raw
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" ")
                .to_lowercase();
            assignment
                .value_letters
                .get(slot)?
                .iter()
                .find(|v| v.to_lowercase() == wanted)
                .cloned()
        }
    }
}

/// Maps display indices to canonical ids. Never aborts: problems are listed
/// in `errors` and the offending entries left out. Duplicate slot indices
/// keep their first occurrence.
pub fn decode(
    parsed: &ParsedPrediction,
    assignment: &IndexAssignment,
    mode: DecodeMode,
) -> DecodedState {
    let mut out = DecodedState::default();
    let mut seen = BTreeSet::new();
    for entry in &parsed.slot_entries {
        let Some(slot) = assignment.slot_order.get(entry.index) else {
            out.errors
                .push(DecodeError::UnknownSlotIndex { index: entry.index });
            continue;
        };
        if !seen.insert(entry.index) {
            out.errors.push(DecodeError::DuplicateSlot {
                slot: slot.clone(),
                index: entry.index,
            });
            continue;
        }
        let value = if assignment.is_categorical(slot) {
            match categorical_value(assignment, slot, entry.index, &entry.value, mode) {
                Some(v) => v,
                None => {
                    out.errors.push(DecodeError::UnknownValueLetter {
                        slot: slot.clone(),
                        raw: entry.value.clone(),
                    });
                    continue;
                }
            }
        } else {
            entry.value.clone()
        };
        out.slot_values.insert(slot.clone(), value);
    }
    for &index in &parsed.intent_indices {
        match assignment.intent_order.get(index) {
            Some(intent) => {
                out.active_intents.insert(intent.clone());
            }
            None => out.errors.push(DecodeError::UnknownIntentIndex { index }),
        }
    }
    for &index in parsed.requested_indices.iter().flatten() {
        match assignment.slot_order.get(index) {
            Some(slot) => {
                out.requested_slots.insert(slot.clone());
            }
            None => out
                .errors
                .push(DecodeError::UnknownRequestedIndex { index }),
        }
    }
    out
}

/// One raw model output, as written by a trainer or by the oracle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub raw: String,
    /// Requested slots predicted outside the target grammar, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requested_slots: Option<BTreeSet<String>>,
}

/// Decoded output line: the canonical state plus errors and parse diagnostics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodedRecord {
    pub dialogue_id: String,
    pub turn_index: usize,
    #[serde(flatten)]
    pub state: DecodedState,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
}

/// Parses and decodes one prediction. Externally supplied requested slots
/// are merged into the decoded state.
pub fn decode_record(
    prediction: &PredictionRecord,
    assignment: &IndexAssignment,
    mode: DecodeMode,
) -> DecodedRecord {
    let parsed = parse(&prediction.raw);
    let mut state = decode(&parsed, assignment, mode);
    if let Some(requested) = &prediction.requested_slots {
        state.requested_slots.extend(requested.iter().cloned());
    }
    DecodedRecord {
        dialogue_id: prediction.dialogue_id.clone(),
        turn_index: prediction.turn_index,
        state,
        diagnostics: parsed.diagnostics,
    }
}
