//! Compilation of a dialogue turn into the indexed-description model input and
//! the indexed state target.
//!
//! Input: `0:<slot> 0a) <value> ... i0:<intent> ... [user] ... [system] ...`.
//! Target: `[states] <idx>:<value> ... [intents] i<idx> ...`, where values of
//! categorical slots are written as the slot-prefixed letter (`1:1a`).

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, DialogueTurn, TurnState};
use crate::rng;
use crate::schema::{describe, Catalog, DescriptionStyle, Element, Schema};

pub const STATES_MARKER: &str = "[states]";
pub const INTENTS_MARKER: &str = "[intents]";
/// Optional requested-slot section; only emitted when enabled.
pub const REQUESTED_MARKER: &str = "[req]";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CompileError {
    #[error("slot {slot}: gold value {value:?} is not one of its categorical values")]
    CategoricalValue { slot: String, value: String },
    #[error("state refers to slot {0} which has no index in the assignment")]
    UnassignedSlot(String),
    #[error("state refers to intent {0} which has no index in the assignment")]
    UnassignedIntent(String),
    #[error("no slots in scope")]
    NoSlotsInScope,
    #[error("service {0} is not in the schema catalog")]
    UnknownService(String),
    #[error("dialogue {dialogue} has no turn {turn}")]
    TurnOutOfRange { dialogue: String, turn: usize },
    #[error("budget of {budget} characters is smaller than the {prefix} character schema prefix")]
    BudgetTooSmall { budget: usize, prefix: usize },
}

/// Letter label of the `i`-th categorical value: `a`..`z`, then `aa`, `ab`, ...
pub fn value_letter(mut i: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'a' + (i % 26) as u8);
        if i < 26 {
            break;
        }
        i = i / 26 - 1;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

/// Inverse of [`value_letter`].
pub fn letter_index(s: &str) -> Option<usize> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_lowercase()) {
        return None;
    }
    let mut n: usize = 0;
    for b in s.bytes() {
        n = n.checked_mul(26)?.checked_add((b - b'a') as usize + 1)?;
    }
    Some(n - 1)
}

/// Mapping from display indices to canonical schema elements for one example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexAssignment {
    /// `slot_order[i]` is the slot shown as `i:`.
    pub slot_order: Vec<String>,
    /// `intent_order[j]` is the intent shown as `ij:`.
    pub intent_order: Vec<String>,
    /// Per categorical slot, values in letter order (`a`, `b`, ...).
    #[serde(with = "letters_serde")]
    pub value_letters: BTreeMap<String, Vec<String>>,
}

impl IndexAssignment {
    pub fn slot_index(&self, slot: &str) -> Option<usize> {
        self.slot_order.iter().position(|s| s == slot)
    }

    pub fn intent_index(&self, intent: &str) -> Option<usize> {
        self.intent_order.iter().position(|s| s == intent)
    }

    pub fn is_categorical(&self, slot: &str) -> bool {
        self.value_letters.contains_key(slot)
    }

    /// Letter of `value` within the slot's values. Exact match wins, then a
    /// case-insensitive one.
    pub fn letter_of(&self, slot: &str, value: &str) -> Option<String> {
        let values = self.value_letters.get(slot)?;
        values
            .iter()
            .position(|v| v == value)
            .or_else(|| {
                values
                    .iter()
                    .position(|v| v.to_lowercase() == value.to_lowercase())
            })
            .map(value_letter)
    }

    pub fn value_of(&self, slot: &str, letter: &str) -> Option<&str> {
        let values = self.value_letters.get(slot)?;
        values.get(letter_index(letter)?).map(String::as_str)
    }
}

mod letters_serde {
    use std::collections::BTreeMap;

    use serde::de::Error;
    use serde::ser::SerializeMap;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::{letter_index, value_letter};

    struct Ordered<'a>(&'a [String]);

    impl Serialize for Ordered<'_> {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            let mut map = s.serialize_map(Some(self.0.len()))?;
            for (i, v) in self.0.iter().enumerate() {
                map.serialize_entry(&value_letter(i), v)?;
            }
            map.end()
        }
    }

    pub fn serialize<S: Serializer>(
        letters: &BTreeMap<String, Vec<String>>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(letters.len()))?;
        for (slot, values) in letters {
            map.serialize_entry(slot, &Ordered(values))?;
        }
        map.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<String, Vec<String>>, D::Error> {
        let raw = BTreeMap::<String, BTreeMap<String, String>>::deserialize(d)?;
        raw.into_iter()
            .map(|(slot, lettered)| {
                let mut indexed = lettered
                    .into_iter()
                    .map(|(letter, value)| {
                        letter_index(&letter)
                            .map(|i| (i, value))
                            .ok_or_else(|| D::Error::custom(format!("bad value letter {letter:?}")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                indexed.sort_by_key(|(i, _)| *i);
                if indexed.iter().enumerate().any(|(pos, (i, _))| pos != *i) {
                    return Err(D::Error::custom(format!(
                        "value letters of {slot} are not contiguous from a"
                    )));
                }
                Ok((slot, indexed.into_iter().map(|(_, v)| v).collect()))
            })
            .collect()
    }
}

/// Assigns display indices to every slot and intent of `schemas`, values in
/// listed order. See [`assign_indices_with`].
pub fn assign_indices(
    schemas: &[&Schema],
    rng: &mut impl Rng,
    shuffle: bool,
) -> Result<IndexAssignment, CompileError> {
    assign_indices_with(schemas, rng, shuffle, false)
}

/// `shuffle = false` keeps file order (evaluation); `shuffle = true` draws
/// uniform permutations of slots and of intents. `shuffle_values` does the
/// same for the letter order of each categorical slot.
pub fn assign_indices_with(
    schemas: &[&Schema],
    rng: &mut impl Rng,
    shuffle: bool,
    shuffle_values: bool,
) -> Result<IndexAssignment, CompileError> {
    let mut slot_order: Vec<String> = schemas
        .iter()
        .flat_map(|s| s.slots.iter().map(|slot| slot.id.clone()))
        .collect();
    if slot_order.is_empty() {
        return Err(CompileError::NoSlotsInScope);
    }
    let mut intent_order: Vec<String> = schemas
        .iter()
        .flat_map(|s| s.intents.iter().map(|i| i.id.clone()))
        .collect();
    if shuffle {
        slot_order.shuffle(rng);
        intent_order.shuffle(rng);
    }
    let mut value_letters = BTreeMap::new();
    for slot in schemas.iter().flat_map(|s| &s.slots) {
        if slot.is_categorical {
            let mut values = slot.values.clone();
            if shuffle_values {
                values.shuffle(rng);
            }
            value_letters.insert(slot.id.clone(), values);
        }
    }
    Ok(IndexAssignment {
        slot_order,
        intent_order,
        value_letters,
    })
}

/// The indexed description block. Slots first (each categorical slot followed
/// by its lettered values), then intents; the intent block is omitted when
/// there are none.
pub fn render_prefix(
    catalog: &Catalog,
    assignment: &IndexAssignment,
    style: DescriptionStyle,
    domain_prefix: bool,
) -> String {
    let mut items = Vec::new();
    for (i, id) in assignment.slot_order.iter().enumerate() {
        let description = match catalog.slot(id) {
            Some(slot) => describe(Element::Slot(slot), style, domain_prefix),
            None => id.clone(),
        };
        items.push(format!("{i}:{description}"));
        if let Some(values) = assignment.value_letters.get(id) {
            for (k, value) in values.iter().enumerate() {
                items.push(format!("{i}{}) {value}", value_letter(k)));
            }
        }
    }
    for (j, id) in assignment.intent_order.iter().enumerate() {
        let description = match catalog.intent(id) {
            Some(intent) => describe(Element::Intent(intent), style, domain_prefix),
            None => id.clone(),
        };
        items.push(format!("i{j}:{description}"));
    }
    items.join(" ").to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerTokens {
    pub user: String,
    pub system: String,
}

impl Default for SpeakerTokens {
    fn default() -> Self {
        SpeakerTokens {
            user: "[user]".into(),
            system: "[system]".into(),
        }
    }
}

impl SpeakerTokens {
    /// The `[usr]`/`[sys]` spelling.
    pub fn short() -> Self {
        SpeakerTokens {
            user: "[usr]".into(),
            system: "[sys]".into(),
        }
    }
}

/// One rendered exchange per turn through `up_to`; the system response of the
/// last turn is included only if `final_system` is set.
fn exchanges(
    turns: &[DialogueTurn],
    up_to: usize,
    tokens: &SpeakerTokens,
    final_system: bool,
) -> Vec<String> {
    turns
        .iter()
        .take(up_to + 1)
        .map(|turn| {
            let mut segment = format!("{} {}", tokens.user, turn.user.text);
            let include_system = turn.index < up_to || final_system;
            if let Some(response) = turn.system_response.as_ref().filter(|_| include_system) {
                segment.push(' ');
                segment.push_str(&tokens.system);
                segment.push(' ');
                segment.push_str(&response.text);
            }
            segment.to_lowercase()
        })
        .collect()
}

/// `[user] <text> [system] <text> ...` through turn `up_to`, lowercased.
pub fn render_context(turns: &[DialogueTurn], up_to: usize, tokens: &SpeakerTokens) -> String {
    exchanges(turns, up_to, tokens, true).join(" ")
}

/// Target content before serialisation: `(display index, surface value)`
/// pairs and intent indices, all ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TargetEntries {
    pub slots: Vec<(usize, String)>,
    pub intents: Vec<usize>,
    pub requested: Option<Vec<usize>>,
}

impl TargetEntries {
    pub fn render(&self) -> String {
        let mut out = String::from(STATES_MARKER);
        for (i, value) in &self.slots {
            out.push_str(&format!(" {i}:{value}"));
        }
        out.push(' ');
        out.push_str(INTENTS_MARKER);
        for j in &self.intents {
            out.push_str(&format!(" i{j}"));
        }
        if let Some(requested) = &self.requested {
            out.push(' ');
            out.push_str(REQUESTED_MARKER);
            for r in requested {
                out.push_str(&format!(" {r}"));
            }
        }
        out
    }
}

pub fn target_entries(
    state: &TurnState,
    assignment: &IndexAssignment,
    include_requested: bool,
) -> Result<TargetEntries, CompileError> {
    let mut slots = Vec::with_capacity(state.slot_values.len());
    for (slot, value) in &state.slot_values {
        let index = assignment
            .slot_index(slot)
            .ok_or_else(|| CompileError::UnassignedSlot(slot.clone()))?;
        let surface = if assignment.is_categorical(slot) {
            let letter = assignment.letter_of(slot, value).ok_or_else(|| {
                CompileError::CategoricalValue {
                    slot: slot.clone(),
                    value: value.clone(),
                }
            })?;
            format!("{index}{letter}")
        } else {
            value.to_lowercase()
        };
        slots.push((index, surface));
    }
    slots.sort_by_key(|(i, _)| *i);

    let mut intents = state
        .active_intents
        .iter()
        .map(|intent| {
            assignment
                .intent_index(intent)
                .ok_or_else(|| CompileError::UnassignedIntent(intent.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    intents.sort_unstable();

    let requested = if include_requested {
        let mut requested = state
            .requested_slots
            .iter()
            .map(|slot| {
                assignment
                    .slot_index(slot)
                    .ok_or_else(|| CompileError::UnassignedSlot(slot.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        requested.sort_unstable();
        Some(requested)
    } else {
        None
    };
    Ok(TargetEntries {
        slots,
        intents,
        requested,
    })
}

/// `[states] <idx>:<value> ... [intents] i<idx> ...`, ascending by index.
pub fn render_target(
    state: &TurnState,
    assignment: &IndexAssignment,
) -> Result<String, CompileError> {
    target_entries(state, assignment, false).map(|e| e.render())
}

/// Which schemata go into the description prefix of a turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrefixScope {
    /// Services active in the turn (SGD evaluation).
    ActiveServices,
    /// Services appearing anywhere in the dialogue (cross-dataset transfer).
    DialogueServices,
    /// Every schema in the catalog (MultiWOZ).
    All,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileOptions {
    pub style: DescriptionStyle,
    pub scope: PrefixScope,
    pub domain_prefix: bool,
    pub shuffle: bool,
    pub shuffle_values: bool,
    /// Maximum input length in characters; `None` means unlimited.
    pub budget: Option<usize>,
    pub speakers: SpeakerTokens,
    pub include_requested: bool,
    pub seed: u64,
}

impl CompileOptions {
    /// Per-turn active services, no domain prefix.
    pub fn sgd() -> Self {
        CompileOptions {
            style: DescriptionStyle::Language,
            scope: PrefixScope::ActiveServices,
            domain_prefix: false,
            shuffle: false,
            shuffle_values: false,
            budget: None,
            speakers: SpeakerTokens::default(),
            include_requested: false,
            seed: 0,
        }
    }

    /// All domains, domain-prefixed descriptions.
    pub fn multiwoz() -> Self {
        CompileOptions {
            scope: PrefixScope::All,
            domain_prefix: true,
            ..CompileOptions::sgd()
        }
    }
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions::sgd()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompiledExample {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub input: String,
    pub target: String,
    pub assignment: IndexAssignment,
    pub style: DescriptionStyle,
}

fn scope_names<'a>(
    dialogue: &'a Dialogue,
    turn: &'a DialogueTurn,
    catalog: &'a Catalog,
    scope: PrefixScope,
) -> Vec<&'a str> {
    match scope {
        PrefixScope::ActiveServices if !turn.active_services.is_empty() => {
            turn.active_services.iter().map(String::as_str).collect()
        }
        PrefixScope::ActiveServices | PrefixScope::DialogueServices => {
            dialogue.services.iter().map(String::as_str).collect()
        }
        PrefixScope::All => catalog.schemas().iter().map(|s| s.name.as_str()).collect(),
    }
}

/// Gold state reduced to the elements that have indices in `assignment`.
pub fn restrict_state(state: &TurnState, assignment: &IndexAssignment) -> TurnState {
    let slots: BTreeSet<&str> = assignment.slot_order.iter().map(String::as_str).collect();
    let intents: BTreeSet<&str> = assignment.intent_order.iter().map(String::as_str).collect();
    TurnState {
        slot_values: state
            .slot_values
            .iter()
            .filter(|(k, _)| slots.contains(k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect(),
        active_intents: state
            .active_intents
            .iter()
            .filter(|i| intents.contains(i.as_str()))
            .cloned()
            .collect(),
        requested_slots: state
            .requested_slots
            .iter()
            .filter(|s| slots.contains(s.as_str()))
            .cloned()
            .collect(),
        slot_alternatives: state
            .slot_alternatives
            .iter()
            .filter(|(k, _)| slots.contains(k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect(),
    }
}

/// Compiles one turn. The context runs through the turn's user utterance; the
/// system response that follows it is not part of the input. When a budget is
/// set, whole exchanges are dropped from the start of the context until the
/// input fits; the prefix is never cut.
pub fn compile(
    dialogue: &Dialogue,
    turn_index: usize,
    catalog: &Catalog,
    options: &CompileOptions,
    rng: &mut impl Rng,
) -> Result<CompiledExample, CompileError> {
    let turn = dialogue
        .turns
        .get(turn_index)
        .ok_or_else(|| CompileError::TurnOutOfRange {
            dialogue: dialogue.id.clone(),
            turn: turn_index,
        })?;
    let names = scope_names(dialogue, turn, catalog, options.scope);
    if let Some(missing) = names.iter().find(|n| catalog.schema(n).is_none()) {
        return Err(CompileError::UnknownService(missing.to_string()));
    }
    let schemas = catalog.select(names);
    let assignment = assign_indices_with(&schemas, rng, options.shuffle, options.shuffle_values)?;

    let prefix = render_prefix(catalog, &assignment, options.style, options.domain_prefix);
    let prefix_len = prefix.chars().count();
    let mut segments = exchanges(&dialogue.turns, turn_index, &options.speakers, false);
    let mut input_len = prefix_len
        + segments
            .iter()
            .map(|s| s.chars().count() + 1)
            .sum::<usize>();
    if let Some(budget) = options.budget {
        if budget < prefix_len {
            return Err(CompileError::BudgetTooSmall {
                budget,
                prefix: prefix_len,
            });
        }
        let mut dropped = 0;
        while input_len > budget && dropped < segments.len() {
            input_len -= segments[dropped].chars().count() + 1;
            dropped += 1;
        }
        segments.drain(..dropped);
    }
    let mut input = prefix;
    for segment in &segments {
        input.push(' ');
        input.push_str(segment);
    }

    let gold = restrict_state(&turn.state, &assignment);
    let target = target_entries(&gold, &assignment, options.include_requested)?.render();
    Ok(CompiledExample {
        dialogue_id: dialogue.id.clone(),
        turn_index,
        input,
        target,
        assignment,
        style: options.style,
    })
}

/// Compiles every turn of a dialogue, each with its own derived random stream.
pub fn compile_dialogue(
    dialogue: &Dialogue,
    catalog: &Catalog,
    options: &CompileOptions,
) -> Result<Vec<CompiledExample>, CompileError> {
    (0..dialogue.turns.len())
        .map(|t| {
            let mut rng = rng::example_rng(options.seed, &dialogue.id, t);
            compile(dialogue, t, catalog, options, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Utterance;
    use crate::rng::seeded;
    use crate::schema::{IntentDef, SlotDef};

    fn yes_no_schema() -> Schema {
        Schema {
            name: "hotel".into(),
            slots: vec![
                SlotDef::categorical(
                    "hotel-parking",
                    "hotel",
                    "parking facility at the hotel",
                    &["yes", "no"],
                ),
                SlotDef::free_text("hotel-name", "hotel", "name of the hotel"),
            ],
            intents: vec![],
        }
    }

    #[test]
    fn letters_round_trip() {
        assert_eq!(value_letter(0), "a");
        assert_eq!(value_letter(25), "z");
        assert_eq!(value_letter(26), "aa");
        assert_eq!(value_letter(27), "ab");
        assert_eq!(value_letter(26 + 26 * 26), "aaa");
        for i in 0..2000 {
            assert_eq!(letter_index(&value_letter(i)), Some(i));
        }
        assert_eq!(letter_index(""), None);
        assert_eq!(letter_index("A"), None);
    }

    #[test]
    fn two_slot_prefix_by_hand() {
        let schema = yes_no_schema();
        let catalog = Catalog::new(vec![schema.clone()]).unwrap();
        let assignment = assign_indices(&[&schema], &mut seeded(0), false).unwrap();
        // 0 is categorical with values yes/no, 1 is free text, no intents
        let prefix = render_prefix(&catalog, &assignment, DescriptionStyle::Language, true);
        assert_eq!(
            prefix,
            "0:hotel-parking facility at the hotel 0a) yes 0b) no 1:hotel-name of the hotel"
        );
        let prefix = render_prefix(&catalog, &assignment, DescriptionStyle::Name, false);
        assert_eq!(prefix, "0:hotel-parking 0a) yes 0b) no 1:hotel-name");
    }

    #[test]
    fn single_slot_assignment_is_fixed() {
        let schema = Schema {
            name: "x".into(),
            slots: vec![SlotDef::free_text("x-a", "x", "a")],
            intents: vec![IntentDef::new("x-go", "x", "go")],
        };
        for seed in 0..10 {
            let a = assign_indices(&[&schema], &mut seeded(seed), true).unwrap();
            assert_eq!(a.slot_order, vec!["x-a".to_string()]);
        }
    }

    #[test]
    fn no_slots_is_an_error() {
        let schema = Schema {
            name: "x".into(),
            slots: vec![],
            intents: vec![],
        };
        assert_eq!(
            assign_indices(&[&schema], &mut seeded(0), true).unwrap_err(),
            CompileError::NoSlotsInScope
        );
    }

    #[test]
    fn empty_target_keeps_markers() {
        let schema = yes_no_schema();
        let a = assign_indices(&[&schema], &mut seeded(0), false).unwrap();
        assert_eq!(
            render_target(&TurnState::default(), &a).unwrap(),
            "[states] [intents]"
        );
    }

    #[test]
    fn categorical_value_outside_list_is_an_error() {
        let schema = yes_no_schema();
        let a = assign_indices(&[&schema], &mut seeded(0), false).unwrap();
        let mut state = TurnState::default();
        state
            .slot_values
            .insert("hotel-parking".into(), "free".into());
        assert!(matches!(
            render_target(&state, &a),
            Err(CompileError::CategoricalValue { .. })
        ));
        state
            .slot_values
            .insert("hotel-parking".into(), "Yes".into());
        state
            .slot_values
            .insert("hotel-name".into(), "Acorn Guest House".into());
        assert_eq!(
            render_target(&state, &a).unwrap(),
            "[states] 0:0a 1:acorn guest house [intents]"
        );
    }

    #[test]
    fn context_segments() {
        let turns = vec![DialogueTurn {
            index: 0,
            user: Utterance::user("Hi"),
            system_response: None,
            state: TurnState::default(),
            active_services: BTreeSet::new(),
        }];
        assert_eq!(
            render_context(&turns, 0, &SpeakerTokens::default()),
            "[user] hi"
        );
        let turns = vec![
            DialogueTurn {
                index: 0,
                user: Utterance::user(""),
                system_response: Some(Utterance::system("Hi how can I help you today?")),
                state: TurnState::default(),
                active_services: BTreeSet::new(),
            },
            DialogueTurn {
                index: 1,
                user: Utterance::user("hello"),
                system_response: Some(Utterance::system("sure")),
                state: TurnState::default(),
                active_services: BTreeSet::new(),
            },
        ];
        assert_eq!(
            render_context(&turns, 1, &SpeakerTokens::default()),
            "[user]  [system] hi how can i help you today? [user] hello [system] sure"
        );
        assert_eq!(
            render_context(&turns, 0, &SpeakerTokens::short()),
            "[usr]  [sys] hi how can i help you today?"
        );
    }

    #[test]
    fn assignment_json_keeps_letter_order() {
        let mut letters = BTreeMap::new();
        letters.insert(
            "s".to_string(),
            (0..28).map(|i| format!("v{i}")).collect::<Vec<_>>(),
        );
        let a = IndexAssignment {
            slot_order: vec!["s".into()],
            intent_order: vec![],
            value_letters: letters,
        };
        let json = serde_json::to_string(&a).unwrap();
        assert!(
            json.contains(r#""z":"v25","aa":"v26","ab":"v27""#),
            "{json}"
        );
        let back: IndexAssignment = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
        let gap = r#"{"slot_order":[],"intent_order":[],"value_letters":{"s":{"a":"x","c":"y"}}}"#;
        assert!(serde_json::from_str::<IndexAssignment>(gap).is_err());
    }
}
