//! Synthetic predictors built from gold targets, for end-to-end checks and
//! metric calibration.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TurnState;
use crate::parse::PredictionRecord;
use crate::prompt::{
    restrict_state, target_entries, value_letter, CompileError, CompiledExample, REQUESTED_MARKER,
};
use crate::rng;

/// Replacement for corrupted free-text values; never a gold value.
pub const CORRUPTED_VALUE: &str = "__corrupted__";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OracleError {
    #[error("corruption rate {0} is outside [0, 1]")]
    BadRate(f64),
    #[error("corruption rate is positive but no corruption modes are enabled")]
    NoModes,
    #[error(transparent)]
    Compile(#[from] CompileError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionMode {
    /// Remove one active slot entry.
    DropSlot,
    /// Replace one value: free text becomes [`CORRUPTED_VALUE`], a
    /// categorical letter becomes a different letter of the same slot.
    WrongValue,
    /// Move one entry to an index that is inactive in gold.
    WrongIndex,
    /// Remove one active intent.
    DropIntent,
}

impl CorruptionMode {
    pub const ALL: [CorruptionMode; 4] = [
        CorruptionMode::DropSlot,
        CorruptionMode::WrongValue,
        CorruptionMode::WrongIndex,
        CorruptionMode::DropIntent,
    ];
}

impl std::str::FromStr for CorruptionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| format!("unknown corruption mode {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub rate: f64,
    pub modes: BTreeSet<CorruptionMode>,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn identity() -> Self {
        CorruptionSpec {
            rate: 0.0,
            modes: BTreeSet::new(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(OracleError::BadRate(self.rate));
        }
        if self.rate > 0.0 && self.modes.is_empty() {
            return Err(OracleError::NoModes);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleOutput {
    pub raw: String,
    /// The corruption that was applied, if any.
    pub applied: Option<CorruptionMode>,
}

/// Emits the example's target, corrupted with probability `spec.rate` by one
/// uniformly chosen enabled mode that can change this turn. Deterministic per
/// `(spec.seed, dialogue id, turn index)`.
pub fn oracle_predict(
    example: &CompiledExample,
    gold: &TurnState,
    spec: &CorruptionSpec,
) -> Result<OracleOutput, OracleError> {
    spec.validate()?;
    let mut rng = rng::derive(
        spec.seed,
        &[
            b"oracle",
            example.dialogue_id.as_bytes(),
            &(example.turn_index as u64).to_le_bytes(),
        ],
    );
    let verbatim = OracleOutput {
        raw: example.target.clone(),
        applied: None,
    };
    if rng.gen::<f64>() >= spec.rate {
        return Ok(verbatim);
    }

    let assignment = &example.assignment;
    let with_requested = example
        .target
        .split_whitespace()
        .any(|t| t == REQUESTED_MARKER);
    let mut entries = target_entries(
        &restrict_state(gold, assignment),
        assignment,
        with_requested,
    )?;

    let slot_id = |i: usize| assignment.slot_order[i].as_str();
    let value_changeable = |i: usize| {
        assignment
            .value_letters
            .get(slot_id(i))
            .is_none_or(|values| values.len() > 1)
    };
    let applicable: Vec<CorruptionMode> = spec
        .modes
        .iter()
        .copied()
        .filter(|mode| match mode {
            CorruptionMode::DropSlot => !entries.slots.is_empty(),
            CorruptionMode::WrongValue => entries.slots.iter().any(|(i, _)| value_changeable(*i)),
            CorruptionMode::WrongIndex => {
                !entries.slots.is_empty() && entries.slots.len() < assignment.slot_order.len()
            }
            CorruptionMode::DropIntent => !entries.intents.is_empty(),
        })
        .collect();
    let Some(&mode) = applicable.choose(&mut rng) else {
        return Ok(verbatim);
    };

    match mode {
        CorruptionMode::DropSlot => {
            let k = rng.gen_range(0..entries.slots.len());
            entries.slots.remove(k);
        }
        CorruptionMode::WrongValue => {
            let candidates: Vec<usize> = (0..entries.slots.len())
                .filter(|&k| value_changeable(entries.slots[k].0))
                .collect();
            let k = *candidates.choose(&mut rng).expect("applicable");
            let (index, value) = &mut entries.slots[k];
            *value = match assignment.value_letters.get(slot_id(*index)) {
                None => CORRUPTED_VALUE.to_string(),
                Some(values) => {
                    let current = value.clone();
                    let others: Vec<String> = (0..values.len())
                        .map(|v| format!("{index}{}", value_letter(v)))
                        .filter(|s| *s != current)
                        .collect();
                    others.choose(&mut rng).expect("two or more values").clone()
                }
            };
        }
        CorruptionMode::WrongIndex => {
            let active: BTreeSet<usize> = entries.slots.iter().map(|(i, _)| *i).collect();
            let inactive: Vec<usize> = (0..assignment.slot_order.len())
                .filter(|i| !active.contains(i))
                .collect();
            let k = rng.gen_range(0..entries.slots.len());
            entries.slots[k].0 = *inactive.choose(&mut rng).expect("applicable");
            entries.slots.sort_by_key(|(i, _)| *i);
        }
        CorruptionMode::DropIntent => {
            let k = rng.gen_range(0..entries.intents.len());
            entries.intents.remove(k);
        }
    }
    Ok(OracleOutput {
        raw: entries.render(),
        applied: Some(mode),
    })
}

pub fn oracle_record(
    example: &CompiledExample,
    gold: &TurnState,
    spec: &CorruptionSpec,
) -> Result<PredictionRecord, OracleError> {
    Ok(PredictionRecord {
        dialogue_id: example.dialogue_id.clone(),
        turn_index: example.turn_index,
        raw: oracle_predict(example, gold, spec)?.raw,
        requested_slots: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Dialogue, DialogueTurn, Utterance};
    use crate::parse::{decode, parse, DecodeMode};
    use crate::prompt::{compile, CompileOptions};
    use crate::rng::seeded;
    use crate::schema::{Catalog, IntentDef, Schema, SlotDef};

    fn setup() -> (Catalog, Dialogue) {
        let schema = Schema {
            name: "hotel".into(),
            slots: vec![
                SlotDef::categorical("hotel-parking", "hotel", "parking", &["yes", "no"]),
                SlotDef::free_text("hotel-name", "hotel", "name"),
                SlotDef::free_text("hotel-area", "hotel", "area"),
                SlotDef::free_text("hotel-stars", "hotel", "stars"),
            ],
            intents: vec![IntentDef::new("hotel-find", "hotel", "find a hotel")],
        };
        let mut state = TurnState::default();
        state
            .slot_values
            .insert("hotel-parking".into(), "yes".into());
        state
            .slot_values
            .insert("hotel-name".into(), "acorn".into());
        state
            .slot_values
            .insert("hotel-area".into(), "north".into());
        state.active_intents.insert("hotel-find".into());
        let dialogue = Dialogue {
            id: "d".into(),
            services: vec!["hotel".into()],
            turns: vec![DialogueTurn {
                index: 0,
                user: Utterance::user("x"),
                system_response: None,
                state,
                active_services: BTreeSet::from(["hotel".to_string()]),
            }],
        };
        (Catalog::new(vec![schema]).unwrap(), dialogue)
    }

    #[test]
    fn zero_rate_is_verbatim() {
        let (catalog, d) = setup();
        let ex = compile(&d, 0, &catalog, &CompileOptions::default(), &mut seeded(1)).unwrap();
        let out = oracle_predict(&ex, &d.turns[0].state, &CorruptionSpec::identity()).unwrap();
        assert_eq!(out.raw, ex.target);
        assert_eq!(out.applied, None);
    }

    #[test]
    fn drop_slot_removes_exactly_one_entry() {
        let (catalog, d) = setup();
        let ex = compile(&d, 0, &catalog, &CompileOptions::default(), &mut seeded(1)).unwrap();
        for seed in 0..20 {
            let spec = CorruptionSpec {
                rate: 1.0,
                modes: BTreeSet::from([CorruptionMode::DropSlot]),
                seed,
            };
            let out = oracle_predict(&ex, &d.turns[0].state, &spec).unwrap();
            assert_eq!(out.applied, Some(CorruptionMode::DropSlot));
            assert_eq!(parse(&out.raw).slot_entries.len(), 2);
        }
    }

    #[test]
    fn every_mode_breaks_the_turn() {
        let (catalog, d) = setup();
        let gold = &d.turns[0].state;
        for mode in CorruptionMode::ALL {
            for seed in 0..30 {
                let ex = compile(
                    &d,
                    0,
                    &catalog,
                    &CompileOptions {
                        shuffle: true,
                        ..Default::default()
                    },
                    &mut seeded(seed),
                )
                .unwrap();
                let spec = CorruptionSpec {
                    rate: 1.0,
                    modes: BTreeSet::from([mode]),
                    seed,
                };
                let out = oracle_predict(&ex, gold, &spec).unwrap();
                assert_eq!(out.applied, Some(mode));
                let decoded = decode(&parse(&out.raw), &ex.assignment, DecodeMode::Strict);
                let slots_differ =
                    decoded.has_slot_errors() || decoded.slot_values != gold.slot_values;
                let intents_differ = decoded.active_intents != gold.active_intents;
                assert!(
                    slots_differ || intents_differ,
                    "{mode:?} seed {seed}: {}",
                    out.raw
                );
            }
        }
    }

    #[test]
    fn spec_validation() {
        let (catalog, d) = setup();
        let ex = compile(&d, 0, &catalog, &CompileOptions::default(), &mut seeded(1)).unwrap();
        let no_modes = CorruptionSpec {
            rate: 0.5,
            modes: BTreeSet::new(),
            seed: 0,
        };
        assert_eq!(
            oracle_predict(&ex, &d.turns[0].state, &no_modes).unwrap_err(),
            OracleError::NoModes
        );
        let bad = CorruptionSpec {
            rate: 1.5,
            ..CorruptionSpec::identity()
        };
        assert!(matches!(
            oracle_predict(&ex, &d.turns[0].state, &bad),
            Err(OracleError::BadRate(_))
        ));
        assert_eq!(
            "wrong-index".parse::<CorruptionMode>().unwrap(),
            CorruptionMode::WrongIndex
        );
    }

    #[test]
    fn inapplicable_modes_fall_back_to_verbatim() {
        let (catalog, mut d) = setup();
        d.turns[0].state = TurnState::default();
        let ex = compile(&d, 0, &catalog, &CompileOptions::default(), &mut seeded(1)).unwrap();
        let spec = CorruptionSpec {
            rate: 1.0,
            modes: BTreeSet::from([CorruptionMode::DropSlot]),
            seed: 3,
        };
        let out = oracle_predict(&ex, &d.turns[0].state, &spec).unwrap();
        assert_eq!(
            out,
            OracleOutput {
                raw: "[states] [intents]".into(),
                applied: None
            }
        );
    }
}
