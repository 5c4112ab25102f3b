#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use dstk::corpus::read_sgd;
use dstk::rng::seeded;
use dstk::schema::load_sgd_schemas;
use dstk::{Catalog, Dialogue, DialogueTurn, IntentDef, Schema, SlotDef, TurnState, Utterance};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name))
        .unwrap()
        .trim_end_matches('\n')
        .to_string()
}

/// The music/movies fixture in SGD layout.
pub fn music_fixture() -> (Catalog, Vec<Dialogue>) {
    let catalog = Catalog::new(load_sgd_schemas(fixture("sgd/schema.json")).unwrap()).unwrap();
    let dialogues = read_sgd(fixture("sgd"), &catalog).unwrap();
    (catalog, dialogues)
}

const SYLLABLES: [&str; 12] = [
    "ka", "lo", "mi", "ne", "ru", "sa", "to", "vi", "ze", "po", "da", "fu",
];

pub fn word(rng: &mut impl Rng) -> String {
    (0..rng.gen_range(1..4))
        .map(|_| *SYLLABLES.choose(rng).unwrap())
        .collect()
}

pub fn phrase(rng: &mut impl Rng) -> String {
    (0..rng.gen_range(1..4))
        .map(|_| word(rng))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn random_schema(name: &str, rng: &mut impl Rng) -> Schema {
    let slots = (0..rng.gen_range(3..9))
        .map(|i| {
            let id = format!("{name}-slot{i}");
            if rng.gen_bool(0.3) {
                let mut values: Vec<String> = Vec::new();
                while values.len() < rng.gen_range(2..5) {
                    let v = word(rng);
                    if !values.contains(&v) {
                        values.push(v);
                    }
                }
                let refs: Vec<&str> = values.iter().map(String::as_str).collect();
                SlotDef::categorical(&id, name, &phrase(rng), &refs)
            } else {
                SlotDef::free_text(&id, name, &phrase(rng))
            }
        })
        .collect();
    let intents = (0..rng.gen_range(1..4))
        .map(|i| IntentDef::new(&format!("{name}-intent{i}"), name, &phrase(rng)))
        .collect();
    Schema {
        name: name.to_string(),
        slots,
        intents,
    }
}

/// A state over `schemas` with a random subset of slots and intents active.
pub fn random_state(schemas: &[&Schema], rng: &mut impl Rng) -> TurnState {
    let mut state = TurnState::default();
    for slot in schemas.iter().flat_map(|s| &s.slots) {
        if rng.gen_bool(0.4) {
            let value = if slot.is_categorical {
                slot.values.choose(rng).unwrap().clone()
            } else {
                phrase(rng)
            };
            state.slot_values.insert(slot.id.clone(), value);
        }
    }
    for intent in schemas.iter().flat_map(|s| &s.intents) {
        if rng.gen_bool(0.5) {
            state.active_intents.insert(intent.id.clone());
        }
    }
    state
}

/// `domains` random schemas and `per_domain` dialogues whose first service is
/// each domain; a third of dialogues also touch a second domain.
pub fn synthetic_corpus(
    seed: u64,
    domains: usize,
    per_domain: usize,
    turns: usize,
) -> (Catalog, Vec<Dialogue>) {
    let mut rng = seeded(seed);
    let schemas: Vec<Schema> = (0..domains)
        .map(|d| random_schema(&format!("dom{d}"), &mut rng))
        .collect();
    let mut dialogues = Vec::new();
    for d in 0..domains {
        for k in 0..per_domain {
            let mut services = vec![schemas[d].name.clone()];
            if domains > 1 && rng.gen_bool(1.0 / 3.0) {
                let other = (d + rng.gen_range(1..domains)) % domains;
                services.push(schemas[other].name.clone());
            }
            let in_scope: Vec<&Schema> = schemas
                .iter()
                .filter(|s| services.contains(&s.name))
                .collect();
            let turns = (0..turns)
                .map(|t| DialogueTurn {
                    index: t,
                    user: Utterance::user(phrase(&mut rng)),
                    system_response: Some(Utterance::system(phrase(&mut rng))),
                    state: random_state(&in_scope, &mut rng),
                    active_services: services.iter().cloned().collect::<BTreeSet<_>>(),
                })
                .collect();
            dialogues.push(Dialogue {
                id: format!("dom{d}_{k:04}"),
                services,
                turns,
            });
        }
    }
    (Catalog::new(schemas).unwrap(), dialogues)
}
