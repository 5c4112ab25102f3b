//! Turn-level evaluation: joint goal accuracy, active-intent accuracy,
//! requested-slot F1, and schema sensitivity across schema variants.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, TurnState};
use crate::parse::DecodedRecord;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("{predictions} predictions but {golds} gold turns")]
    LengthMismatch { predictions: usize, golds: usize },
    #[error("position {position}: prediction is for {predicted} but gold is for {gold}")]
    Misaligned {
        position: usize,
        predicted: String,
        gold: String,
    },
    #[error("no gold turn for prediction {0}")]
    MissingGold(String),
    #[error("nothing to evaluate")]
    Empty,
    #[error("schema sensitivity needs at least two variants, got {0}")]
    TooFewVariants(usize),
    #[error("variant {variant} has {len} turns, expected {expected}")]
    VariantLength {
        variant: String,
        len: usize,
        expected: usize,
    },
    #[error("variant {variant} covers different turns than the first variant")]
    VariantTurns { variant: String },
}

/// Lowercase, trim, and collapse whitespace runs to one space.
pub fn normalize_value(v: &str) -> String {
    v.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Removes every trailing repetition of `" <suffix>"`, leaving at least one
/// word. Idempotent.
pub fn strip_suffix_repeated<'a>(value: &'a str, suffix: &str) -> &'a str {
    let mut out = value;
    loop {
        match out
            .strip_suffix(suffix)
            .and_then(|rest| rest.strip_suffix(' '))
        {
            Some(rest) if !rest.trim().is_empty() => out = rest,
            _ => return out,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuffixRule {
    pub slots: Vec<String>,
    pub suffix: String,
}

/// Value normaliser applied to both sides before comparison.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Normalizer {
    pub suffix_rules: Vec<SuffixRule>,
}

pub const TRAIN_STATION_SLOTS: [&str; 2] = ["train-departure", "train-destination"];
pub const TRAIN_STATION_SUFFIX: &str = "train station";

impl Normalizer {
    pub fn train_station() -> Self {
        Normalizer {
            suffix_rules: vec![SuffixRule {
                slots: TRAIN_STATION_SLOTS.map(String::from).to_vec(),
                suffix: TRAIN_STATION_SUFFIX.into(),
            }],
        }
    }

    pub fn normalize(&self, slot: &str, value: &str) -> String {
        let mut out = normalize_value(value);
        for rule in &self.suffix_rules {
            if rule.slots.iter().any(|s| s == slot) {
                out = strip_suffix_repeated(&out, &normalize_value(&rule.suffix)).to_string();
            }
        }
        out
    }
}

/// Gold state of one evaluated turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub state: TurnState,
}

pub fn gold_records(dialogues: &[Dialogue]) -> Vec<GoldRecord> {
    dialogues
        .iter()
        .flat_map(|d| {
            d.turns.iter().map(move |t| GoldRecord {
                dialogue_id: d.id.clone(),
                turn_index: t.index,
                state: t.state.clone(),
            })
        })
        .collect()
}

/// Gold records in the order of `preds`.
pub fn align_golds(
    preds: &[DecodedRecord],
    golds: &[GoldRecord],
) -> Result<Vec<GoldRecord>, MetricsError> {
    let by_key: BTreeMap<(&str, usize), &GoldRecord> = golds
        .iter()
        .map(|g| ((g.dialogue_id.as_str(), g.turn_index), g))
        .collect();
    preds
        .iter()
        .map(|p| {
            by_key
                .get(&(p.dialogue_id.as_str(), p.turn_index))
                .map(|g| (*g).clone())
                .ok_or_else(|| {
                    MetricsError::MissingGold(format!("{}#{}", p.dialogue_id, p.turn_index))
                })
        })
        .collect()
}

fn check_aligned(preds: &[DecodedRecord], golds: &[GoldRecord]) -> Result<(), MetricsError> {
    if preds.len() != golds.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: preds.len(),
            golds: golds.len(),
        });
    }
    for (position, (p, g)) in preds.iter().zip(golds).enumerate() {
        if p.dialogue_id != g.dialogue_id || p.turn_index != g.turn_index {
            return Err(MetricsError::Misaligned {
                position,
                predicted: format!("{}#{}", p.dialogue_id, p.turn_index),
                gold: format!("{}#{}", g.dialogue_id, g.turn_index),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnResult {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub joint_correct: bool,
    pub intent_correct: bool,
    pub requested_tp: usize,
    pub requested_fp: usize,
    pub requested_fn: usize,
    /// Joint correctness restricted to each domain touched by the turn.
    #[serde(default)]
    pub domain_correct: BTreeMap<String, bool>,
}

fn slot_domain(slot: &str) -> &str {
    slot.split_once('-').map_or(slot, |(d, _)| d)
}

/// Running totals; merge is associative so partial folds can be combined.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tally {
    pub turns: usize,
    pub joint: usize,
    pub intent: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub per_domain: BTreeMap<String, (usize, usize)>,
}

impl Tally {
    pub fn add(&mut self, r: &TurnResult) {
        self.turns += 1;
        self.joint += r.joint_correct as usize;
        self.intent += r.intent_correct as usize;
        self.tp += r.requested_tp;
        self.fp += r.requested_fp;
        self.fn_ += r.requested_fn;
        for (domain, &ok) in &r.domain_correct {
            let e = self.per_domain.entry(domain.clone()).or_default();
            e.0 += ok as usize;
            e.1 += 1;
        }
    }

    pub fn merge(mut self, other: Tally) -> Tally {
        self.turns += other.turns;
        self.joint += other.joint;
        self.intent += other.intent;
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        for (domain, (ok, n)) in other.per_domain {
            let e = self.per_domain.entry(domain).or_default();
            e.0 += ok;
            e.1 += n;
        }
        self
    }

    pub fn jga(&self) -> f64 {
        ratio(self.joint, self.turns)
    }

    pub fn intent_accuracy(&self) -> f64 {
        ratio(self.intent, self.turns)
    }

    /// Micro F1; 1.0 when no turn has requested slots on either side.
    pub fn requested_f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub jga: f64,
    pub intent_accuracy: f64,
    pub requested_slot_f1: f64,
    pub per_domain_jga: BTreeMap<String, f64>,
    pub turns: usize,
    pub turn_results: Vec<TurnResult>,
}

impl EvalReport {
    pub fn from_results(turn_results: Vec<TurnResult>) -> Self {
        let tally = turn_results.iter().fold(Tally::default(), |mut t, r| {
            t.add(r);
            t
        });
        EvalReport {
            jga: tally.jga(),
            intent_accuracy: tally.intent_accuracy(),
            requested_slot_f1: tally.requested_f1(),
            per_domain_jga: tally
                .per_domain
                .iter()
                .map(|(d, &(ok, n))| (d.clone(), ratio(ok, n)))
                .collect(),
            turns: tally.turns,
            turn_results,
        }
    }

    /// One row per turn, tab-separated, with a header line.
    pub fn write_tsv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(
            w,
            "dialogue_id\tturn_index\tjoint_correct\tintent_correct\trequested_tp\trequested_fp\trequested_fn"
        )?;
        for r in &self.turn_results {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.dialogue_id,
                r.turn_index,
                r.joint_correct as u8,
                r.intent_correct as u8,
                r.requested_tp,
                r.requested_fp,
                r.requested_fn
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Evaluator {
    pub normalizer: Normalizer,
}

impl Evaluator {
    pub fn new(normalizer: Normalizer) -> Self {
        Evaluator { normalizer }
    }

    fn value_matches(&self, slot: &str, predicted: &str, gold: &TurnState) -> bool {
        let predicted = self.normalizer.normalize(slot, predicted);
        match gold.slot_alternatives.get(slot) {
            Some(alts) if !alts.is_empty() => alts
                .iter()
                .any(|a| self.normalizer.normalize(slot, a) == predicted),
            _ => gold
                .slot_values
                .get(slot)
                .is_some_and(|g| self.normalizer.normalize(slot, g) == predicted),
        }
    }

    fn slots_match<'a>(
        &self,
        pred: &DecodedRecord,
        gold: &TurnState,
        keep: impl Fn(&str) -> bool + Copy + 'a,
    ) -> bool {
        let pred_keys: BTreeSet<&str> = pred
            .state
            .slot_values
            .keys()
            .map(String::as_str)
            .filter(|k| keep(k))
            .collect();
        let gold_keys: BTreeSet<&str> = gold
            .slot_values
            .keys()
            .map(String::as_str)
            .filter(|k| keep(k))
            .collect();
        pred_keys == gold_keys
            && pred_keys
                .iter()
                .all(|k| self.value_matches(k, &pred.state.slot_values[*k], gold))
    }

    /// Joint correctness: normalised slot maps equal as sets, where a gold
    /// slot with alternatives accepts any of them. Any slot-level decode error
    /// fails the turn.
    pub fn turn_result(&self, pred: &DecodedRecord, gold: &GoldRecord) -> TurnResult {
        let slot_errors = pred.state.has_slot_errors();
        let joint_correct = !slot_errors && self.slots_match(pred, &gold.state, |_| true);

        let intent_errors = pred
            .state
            .errors
            .iter()
            .any(|e| matches!(e, crate::parse::DecodeError::UnknownIntentIndex { .. }));
        let intent_correct =
            !intent_errors && pred.state.active_intents == gold.state.active_intents;

        let p = &pred.state.requested_slots;
        let g = &gold.state.requested_slots;
        let tp = p.intersection(g).count();

        let domains: BTreeSet<&str> = gold
            .state
            .slot_values
            .keys()
            .chain(pred.state.slot_values.keys())
            .map(|k| slot_domain(k))
            .collect();
        let domain_correct = domains
            .into_iter()
            .map(|d| {
                let ok =
                    !slot_errors && self.slots_match(pred, &gold.state, |k| slot_domain(k) == d);
                (d.to_string(), ok)
            })
            .collect();

        TurnResult {
            dialogue_id: gold.dialogue_id.clone(),
            turn_index: gold.turn_index,
            joint_correct,
            intent_correct,
            requested_tp: tp,
            requested_fp: p.len() - tp,
            requested_fn: g.len() - tp,
            domain_correct,
        }
    }

    pub fn turn_results(
        &self,
        preds: &[DecodedRecord],
        golds: &[GoldRecord],
    ) -> Result<Vec<TurnResult>, MetricsError> {
        check_aligned(preds, golds)?;
        Ok(preds
            .iter()
            .zip(golds)
            .map(|(p, g)| self.turn_result(p, g))
            .collect())
    }

    pub fn evaluate(
        &self,
        preds: &[DecodedRecord],
        golds: &[GoldRecord],
    ) -> Result<EvalReport, MetricsError> {
        if preds.is_empty() && golds.is_empty() {
            return Err(MetricsError::Empty);
        }
        Ok(EvalReport::from_results(self.turn_results(preds, golds)?))
    }
}

pub fn joint_goal_accuracy(
    preds: &[DecodedRecord],
    golds: &[GoldRecord],
    normalizer: &Normalizer,
) -> Result<f64, MetricsError> {
    Evaluator::new(normalizer.clone())
        .evaluate(preds, golds)
        .map(|r| r.jga)
}

pub fn active_intent_accuracy(
    preds: &[DecodedRecord],
    golds: &[GoldRecord],
) -> Result<f64, MetricsError> {
    Evaluator::default()
        .evaluate(preds, golds)
        .map(|r| r.intent_accuracy)
}

pub fn requested_slot_f1(
    preds: &[DecodedRecord],
    golds: &[GoldRecord],
) -> Result<f64, MetricsError> {
    Evaluator::default()
        .evaluate(preds, golds)
        .map(|r| r.requested_slot_f1)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensitivityConfig {
    /// Use the n-1 (sample) standard deviation instead of the population one.
    pub sample_std: bool,
    /// Count turns no variant got right as CV 0 instead of leaving them out.
    pub include_zero_mean: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub per_variant_jga: BTreeMap<String, f64>,
    pub mean_variant_jga: f64,
    pub ss_jga: f64,
    /// True when no turn had a nonzero mean, so `ss_jga` is reported as 0.
    pub undefined: bool,
    pub turns_counted: usize,
    pub turns_total: usize,
}

pub fn schema_sensitivity(
    variants: &BTreeMap<String, Vec<bool>>,
) -> Result<SensitivityReport, MetricsError> {
    schema_sensitivity_with(variants, SensitivityConfig::default())
}

/// Mean over turns of the coefficient of variation (sigma / mu) of the
/// per-variant joint-correctness indicators.
pub fn schema_sensitivity_with(
    variants: &BTreeMap<String, Vec<bool>>,
    config: SensitivityConfig,
) -> Result<SensitivityReport, MetricsError> {
    if variants.len() < 2 {
        return Err(MetricsError::TooFewVariants(variants.len()));
    }
    let turns = variants.values().next().map_or(0, Vec::len);
    for (variant, v) in variants {
        if v.len() != turns {
            return Err(MetricsError::VariantLength {
                variant: variant.clone(),
                len: v.len(),
                expected: turns,
            });
        }
    }
    let n = variants.len() as f64;
    let mut cv_sum = 0.0;
    let mut counted = 0;
    for t in 0..turns {
        let hits = variants.values().filter(|v| v[t]).count() as f64;
        let mean = hits / n;
        if mean == 0.0 {
            if config.include_zero_mean {
                counted += 1;
            }
            continue;
        }
        // indicators are 0/1, so the squared deviations sum to hits*(1-mean)^2 + misses*mean^2
        let ss = hits * (1.0 - mean).powi(2) + (n - hits) * mean.powi(2);
        let var = if config.sample_std {
            ss / (n - 1.0)
        } else {
            ss / n
        };
        cv_sum += var.sqrt() / mean;
        counted += 1;
    }
    let per_variant_jga: BTreeMap<String, f64> = variants
        .iter()
        .map(|(k, v)| (k.clone(), ratio(v.iter().filter(|&&b| b).count(), v.len())))
        .collect();
    let mean_variant_jga = per_variant_jga.values().sum::<f64>() / n;
    Ok(SensitivityReport {
        per_variant_jga,
        mean_variant_jga,
        ss_jga: if counted == 0 {
            0.0
        } else {
            cv_sum / counted as f64
        },
        undefined: counted == 0,
        turns_counted: counted,
        turns_total: turns,
    })
}

/// Joint-correctness indicators per variant, checked to cover the same turns
/// in the same order.
pub fn variant_indicators(
    reports: &BTreeMap<String, EvalReport>,
) -> Result<BTreeMap<String, Vec<bool>>, MetricsError> {
    let mut first: Option<Vec<(&str, usize)>> = None;
    let mut out = BTreeMap::new();
    for (variant, report) in reports {
        let keys: Vec<(&str, usize)> = report
            .turn_results
            .iter()
            .map(|r| (r.dialogue_id.as_str(), r.turn_index))
            .collect();
        match &first {
            None => first = Some(keys),
            Some(f) if *f != keys => {
                return Err(MetricsError::VariantTurns {
                    variant: variant.clone(),
                })
            }
            Some(_) => {}
        }
        out.insert(
            variant.clone(),
            report
                .turn_results
                .iter()
                .map(|r| r.joint_correct)
                .collect(),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{DecodeError, DecodedState};

    fn gold(id: &str, slots: &[(&str, &str)], intents: &[&str]) -> GoldRecord {
        GoldRecord {
            dialogue_id: id.into(),
            turn_index: 0,
            state: TurnState {
                slot_values: slots
                    .iter()
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .collect(),
                active_intents: intents.iter().map(|s| s.to_string()).collect(),
                ..TurnState::default()
            },
        }
    }

    fn pred(id: &str, slots: &[(&str, &str)], intents: &[&str]) -> DecodedRecord {
        DecodedRecord {
            dialogue_id: id.into(),
            turn_index: 0,
            state: DecodedState {
                slot_values: slots
                    .iter()
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .collect(),
                active_intents: intents.iter().map(|s| s.to_string()).collect(),
                ..DecodedState::default()
            },
            diagnostics: vec![],
        }
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_value("  Summer  Anthems "), "summer anthems");
        assert_eq!(normalize_value("no other love"), "no other love");
        let n = Normalizer::train_station();
        assert_eq!(
            n.normalize("train-departure", "Cambridge Train Station"),
            "cambridge"
        );
        assert_eq!(
            n.normalize("hotel-name", "Cambridge Train Station"),
            "cambridge train station"
        );
        assert_eq!(
            strip_suffix_repeated("train station", "train station"),
            "train station"
        );
    }

    #[test]
    fn seven_of_ten() {
        // brute-force fixture: turns 0..7 match, 7..10 differ in one way each
        let mut preds = Vec::new();
        let mut golds = Vec::new();
        for i in 0..10 {
            let id = format!("d{i}");
            golds.push(gold(
                &id,
                &[("hotel-area", "north"), ("hotel-stars", "4")],
                &[],
            ));
            preds.push(match i {
                7 => pred(&id, &[("hotel-area", "north")], &[]),
                8 => pred(&id, &[("hotel-area", "north"), ("hotel-stars", "5")], &[]),
                9 => pred(
                    &id,
                    &[
                        ("hotel-area", "north"),
                        ("hotel-stars", "4"),
                        ("hotel-parking", "yes"),
                    ],
                    &[],
                ),
                _ => pred(&id, &[("hotel-area", " North "), ("hotel-stars", "4")], &[]),
            });
        }
        let expected = (0..10).filter(|&i| i < 7).count() as f64 / 10.0;
        let jga = joint_goal_accuracy(&preds, &golds, &Normalizer::default()).unwrap();
        assert_eq!(jga, expected);
        assert_eq!(jga, 0.7);
    }

    #[test]
    fn alternatives_and_decode_errors() {
        let mut g = gold("a", &[("m-album", "summer anthems")], &[]);
        g.state.slot_alternatives.insert(
            "m-album".into(),
            vec!["summer anthems".into(), "the summer anthems".into()],
        );
        let p = pred("a", &[("m-album", "The Summer Anthems")], &[]);
        let e = Evaluator::default();
        assert!(e.turn_result(&p, &g).joint_correct);
        let mut p = pred("a", &[("m-album", "summer anthems")], &[]);
        p.state
            .errors
            .push(DecodeError::UnknownSlotIndex { index: 9 });
        assert!(!e.turn_result(&p, &g).joint_correct);
        p.state.errors = vec![DecodeError::UnknownIntentIndex { index: 3 }];
        let r = e.turn_result(&p, &g);
        assert!(r.joint_correct && !r.intent_correct);
    }

    #[test]
    fn intent_accuracy_fixtures() {
        let golds: Vec<_> = (0..4)
            .map(|i| gold(&format!("d{i}"), &[], &["x-find"]))
            .collect();
        let preds: Vec<_> = (0..4)
            .map(|i| {
                pred(
                    &format!("d{i}"),
                    &[],
                    if i == 3 { &[] } else { &["x-find"] },
                )
            })
            .collect();
        assert_eq!(active_intent_accuracy(&preds, &golds).unwrap(), 0.75);
        let empty: Vec<_> = (0..4).map(|i| pred(&format!("d{i}"), &[], &[])).collect();
        assert_eq!(active_intent_accuracy(&empty, &golds).unwrap(), 0.0);
        assert_eq!(
            active_intent_accuracy(&preds[..3], &golds).unwrap_err(),
            MetricsError::LengthMismatch {
                predictions: 3,
                golds: 4
            }
        );
    }

    #[test]
    fn requested_f1_fixture() {
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        let mut golds = vec![
            gold("a", &[], &[]),
            gold("b", &[], &[]),
            gold("c", &[], &[]),
        ];
        let mut preds = vec![
            pred("a", &[], &[]),
            pred("b", &[], &[]),
            pred("c", &[], &[]),
        ];
        assert_eq!(requested_slot_f1(&preds, &golds).unwrap(), 1.0);
        // tp=3, fp=1, fn=2
        golds[0].state.requested_slots = set(&["s1", "s2"]);
        preds[0].state.requested_slots = set(&["s1", "s2", "s9"]);
        golds[1].state.requested_slots = set(&["s3", "s4", "s5"]);
        preds[1].state.requested_slots = set(&["s3"]);
        let f1 = requested_slot_f1(&preds, &golds).unwrap();
        assert!((f1 - 6.0 / 9.0).abs() < 1e-12);
        preds[0].state.requested_slots = set(&["x"]);
        preds[1].state.requested_slots = set(&["y"]);
        assert_eq!(requested_slot_f1(&preds, &golds).unwrap(), 0.0);
    }

    #[test]
    fn misaligned_keys() {
        let err = joint_goal_accuracy(
            &[pred("a", &[], &[])],
            &[gold("b", &[], &[])],
            &Normalizer::default(),
        )
        .unwrap_err();
        assert!(matches!(err, MetricsError::Misaligned { position: 0, .. }));
    }

    #[test]
    fn per_domain() {
        let g = gold("a", &[("hotel-area", "north"), ("taxi-leave", "5")], &[]);
        let p = pred("a", &[("hotel-area", "north"), ("taxi-leave", "6")], &[]);
        let report = Evaluator::default().evaluate(&[p], &[g]).unwrap();
        assert_eq!(report.per_domain_jga["hotel"], 1.0);
        assert_eq!(report.per_domain_jga["taxi"], 0.0);
        assert_eq!(report.jga, 0.0);
    }

    #[test]
    fn tally_merge_is_associative() {
        let results: Vec<TurnResult> = (0..6)
            .map(|i| TurnResult {
                dialogue_id: format!("d{i}"),
                turn_index: 0,
                joint_correct: i % 2 == 0,
                intent_correct: i % 3 == 0,
                requested_tp: i,
                requested_fp: 1,
                requested_fn: 0,
                domain_correct: BTreeMap::from([("hotel".to_string(), i < 3)]),
            })
            .collect();
        let fold = |rs: &[TurnResult]| {
            rs.iter().fold(Tally::default(), |mut t, r| {
                t.add(r);
                t
            })
        };
        let whole = fold(&results);
        let left = fold(&results[..2])
            .merge(fold(&results[2..4]))
            .merge(fold(&results[4..]));
        let right = fold(&results[..2]).merge(fold(&results[2..4]).merge(fold(&results[4..])));
        assert_eq!(whole, left);
        assert_eq!(whole, right);
    }

    #[test]
    fn sensitivity_cases() {
        let all = |n: usize, pattern: &[bool]| -> BTreeMap<String, Vec<bool>> {
            (0..n)
                .map(|v| (format!("v{v}"), pattern.to_vec()))
                .collect()
        };
        let r = schema_sensitivity(&all(5, &[true, true, false, true])).unwrap();
        assert_eq!(r.ss_jga, 0.0);
        assert!(!r.undefined);

        // turn 0: 5/5 correct; turn 1: 3/5
        let mut v = BTreeMap::new();
        for i in 0..5 {
            v.insert(format!("v{i}"), vec![true, i < 3]);
        }
        let r = schema_sensitivity(&v).unwrap();
        let mu: f64 = 0.6;
        let sigma = ((3.0 * (1.0 - mu).powi(2) + 2.0 * mu.powi(2)) / 5.0).sqrt();
        assert!((sigma - (0.6f64 * 0.4).sqrt()).abs() < 1e-12);
        assert!((r.ss_jga - (0.0 + sigma / mu) / 2.0).abs() < 1e-12);
        assert!((r.ss_jga - 0.40825).abs() < 1e-5);
        assert!((r.mean_variant_jga - 0.8).abs() < 1e-12);

        let r = schema_sensitivity(&all(5, &[false, false])).unwrap();
        assert_eq!(r.ss_jga, 0.0);
        assert!(r.undefined);

        assert_eq!(
            schema_sensitivity(&all(1, &[true])).unwrap_err(),
            MetricsError::TooFewVariants(1)
        );
        let mut ragged = all(2, &[true]);
        ragged.insert("v9".into(), vec![true, false]);
        assert!(matches!(
            schema_sensitivity(&ragged),
            Err(MetricsError::VariantLength { .. })
        ));
    }

    #[test]
    fn sensitivity_config_flags() {
        let mut v = BTreeMap::new();
        for i in 0..5 {
            v.insert(format!("v{i}"), vec![false, i < 3]);
        }
        let pop = schema_sensitivity(&v).unwrap();
        let with_zero = schema_sensitivity_with(
            &v,
            SensitivityConfig {
                include_zero_mean: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((with_zero.ss_jga - pop.ss_jga / 2.0).abs() < 1e-12);
        let sample = schema_sensitivity_with(
            &v,
            SensitivityConfig {
                sample_std: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((sample.ss_jga - pop.ss_jga * (5.0f64 / 4.0).sqrt()).abs() < 1e-12);
    }
}
