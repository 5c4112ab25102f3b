//! Experimental data regimes: few-shot samples, leave-one-out domain splits,
//! cross-dataset prefix restriction, and the train-station postprocess rule.
//!
//! Sampling is at dialogue granularity and without replacement. Selected
//! dialogues keep their corpus order.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::corpus::Dialogue;
use crate::jsonl::{self, JsonlError};
use crate::metrics::{TRAIN_STATION_SLOTS, TRAIN_STATION_SUFFIX};
use crate::parse::DecodedState;
use crate::rng;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SplitError {
    #[error("domain {domain} has {available} dialogues, fewer than k = {k}")]
    DomainTooSmall {
        domain: String,
        available: usize,
        k: usize,
    },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("fraction {0} is outside (0, 1]")]
    BadFraction(f64),
    #[error("domain {0} does not occur in the corpus")]
    UnknownDomain(String),
    #[error("split parameter does not match split kind {0:?}")]
    ParameterKind(SplitKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitKind {
    FewShotFraction,
    FewShotPerDomain,
    LeaveOneOut,
    CrossDataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitParameter {
    K(usize),
    Fraction(f64),
    Domain(String),
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub kind: SplitKind,
    pub parameter: SplitParameter,
    pub seed: u64,
}

/// Uniform sample of `k` of the `n` positions, returned ascending.
fn sample_positions(seed: u64, label: &[u8], n: usize, k: usize) -> Vec<usize> {
    let mut rng = rng::derive(seed, &[b"split", label]);
    let mut picked = index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    picked
}

/// Exactly `k` dialogues from each domain, where a dialogue's domain is its
/// first listed service. Each domain is sampled from its own seeded stream.
pub fn fewshot_per_domain(
    corpus: &[Dialogue],
    k: usize,
    seed: u64,
) -> Result<Vec<&Dialogue>, SplitError> {
    if k == 0 {
        return Err(SplitError::ZeroK);
    }
    let mut buckets: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, d) in corpus.iter().enumerate() {
        if let Some(domain) = d.primary_domain() {
            buckets.entry(domain).or_default().push(i);
        }
    }
    let mut chosen = Vec::new();
    for (domain, members) in &buckets {
        if members.len() < k {
            return Err(SplitError::DomainTooSmall {
                domain: domain.to_string(),
                available: members.len(),
                k,
            });
        }
        chosen.extend(
            sample_positions(seed, domain.as_bytes(), members.len(), k)
                .into_iter()
                .map(|p| members[p]),
        );
    }
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| &corpus[i]).collect())
}

/// `ceil(fraction * n)`, snapping products within 1e-9 of an integer so that
/// float error cannot add a dialogue.
pub fn fraction_count(fraction: f64, n: usize) -> usize {
    let exact = fraction * n as f64;
    let nearest = exact.round();
    let count = if (exact - nearest).abs() < 1e-9 {
        nearest
    } else {
        exact.ceil()
    };
    (count as usize).min(n)
}

pub fn fewshot_fraction(
    corpus: &[Dialogue],
    fraction: f64,
    seed: u64,
) -> Result<Vec<&Dialogue>, SplitError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(SplitError::BadFraction(fraction));
    }
    let k = fraction_count(fraction, corpus.len());
    Ok(sample_positions(seed, b"fraction", corpus.len(), k)
        .into_iter()
        .map(|i| &corpus[i])
        .collect())
}

fn touches(d: &Dialogue, domain: &str) -> bool {
    d.services.iter().any(|s| s.eq_ignore_ascii_case(domain))
}

/// `(train, eval)`: dialogues that never touch `held_out` versus those that do.
pub fn leave_one_out<'a>(
    corpus: &'a [Dialogue],
    held_out: &str,
) -> Result<(Vec<&'a Dialogue>, Vec<&'a Dialogue>), SplitError> {
    let (eval, train): (Vec<_>, Vec<_>) = corpus.iter().partition(|d| touches(d, held_out));
    if eval.is_empty() {
        return Err(SplitError::UnknownDomain(held_out.to_string()));
    }
    Ok((train, eval))
}

/// Schemata to show in the prefix when transferring across datasets: only the
/// dialogue's own domains.
pub fn restrict_prefix_domains(dialogue: &Dialogue) -> BTreeSet<String> {
    dialogue.services.iter().cloned().collect()
}

fn strip_station(value: &str) -> &str {
    let suffix = format!(" {TRAIN_STATION_SUFFIX}");
    let mut out = value.trim_end();
    while out.len() > suffix.len()
        && out.is_char_boundary(out.len() - suffix.len())
        && out[out.len() - suffix.len()..].eq_ignore_ascii_case(&suffix)
        && !out[..out.len() - suffix.len()].trim().is_empty()
    {
        out = out[..out.len() - suffix.len()].trim_end();
    }
    out
}

/// Drops a trailing "train station" from train-departure and
/// train-destination values; other slots are left alone. Idempotent.
pub fn strip_train_station_suffix(state: &DecodedState) -> DecodedState {
    let mut out = state.clone();
    for slot in TRAIN_STATION_SLOTS {
        if let Some(v) = out.slot_values.get_mut(slot) {
            *v = strip_station(v).to_string();
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub kind: SplitKind,
    pub parameter: SplitParameter,
    pub seed: u64,
    pub corpus_hash: String,
    pub granularity: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub dialogue_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<Partition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix_domains: Option<BTreeSet<String>>,
}

impl ManifestEntry {
    fn plain(d: &Dialogue) -> Self {
        ManifestEntry {
            dialogue_id: d.id.clone(),
            partition: None,
            prefix_domains: None,
        }
    }
}

/// JSONL manifest: a header line, then one dialogue id per line.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitManifest {
    pub header: ManifestHeader,
    pub entries: Vec<ManifestEntry>,
}

pub fn corpus_hash(corpus: &[Dialogue]) -> String {
    rng::fingerprint(corpus.iter().map(|d| d.id.as_str()))
}

impl SplitManifest {
    pub fn build(corpus: &[Dialogue], spec: &SplitSpec) -> Result<Self, SplitError> {
        let entries: Vec<ManifestEntry> = match (spec.kind, &spec.parameter) {
            (SplitKind::FewShotPerDomain, SplitParameter::K(k)) => {
                fewshot_per_domain(corpus, *k, spec.seed)?
                    .into_iter()
                    .map(ManifestEntry::plain)
                    .collect()
            }
            (SplitKind::FewShotFraction, SplitParameter::Fraction(f)) => {
                fewshot_fraction(corpus, *f, spec.seed)?
                    .into_iter()
                    .map(ManifestEntry::plain)
                    .collect()
            }
            (SplitKind::LeaveOneOut, SplitParameter::Domain(domain)) => {
                let (train, eval) = leave_one_out(corpus, domain)?;
                let tag = |d: &Dialogue, p: Partition| ManifestEntry {
                    partition: Some(p),
                    ..ManifestEntry::plain(d)
                };
                train
                    .into_iter()
                    .map(|d| tag(d, Partition::Train))
                    .chain(eval.into_iter().map(|d| tag(d, Partition::Eval)))
                    .collect()
            }
            (SplitKind::CrossDataset, _) => corpus
                .iter()
                .map(|d| ManifestEntry {
                    dialogue_id: d.id.clone(),
                    partition: Some(Partition::Eval),
                    prefix_domains: Some(restrict_prefix_domains(d)),
                })
                .collect(),
            (kind, _) => return Err(SplitError::ParameterKind(kind)),
        };
        Ok(SplitManifest {
            header: ManifestHeader {
                kind: spec.kind,
                parameter: spec.parameter.clone(),
                seed: spec.seed,
                corpus_hash: corpus_hash(corpus),
                granularity: "dialogue".into(),
                count: entries.len(),
            },
            entries,
        })
    }

    pub fn write(&self, mut w: impl Write) -> Result<(), JsonlError> {
        jsonl::write_header(&mut w, &self.header)?;
        jsonl::write(w, &self.entries)
    }

    pub fn read(r: impl BufRead) -> Result<Self, JsonlError> {
        let (header, entries) = jsonl::read_with_header(r)?;
        let header = header.ok_or_else(|| {
            JsonlError::Json(serde::de::Error::custom(
                "split manifest has no header line",
            ))
        })?;
        Ok(SplitManifest {
            header: serde_json::from_value(header)?,
            entries,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DialogueTurn, TurnState, Utterance};

    fn dialogue(id: &str, services: &[&str]) -> Dialogue {
        Dialogue {
            id: id.into(),
            services: services.iter().map(|s| s.to_string()).collect(),
            turns: vec![DialogueTurn {
                index: 0,
                user: Utterance::user("hi"),
                system_response: None,
                state: TurnState::default(),
                active_services: BTreeSet::new(),
            }],
        }
    }

    fn three_domains() -> Vec<Dialogue> {
        let mut corpus = Vec::new();
        for domain in ["hotel", "taxi", "train"] {
            for i in 0..5 {
                corpus.push(dialogue(&format!("{domain}{i}"), &[domain]));
            }
        }
        corpus
    }

    #[test]
    fn per_domain_counts() {
        let corpus = three_domains();
        let picked = fewshot_per_domain(&corpus, 2, 1).unwrap();
        assert_eq!(picked.len(), 6);
        for domain in ["hotel", "taxi", "train"] {
            assert_eq!(picked.iter().filter(|d| d.services[0] == domain).count(), 2);
        }
        let all = fewshot_per_domain(&corpus, 5, 1).unwrap();
        assert_eq!(all.len(), corpus.len());
        assert_eq!(
            fewshot_per_domain(&corpus, 6, 1).unwrap_err(),
            SplitError::DomainTooSmall {
                domain: "hotel".into(),
                available: 5,
                k: 6
            }
        );
        assert_eq!(
            fewshot_per_domain(&corpus, 0, 1).unwrap_err(),
            SplitError::ZeroK
        );
    }

    #[test]
    fn fraction_arithmetic() {
        assert_eq!(fraction_count(0.01, 16142), 162);
        assert_eq!(fraction_count(0.1, 100), 10);
        assert_eq!(fraction_count(0.1, 16142), 1615);
        assert_eq!(fraction_count(1.0, 7), 7);
        let corpus = three_domains();
        assert_eq!(fewshot_fraction(&corpus, 1.0, 3).unwrap().len(), 15);
        let a: Vec<_> = fewshot_fraction(&corpus, 0.4, 3)
            .unwrap()
            .iter()
            .map(|d| &d.id)
            .collect();
        let b: Vec<_> = fewshot_fraction(&corpus, 0.4, 3)
            .unwrap()
            .iter()
            .map(|d| &d.id)
            .collect();
        assert_eq!(a.len(), 6);
        assert_eq!(a, b);
        assert!(fewshot_fraction(&corpus, 0.0, 3).is_err());
        assert!(fewshot_fraction(&corpus, 1.5, 3).is_err());
    }

    #[test]
    fn leave_one_out_partition() {
        // 4 single-domain dialogues + 2 mixed
        let corpus = vec![
            dialogue("a", &["hotel"]),
            dialogue("b", &["taxi"]),
            dialogue("c", &["train"]),
            dialogue("d", &["taxi"]),
            dialogue("e", &["hotel", "taxi"]),
            dialogue("f", &["train", "restaurant"]),
        ];
        let (train, eval) = leave_one_out(&corpus, "taxi").unwrap();
        fn ids<'a>(v: &[&'a Dialogue]) -> Vec<&'a str> {
            v.iter().map(|d| d.id.as_str()).collect()
        }
        assert_eq!(ids(&train), vec!["a", "c", "f"]);
        assert_eq!(ids(&eval), vec!["b", "d", "e"]);
        assert_eq!(
            leave_one_out(&corpus, "bus").unwrap_err(),
            SplitError::UnknownDomain("bus".into())
        );
        let only_taxi = vec![dialogue("x", &["taxi"])];
        assert!(leave_one_out(&only_taxi, "taxi").unwrap().0.is_empty());
    }

    #[test]
    fn prefix_domains() {
        assert_eq!(
            restrict_prefix_domains(&dialogue("a", &["hotel"])),
            BTreeSet::from(["hotel".to_string()])
        );
        assert_eq!(
            restrict_prefix_domains(&dialogue("a", &["hotel", "taxi"])),
            BTreeSet::from(["hotel".to_string(), "taxi".to_string()])
        );
    }

    #[test]
    fn train_station_rule() {
        let mut s = DecodedState::default();
        s.slot_values
            .insert("train-departure".into(), "cambridge train station".into());
        s.slot_values
            .insert("train-destination".into(), "cambridge".into());
        s.slot_values
            .insert("hotel-name".into(), "station train station".into());
        let once = strip_train_station_suffix(&s);
        assert_eq!(once.slot_values["train-departure"], "cambridge");
        assert_eq!(once.slot_values["train-destination"], "cambridge");
        assert_eq!(once.slot_values["hotel-name"], "station train station");
        assert_eq!(strip_train_station_suffix(&once), once);
        s.slot_values
            .insert("train-departure".into(), "train station".into());
        assert_eq!(
            strip_train_station_suffix(&s).slot_values["train-departure"],
            "train station"
        );
    }

    #[test]
    fn manifest_round_trip() {
        let corpus = three_domains();
        let spec = SplitSpec {
            kind: SplitKind::FewShotPerDomain,
            parameter: SplitParameter::K(2),
            seed: 9,
        };
        let manifest = SplitManifest::build(&corpus, &spec).unwrap();
        let mut buf = Vec::new();
        manifest.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "{\"header\":{\"kind\":\"few-shot-per-domain\",\"parameter\":2,\"seed\":9,"
        ));
        assert_eq!(SplitManifest::read(buf.as_slice()).unwrap(), manifest);
        let bad = SplitSpec {
            kind: SplitKind::LeaveOneOut,
            parameter: SplitParameter::K(2),
            seed: 0,
        };
        assert!(SplitManifest::build(&corpus, &bad).is_err());
    }
}
