//! Synthesis controller: finds weak labels, requests GAN samples for each,
//! and keeps them only when the detector measurably improves.

use std::fmt::Write as _;

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LabeledMatrix;
use crate::detector::train_ids;
use crate::error::{Error, Result};
use crate::metrics::{MetricsReport, PmRole};
use crate::neural::TrainConfig;
use crate::store::{FlagSet, SampleStore};
use crate::synthesizer::{generation_count, train_gan, GanConfig};
use crate::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Labels whose validation F1 is strictly below this are weak.
    pub pm_threshold: f64,
    /// Pending samples per request, as a fraction of the label's hybrid count.
    pub synthesis_fraction: f64,
    pub max_rounds: usize,
    /// Share of the training data held out for PM_H / PM_P evaluation.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            pm_threshold: 0.98,
            synthesis_fraction: 0.25,
            max_rounds: 10,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pm_threshold > 0.0 && self.pm_threshold <= 1.0) {
            return Err(Error::Config("pm_threshold must be in (0, 1]".into()));
        }
        if !(self.synthesis_fraction > 0.0 && self.synthesis_fraction.is_finite()) {
            return Err(Error::Config("synthesis_fraction must be positive".into()));
        }
        if self.max_rounds == 0 {
            return Err(Error::Config("max_rounds must be positive".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config("validation_fraction must be in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
}

/// Labels with F1 strictly below the threshold, ascending.
pub fn weak_labels(pm_h: &MetricsReport, config: &ControllerConfig) -> Vec<usize> {
    pm_h.per_label
        .iter()
        .enumerate()
        .filter(|(_, m)| m.f1 < config.pm_threshold)
        .map(|(l, _)| l)
        .collect()
}

/// Accept only if the label's F1 strictly improves and macro-F1 does not drop.
pub fn decide(pm_p: &MetricsReport, pm_h: &MetricsReport, label: usize) -> Verdict {
    if pm_p.f1(label) > pm_h.f1(label) && pm_p.macro_f1 >= pm_h.macro_f1 {
        Verdict::Accept
    } else {
        Verdict::Reject
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDecision {
    pub label: usize,
    pub pm_h_f1: f64,
    pub pm_p_f1: f64,
    pub pm_h_macro_f1: f64,
    pub pm_p_macro_f1: f64,
    pub verdict: Verdict,
    pub samples_generated: usize,
    /// Set when synthesis failed and the label was rejected without evaluation.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub weak_labels: Vec<usize>,
    pub decisions: Vec<LabelDecision>,
    /// Validation macro-F1 of the hybrid-trained detector at the start of the round.
    pub initial_macro_f1: f64,
    /// Validation macro-F1 of the current best detector after this round's commits.
    pub validation_macro_f1: f64,
    pub hybrid_size_before: usize,
    pub hybrid_size_after: usize,
    /// Number of detector trainings performed in the round.
    pub detector_trainings: usize,
}

impl RoundLog {
    pub fn accepted(&self) -> usize {
        self.decisions.iter().filter(|d| d.verdict == Verdict::Accept).count()
    }
}

/// Detector, GAN and controller settings for one G-IDS run.
#[derive(Debug, Clone)]
pub struct Controller {
    pub ids: TrainConfig,
    pub gan: GanConfig,
    pub config: ControllerConfig,
}

impl Controller {
    pub fn new(ids: TrainConfig, gan: GanConfig, config: ControllerConfig) -> Result<Self> {
        ids.validate()?;
        gan.validate()?;
        config.validate()?;
        Ok(Self { ids, gan, config })
    }

    fn evaluate(&self, data: &LabeledMatrix, validation: &LabeledMatrix, role: PmRole) -> Result<MetricsReport> {
        train_ids(data, &self.ids)?.evaluate_as(validation, role)
    }

    /// One pass over the weak labels. `round` is 1-based and tags pending samples.
    pub fn run_round(&self, store: &mut SampleStore, validation: &LabeledMatrix, round: usize) -> Result<RoundLog> {
        let hybrid = store.hybrid();
        let hybrid_size_before = hybrid.len();
        let mut pm_h = self.evaluate(&hybrid, validation, PmRole::Hybrid)?;
        let mut trainings = 1;
        let initial_macro_f1 = pm_h.macro_f1;
        let weak = weak_labels(&pm_h, &self.config);
        info!("round {round}: macro-F1 {initial_macro_f1:.4}, weak labels {weak:?}");

        // Each label's positives only change when that label commits, so every
        // GAN of the round can be trained up front on the round-start hybrid.
        let gans: Vec<_> = weak
            .par_iter()
            .map(|&label| {
                let positives = store.view(FlagSet::HYBRID, Some(&[label]));
                let cfg = GanConfig {
                    seed: derive_seed(self.gan.seed, &[self.config.seed, round as u64, label as u64]),
                    ..self.gan.clone()
                };
                let count = generation_count(self.config.synthesis_fraction, positives.len());
                train_gan(positives.features.view(), &cfg)
                    .and_then(|mut gan| gan.generate(label, count, round))
            })
            .collect();

        let mut decisions = Vec::with_capacity(weak.len());
        for (&label, generated) in weak.iter().zip(gans) {
            let samples = match generated {
                Ok(samples) => samples,
                Err(e) => {
                    warn!("round {round}: synthesis for label {label} failed: {e}");
                    decisions.push(LabelDecision {
                        label,
                        pm_h_f1: pm_h.f1(label),
                        pm_p_f1: pm_h.f1(label),
                        pm_h_macro_f1: pm_h.macro_f1,
                        pm_p_macro_f1: pm_h.macro_f1,
                        verdict: Verdict::Reject,
                        samples_generated: 0,
                        error: Some(e.to_string()),
                    });
                    continue;
                }
            };
            let generated = samples.len();
            store.insert(samples)?;
            let with_pending = store.view(FlagSet::ALL, None);
            let pm_p = self.evaluate(&with_pending, validation, PmRole::Pending)?;
            trainings += 1;
            let verdict = decide(&pm_p, &pm_h, label);
            debug!(
                "round {round} label {label}: F1 {:.4} -> {:.4}, macro {:.4} -> {:.4}: {verdict:?}",
                pm_h.f1(label),
                pm_p.f1(label),
                pm_h.macro_f1,
                pm_p.macro_f1
            );
            decisions.push(LabelDecision {
                label,
                pm_h_f1: pm_h.f1(label),
                pm_p_f1: pm_p.f1(label),
                pm_h_macro_f1: pm_h.macro_f1,
                pm_p_macro_f1: pm_p.macro_f1,
                verdict,
                samples_generated: generated,
                error: None,
            });
            match verdict {
                Verdict::Accept => {
                    store.commit_pending(label);
                    pm_h = pm_p.with_role(PmRole::Hybrid);
                }
                Verdict::Reject => {
                    store.reject_pending(label);
                }
            }
        }

        Ok(RoundLog {
            round,
            weak_labels: weak,
            decisions,
            initial_macro_f1,
            validation_macro_f1: pm_h.macro_f1,
            hybrid_size_before,
            hybrid_size_after: store.count(None, FlagSet::HYBRID),
            detector_trainings: trainings,
        })
    }

    /// Rounds until no label is weak or `max_rounds` is reached.
    pub fn run(&self, store: &mut SampleStore, validation: &LabeledMatrix) -> Result<Vec<RoundLog>> {
        let mut logs = Vec::new();
        for round in 1..=self.config.max_rounds {
            let log = self.run_round(store, validation, round)?;
            let done = log.weak_labels.is_empty();
            logs.push(log);
            if done {
                break;
            }
        }
        Ok(logs)
    }
}

/// Checks the ledger invariants; returns every violation found.
pub fn verify_ledger(logs: &[RoundLog]) -> Vec<String> {
    let mut problems = Vec::new();
    let mut previous: Option<f64> = None;
    for log in logs {
        let mut hybrid = log.hybrid_size_before;
        for d in &log.decisions {
            match d.verdict {
                Verdict::Accept => {
                    if d.pm_p_f1.partial_cmp(&d.pm_h_f1) != Some(std::cmp::Ordering::Greater) {
                        problems.push(format!(
                            "round {} label {}: accepted without F1 gain ({} -> {})",
                            log.round, d.label, d.pm_h_f1, d.pm_p_f1
                        ));
                    }
                    if d.pm_p_macro_f1 < d.pm_h_macro_f1 {
                        problems.push(format!(
                            "round {} label {}: accepted with macro-F1 drop ({} -> {})",
                            log.round, d.label, d.pm_h_macro_f1, d.pm_p_macro_f1
                        ));
                    }
                    hybrid += d.samples_generated;
                }
                Verdict::Reject => {}
            }
        }
        if hybrid != log.hybrid_size_after {
            problems.push(format!(
                "round {}: hybrid size {} does not match accepted growth ({})",
                log.round, log.hybrid_size_after, hybrid
            ));
        }
        if log.validation_macro_f1 < log.initial_macro_f1 {
            problems.push(format!("round {}: macro-F1 decreased within the round", log.round));
        }
        if let Some(prev) = previous {
            if log.validation_macro_f1 < prev {
                problems.push(format!(
                    "round {}: macro-F1 {} below previous round's {}",
                    log.round, log.validation_macro_f1, prev
                ));
            }
        }
        previous = Some(log.validation_macro_f1);
    }
    problems
}

/// JSON lines, one record per round.
pub fn ledger_jsonl(logs: &[RoundLog]) -> Result<String> {
    let mut out = String::new();
    for log in logs {
        out.push_str(&serde_json::to_string(log)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_ledger(text: &str) -> Result<Vec<RoundLog>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// `round,initial_macro_f1,validation_macro_f1,accepted,hybrid_size` rows.
pub fn rounds_csv(logs: &[RoundLog]) -> String {
    let mut out = String::from("round,initial_macro_f1,validation_macro_f1,weak_labels,accepted,hybrid_size\n");
    for log in logs {
        let weak: Vec<String> = log.weak_labels.iter().map(usize::to_string).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            log.round,
            log.initial_macro_f1,
            log.validation_macro_f1,
            weak.join(" "),
            log.accepted(),
            log.hybrid_size_after
        );
    }
    out
}
