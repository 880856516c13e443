//! Flagged sample database.
//!
//! Generated samples enter as [`Flag::Pending`] and leave that state exactly
//! once: committed to [`Flag::Synthetic`] or deleted. The hybrid view
//! (original + synthetic) is what the committed detector trains on.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::LabeledMatrix;
use crate::error::{Error, Result};

const MAGIC: &str = "gids-store v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flag {
    Original,
    Pending,
    Synthetic,
}

impl Flag {
    pub fn as_str(self) -> &'static str {
        match self {
            Flag::Original => "original",
            Flag::Pending => "pending",
            Flag::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Flag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(Flag::Original),
            "pending" => Ok(Flag::Pending),
            "synthetic" => Ok(Flag::Synthetic),
            other => Err(Error::parse("store", format!("unknown flag `{other}`"))),
        }
    }
}

/// Small set of flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlagSet(u8);

impl FlagSet {
    pub const HYBRID: FlagSet = FlagSet(0b101);
    pub const ALL: FlagSet = FlagSet(0b111);

    pub fn of(flags: &[Flag]) -> Self {
        FlagSet(flags.iter().fold(0, |acc, f| acc | Self::bit(*f)))
    }

    fn bit(flag: Flag) -> u8 {
        match flag {
            Flag::Original => 0b001,
            Flag::Pending => 0b010,
            Flag::Synthetic => 0b100,
        }
    }

    pub fn contains(self, flag: Flag) -> bool {
        self.0 & Self::bit(flag) != 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlaggedSample {
    pub features: Array1<f64>,
    pub label: usize,
    pub flag: Flag,
    /// Controller round that produced the sample; 0 for original data.
    pub round: usize,
}

impl FlaggedSample {
    pub fn original(features: Array1<f64>, label: usize) -> Self {
        Self {
            features,
            label,
            flag: Flag::Original,
            round: 0,
        }
    }

    pub fn pending(features: Array1<f64>, label: usize, round: usize) -> Self {
        Self {
            features,
            label,
            flag: Flag::Pending,
            round,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleStore {
    samples: Vec<FlaggedSample>,
    class_count: usize,
    dim: usize,
}

impl SampleStore {
    pub fn new(dim: usize, class_count: usize) -> Self {
        Self {
            samples: Vec::new(),
            class_count,
            dim,
        }
    }

    /// Store holding every row of `data` as an original sample.
    pub fn from_original(data: &LabeledMatrix) -> Self {
        let samples = data
            .features
            .rows()
            .into_iter()
            .zip(&data.labels)
            .map(|(row, &label)| FlaggedSample::original(row.to_owned(), label))
            .collect();
        Self {
            samples,
            class_count: data.class_count,
            dim: data.dim(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[FlaggedSample] {
        &self.samples
    }

    /// Appends `samples` in order. Only original or pending samples may be
    /// inserted; synthetic samples arise solely from [`Self::commit_pending`].
    /// The batch is validated as a whole before anything is appended.
    pub fn insert(&mut self, samples: Vec<FlaggedSample>) -> Result<()> {
        for s in &samples {
            if s.features.len() != self.dim {
                return Err(Error::Shape(format!(
                    "sample has {} features, store holds {}",
                    s.features.len(),
                    self.dim
                )));
            }
            if s.label >= self.class_count {
                return Err(Error::Data(format!(
                    "label {} out of range for {} classes",
                    s.label, self.class_count
                )));
            }
            match s.flag {
                Flag::Synthetic => {
                    return Err(Error::Data("synthetic samples can only be produced by commit".into()))
                }
                Flag::Original if s.round != 0 => {
                    return Err(Error::Data("original samples must carry round 0".into()))
                }
                _ => {}
            }
        }
        self.samples.extend(samples);
        Ok(())
    }

    pub fn count(&self, label: Option<usize>, flags: FlagSet) -> usize {
        self.samples
            .iter()
            .filter(|s| flags.contains(s.flag) && label.is_none_or(|l| s.label == l))
            .count()
    }

    pub fn pending_count(&self, label: usize) -> usize {
        self.count(Some(label), FlagSet::of(&[Flag::Pending]))
    }

    /// Samples whose flag is in `flags` (and label in `labels`, if given), in insertion order.
    pub fn view(&self, flags: FlagSet, labels: Option<&[usize]>) -> LabeledMatrix {
        let picked: Vec<&FlaggedSample> = self
            .samples
            .iter()
            .filter(|s| flags.contains(s.flag) && labels.is_none_or(|ls| ls.contains(&s.label)))
            .collect();
        let mut features = Array2::zeros((picked.len(), self.dim));
        for (mut row, s) in features.rows_mut().into_iter().zip(&picked) {
            row.assign(&s.features);
        }
        LabeledMatrix {
            features,
            labels: picked.iter().map(|s| s.label).collect(),
            class_count: self.class_count,
        }
    }

    pub fn hybrid(&self) -> LabeledMatrix {
        self.view(FlagSet::HYBRID, None)
    }

    /// Flips every pending sample of `label` to synthetic; returns how many.
    pub fn commit_pending(&mut self, label: usize) -> usize {
        let mut n = 0;
        for s in self.samples.iter_mut().filter(|s| s.flag == Flag::Pending && s.label == label) {
            s.flag = Flag::Synthetic;
            n += 1;
        }
        n
    }

    /// Deletes every pending sample of `label`; returns how many.
    pub fn reject_pending(&mut self, label: usize) -> usize {
        let before = self.samples.len();
        self.samples.retain(|s| !(s.flag == Flag::Pending && s.label == label));
        before - self.samples.len()
    }

    /// Copy of the selected view with targets 1 for `label` and 0 otherwise.
    pub fn binarize_for_label(&self, label: usize, flags: FlagSet) -> Result<LabeledMatrix> {
        if label >= self.class_count {
            return Err(Error::Data(format!(
                "label {label} out of range for {} classes",
                self.class_count
            )));
        }
        let mut view = self.view(flags, None);
        for l in &mut view.labels {
            *l = usize::from(*l == label);
        }
        view.class_count = 2;
        Ok(view)
    }

    /// One line per sample: `label,flag,round,f0,f1,...`, after a header line.
    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} classes={} dim={}\n", self.class_count, self.dim);
        for s in &self.samples {
            let _ = write!(out, "{},{},{}", s.label, s.flag, s.round);
            for v in &s.features {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let rest = header
            .strip_prefix(MAGIC)
            .ok_or_else(|| Error::parse("store", "missing format header"))?;
        let mut class_count = None;
        let mut dim = None;
        for kv in rest.split_whitespace() {
            match kv.split_once('=') {
                Some(("classes", v)) => class_count = v.parse().ok(),
                Some(("dim", v)) => dim = v.parse().ok(),
                _ => {}
            }
        }
        let (Some(class_count), Some(dim)) = (class_count, dim) else {
            return Err(Error::parse("store", "header needs classes= and dim="));
        };
        let mut store = Self::new(dim, class_count);
        for (row, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |m: &str| Error::Ingestion {
                row,
                message: m.to_string(),
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 3 {
                return Err(bad("wrong field count"));
            }
            let label: usize = fields[0].parse().map_err(|_| bad("bad label"))?;
            let flag: Flag = fields[1].parse()?;
            let round: usize = fields[2].parse().map_err(|_| bad("bad round"))?;
            let features = fields[3..]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| bad("bad feature")))
                .collect::<Result<Array1<f64>>>()?;
            if label >= class_count || (flag == Flag::Original && round != 0) {
                return Err(bad("sample violates store invariants"));
            }
            store.samples.push(FlaggedSample {
                features,
                label,
                flag,
                round,
            });
        }
        Ok(store)
    }

    /// Hybrid view as `label,f0,f1,...` CSV.
    pub fn export_hybrid_csv(&self) -> String {
        self.hybrid().to_csv()
    }
}
