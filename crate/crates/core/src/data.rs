//! Recordings, epochs, labels and the canonical on-disk epoch format.
//!
//! An epoch set is stored as two sibling files: `<name>.json` (header) and
//! `<name>.f32` holding `n_epochs × n_channels × n_timesteps` little-endian
//! `f32` samples, epoch-major, then channel-major, then time.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

/// Canonical word order for the four-command task.
pub const WORDS_4: [&str; 4] = ["up", "down", "right", "left"];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("tensor shape mismatch: expected {expected} bytes, found {actual}")]
    ShapeMismatch { expected: u64, actual: u64 },
    #[error("non-finite sample at epoch {epoch}, channel {channel}, t={t}")]
    NonFiniteSample { epoch: usize, channel: usize, t: usize },
    #[error("channel selection is empty")]
    EmptySelection,
    #[error("interval too short: requested {requested_s} s, annotated {available_s} s (trial {trial})")]
    IntervalTooShort { trial: usize, requested_s: f64, available_s: f64 },
    #[error("invalid epoch set: {0}")]
    Invalid(String),
    #[error("i/o failure on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hemisphere {
    Left,
    Right,
    Midline,
    Unknown,
}

impl Hemisphere {
    /// 10-20 convention: odd trailing digit is left, even is right, `z` is midline.
    pub fn from_label(label: &str) -> Self {
        match label.trim().chars().last() {
            Some(c) if c.eq_ignore_ascii_case(&'z') => Hemisphere::Midline,
            Some(c) if c.is_ascii_digit() => {
                if (c as u8 - b'0') % 2 == 1 {
                    Hemisphere::Left
                } else {
                    Hemisphere::Right
                }
            }
            _ => Hemisphere::Unknown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelInfo {
    pub name: String,
    pub hemisphere: Hemisphere,
    pub index: usize,
}

impl ChannelInfo {
    pub fn new(name: impl Into<String>, index: usize) -> Self {
        let name = name.into();
        let hemisphere = Hemisphere::from_label(&name);
        Self { name, hemisphere, index }
    }
}

/// Channel list built from labels, hemisphere derived from each label.
pub fn montage(names: &[&str]) -> Vec<ChannelInfo> {
    names.iter().enumerate().map(|(i, n)| ChannelInfo::new(*n, i)).collect()
}

/// Override derived hemisphere tags (e.g. from a montage file).
pub fn apply_hemisphere_overrides(channels: &mut [ChannelInfo], overrides: &BTreeMap<String, Hemisphere>) {
    for ch in channels.iter_mut() {
        if let Some(h) = overrides.get(&ch.name) {
            ch.hemisphere = *h;
        }
    }
}

fn check_channels(channels: &[ChannelInfo]) -> std::result::Result<(), String> {
    let mut seen = HashSet::new();
    for (i, ch) in channels.iter().enumerate() {
        if ch.index != i {
            return Err(format!("channel {} has index {} at position {i}", ch.name, ch.index));
        }
        if !seen.insert(ch.name.as_str()) {
            return Err(format!("duplicate channel name {}", ch.name));
        }
    }
    Ok(())
}

/// Continuous multichannel recording, samples in microvolts.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    channels: Vec<ChannelInfo>,
    sampling_rate_hz: f64,
    samples: Vec<Vec<f32>>,
    pub subject_id: String,
    pub session_id: String,
}

impl Recording {
    pub fn new(
        channels: Vec<ChannelInfo>,
        sampling_rate_hz: f64,
        samples: Vec<Vec<f32>>,
        subject_id: impl Into<String>,
        session_id: impl Into<String>,
    ) -> Result<Self> {
        check_channels(&channels).map_err(DataError::Invalid)?;
        if !(sampling_rate_hz > 0.0 && sampling_rate_hz.is_finite()) {
            return Err(DataError::Invalid(format!("sampling rate {sampling_rate_hz}")));
        }
        if samples.len() != channels.len() {
            return Err(DataError::Invalid(format!(
                "{} sample rows for {} channels",
                samples.len(),
                channels.len()
            )));
        }
        let n = samples.first().map_or(0, Vec::len);
        for (c, row) in samples.iter().enumerate() {
            if row.len() != n {
                return Err(DataError::Invalid(format!("channel {c} has {} samples, expected {n}", row.len())));
            }
            if let Some(t) = row.iter().position(|v| !v.is_finite()) {
                return Err(DataError::NonFiniteSample { epoch: 0, channel: c, t });
            }
        }
        Ok(Self { channels, sampling_rate_hz, samples, subject_id: subject_id.into(), session_id: session_id.into() })
    }

    pub fn channels(&self) -> &[ChannelInfo] {
        &self.channels
    }

    pub fn sampling_rate_hz(&self) -> f64 {
        self.sampling_rate_hz
    }

    pub fn samples(&self) -> &[Vec<f32>] {
        &self.samples
    }

    pub fn n_samples(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }
}

/// Which part of a trial an epoch was cut from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Interval {
    Rest,
    Action,
    Window { start_s: f64, end_s: f64 },
}

/// One labelled trial segment, stored channel-major (`n_channels × n_timesteps`).
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    data: Vec<f32>,
    n_channels: usize,
    n_timesteps: usize,
    pub label: usize,
    pub interval: Interval,
}

impl Epoch {
    pub fn new(data: Vec<f32>, n_channels: usize, n_timesteps: usize, label: usize, interval: Interval) -> Result<Self> {
        if data.len() != n_channels * n_timesteps {
            return Err(DataError::Invalid(format!(
                "epoch buffer has {} values, expected {n_channels}×{n_timesteps}",
                data.len()
            )));
        }
        Ok(Self { data, n_channels, n_timesteps, label, interval })
    }

    pub fn from_rows(rows: &[Vec<f32>], label: usize, interval: Interval) -> Result<Self> {
        let n_t = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_t) {
            return Err(DataError::Invalid("ragged epoch rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(data, rows.len(), n_t, label, interval)
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_timesteps(&self) -> usize {
        self.n_timesteps
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.data[c * self.n_timesteps..(c + 1) * self.n_timesteps]
    }

    pub fn duration_s(&self, fs: f64) -> f64 {
        self.n_timesteps as f64 / fs
    }

    /// Sub-range `[start, end)` of every channel.
    pub fn slice_time(&self, start: usize, end: usize, interval: Interval) -> Epoch {
        let mut data = Vec::with_capacity(self.n_channels * (end - start));
        for c in 0..self.n_channels {
            data.extend_from_slice(&self.channel(c)[start..end]);
        }
        Epoch { data, n_channels: self.n_channels, n_timesteps: end - start, label: self.label, interval }
    }

    /// Applies `f` to each channel row, producing a new epoch (length may change).
    pub fn map_channels<F>(&self, mut f: F) -> std::result::Result<Epoch, crate::dsp::DspError>
    where
        F: FnMut(&[f32]) -> std::result::Result<Vec<f32>, crate::dsp::DspError>,
    {
        let mut data = Vec::new();
        let mut n_t = None;
        for c in 0..self.n_channels {
            let row = f(self.channel(c))?;
            if *n_t.get_or_insert(row.len()) != row.len() {
                return Err(crate::dsp::DspError::Invalid("channel transform changed lengths unevenly".into()));
            }
            data.extend(row);
        }
        Ok(Epoch {
            data,
            n_channels: self.n_channels,
            n_timesteps: n_t.unwrap_or(0),
            label: self.label,
            interval: self.interval,
        })
    }
}

/// Ordered, labelled epochs sharing channels and sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    epochs: Vec<Epoch>,
    sampling_rate_hz: f64,
    class_names: Vec<String>,
    channels: Vec<ChannelInfo>,
    n_timesteps: usize,
    pub subject_id: String,
    pub condition: String,
}

impl EpochSet {
    /// Builds a set, checking the shared-channel and label invariants.
    ///
    /// Epochs may differ in length (rest and action epochs do). `n_timesteps`
    /// is the nominal length: the longest epoch, or the given value for an
    /// empty set.
    pub fn new(
        epochs: Vec<Epoch>,
        sampling_rate_hz: f64,
        class_names: Vec<String>,
        channels: Vec<ChannelInfo>,
        n_timesteps: usize,
        subject_id: impl Into<String>,
        condition: impl Into<String>,
    ) -> Result<Self> {
        check_channels(&channels).map_err(DataError::Invalid)?;
        if !(sampling_rate_hz > 0.0 && sampling_rate_hz.is_finite()) {
            return Err(DataError::Invalid(format!("sampling rate {sampling_rate_hz}")));
        }
        let n_timesteps = epochs.iter().map(Epoch::n_timesteps).max().unwrap_or(n_timesteps);
        for (i, e) in epochs.iter().enumerate() {
            if e.n_channels != channels.len() {
                return Err(DataError::Invalid(format!(
                    "epoch {i} has {} channels, expected {}",
                    e.n_channels,
                    channels.len()
                )));
            }
            if e.label >= class_names.len() {
                return Err(DataError::Invalid(format!("epoch {i} label {} outside class table", e.label)));
            }
        }
        Ok(Self {
            epochs,
            sampling_rate_hz,
            class_names,
            channels,
            n_timesteps,
            subject_id: subject_id.into(),
            condition: condition.into(),
        })
    }

    pub fn epochs(&self) -> &[Epoch] {
        &self.epochs
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn sampling_rate_hz(&self) -> f64 {
        self.sampling_rate_hz
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn channels(&self) -> &[ChannelInfo] {
        &self.channels
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Nominal epoch length (the longest epoch).
    pub fn n_timesteps(&self) -> usize {
        self.n_timesteps
    }

    /// Shared epoch length, `None` when epochs differ in length.
    pub fn uniform_timesteps(&self) -> Option<usize> {
        match self.epochs.first() {
            None => Some(self.n_timesteps),
            Some(first) => {
                let n = first.n_timesteps;
                self.epochs.iter().all(|e| e.n_timesteps == n).then_some(n)
            }
        }
    }

    pub fn labels(&self) -> Vec<usize> {
        self.epochs.iter().map(|e| e.label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for e in &self.epochs {
            counts[e.label] += 1;
        }
        counts
    }

    /// New set holding the epochs at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> EpochSet {
        let epochs: Vec<Epoch> = indices.iter().map(|&i| self.epochs[i].clone()).collect();
        let n_timesteps = epochs.iter().map(Epoch::n_timesteps).max().unwrap_or(self.n_timesteps);
        EpochSet { epochs, n_timesteps, ..self.clone_meta() }
    }

    /// Same metadata, different epochs (which must share the channel layout).
    pub fn with_epochs(&self, epochs: Vec<Epoch>) -> Result<EpochSet> {
        EpochSet::new(
            epochs,
            self.sampling_rate_hz,
            self.class_names.clone(),
            self.channels.clone(),
            self.n_timesteps,
            self.subject_id.clone(),
            self.condition.clone(),
        )
    }

    /// Replace epochs and sampling rate together (resampling changes both).
    pub fn with_epochs_at_rate(&self, epochs: Vec<Epoch>, sampling_rate_hz: f64) -> Result<EpochSet> {
        EpochSet::new(
            epochs,
            sampling_rate_hz,
            self.class_names.clone(),
            self.channels.clone(),
            0,
            self.subject_id.clone(),
            self.condition.clone(),
        )
    }

    fn clone_meta(&self) -> EpochSet {
        EpochSet {
            epochs: Vec::new(),
            sampling_rate_hz: self.sampling_rate_hz,
            class_names: self.class_names.clone(),
            channels: self.channels.clone(),
            n_timesteps: self.n_timesteps,
            subject_id: self.subject_id.clone(),
            condition: self.condition.clone(),
        }
    }
}

/// Keep only channels accepted by `keep`, re-indexing them in original order.
pub fn select_channels<F>(set: &EpochSet, keep: F) -> Result<EpochSet>
where
    F: Fn(&ChannelInfo) -> bool,
{
    let kept: Vec<usize> = set.channels.iter().filter(|c| keep(c)).map(|c| c.index).collect();
    if kept.is_empty() {
        return Err(DataError::EmptySelection);
    }
    let channels = kept
        .iter()
        .enumerate()
        .map(|(new, &old)| ChannelInfo { index: new, ..set.channels[old].clone() })
        .collect();
    let epochs = set
        .epochs
        .iter()
        .map(|e| {
            let mut data = Vec::with_capacity(kept.len() * e.n_timesteps);
            for &c in &kept {
                data.extend_from_slice(e.channel(c));
            }
            Epoch { data, n_channels: kept.len(), ..e.clone() }
        })
        .collect();
    Ok(EpochSet { epochs, channels, ..set.clone_meta() })
}

/// A full task trial with annotated rest and action intervals (seconds from trial start).
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub rows: Vec<Vec<f32>>,
    pub label: usize,
    pub rest: (f64, f64),
    pub action: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSet {
    pub trials: Vec<Trial>,
    pub sampling_rate_hz: f64,
    pub class_names: Vec<String>,
    pub channels: Vec<ChannelInfo>,
    pub subject_id: String,
    pub condition: String,
}

fn cut(trial: &Trial, idx: usize, span: (f64, f64), dur_s: f64, fs: f64, label: usize, iv: Interval) -> Result<Epoch> {
    let available = span.1 - span.0;
    let n = (dur_s * fs).round() as usize;
    let start = (span.0 * fs).round() as usize;
    let len = trial.rows.first().map_or(0, Vec::len);
    // half-sample slack for annotations that were themselves rounded
    if dur_s > available + 0.5 / fs || start + n > len {
        return Err(DataError::IntervalTooShort { trial: idx, requested_s: dur_s, available_s: available });
    }
    let rows: Vec<Vec<f32>> = trial.rows.iter().map(|r| r[start..start + n].to_vec()).collect();
    Epoch::from_rows(&rows, label, iv)
}

/// Binary rest/action epochs: the first `rest_s` of each rest interval
/// (label 0) and the first `action_s` of each action interval (label 1).
///
/// The two durations differ, so the result is a ragged set.
pub fn split_rest_action(trials: &TrialSet, rest_s: f64, action_s: f64) -> Result<EpochSet> {
    let fs = trials.sampling_rate_hz;
    let mut epochs = Vec::with_capacity(2 * trials.trials.len());
    for (i, t) in trials.trials.iter().enumerate() {
        epochs.push(cut(t, i, t.rest, rest_s, fs, 0, Interval::Rest)?);
        epochs.push(cut(t, i, t.action, action_s, fs, 1, Interval::Action)?);
    }
    EpochSet::new(
        epochs,
        fs,
        vec!["rest".to_string(), "action".to_string()],
        trials.channels.clone(),
        0,
        trials.subject_id.clone(),
        trials.condition.clone(),
    )
}

/// Word epochs: the first `action_s` seconds of each action interval, keeping word labels.
pub fn extract_action(trials: &TrialSet, action_s: f64) -> Result<EpochSet> {
    let fs = trials.sampling_rate_hz;
    let epochs = trials
        .trials
        .iter()
        .enumerate()
        .map(|(i, t)| cut(t, i, t.action, action_s, fs, t.label, Interval::Action))
        .collect::<Result<Vec<_>>>()?;
    EpochSet::new(
        epochs,
        fs,
        trials.class_names.clone(),
        trials.channels.clone(),
        (action_s * fs).round() as usize,
        trials.subject_id.clone(),
        trials.condition.clone(),
    )
}

/// JSON header of the canonical format.
///
/// `epoch_timesteps` is present only for ragged sets and `intervals` only
/// when some epoch is not an action epoch; readers that ignore both still
/// see a well-formed uniform set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSetHeader {
    pub format_version: u32,
    pub n_epochs: usize,
    pub n_channels: usize,
    pub n_timesteps: usize,
    pub sampling_rate_hz: f64,
    pub class_names: Vec<String>,
    pub labels: Vec<usize>,
    pub channels: Vec<ChannelInfo>,
    pub subject_id: String,
    pub condition: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch_timesteps: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervals: Option<Vec<Interval>>,
}

impl EpochSetHeader {
    pub fn epoch_lengths(&self) -> Vec<usize> {
        match &self.epoch_timesteps {
            Some(v) => v.clone(),
            None => vec![self.n_timesteps; self.n_epochs],
        }
    }

    /// Tensor size implied by the header.
    pub fn expected_tensor_bytes(&self) -> u64 {
        self.epoch_lengths().iter().map(|&t| (t * self.n_channels * 4) as u64).sum()
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.format_version != FORMAT_VERSION {
            return Err(format!("unsupported format_version {}", self.format_version));
        }
        if self.labels.len() != self.n_epochs {
            return Err(format!("{} labels for {} epochs", self.labels.len(), self.n_epochs));
        }
        if self.channels.len() != self.n_channels {
            return Err(format!("{} channel records for n_channels={}", self.channels.len(), self.n_channels));
        }
        if let Some(l) = self.labels.iter().find(|&&l| l >= self.class_names.len()) {
            return Err(format!("label {l} outside class table of {}", self.class_names.len()));
        }
        if let Some(v) = &self.epoch_timesteps {
            if v.len() != self.n_epochs {
                return Err(format!("{} epoch lengths for {} epochs", v.len(), self.n_epochs));
            }
        }
        if let Some(v) = &self.intervals {
            if v.len() != self.n_epochs {
                return Err(format!("{} intervals for {} epochs", v.len(), self.n_epochs));
            }
        }
        if !(self.sampling_rate_hz > 0.0) {
            return Err(format!("sampling_rate_hz {}", self.sampling_rate_hz));
        }
        check_channels(&self.channels)
    }
}

/// `(header, tensor)` paths for a dataset base path; a `.json` or `.f32`
/// extension on `path` is ignored.
pub fn file_pair(path: &Path) -> (PathBuf, PathBuf) {
    let base = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("f32") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let with = |ext: &str| {
        let mut s = base.clone().into_os_string();
        s.push(".");
        s.push(ext);
        PathBuf::from(s)
    };
    (with("json"), with("f32"))
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.to_path_buf(), source }
}

pub fn header_of(set: &EpochSet) -> EpochSetHeader {
    let ragged = set.uniform_timesteps().is_none();
    let any_non_action = set.epochs.iter().any(|e| e.interval != Interval::Action);
    EpochSetHeader {
        format_version: FORMAT_VERSION,
        n_epochs: set.len(),
        n_channels: set.n_channels(),
        n_timesteps: set.n_timesteps,
        sampling_rate_hz: set.sampling_rate_hz,
        class_names: set.class_names.clone(),
        labels: set.labels(),
        channels: set.channels.clone(),
        subject_id: set.subject_id.clone(),
        condition: set.condition.clone(),
        epoch_timesteps: ragged.then(|| set.epochs.iter().map(Epoch::n_timesteps).collect()),
        intervals: any_non_action.then(|| set.epochs.iter().map(|e| e.interval).collect()),
    }
}

pub fn save_epochset(set: &EpochSet, path: &Path) -> Result<()> {
    let (json, tensor) = file_pair(path);
    if let Some(dir) = json.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let header = header_of(set);
    let mut text = serde_json::to_string_pretty(&header).expect("header serializes");
    text.push('\n');
    let mut bytes = Vec::with_capacity(header.expected_tensor_bytes() as usize);
    for e in &set.epochs {
        for v in &e.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(&json, text).map_err(io_err(&json))?;
    fs::write(&tensor, bytes).map_err(io_err(&tensor))?;
    Ok(())
}

pub fn read_header(path: &Path) -> Result<EpochSetHeader> {
    let (json, _) = file_pair(path);
    let text = fs::read_to_string(&json).map_err(io_err(&json))?;
    let header: EpochSetHeader =
        serde_json::from_str(&text).map_err(|e| DataError::MalformedHeader(e.to_string()))?;
    header.check().map_err(DataError::MalformedHeader)?;
    Ok(header)
}

pub fn load_epochset(path: &Path) -> Result<EpochSet> {
    let header = read_header(path)?;
    let (_, tensor) = file_pair(path);
    let bytes = fs::read(&tensor).map_err(io_err(&tensor))?;
    let expected = header.expected_tensor_bytes();
    if bytes.len() as u64 != expected {
        return Err(DataError::ShapeMismatch { expected, actual: bytes.len() as u64 });
    }
    let mut values = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
    let lengths = header.epoch_lengths();
    let c = header.n_channels;
    let mut epochs = Vec::with_capacity(header.n_epochs);
    for (i, &n_t) in lengths.iter().enumerate() {
        let data: Vec<f32> = values.by_ref().take(c * n_t).collect();
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFiniteSample { epoch: i, channel: pos / n_t.max(1), t: pos % n_t.max(1) });
        }
        let interval = header.intervals.as_ref().map_or(Interval::Action, |v| v[i]);
        epochs.push(Epoch::new(data, c, n_t, header.labels[i], interval)?);
    }
    EpochSet::new(
        epochs,
        header.sampling_rate_hz,
        header.class_names,
        header.channels,
        header.n_timesteps,
        header.subject_id,
        header.condition,
    )
    .map_err(|e| DataError::MalformedHeader(e.to_string()))
}

/// Findings of [`diagnose`]. An empty `problems` list means the set loads.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub problems: Vec<String>,
    pub warnings: Vec<String>,
    pub summary: Option<String>,
    pub class_counts: Vec<(String, usize)>,
}

impl Diagnostics {
    pub fn ok(&self) -> bool {
        self.problems.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        if self.ok() {
            out.push_str("OK\n");
        }
        for p in &self.problems {
            out.push_str(&format!("error: {p}\n"));
        }
        if let Some(s) = &self.summary {
            out.push_str(s);
            out.push('\n');
        }
        if !self.class_counts.is_empty() {
            let counts: Vec<String> = self.class_counts.iter().map(|(_, n)| n.to_string()).collect();
            let names: Vec<&str> = self.class_counts.iter().map(|(c, _)| c.as_str()).collect();
            out.push_str(&format!("class counts: {} ({})\n", counts.join("/"), names.join("/")));
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

/// Header/tensor consistency, class balance and per-channel variance
/// outliers of a stored epoch set. Never fails; problems are reported.
pub fn diagnose(path: &Path) -> Diagnostics {
    let mut d = Diagnostics::default();
    let header = match read_header(path) {
        Ok(h) => h,
        Err(e) => {
            d.problems.push(e.to_string());
            return d;
        }
    };
    let (_, tensor) = file_pair(path);
    let expected = header.expected_tensor_bytes();
    match fs::metadata(&tensor) {
        Ok(m) if m.len() != expected => {
            d.problems.push(format!("tensor {} holds {} bytes, header implies {expected}", tensor.display(), m.len()));
            return d;
        }
        Err(e) => {
            d.problems.push(format!("tensor {}: {e}", tensor.display()));
            return d;
        }
        Ok(_) => {}
    }
    let set = match load_epochset(path) {
        Ok(s) => s,
        Err(e) => {
            d.problems.push(e.to_string());
            return d;
        }
    };
    let lengths = || set.epochs().iter().map(Epoch::n_timesteps);
    let steps = match set.uniform_timesteps() {
        Some(t) => t.to_string(),
        None => format!("{}-{}", lengths().min().unwrap_or(0), lengths().max().unwrap_or(0)),
    };
    d.summary = Some(format!(
        "{} epochs, {} channels, {steps} timesteps at {} Hz",
        set.len(),
        set.n_channels(),
        set.sampling_rate_hz()
    ));
    let counts = set.class_counts();
    d.class_counts = set.class_names().iter().cloned().zip(counts.iter().copied()).collect();
    let (lo, hi) = (counts.iter().min().copied().unwrap_or(0), counts.iter().max().copied().unwrap_or(0));
    if lo == 0 && hi > 0 {
        d.warnings.push("some classes have no epochs".into());
    } else if (lo as f64) < 0.8 * hi as f64 {
        d.warnings.push(format!("class imbalance: smallest class {lo}, largest {hi}"));
    }
    let var = channel_variances(&set);
    let mut sorted: Vec<f64> = var.iter().copied().filter(|v| *v > 0.0).collect();
    sorted.sort_by(f64::total_cmp);
    let median = sorted.get(sorted.len() / 2).copied().unwrap_or(0.0);
    for (ch, &v) in set.channels().iter().zip(&var) {
        if v == 0.0 || v < 1e-6 * median {
            d.warnings.push(format!("dead channel {} (variance {v:.3e})", ch.name));
        } else if median > 0.0 && v > 100.0 * median {
            d.warnings.push(format!("high-variance channel {} (variance {v:.3e}, median {median:.3e})", ch.name));
        }
    }
    d
}

fn channel_variances(set: &EpochSet) -> Vec<f64> {
    (0..set.n_channels())
        .map(|c| {
            let (mut n, mut sum, mut sq) = (0.0f64, 0.0f64, 0.0f64);
            for e in set.epochs() {
                for &v in e.channel(c) {
                    n += 1.0;
                    sum += v as f64;
                    sq += (v as f64) * (v as f64);
                }
            }
            if n == 0.0 {
                return 0.0;
            }
            let m = sum / n;
            (sq / n - m * m).max(0.0)
        })
        .collect()
}
