use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeatureError, Provenance, Result};

/// Normalized per-feature gains and the subset kept at a cumulative threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub gains: Vec<f64>,
    pub selected: Vec<usize>,
    pub threshold: f64,
}

impl ImportanceReport {
    pub fn new(raw_gains: &[f64], threshold: f64) -> Result<Self> {
        let selected = select_by_gain(raw_gains, threshold)?;
        let total: f64 = raw_gains.iter().sum();
        Ok(Self { gains: raw_gains.iter().map(|g| g / total).collect(), selected, threshold })
    }
}

/// Smallest prefix of the gain-sorted features (descending, ties to the lower
/// index) whose normalized cumulative gain reaches `threshold`. Returned in
/// ascending index order.
pub fn select_by_gain(gains: &[f64], threshold: f64) -> Result<Vec<usize>> {
    if let Some(g) = gains.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
        return Err(FeatureError::Invalid(format!("gain {g} is not a non-negative number")));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(FeatureError::Invalid(format!("threshold {threshold} outside (0, 1]")));
    }
    let total: f64 = gains.iter().sum();
    if total <= 0.0 {
        return Err(FeatureError::AllZeroGains);
    }
    let mut order: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 0.0).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
    let mut chosen = Vec::new();
    let mut cumulative = 0.0;
    for i in order {
        chosen.push(i);
        cumulative += gains[i] / total;
        if cumulative >= threshold - 1e-12 {
            break;
        }
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Indices present in every subject's selection, ascending.
pub fn intersect_selected(per_subject: &[Vec<usize>]) -> Result<Vec<usize>> {
    let (first, rest) = per_subject
        .split_first()
        .ok_or_else(|| FeatureError::Invalid("no subject selections to intersect".into()))?;
    let mut out: Vec<usize> = first.iter().copied().filter(|i| rest.iter().all(|s| s.contains(i))).collect();
    out.sort_unstable();
    out.dedup();
    if out.is_empty() {
        log::warn!("cross-subject feature intersection is empty");
    }
    Ok(out)
}

/// Channels owning at least one selected column, in first-appearance order.
pub fn columns_to_channels(selected: &[usize], provenance: &[Provenance]) -> Result<Vec<String>> {
    let mut out: Vec<String> = Vec::new();
    for &i in selected {
        match provenance.get(i) {
            Some(Provenance::ChannelBand { channel, .. }) => {
                if !out.contains(channel) {
                    out.push(channel.clone());
                }
            }
            Some(Provenance::Component { .. }) => return Err(FeatureError::PcaProvenance),
            None => {
                return Err(FeatureError::DimensionMismatch { expected: provenance.len(), actual: i + 1 })
            }
        }
    }
    Ok(out)
}

/// `column_index,channel,band,gain` rows for the selected columns.
pub fn write_selection_csv(path: &Path, report: &ImportanceReport, provenance: &[Provenance]) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "column_index,channel,band,gain")?;
    for &i in &report.selected {
        let (channel, band) = match &provenance[i] {
            Provenance::ChannelBand { channel, band, .. } => (channel.clone(), band.clone()),
            Provenance::Component { index } => (format!("component-{index}"), String::new()),
        };
        writeln!(out, "{i},{channel},{band},{}", report.gains[i])?;
    }
    out.flush()
}
