//! Dataset statistics and subset filters.

use serde::Serialize;

use super::record::Dataset;
use super::EvalError;
use crate::geometry::Point2;

/// Mean and population standard deviation of one attribute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(values: &[f64]) -> MeanStd {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MeanStd {
            mean,
            std: var.sqrt(),
        }
    }
}

/// Summary of a dataset's characteristics.
#[derive(Debug, Clone, Serialize)]
pub struct DatasetStats {
    pub records: usize,
    pub start_while_interacting: usize,
    pub start_while_walking: usize,
    pub past_distance_m: MeanStd,
    pub future_distance_m: MeanStd,
    pub past_interactions: MeanStd,
    pub future_interactions: MeanStd,
    pub past_duration_s: MeanStd,
    pub past_time_interacting_s: MeanStd,
    pub future_time_interacting_s: MeanStd,
    /// Straight-line endpoint distance over traveled path length.
    pub path_efficiency: MeanStd,
    /// Mean over records of the normalized edit distance between the
    /// record's interaction-class sequence and its closest other record.
    /// Absent for single-record datasets.
    pub levenshtein_to_closest: Option<f64>,
}

/// Compute per-record attributes and aggregate them.
pub fn dataset_stats(dataset: &Dataset) -> Result<DatasetStats, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::Argument("dataset has no records".into()));
    }
    let mut past_distance = Vec::new();
    let mut future_distance = Vec::new();
    let mut past_count = Vec::new();
    let mut future_count = Vec::new();
    let mut past_duration = Vec::new();
    let mut past_interacting = Vec::new();
    let mut future_interacting = Vec::new();
    let mut efficiency = Vec::new();
    let mut interacting_start = 0usize;
    let mut class_sequences: Vec<Vec<String>> = Vec::new();

    for record in &dataset.records {
        let split = record.split()?;
        let duration = record.duration();
        past_distance.push(record.traveled_distance(0.0, split.t_split));
        future_distance.push(record.traveled_distance(split.t_split, duration));
        past_count.push(split.past_interactions.len() as f64);
        future_count.push(split.future_interactions.len() as f64);
        past_duration.push(split.t_split);
        past_interacting.push(split.past_interactions.iter().map(|i| i.duration_s).sum());
        future_interacting.push(split.future_interactions.iter().map(|i| i.duration()).sum());
        if record.interacting_at_split()? {
            interacting_start += 1;
        }

        let start = Point2::from(record.positions[0]);
        let end = Point2::from(*record.positions.last().unwrap());
        let traveled = record.traveled_distance(0.0, duration);
        efficiency.push(if traveled > 0.0 {
            start.distance(end) / traveled
        } else {
            1.0
        });

        let graph = dataset.scene_for(record);
        class_sequences.push(
            record
                .interactions
                .iter()
                .map(|s| {
                    graph
                        .node(&s.object)
                        .and_then(|n| n.semantic_class.clone())
                        .unwrap_or_default()
                })
                .collect(),
        );
    }

    let levenshtein_to_closest = if class_sequences.len() > 1 {
        let mut normalized = Vec::new();
        for (i, a) in class_sequences.iter().enumerate() {
            let closest = class_sequences
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, b)| {
                    let longest = a.len().max(b.len());
                    if longest == 0 {
                        0.0
                    } else {
                        levenshtein(a, b) as f64 / longest as f64
                    }
                })
                .fold(f64::INFINITY, f64::min);
            normalized.push(closest);
        }
        Some(normalized.iter().sum::<f64>() / normalized.len() as f64)
    } else {
        None
    };

    Ok(DatasetStats {
        records: dataset.len(),
        start_while_interacting: interacting_start,
        start_while_walking: dataset.len() - interacting_start,
        past_distance_m: MeanStd::of(&past_distance),
        future_distance_m: MeanStd::of(&future_distance),
        past_interactions: MeanStd::of(&past_count),
        future_interactions: MeanStd::of(&future_count),
        past_duration_s: MeanStd::of(&past_duration),
        past_time_interacting_s: MeanStd::of(&past_interacting),
        future_time_interacting_s: MeanStd::of(&future_interacting),
        path_efficiency: MeanStd::of(&efficiency),
        levenshtein_to_closest,
    })
}

/// Edit distance between two token sequences.
pub fn levenshtein(a: &[String], b: &[String]) -> usize {
    let mut previous: Vec<usize> = (0..=b.len()).collect();
    let mut current = vec![0usize; b.len() + 1];
    for (i, token_a) in a.iter().enumerate() {
        current[0] = i + 1;
        for (j, token_b) in b.iter().enumerate() {
            let substitution = previous[j] + usize::from(token_a != token_b);
            current[j + 1] = substitution.min(previous[j + 1] + 1).min(current[j] + 1);
        }
        std::mem::swap(&mut previous, &mut current);
    }
    previous[b.len()]
}

/// Subsets used in the appendix-style analyses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetFilter {
    /// Records whose split instant falls outside every interaction
    /// interval (the human is walking when prediction starts).
    WalkingAtStart,
    /// Records whose future traveled distance reaches the dataset's 75th
    /// percentile (so repeated application is a no-op).
    FutureDistanceUpperQuartile,
}

impl SubsetFilter {
    pub fn label(&self) -> &'static str {
        match self {
            SubsetFilter::WalkingAtStart => "walking_at_start",
            SubsetFilter::FutureDistanceUpperQuartile => "future_distance_upper_quartile",
        }
    }
}

/// Filter a dataset; records that cannot be split are dropped.
pub fn subset_filter(dataset: &Dataset, which: SubsetFilter) -> Dataset {
    let mut out = Dataset {
        scenes: dataset.scenes.clone(),
        records: Vec::new(),
    };
    match which {
        SubsetFilter::WalkingAtStart => {
            for r in &dataset.records {
                if matches!(r.interacting_at_split(), Ok(false)) {
                    out.records.push(r.clone());
                }
            }
        }
        SubsetFilter::FutureDistanceUpperQuartile => {
            let distances: Vec<(usize, f64)> = dataset
                .records
                .iter()
                .enumerate()
                .filter_map(|(i, r)| {
                    r.split_time()
                        .ok()
                        .map(|t| (i, r.traveled_distance(t, r.duration())))
                })
                .collect();
            let mut sorted: Vec<f64> = distances.iter().map(|&(_, d)| d).collect();
            sorted.sort_by(f64::total_cmp);
            if let Some(threshold) = percentile(&sorted, 0.75) {
                for &(i, d) in &distances {
                    if d >= threshold {
                        out.records.push(dataset.records[i].clone());
                    }
                }
            }
        }
    }
    out
}

/// Linear-interpolation percentile of a sorted slice, `q` in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let position = q * (sorted.len() - 1) as f64;
    let lo = position.floor() as usize;
    let hi = position.ceil() as usize;
    let frac = position - lo as f64;
    Some(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}
