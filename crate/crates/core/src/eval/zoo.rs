//! Zoo-plot statistics: per-speaker mean target and non-target scores
//! with quartile-based menagerie categories.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::score::ScoreSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZooCategory {
    /// High genuine, low impostor.
    Dove,
    /// Low genuine, high impostor.
    Worm,
    /// High genuine, high impostor.
    Chameleon,
    /// Low genuine, low impostor.
    Phantom,
    None,
}

impl ZooCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            ZooCategory::Dove => "dove",
            ZooCategory::Worm => "worm",
            ZooCategory::Chameleon => "chameleon",
            ZooCategory::Phantom => "phantom",
            ZooCategory::None => "none",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZooAssignment {
    pub speaker: String,
    pub mean_target: f64,
    pub mean_nontarget: f64,
    pub category: ZooCategory,
}

/// Speakers in the top/bottom nearest-rank quartile of `values`, with
/// ties broken by speaker id. Returns (bottom set, top set) of indices.
fn quartile_sets(values: &[(String, f64)]) -> (Vec<usize>, Vec<usize>) {
    let n = values.len();
    let q = n.div_ceil(4);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        values[a].1.total_cmp(&values[b].1).then_with(|| values[a].0.cmp(&values[b].0))
    });
    let bottom = order[..q].to_vec();
    let top = order[n - q..].to_vec();
    (bottom, top)
}

/// Per-speaker score means and quartile categories. Speakers missing a
/// trial class are excluded and reported in the warning list.
pub fn zoo_stats(scores: &ScoreSet) -> Result<(Vec<ZooAssignment>, Vec<String>)> {
    let mut per_speaker: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in &scores.records {
        let entry = per_speaker.entry(&r.enroll_id).or_default();
        if r.label.is_target() {
            entry.0.push(r.raw_score);
        } else {
            entry.1.push(r.raw_score);
        }
    }
    let mut warnings = Vec::new();
    let mut speakers = Vec::new();
    for (spk, (tar, non)) in &per_speaker {
        if tar.is_empty() || non.is_empty() {
            warnings.push(format!("speaker {spk} lacks a trial class and was excluded"));
            continue;
        }
        let mt = tar.iter().sum::<f64>() / tar.len() as f64;
        let mn = non.iter().sum::<f64>() / non.len() as f64;
        speakers.push((spk.to_string(), mt, mn));
    }
    if speakers.is_empty() {
        return Err(Error::Precondition("no speaker has both trial classes".into()));
    }
    let genuine: Vec<(String, f64)> = speakers.iter().map(|(s, mt, _)| (s.clone(), *mt)).collect();
    let impostor: Vec<(String, f64)> = speakers.iter().map(|(s, _, mn)| (s.clone(), *mn)).collect();
    let (g_bottom, g_top) = quartile_sets(&genuine);
    let (i_bottom, i_top) = quartile_sets(&impostor);
    let in_set = |set: &[usize], i: usize| set.contains(&i);

    let assignments = speakers
        .iter()
        .enumerate()
        .map(|(i, (spk, mt, mn))| {
            let category = match (
                in_set(&g_top, i),
                in_set(&g_bottom, i),
                in_set(&i_top, i),
                in_set(&i_bottom, i),
            ) {
                (true, _, _, true) => ZooCategory::Dove,
                (_, true, true, _) => ZooCategory::Worm,
                (true, _, true, _) => ZooCategory::Chameleon,
                (_, true, _, true) => ZooCategory::Phantom,
                _ => ZooCategory::None,
            };
            ZooAssignment {
                speaker: spk.clone(),
                mean_target: *mt,
                mean_nontarget: *mn,
                category,
            }
        })
        .collect();
    Ok((assignments, warnings))
}
