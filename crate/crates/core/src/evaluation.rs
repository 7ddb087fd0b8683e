//! Unlearning metrics on the synthetic memory and the report document.
//!
//! * efficacy: mean probability of the original label on forget queries
//!   (lower is better);
//! * generalization: the same on noisy paraphrase keys (lower is better);
//! * specificity: argmax accuracy on neighboring retained facts (higher is
//!   better);
//! * pseudo-perplexity: `exp(-mean log p)` of the correct label on held-out
//!   retained facts.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::facts::{argmax, extract_key_in, readout, AssociativeMemory, FactRecord};
use crate::kernel::pca_2d;
use crate::matrix::Matrix;
use crate::multiplicative::EditReport;
use crate::rng::{dot, gaussian_vec, norm, normalize, stream, Stream};

/// Lower bound on `ln p` inside the pseudo-perplexity.
pub const LOG_PROB_FLOOR: f64 = -50.0;

/// Default neighborhood size cap.
pub const DEFAULT_NEIGHBORS: usize = 10;

fn label_prob(memory: &AssociativeMemory, key: &[f64], label: usize) -> f64 {
    readout(memory, key)[label]
}

fn require_nonempty<T>(items: &[T], what: &str) -> Result<()> {
    if items.is_empty() {
        Err(Error::validation(format!("{what} is empty")))
    } else {
        Ok(())
    }
}

/// Query key for a forget fact: prefix-averaged with fresh evaluation prefixes.
pub fn query_key(fact: &FactRecord, n_prefixes: usize, prefix_noise: f64, seed: u64) -> Vec<f64> {
    extract_key_in(fact, n_prefixes, prefix_noise, seed, Stream::EvalPrefix)
}

pub fn efficacy(
    memory: &AssociativeMemory,
    forget: &[FactRecord],
    n_prefixes: usize,
    prefix_noise: f64,
    seed: u64,
) -> Result<f64> {
    require_nonempty(forget, "forget set")?;
    let probs: Vec<f64> = forget
        .iter()
        .map(|f| label_prob(memory, &query_key(f, n_prefixes, prefix_noise, seed), f.value_label))
        .collect();
    Ok(mean(&probs))
}

/// `normalize(key + noise * eps)` for each paraphrase of a fact.
pub fn paraphrase_keys(fact: &FactRecord, paraphrase_noise: f64, n_paraphrases: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, Stream::Paraphrase, fact.id as u64);
    (0..n_paraphrases)
        .map(|_| {
            let eps = gaussian_vec(&mut rng, fact.key.len());
            let mut k: Vec<f64> = fact
                .key
                .iter()
                .zip(&eps)
                .map(|(k, e)| k + paraphrase_noise * e)
                .collect();
            normalize(&mut k);
            k
        })
        .collect()
}

pub fn generalization(
    memory: &AssociativeMemory,
    forget: &[FactRecord],
    paraphrase_noise: f64,
    n_paraphrases: usize,
    seed: u64,
) -> Result<f64> {
    require_nonempty(forget, "forget set")?;
    if !(paraphrase_noise > 0.0) || !paraphrase_noise.is_finite() {
        return Err(Error::validation(format!(
            "paraphrase_noise must be > 0, got {paraphrase_noise}"
        )));
    }
    if n_paraphrases == 0 {
        return Err(Error::validation("n_paraphrases must be >= 1"));
    }
    let probs: Vec<f64> = forget
        .iter()
        .flat_map(|f| {
            paraphrase_keys(f, paraphrase_noise, n_paraphrases, seed)
                .into_iter()
                .map(move |k| (k, f.value_label))
        })
        .map(|(k, label)| label_prob(memory, &k, label))
        .collect();
    Ok(mean(&probs))
}

pub fn specificity(memory: &AssociativeMemory, neighborhood: &[FactRecord]) -> Result<f64> {
    require_nonempty(neighborhood, "neighborhood")?;
    let hits = neighborhood
        .iter()
        .filter(|f| argmax(&readout(memory, &f.key)) == f.value_label)
        .count();
    Ok(hits as f64 / neighborhood.len() as f64)
}

/// The `k` retained facts whose keys are most cosine-similar to any forget
/// key, ordered by decreasing similarity (ties by id).
pub fn select_neighborhood(facts: &[FactRecord], forget_ids: &[usize], k: usize) -> Vec<FactRecord> {
    let forget: HashSet<usize> = forget_ids.iter().copied().collect();
    let forget_keys: Vec<&[f64]> = facts
        .iter()
        .filter(|f| forget.contains(&f.id))
        .map(|f| f.key.as_slice())
        .collect();
    let mut scored: Vec<(f64, &FactRecord)> = facts
        .iter()
        .filter(|f| !forget.contains(&f.id))
        .map(|f| {
            let best = forget_keys
                .iter()
                .map(|fk| cosine(&f.key, fk))
                .fold(f64::NEG_INFINITY, f64::max);
            (best, f)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.id.cmp(&b.1.id)));
    scored.into_iter().take(k).map(|(_, f)| f.clone()).collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let n = norm(a) * norm(b);
    if n > 0.0 {
        dot(a, b) / n
    } else {
        0.0
    }
}

pub fn pseudo_perplexity(memory: &AssociativeMemory, heldout: &[FactRecord]) -> Result<f64> {
    require_nonempty(heldout, "held-out set")?;
    let logs: Vec<f64> = heldout
        .iter()
        .map(|f| label_prob(memory, &f.key, f.value_label).ln().max(LOG_PROB_FLOOR))
        .collect();
    Ok((-mean(&logs)).exp().max(1.0))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cloud {
    Before,
    After,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaPoint {
    pub x: f64,
    pub y: f64,
    pub group: Cloud,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaShift {
    pub points: Vec<PcaPoint>,
    /// Distance between the two cloud centroids in PCA space.
    pub centroid_distance: f64,
    /// Mean distance of a point to its own cloud's centroid, averaged over
    /// both clouds.
    pub spread: f64,
}

/// Joint 2-D PCA of two `d_m x n` output clouds.
pub fn pca_shift(before: &Matrix, after: &Matrix) -> Result<PcaShift> {
    if before.cols() != after.cols() || before.rows() != after.rows() {
        return Err(Error::validation(format!(
            "PCA clouds differ in shape: {}x{} vs {}x{}",
            before.rows(),
            before.cols(),
            after.rows(),
            after.cols()
        )));
    }
    let n = before.cols();
    if 2 * n < 2 {
        return Err(Error::validation("PCA needs at least 2 samples in total"));
    }
    let stacked = before.hstack(after)?.transpose();
    let scores = pca_2d(&stacked, true)?;
    let points: Vec<PcaPoint> = (0..2 * n)
        .map(|i| PcaPoint {
            x: scores.get(i, 0),
            y: scores.get(i, 1),
            group: if i < n { Cloud::Before } else { Cloud::After },
        })
        .collect();
    let (cb, sb) = centroid_and_spread(&points[..n]);
    let (ca, sa) = centroid_and_spread(&points[n..]);
    Ok(PcaShift {
        centroid_distance: ((cb.0 - ca.0).powi(2) + (cb.1 - ca.1).powi(2)).sqrt(),
        spread: 0.5 * (sb + sa),
        points,
    })
}

fn centroid_and_spread(points: &[PcaPoint]) -> ((f64, f64), f64) {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let spread = points
        .iter()
        .map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    ((cx, cy), spread)
}

/// `x,y,group` CSV with one row per point.
pub fn pca_csv(shift: &PcaShift) -> String {
    let mut out = String::from("x,y,group\n");
    for p in &shift.points {
        let group = match p.group {
            Cloud::Before => "before",
            Cloud::After => "after",
        };
        out.push_str(&format!("{:.16e},{:.16e},{group}\n", p.x, p.y));
    }
    out
}

pub fn write_pca_csv(shift: &PcaShift, path: &Path) -> Result<()> {
    fs::write(path, pca_csv(shift)).map_err(|e| Error::io(path, e))
}

/// Metrics for one edited layer.
///
/// Efficacy and generalization are probabilities of the *original* label,
/// so lower values mean stronger forgetting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub efficacy_before: f64,
    pub efficacy_after: f64,
    pub generalization_before: f64,
    pub generalization_after: f64,
    pub specificity_before: f64,
    pub specificity_after: f64,
    pub pseudo_ppl_before: f64,
    pub pseudo_ppl_after: f64,
    pub pca_centroid_distance: f64,
    pub pca_spread: f64,
    pub n_forget: usize,
    pub n_neighborhood: usize,
    pub n_heldout: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    pub n_prefixes: usize,
    pub prefix_noise: f64,
    pub paraphrase_noise: f64,
    pub n_paraphrases: usize,
    pub n_neighbors: usize,
    pub seed: u64,
}

/// Full before/after evaluation of one edit, plus the PCA shift of the
/// outputs on the forget paraphrase keys.
pub fn evaluate_edit(
    before: &AssociativeMemory,
    after: &AssociativeMemory,
    facts: &[FactRecord],
    forget_ids: &[usize],
    params: &EvalParams,
) -> Result<(MetricsReport, PcaShift)> {
    let forget_set: HashSet<usize> = forget_ids.iter().copied().collect();
    let forget: Vec<FactRecord> = facts.iter().filter(|f| forget_set.contains(&f.id)).cloned().collect();
    let retained: Vec<FactRecord> = facts.iter().filter(|f| !forget_set.contains(&f.id)).cloned().collect();
    if forget.len() != forget_set.len() {
        return Err(Error::validation("forget ids refer to unknown facts"));
    }
    let k = params.n_neighbors.min(retained.len());
    let neighborhood = select_neighborhood(facts, forget_ids, k);

    let eff = |m: &AssociativeMemory| efficacy(m, &forget, params.n_prefixes, params.prefix_noise, params.seed);
    let gen =
        |m: &AssociativeMemory| generalization(m, &forget, params.paraphrase_noise, params.n_paraphrases, params.seed);

    let keys: Vec<Vec<f64>> = forget
        .iter()
        .flat_map(|f| paraphrase_keys(f, params.paraphrase_noise, params.n_paraphrases, params.seed))
        .collect();
    let d_k = before.d_k();
    let key_matrix = Matrix::from_columns(d_k, &keys)?;
    let shift = pca_shift(&before.w.matmul(&key_matrix), &after.w.matmul(&key_matrix))?;

    let metrics = MetricsReport {
        efficacy_before: eff(before)?,
        efficacy_after: eff(after)?,
        generalization_before: gen(before)?,
        generalization_after: gen(after)?,
        specificity_before: specificity(before, &neighborhood)?,
        specificity_after: specificity(after, &neighborhood)?,
        pseudo_ppl_before: pseudo_perplexity(before, &retained)?,
        pseudo_ppl_after: pseudo_perplexity(after, &retained)?,
        pca_centroid_distance: shift.centroid_distance,
        pca_spread: shift.spread,
        n_forget: forget.len(),
        n_neighborhood: neighborhood.len(),
        n_heldout: retained.len(),
    };
    Ok((metrics, shift))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub seed: u64,
    pub layers: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub seed: u64,
    pub metrics: MetricsReport,
    pub edit: EditReport,
}

/// `report.json`. The top-level `metrics` and `edit` describe the first layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hash: String,
    pub method: String,
    pub metrics: MetricsReport,
    pub edit: EditReport,
    pub seeds: Seeds,
    pub layers: Vec<LayerReport>,
}

pub fn write_report(report: &Report, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report).map_err(|e| Error::Json {
        path: path.into(),
        source: e,
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<Report> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.into(),
        source: e,
    })
}

/// Structural check of a parsed report document.
pub fn validate_report_json(doc: &serde_json::Value) -> Result<()> {
    let obj = doc
        .as_object()
        .ok_or_else(|| Error::validation("report is not a JSON object"))?;
    for key in ["config_hash", "method", "metrics", "edit", "seeds", "layers"] {
        if !obj.contains_key(key) {
            return Err(Error::validation(format!("report is missing `{key}`")));
        }
    }
    let hash = obj["config_hash"].as_str().unwrap_or("");
    if hash.len() != 64 || !hash.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(Error::validation("config_hash is not a sha256 hex digest"));
    }
    let metrics: MetricsReport =
        serde_json::from_value(obj["metrics"].clone()).map_err(|e| Error::validation(format!("metrics: {e}")))?;
    for (name, p) in [
        ("efficacy_before", metrics.efficacy_before),
        ("efficacy_after", metrics.efficacy_after),
        ("generalization_before", metrics.generalization_before),
        ("generalization_after", metrics.generalization_after),
        ("specificity_before", metrics.specificity_before),
        ("specificity_after", metrics.specificity_after),
    ] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::validation(format!("{name} = {p} is not a probability")));
        }
    }
    if !(metrics.pseudo_ppl_before >= 1.0 && metrics.pseudo_ppl_after >= 1.0) {
        return Err(Error::validation("pseudo-perplexity below 1"));
    }
    let edit = obj["edit"]
        .as_object()
        .ok_or_else(|| Error::validation("edit is not an object"))?;
    for key in [
        "method",
        "before",
        "after",
        "projector_rank",
        "stationarity_residual",
        "wall_time_seconds",
    ] {
        if !edit.contains_key(key) {
            return Err(Error::validation(format!("edit is missing `{key}`")));
        }
    }
    for side in ["before", "after"] {
        for term in ["zero", "forget", "utility", "reg"] {
            match edit[side].get(term).and_then(|v| v.as_f64()) {
                Some(v) if v >= 0.0 => {}
                _ => {
                    return Err(Error::validation(format!(
                        "edit.{side}.{term} is not a non-negative number"
                    )))
                }
            }
        }
    }
    if !obj["layers"].is_array() {
        return Err(Error::validation("layers is not an array"));
    }
    Ok(())
}
