//! Config-driven experiments: generation, editing, evaluation and sweeps,
//! with their on-disk artifacts.
//!
//! Directory layout (layer 0 lives in the root, layer `i > 0` in `layer_<i>/`):
//!
//! ```text
//! config.json              resolved config
//! facts.json               [{id, value_label}]
//! forget.json              forget fact ids
//! w.csv keys.csv vocab.csv memory
//! k_f.csv m_f.csv k_0.csv m_0.csv m_n.csv
//! w_after.csv edit.json    after `edit`
//! report.json pca.csv      after `eval`
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::additive::additive_edit;
use crate::descent::GdConfig;
use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate_edit, write_pca_csv, write_report, EvalParams, LayerReport, MetricsReport, PcaShift, Report, Seeds,
};
use crate::facts::{
    build_knowledge_sets, generate_memory, AssociativeMemory, FactRecord, KeyParams, KnowledgeSets, MemoryParams,
    NeutralMode,
};
use crate::matrix::Matrix;
use crate::multiplicative::{closed_form_update, EditReport, Method};
use crate::rng::{stream, Stream};
use crate::zumx;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub d_k: usize,
    pub d_m: usize,
    pub n_facts: usize,
    pub vocab_size: usize,
    pub temperature: f64,
    pub n_forget: usize,
    /// Utility keys; defaults to `4 * d_k` for the multiplicative editor and
    /// `d_k / 2` for the additive ones, which need `n_utility < d_k`.
    pub n_utility: Option<usize>,
    pub n_prefixes: usize,
    pub prefix_noise: f64,
    pub paraphrase_noise: f64,
    pub n_paraphrases: usize,
    pub n_neighbors: usize,
    pub m_n_mode: NeutralMode,
    pub method: Method,
    /// Singular-value threshold for the forget projector.
    pub rel_tol: f64,
    /// Eigenvalue threshold for the retain projector.
    pub eig_rel_tol: f64,
    pub ridge: f64,
    pub gd: GdConfig,
    pub dim_cap: usize,
    /// One seed per independent layer; empty means `[seed]`.
    pub layers: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            d_k: 16,
            d_m: 16,
            n_facts: 12,
            vocab_size: 12,
            temperature: 0.1,
            n_forget: 3,
            n_utility: None,
            n_prefixes: 8,
            prefix_noise: 0.05,
            paraphrase_noise: 0.05,
            n_paraphrases: 8,
            n_neighbors: crate::evaluation::DEFAULT_NEIGHBORS,
            m_n_mode: NeutralMode::SharedNeutral,
            method: Method::Multiplicative,
            rel_tol: crate::kernel::DEFAULT_REL_TOL,
            eig_rel_tol: crate::additive::DEFAULT_EIG_REL_TOL,
            ridge: crate::kernel::DEFAULT_RIDGE,
            gd: GdConfig::default(),
            dim_cap: crate::additive::DEFAULT_DIM_CAP,
            layers: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.into(),
            source: e,
        })
    }

    /// Fills every defaulted field so the config fully describes the run.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        if c.n_utility.is_none() {
            c.n_utility = Some(match c.method {
                Method::Multiplicative => 4 * c.d_k,
                Method::AdditiveClosed | Method::AdditiveGd => (c.d_k / 2).max(1),
            });
        }
        if c.layers.is_empty() {
            c.layers = vec![c.seed];
        }
        c
    }

    pub fn n_utility(&self) -> usize {
        self.resolved().n_utility.unwrap_or(1)
    }

    pub fn layer_seeds(&self) -> Vec<u64> {
        self.resolved().layers
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: String| Err(Error::validation(format!("{field}: {msg}")));
        if self.d_k == 0 {
            return fail("d_k", "must be >= 1".into());
        }
        if self.d_m == 0 {
            return fail("d_m", "must be >= 1".into());
        }
        if self.n_facts > self.d_k {
            return fail(
                "n_facts",
                format!("{} must not exceed d_k ({})", self.n_facts, self.d_k),
            );
        }
        if self.vocab_size < 2 {
            return fail("vocab_size", format!("{} must be >= 2", self.vocab_size));
        }
        if self.vocab_size >= self.d_m {
            return fail(
                "vocab_size",
                format!(
                    "{} must be < d_m ({}) to leave a neutral direction",
                    self.vocab_size, self.d_m
                ),
            );
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return fail("temperature", format!("{} must be > 0", self.temperature));
        }
        if self.n_forget == 0 {
            return fail("n_forget", "must be >= 1".into());
        }
        if self.n_forget > self.n_facts {
            return fail(
                "n_forget",
                format!("{} must not exceed n_facts ({})", self.n_forget, self.n_facts),
            );
        }
        if self.n_forget == self.n_facts {
            return fail(
                "n_forget",
                format!("{} leaves no retained facts to evaluate", self.n_forget),
            );
        }
        if self.n_utility() == 0 {
            return fail("n_utility", "must be >= 1".into());
        }
        if self.n_prefixes == 0 {
            return fail("n_prefixes", "must be >= 1".into());
        }
        if !(self.prefix_noise >= 0.0 && self.prefix_noise.is_finite()) {
            return fail("prefix_noise", format!("{} must be >= 0", self.prefix_noise));
        }
        if !(self.paraphrase_noise > 0.0 && self.paraphrase_noise.is_finite()) {
            return fail("paraphrase_noise", format!("{} must be > 0", self.paraphrase_noise));
        }
        if self.n_paraphrases == 0 {
            return fail("n_paraphrases", "must be >= 1".into());
        }
        if self.n_neighbors == 0 {
            return fail("n_neighbors", "must be >= 1".into());
        }
        for (name, v) in [("rel_tol", self.rel_tol), ("eig_rel_tol", self.eig_rel_tol)] {
            if !(v > 0.0 && v < 1.0) {
                return fail(name, format!("{v} must lie in (0, 1)"));
            }
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return fail("ridge", format!("{} must be >= 0", self.ridge));
        }
        if self.dim_cap == 0 {
            return fail("dim_cap", "must be >= 1".into());
        }
        self.gd.validate()
    }

    /// sha256 of the resolved config's canonical JSON.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(&self.resolved()).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    fn memory_params(&self, seed: u64) -> MemoryParams {
        MemoryParams {
            seed,
            d_k: self.d_k,
            d_m: self.d_m,
            n_facts: self.n_facts,
            vocab_size: self.vocab_size,
            temperature: self.temperature,
        }
    }

    fn eval_params(&self, seed: u64) -> EvalParams {
        EvalParams {
            n_prefixes: self.n_prefixes,
            prefix_noise: self.prefix_noise,
            paraphrase_noise: self.paraphrase_noise,
            n_paraphrases: self.n_paraphrases,
            n_neighbors: self.n_neighbors,
            seed,
        }
    }
}

/// A generated, not yet edited, layer.
#[derive(Clone, Debug)]
pub struct Layer {
    pub seed: u64,
    pub memory: AssociativeMemory,
    pub facts: Vec<FactRecord>,
    pub forget_ids: Vec<usize>,
    pub sets: KnowledgeSets,
}

#[derive(Clone, Debug)]
pub struct EditedLayer {
    pub w_after: Matrix,
    pub report: EditReport,
}

#[derive(Clone, Debug)]
pub struct LayerRun {
    pub layer: Layer,
    pub edit: EditedLayer,
    pub metrics: MetricsReport,
    pub pca: PcaShift,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub config: ExperimentConfig,
    pub layers: Vec<LayerRun>,
    pub report: Report,
}

pub fn select_forget_ids(seed: u64, n_facts: usize, n_forget: usize) -> Vec<usize> {
    let mut rng = stream(seed, Stream::ForgetSelection, 0);
    let mut ids = sample(&mut rng, n_facts, n_forget).into_vec();
    ids.sort_unstable();
    ids
}

pub fn generate_layer(cfg: &ExperimentConfig, seed: u64) -> Result<Layer> {
    let (memory, facts) = generate_memory(&cfg.memory_params(seed))?;
    let forget_ids = select_forget_ids(seed, cfg.n_facts, cfg.n_forget);
    let key_params = KeyParams {
        n_prefixes: cfg.n_prefixes,
        prefix_noise: cfg.prefix_noise,
        seed,
    };
    let sets = build_knowledge_sets(&memory, &facts, &forget_ids, cfg.n_utility(), cfg.m_n_mode, &key_params)?;
    Ok(Layer {
        seed,
        memory,
        facts,
        forget_ids,
        sets,
    })
}

pub fn generate(cfg: &ExperimentConfig) -> Result<Vec<Layer>> {
    cfg.validate()?;
    cfg.layer_seeds().into_iter().map(|s| generate_layer(cfg, s)).collect()
}

pub fn edit_layer(cfg: &ExperimentConfig, layer: &Layer) -> Result<EditedLayer> {
    let w = &layer.memory.w;
    let (w_after, report) = match cfg.method {
        Method::Multiplicative => {
            let e = closed_form_update(w, &layer.sets, cfg.rel_tol, cfg.ridge)?;
            (e.w_new, e.report)
        }
        m => {
            let e = additive_edit(w, &layer.sets, m, cfg.eig_rel_tol, &cfg.gd, cfg.dim_cap)?;
            (e.w_new, e.report)
        }
    };
    for warning in &report.warnings {
        log::info!("layer seed {}: {warning}", layer.seed);
    }
    Ok(EditedLayer { w_after, report })
}

pub fn evaluate_layer(cfg: &ExperimentConfig, layer: &Layer, w_after: &Matrix) -> Result<(MetricsReport, PcaShift)> {
    let after = layer.memory.with_weight(w_after.clone())?;
    evaluate_edit(
        &layer.memory,
        &after,
        &layer.facts,
        &layer.forget_ids,
        &cfg.eval_params(layer.seed),
    )
}

fn assemble_report(cfg: &ExperimentConfig, runs: &[(u64, MetricsReport, EditReport)]) -> Result<Report> {
    let (_, metrics, edit) = runs
        .first()
        .cloned()
        .ok_or_else(|| Error::validation("no layers to report"))?;
    let resolved = cfg.resolved();
    Ok(Report {
        config_hash: cfg.config_hash(),
        method: cfg.method.as_str().to_string(),
        metrics,
        edit,
        seeds: Seeds {
            seed: resolved.seed,
            layers: resolved.layers.clone(),
        },
        layers: runs
            .iter()
            .map(|(seed, metrics, edit)| LayerReport {
                seed: *seed,
                metrics: metrics.clone(),
                edit: edit.clone(),
            })
            .collect(),
    })
}

/// Generate, edit and evaluate every layer in memory.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<PipelineOutput> {
    let layers = generate(cfg)?;
    let mut runs = Vec::with_capacity(layers.len());
    for layer in layers {
        let edit = edit_layer(cfg, &layer)?;
        let (metrics, pca) = evaluate_layer(cfg, &layer, &edit.w_after)?;
        runs.push(LayerRun {
            layer,
            edit,
            metrics,
            pca,
        });
    }
    let summary: Vec<_> = runs
        .iter()
        .map(|r| (r.layer.seed, r.metrics.clone(), r.edit.report.clone()))
        .collect();
    let report = assemble_report(cfg, &summary)?;
    Ok(PipelineOutput {
        config: cfg.resolved(),
        layers: runs,
        report,
    })
}

pub fn layer_dir(root: &Path, index: usize) -> PathBuf {
    if index == 0 {
        root.to_path_buf()
    } else {
        root.join(format!("layer_{index}"))
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.into(),
        source: e,
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.into(),
        source: e,
    })
}

#[derive(Serialize, Deserialize)]
struct FactEntry {
    id: usize,
    value_label: usize,
}

pub fn write_config(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    create_dir(dir)?;
    write_json(&dir.join("config.json"), &cfg.resolved())
}

pub fn read_config(dir: &Path) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig::load(&dir.join("config.json"))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn write_layer(dir: &Path, layer: &Layer) -> Result<()> {
    create_dir(dir)?;
    let entries: Vec<FactEntry> = layer
        .facts
        .iter()
        .map(|f| FactEntry {
            id: f.id,
            value_label: f.value_label,
        })
        .collect();
    write_json(&dir.join("facts.json"), &entries)?;
    write_json(&dir.join("forget.json"), &layer.forget_ids)?;
    let keys: Vec<Vec<f64>> = layer.facts.iter().map(|f| f.key.clone()).collect();
    zumx::write(&dir.join("keys.csv"), &Matrix::from_columns(layer.memory.d_k(), &keys)?)?;
    zumx::write(&dir.join("w.csv"), &layer.memory.w)?;
    zumx::write(&dir.join("vocab.csv"), &layer.memory.vocabulary)?;
    let s = &layer.sets;
    for (name, m) in [
        ("k_f", s.k_f()),
        ("m_f", s.m_f()),
        ("k_0", s.k_0()),
        ("m_0", s.m_0()),
        ("m_n", s.m_n()),
    ] {
        zumx::write(&dir.join(format!("{name}.csv")), m)?;
    }
    Ok(())
}

pub fn read_layer(dir: &Path, cfg: &ExperimentConfig, seed: u64) -> Result<Layer> {
    let w = zumx::read(&dir.join("w.csv"))?;
    let vocabulary = zumx::read(&dir.join("vocab.csv"))?;
    let memory = AssociativeMemory::new(w, vocabulary, cfg.temperature)?;
    let entries: Vec<FactEntry> = read_json(&dir.join("facts.json"))?;
    let keys = zumx::read(&dir.join("keys.csv"))?;
    if keys.cols() != entries.len() || keys.rows() != memory.d_k() {
        return Err(Error::validation(format!(
            "{}: keys.csv is {}x{} but facts.json lists {} facts of dimension {}",
            dir.display(),
            keys.rows(),
            keys.cols(),
            entries.len(),
            memory.d_k()
        )));
    }
    let facts = entries
        .iter()
        .enumerate()
        .map(|(j, e)| {
            if e.value_label >= memory.vocab_size() {
                return Err(Error::validation(format!(
                    "fact {} has label {} out of range",
                    e.id, e.value_label
                )));
            }
            Ok(FactRecord {
                id: e.id,
                key: keys.column(j),
                value_label: e.value_label,
                value: memory.vocabulary.column(e.value_label),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let forget_ids: Vec<usize> = read_json(&dir.join("forget.json"))?;
    let m = |name: &str| zumx::read(&dir.join(format!("{name}.csv")));
    let sets = KnowledgeSets::new(m("k_f")?, m("m_f")?, m("k_0")?, m("m_0")?, m("m_n")?)?;
    Ok(Layer {
        seed,
        memory,
        facts,
        forget_ids,
        sets,
    })
}

pub fn write_edit(dir: &Path, edit: &EditedLayer) -> Result<()> {
    create_dir(dir)?;
    zumx::write(&dir.join("w_after.csv"), &edit.w_after)?;
    write_json(&dir.join("edit.json"), &edit.report)
}

pub fn read_edit(dir: &Path) -> Result<EditedLayer> {
    Ok(EditedLayer {
        w_after: zumx::read(&dir.join("w_after.csv"))?,
        report: read_json(&dir.join("edit.json"))?,
    })
}

/// `zul generate`: writes the config and every layer.
pub fn generate_to_dir(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<Layer>> {
    let layers = generate(cfg)?;
    write_config(out, cfg)?;
    for (i, layer) in layers.iter().enumerate() {
        write_layer(&layer_dir(out, i), layer)?;
    }
    Ok(layers)
}

fn read_layers(dir: &Path, cfg: &ExperimentConfig) -> Result<Vec<Layer>> {
    cfg.layer_seeds()
        .into_iter()
        .enumerate()
        .map(|(i, seed)| read_layer(&layer_dir(dir, i), cfg, seed))
        .collect()
}

/// `zul edit`: edits a generated directory. The editor settings come from
/// `cfg`; the generation settings must match the ones stored in `input`.
pub fn edit_dir(cfg: &ExperimentConfig, input: &Path, out: &Path) -> Result<Vec<EditedLayer>> {
    cfg.validate()?;
    let stored = read_config(input)?;
    let generation_matches = {
        let mut a = stored.resolved();
        let mut b = cfg.resolved();
        for c in [&mut a, &mut b] {
            c.method = Method::Multiplicative;
            c.rel_tol = 0.0;
            c.eig_rel_tol = 0.0;
            c.ridge = 0.0;
            c.gd = GdConfig::default();
            c.dim_cap = 0;
        }
        a == b
    };
    if !generation_matches {
        return Err(Error::validation(format!(
            "config generation settings differ from {}/config.json",
            input.display()
        )));
    }
    let layers = read_layers(input, &stored)?;
    write_config(out, cfg)?;
    let mut edits = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        let edit = edit_layer(cfg, layer)?;
        let dir = layer_dir(out, i);
        if out != input {
            write_layer(&dir, layer)?;
        }
        write_edit(&dir, &edit)?;
        edits.push(edit);
    }
    Ok(edits)
}

/// `zul eval`: scores an edited directory.
pub fn eval_dir(input: &Path) -> Result<(Report, Vec<PcaShift>)> {
    let cfg = read_config(input)?;
    let layers = read_layers(input, &cfg)?;
    let mut summary = Vec::with_capacity(layers.len());
    let mut shifts = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        let edit = read_edit(&layer_dir(input, i))?;
        let (metrics, pca) = evaluate_layer(&cfg, layer, &edit.w_after)?;
        summary.push((layer.seed, metrics, edit.report));
        shifts.push(pca);
    }
    Ok((assemble_report(&cfg, &summary)?, shifts))
}

/// `zul run`: all artifacts of generate, edit and eval in one directory.
pub fn run_to_dir(cfg: &ExperimentConfig, out: &Path) -> Result<PipelineOutput> {
    let output = run_pipeline(cfg)?;
    write_config(out, cfg)?;
    for (i, run) in output.layers.iter().enumerate() {
        let dir = layer_dir(out, i);
        write_layer(&dir, &run.layer)?;
        write_edit(&dir, &run.edit)?;
        write_pca_csv(&run.pca, &dir.join("pca.csv"))?;
    }
    write_report(&output.report, &out.join("report.json"))?;
    Ok(output)
}

/// `zul pca`: the PCA shift of layer 0 of an edited directory.
pub fn pca_from_dir(input: &Path) -> Result<PcaShift> {
    let cfg = read_config(input)?;
    let seed = cfg.layer_seeds()[0];
    let layer = read_layer(input, &cfg, seed)?;
    let edit = read_edit(input)?;
    Ok(evaluate_layer(&cfg, &layer, &edit.w_after)?.1)
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub n_forget: usize,
    pub seed: u64,
    pub outcome: std::result::Result<MetricsReport, String>,
}

pub const SWEEP_SEED_STRIDE: u64 = 1009;

/// Sorted, deduplicated sizes plus the duplicates that were dropped.
pub fn dedup_sizes(sizes: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable();
    let mut unique: Vec<usize> = Vec::with_capacity(sorted.len());
    let mut dropped = Vec::new();
    for s in sorted {
        if unique.last() == Some(&s) {
            dropped.push(s);
        } else {
            unique.push(s);
        }
    }
    (unique, dropped)
}

/// One in-memory pipeline per forget-set size, on at most `jobs` threads.
/// A failed row is recorded with its error; the sweep itself does not fail.
pub fn run_sweep(base: &ExperimentConfig, sizes: &[usize], jobs: usize) -> Result<Vec<SweepRow>> {
    if sizes.is_empty() {
        return Err(Error::validation("sizes: the list is empty"));
    }
    if jobs == 0 {
        return Err(Error::validation("jobs: must be >= 1"));
    }
    let (unique, dropped) = dedup_sizes(sizes);
    if !dropped.is_empty() {
        log::warn!("ignoring duplicate sweep sizes {dropped:?}");
    }
    for &s in &unique {
        if s == 0 || s > base.n_facts {
            return Err(Error::validation(format!(
                "sizes: {s} must lie in 1..={} (n_facts)",
                base.n_facts
            )));
        }
    }
    let base = base.resolved();
    let row_config = |size: usize| {
        let offset = size as u64 * SWEEP_SEED_STRIDE;
        let mut cfg = base.clone();
        cfg.n_forget = size;
        cfg.seed = base.seed.wrapping_add(offset);
        cfg.layers = base.layers.iter().map(|s| s.wrapping_add(offset)).collect();
        cfg
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::validation(format!("jobs: {e}")))?;
    let rows = pool.install(|| {
        unique
            .par_iter()
            .map(|&size| {
                let cfg = row_config(size);
                let outcome = cfg
                    .validate()
                    .and_then(|_| run_pipeline(&cfg))
                    .map(|out| out.report.metrics)
                    .map_err(|e| e.to_string());
                if let Err(e) = &outcome {
                    log::warn!("sweep row n_forget={size} failed: {e}");
                }
                SweepRow {
                    n_forget: size,
                    seed: cfg.seed,
                    outcome,
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(rows)
}

const SWEEP_HEADER: &str = "n_forget,seed,status,efficacy_before,efficacy_after,generalization_before,\
generalization_after,specificity_before,specificity_after,pseudo_ppl_before,pseudo_ppl_after,\
pca_centroid_distance,pca_spread,error";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        match &r.outcome {
            Ok(m) => {
                let vals = [
                    m.efficacy_before,
                    m.efficacy_after,
                    m.generalization_before,
                    m.generalization_after,
                    m.specificity_before,
                    m.specificity_after,
                    m.pseudo_ppl_before,
                    m.pseudo_ppl_after,
                    m.pca_centroid_distance,
                    m.pca_spread,
                ];
                let cols: Vec<String> = vals.iter().map(|v| format!("{v:.16e}")).collect();
                out.push_str(&format!("{},{},ok,{},\n", r.n_forget, r.seed, cols.join(",")));
            }
            Err(e) => {
                let msg = e.replace(['"', '\n'], " ");
                out.push_str(&format!(
                    "{},{},error,{}\"{msg}\"\n",
                    r.n_forget,
                    r.seed,
                    ",".repeat(10)
                ));
            }
        }
    }
    out
}
