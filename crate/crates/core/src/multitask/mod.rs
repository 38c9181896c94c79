//! Task heads, loss normalization, and the joint/alternating training loops
//! over the shared bidirectional encoder, plus batch embedding export.

mod train;

pub use train::{train_alternating, train_joint, LossPoint, TrainConfig, TrainMode};

use crate::catalog::{tfidf_vector, Label, ProductRecord, TaskKind, TaskRegistry, TfidfModel};
use crate::embeddings::WordEmbeddingTable;
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::io::{Checkpoint, CheckpointManifest, EmbeddingFile};
use crate::numerics::{softmax_cross_entropy, squared_loss, ParamStore};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::io::Write;

pub const ENCODER_PREFIX: &str = "enc";

/// Per-task exponential-moving-average loss normalizer.
///
/// The first observed batch initializes the EMA to the raw loss, so the first
/// normalized loss is exactly 1; afterwards the divisor tracks the raw loss
/// scale so no task can dominate the shared encoder's gradients.
#[derive(Debug, Clone)]
pub struct LossNormalizer {
    ema: Option<f64>,
    pub gamma: f64,
    pub eps: f64,
}

impl LossNormalizer {
    pub fn new(gamma: f64) -> Self {
        LossNormalizer {
            ema: None,
            gamma,
            eps: 1e-8,
        }
    }

    /// Returns (normalized loss, gradient scale); updates the EMA after use.
    pub fn apply(&mut self, raw: f64) -> Result<(f64, f64)> {
        if !raw.is_finite() || raw < 0.0 {
            return Err(Error::numeric(format!(
                "loss normalizer got invalid raw loss {raw}"
            )));
        }
        let ema = self.ema.unwrap_or(raw);
        let denom = ema.max(self.eps);
        let scale = 1.0 / denom;
        let normalized = raw / denom;
        self.ema = Some((1.0 - self.gamma) * ema + self.gamma * raw);
        Ok((normalized, scale))
    }

    pub fn state(&self) -> Option<f64> {
        self.ema
    }

    pub fn set_state(&mut self, ema: Option<f64>) {
        self.ema = ema;
    }
}

/// One example's head pass: output vector, raw loss, and unscaled gradients.
#[derive(Debug, Clone)]
pub struct HeadGrads {
    pub output: Vec<f64>,
    pub loss: f64,
    pub d_h: Vec<f64>,
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
}

/// Task-specific projection of the shared embedding plus its loss.
#[derive(Debug, Clone)]
pub struct TaskHead {
    pub name: String,
    pub kind: TaskKind,
    pub normalizer: LossNormalizer,
    /// z-score statistics for regression targets
    pub target_mean: f64,
    pub target_std: f64,
}

impl TaskHead {
    pub fn new(name: &str, kind: TaskKind, gamma: f64) -> Self {
        TaskHead {
            name: name.to_string(),
            kind,
            normalizer: LossNormalizer::new(gamma),
            target_mean: 0.0,
            target_std: 1.0,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self.kind {
            TaskKind::Class(k) => k,
            TaskKind::Scalar => 1,
            TaskKind::Decode(d) => d,
        }
    }

    pub fn w_name(&self) -> String {
        format!("head.{}.w", self.name)
    }

    pub fn b_name(&self) -> String {
        format!("head.{}.b", self.name)
    }

    pub fn param_names(&self) -> Vec<String> {
        vec![self.w_name(), self.b_name()]
    }

    fn init_params<R: rand::Rng>(
        &self,
        store: &mut ParamStore,
        input_dim: usize,
        rng: &mut R,
    ) -> Result<()> {
        let out = self.out_dim();
        let scale = (1.0 / input_dim as f64).sqrt();
        let w: Vec<f64> = (0..out * input_dim)
            .map(|_| rng.gen_range(-scale..scale))
            .collect();
        store.insert(&self.w_name(), vec![out, input_dim], w)?;
        store.insert(&self.b_name(), vec![out], vec![0.0; out])?;
        Ok(())
    }

    fn zscore(&self, y: f64) -> f64 {
        (y - self.target_mean) / self.target_std.max(1e-8)
    }

    /// Forward pass o = W h + b plus the task loss and its gradients.
    /// Nothing is written back; callers accumulate.
    pub fn forward(&self, store: &ParamStore, h_t: &[f64], label: &Label) -> Result<HeadGrads> {
        let out = self.out_dim();
        let d = h_t.len();
        let w = store.value(&self.w_name());
        let b = store.value(&self.b_name());
        let mut output = b.to_vec();
        for r in 0..out {
            let row = &w[r * d..(r + 1) * d];
            let mut acc = 0.0;
            for (wv, hv) in row.iter().zip(h_t) {
                acc += wv * hv;
            }
            output[r] += acc;
        }

        let (loss, d_out): (f64, Vec<f64>) = match (&self.kind, label) {
            (TaskKind::Class(k), Label::Class { index, num_classes }) => {
                if num_classes != k || index >= k {
                    return Err(Error::data(format!(
                        "task {:?}: class label {index}/{num_classes} does not fit head with {k} classes",
                        self.name
                    )));
                }
                softmax_cross_entropy(&output, *index)?
            }
            (TaskKind::Scalar, Label::Scalar(y)) => {
                squared_loss(&output, &[self.zscore(*y)])?
            }
            (TaskKind::Decode(dd), Label::Decode(target)) => {
                if target.len() != *dd {
                    return Err(Error::shape(format!(
                        "task {:?}: decode target has {} entries, head expects {dd}",
                        self.name,
                        target.len()
                    )));
                }
                squared_loss(&output, target)?
            }
            _ => {
                return Err(Error::data(format!(
                    "task {:?}: label kind does not match head kind",
                    self.name
                )))
            }
        };

        // backprop through the affine projection
        let mut dw = vec![0.0; out * d];
        let mut d_h = vec![0.0; d];
        for r in 0..out {
            let g = d_out[r];
            if g == 0.0 {
                continue;
            }
            let wrow = &w[r * d..(r + 1) * d];
            let dwrow = &mut dw[r * d..(r + 1) * d];
            for j in 0..d {
                dwrow[j] = g * h_t[j];
                d_h[j] += g * wrow[j];
            }
        }
        Ok(HeadGrads {
            output,
            loss,
            d_h,
            dw,
            db: d_out,
        })
    }
}

/// The multi-task model: shared bidirectional encoder plus one head per task.
#[derive(Debug, Clone)]
pub struct MRNetModel {
    pub encoder: Encoder,
    pub heads: Vec<TaskHead>,
    pub store: ParamStore,
    /// group this model was trained for (0 when group-agnostic training data)
    pub group: usize,
}

impl MRNetModel {
    pub fn new(
        encoder_cfg: EncoderConfig,
        registry: &TaskRegistry,
        normalizer_gamma: f64,
        seed: u64,
    ) -> Result<Self> {
        let encoder = Encoder::new(encoder_cfg, ENCODER_PREFIX);
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        encoder.init_params(&mut store, &mut rng)?;
        let d = encoder.cfg.embedding_dim();
        let mut heads = Vec::new();
        for task in &registry.tasks {
            let head = TaskHead::new(&task.name, task.kind.clone(), normalizer_gamma);
            head.init_params(&mut store, d, &mut rng)?;
            heads.push(head);
        }
        Ok(MRNetModel {
            encoder,
            heads,
            store,
            group: 0,
        })
    }

    pub fn embedding_dim(&self) -> usize {
        self.encoder.cfg.embedding_dim()
    }

    pub fn head_index(&self, name: &str) -> Option<usize> {
        self.heads.iter().position(|h| h.name == name)
    }

    pub fn encoder_param_names(&self) -> Vec<String> {
        self.encoder.param_names()
    }

    /// Fit z-score statistics for every regression head from the records
    /// that carry its label.
    pub fn fit_target_stats(&mut self, records: &[ProductRecord]) {
        for head in &mut self.heads {
            if head.kind != TaskKind::Scalar {
                continue;
            }
            let values: Vec<f64> = records
                .iter()
                .filter_map(|r| match r.labels.get(&head.name) {
                    Some(Label::Scalar(v)) => Some(*v),
                    _ => None,
                })
                .collect();
            if values.is_empty() {
                continue;
            }
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            head.target_mean = mean;
            head.target_std = var.sqrt().max(1e-8);
        }
    }

    fn word_vectors(&self, table: &WordEmbeddingTable, rec: &ProductRecord) -> Vec<Vec<f64>> {
        rec.tokens.iter().map(|t| table.lookup(t)).collect()
    }

    /// Encode one record with frozen parameters.
    pub fn encode_record(
        &self,
        table: &WordEmbeddingTable,
        rec: &ProductRecord,
    ) -> Result<Vec<f64>> {
        let xs = self.word_vectors(table, rec);
        let (emb, _) = self.encoder.forward(&self.store, &xs)?;
        Ok(emb)
    }

    /// Per-head mean raw losses over a batch on an explicit store, touching
    /// nothing.
    pub fn batch_raw_losses(
        &self,
        store: &ParamStore,
        table: &WordEmbeddingTable,
        batch: &[&ProductRecord],
        head_idx: &[usize],
    ) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(Error::data("empty batch"));
        }
        let mut per_head = vec![0.0; head_idx.len()];
        for rec in batch {
            let xs = self.word_vectors(table, rec);
            let (emb, _) = self.encoder.forward(store, &xs)?;
            for (k, &hi) in head_idx.iter().enumerate() {
                let head = &self.heads[hi];
                let label = rec.labels.get(&head.name).ok_or_else(|| {
                    Error::data(format!("record {:?} lacks label {:?}", rec.id, head.name))
                })?;
                per_head[k] += head.forward(store, &emb, label)?.loss;
            }
        }
        let b = batch.len() as f64;
        for sum in per_head.iter_mut() {
            *sum /= b;
        }
        Ok(per_head)
    }

    /// Total loss sum_h scale_h * mean_r loss_{h,r} on an explicit store.
    /// Used by gradient checks, which perturb the store between calls.
    pub fn batch_loss(
        &self,
        store: &ParamStore,
        table: &WordEmbeddingTable,
        batch: &[&ProductRecord],
        head_idx: &[usize],
        scales: &[f64],
    ) -> Result<f64> {
        let raws = self.batch_raw_losses(store, table, batch, head_idx)?;
        Ok(raws.iter().zip(scales).map(|(r, s)| r * s).sum())
    }

    /// Forward/backward over one batch with explicit per-head gradient
    /// scales. Accumulates gradients into the store for the encoder and the
    /// selected heads only; returns the per-head mean raw losses.
    pub fn batch_backward(
        &mut self,
        table: &WordEmbeddingTable,
        batch: &[&ProductRecord],
        head_idx: &[usize],
        scales: &[f64],
    ) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(Error::data("empty batch"));
        }
        let b = batch.len() as f64;
        let d = self.embedding_dim();
        let mut raw = vec![0.0; head_idx.len()];

        for rec in batch {
            let xs = self.word_vectors(table, rec);
            let (emb, cache) = self.encoder.forward(&self.store, &xs)?;
            let mut d_emb = vec![0.0; d];
            for (k, &hi) in head_idx.iter().enumerate() {
                let head = &self.heads[hi];
                let label = rec.labels.get(&head.name).ok_or_else(|| {
                    Error::data(format!("record {:?} lacks label {:?}", rec.id, head.name))
                })?;
                let grads = head.forward(&self.store, &emb, label)?;
                if !grads.loss.is_finite() {
                    return Err(Error::numeric(format!(
                        "non-finite loss on task {:?}",
                        head.name
                    )));
                }
                raw[k] += grads.loss;
                let factor = scales[k] / b;
                for (acc, v) in d_emb.iter_mut().zip(&grads.d_h) {
                    *acc += factor * v;
                }
                let dw_scaled: Vec<f64> = grads.dw.iter().map(|v| factor * v).collect();
                let db_scaled: Vec<f64> = grads.db.iter().map(|v| factor * v).collect();
                self.store.add_grad(&head.w_name(), &dw_scaled);
                self.store.add_grad(&head.b_name(), &db_scaled);
            }
            // word vectors stay frozen; input gradients are dropped
            self.encoder.backward(&mut self.store, &cache, &d_emb)?;
        }
        for r in raw.iter_mut() {
            *r /= b;
        }
        Ok(raw)
    }

    /// Encode every record in input order into an embedding file. Records
    /// whose titles tokenize to nothing are skipped; the skip count is
    /// returned alongside.
    pub fn embed_catalog(
        &self,
        table: &WordEmbeddingTable,
        records: &[ProductRecord],
    ) -> Result<(EmbeddingFile, usize)> {
        let mut entries = Vec::with_capacity(records.len());
        let mut skipped = 0usize;
        for rec in records {
            if rec.tokens.is_empty() {
                skipped += 1;
                continue;
            }
            let emb = self.encode_record(table, rec)?;
            entries.push((rec.id.clone(), emb.iter().map(|&v| v as f32).collect()));
        }
        Ok((
            EmbeddingFile {
                dim: self.embedding_dim(),
                entries,
            },
            skipped,
        ))
    }

    pub fn to_checkpoint(&self, seed: u64) -> Checkpoint {
        let mut dims = BTreeMap::new();
        dims.insert("input_dim".to_string(), self.encoder.cfg.input_dim as u64);
        dims.insert("hidden".to_string(), self.encoder.cfg.hidden as u64);
        dims.insert("max_len".to_string(), self.encoder.cfg.max_len as u64);
        dims.insert("group".to_string(), self.group as u64);
        let mut normalizers = BTreeMap::new();
        let mut extra = BTreeMap::new();
        extra.insert(
            "cell".to_string(),
            format!("{:?}", self.encoder.cfg.cell).to_lowercase(),
        );
        let mut registry = TaskRegistry { tasks: Vec::new() };
        for head in &self.heads {
            if let Some(ema) = head.normalizer.state() {
                normalizers.insert(head.name.clone(), ema);
            }
            if head.kind == TaskKind::Scalar {
                extra.insert(
                    format!("zstats.{}", head.name),
                    format!("{} {}", head.target_mean, head.target_std),
                );
            }
            registry.tasks.push(crate::catalog::TaskSpec {
                name: head.name.clone(),
                kind: head.kind.clone(),
            });
        }
        Checkpoint {
            manifest: CheckpointManifest {
                model_kind: "mrnet".to_string(),
                dims,
                seed,
                task_registry: Some(registry.to_text()),
                normalizers,
                extra,
            },
            tensors: self.store.to_f32_tensors(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, gamma: f64) -> Result<Self> {
        if ckpt.manifest.model_kind != "mrnet" {
            return Err(Error::data(format!(
                "checkpoint holds a {:?} model, not mrnet",
                ckpt.manifest.model_kind
            )));
        }
        let dims = &ckpt.manifest.dims;
        let get = |k: &str| -> Result<usize> {
            dims.get(k)
                .map(|&v| v as usize)
                .ok_or_else(|| Error::data(format!("checkpoint manifest lacks dim {k:?}")))
        };
        let mut cfg = EncoderConfig::new(get("input_dim")?, get("hidden")?);
        cfg.max_len = get("max_len")?;
        if ckpt.manifest.extra.get("cell").map(|s| s.as_str()) == Some("rnn") {
            cfg.cell = crate::encoder::CellType::Rnn;
        }
        let registry_text = ckpt
            .manifest
            .task_registry
            .as_ref()
            .ok_or_else(|| Error::data("checkpoint manifest lacks task registry"))?;
        let registry = TaskRegistry::parse(registry_text)?;
        let mut model = MRNetModel::new(cfg, &registry, gamma, ckpt.manifest.seed)?;
        model.group = get("group").unwrap_or(0);
        model.store.load_f32_tensors(&ckpt.tensors)?;
        for head in &mut model.heads {
            head.normalizer
                .set_state(ckpt.manifest.normalizers.get(&head.name).copied());
            if let Some(z) = ckpt.manifest.extra.get(&format!("zstats.{}", head.name)) {
                let mut parts = z.split_whitespace();
                if let (Some(m), Some(s)) = (parts.next(), parts.next()) {
                    head.target_mean = m.parse().unwrap_or(0.0);
                    head.target_std = s.parse().unwrap_or(1.0);
                }
            }
        }
        Ok(model)
    }
}

/// Attach dense TF-IDF decoding targets under `task_name` to every record.
pub fn attach_decode_targets(
    records: &mut [ProductRecord],
    model: &TfidfModel,
    task_name: &str,
) {
    for rec in records.iter_mut() {
        let target = tfidf_vector(model, &rec.tokens).to_dense();
        rec.labels
            .insert(task_name.to_string(), Label::Decode(target));
    }
}

/// Write the loss curve CSV: `step,task,raw_loss,normalized_loss`.
pub fn write_loss_csv<W: Write>(points: &[LossPoint], mut out: W) -> Result<()> {
    writeln!(out, "step,task,raw_loss,normalized_loss")?;
    for p in points {
        writeln!(out, "{},{},{},{}", p.step, p.task, p.raw, p.normalized)?;
    }
    Ok(())
}
