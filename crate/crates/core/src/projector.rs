//! Group-agnostic embeddings: group-specific vectors are placed into a
//! disjoint block of a G*d-dimensional space and a sparse autoencoder with a
//! 2d hidden layer reconstructs them; the sigmoid hidden activations are the
//! group-agnostic representation.

use crate::error::{Error, Result};
use crate::io::{Checkpoint, CheckpointManifest};
use crate::numerics::{kl_sparsity, sigmoid, AdamConfig, ParamStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Place a d-dimensional group vector into the (1-based) g-th block of a
/// G*d-dimensional vector; everything else is zero.
pub fn block_embed(group: usize, v: &[f64], g_total: usize, d: usize) -> Result<Vec<f64>> {
    if group < 1 || group > g_total {
        return Err(Error::data(format!(
            "block_embed: group {group} outside 1..={g_total}"
        )));
    }
    if v.len() != d {
        return Err(Error::shape(format!(
            "block_embed: vector has {} entries, expected {d}",
            v.len()
        )));
    }
    let mut out = vec![0.0; g_total * d];
    out[(group - 1) * d..group * d].copy_from_slice(v);
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparseAEConfig {
    pub rho: f64,
    pub beta: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for SparseAEConfig {
    fn default() -> Self {
        SparseAEConfig {
            rho: 0.05,
            beta: 0.1,
            batch_size: 32,
            steps: 2000,
            adam: AdamConfig::default(),
            seed: 1,
        }
    }
}

/// Sparse autoencoder: sigmoid hidden layer, linear decoder, KL sparsity
/// penalty on the batch-mean hidden activation.
#[derive(Debug, Clone)]
pub struct SparseAEModel {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub rho: f64,
    pub beta: f64,
    pub store: ParamStore,
}

const ENC_W: &str = "ae.enc.w";
const ENC_B: &str = "ae.enc.b";
const DEC_W: &str = "ae.dec.w";
const DEC_B: &str = "ae.dec.b";

impl SparseAEModel {
    pub fn new(input_dim: usize, hidden_dim: usize, rho: f64, beta: f64, seed: u64) -> Result<Self> {
        if !(0.0 < rho && rho < 1.0) {
            return Err(Error::config(format!("sparse ae: rho {rho} outside (0,1)")));
        }
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = (1.0 / input_dim as f64).sqrt();
        let enc_w: Vec<f64> = (0..hidden_dim * input_dim)
            .map(|_| rng.gen_range(-scale..scale))
            .collect();
        let dscale = (1.0 / hidden_dim as f64).sqrt();
        let dec_w: Vec<f64> = (0..input_dim * hidden_dim)
            .map(|_| rng.gen_range(-dscale..dscale))
            .collect();
        store.insert(ENC_W, vec![hidden_dim, input_dim], enc_w)?;
        store.insert(ENC_B, vec![hidden_dim], vec![0.0; hidden_dim])?;
        store.insert(DEC_W, vec![input_dim, hidden_dim], dec_w)?;
        store.insert(DEC_B, vec![input_dim], vec![0.0; input_dim])?;
        Ok(SparseAEModel {
            input_dim,
            hidden_dim,
            rho,
            beta,
            store,
        })
    }

    fn hidden_on(&self, store: &ParamStore, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::shape(format!(
                "sparse ae: input has {} entries, expected {}",
                x.len(),
                self.input_dim
            )));
        }
        let w = store.value(ENC_W);
        let b = store.value(ENC_B);
        let mut h = vec![0.0; self.hidden_dim];
        for r in 0..self.hidden_dim {
            let row = &w[r * self.input_dim..(r + 1) * self.input_dim];
            let mut acc = b[r];
            for (wv, xv) in row.iter().zip(x) {
                acc += wv * xv;
            }
            h[r] = sigmoid(acc);
        }
        Ok(h)
    }

    fn decode_on(&self, store: &ParamStore, h: &[f64]) -> Vec<f64> {
        let w = store.value(DEC_W);
        let b = store.value(DEC_B);
        let mut y = vec![0.0; self.input_dim];
        for r in 0..self.input_dim {
            let row = &w[r * self.hidden_dim..(r + 1) * self.hidden_dim];
            let mut acc = b[r];
            for (wv, hv) in row.iter().zip(h) {
                acc += wv * hv;
            }
            y[r] = acc;
        }
        y
    }

    /// The group-agnostic projection: sigmoid hidden activations.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.hidden_on(&self.store, x)
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        let h = self.hidden_on(&self.store, x)?;
        Ok(self.decode_on(&self.store, &h))
    }

    /// Batch objective on an explicit store: mean reconstruction MSE plus
    /// beta * KL(batch-mean hidden, rho). Pure; used by training and by
    /// gradient checks.
    pub fn batch_loss(&self, store: &ParamStore, batch: &[&[f64]]) -> Result<f64> {
        let b = batch.len() as f64;
        let mut recon_loss = 0.0;
        let mut mean_h = vec![0.0; self.hidden_dim];
        for &x in batch {
            let h = self.hidden_on(store, x)?;
            let y = self.decode_on(store, &h);
            let mut sq = 0.0;
            for (yi, xi) in y.iter().zip(x) {
                sq += (yi - xi) * (yi - xi);
            }
            recon_loss += sq / self.input_dim as f64;
            for (m, hv) in mean_h.iter_mut().zip(&h) {
                *m += hv / b;
            }
        }
        let (kl, _) = kl_sparsity(&mean_h, self.rho)?;
        Ok(recon_loss / b + self.beta * kl)
    }

    /// Forward/backward over a batch; accumulates gradients and returns the
    /// batch loss.
    fn batch_backward(&mut self, batch: &[&[f64]]) -> Result<f64> {
        let b = batch.len() as f64;
        let n = self.input_dim;
        let m = self.hidden_dim;

        let mut hiddens = Vec::with_capacity(batch.len());
        let mut mean_h = vec![0.0; m];
        let mut recon_loss = 0.0;
        let mut d_recons = Vec::with_capacity(batch.len());
        for &x in batch {
            let h = self.hidden_on(&self.store, x)?;
            let y = self.decode_on(&self.store, &h);
            let mut d_y = vec![0.0; n];
            let mut sq = 0.0;
            for j in 0..n {
                let diff = y[j] - x[j];
                sq += diff * diff;
                d_y[j] = 2.0 * diff / (n as f64 * b);
            }
            recon_loss += sq / n as f64;
            for (acc, hv) in mean_h.iter_mut().zip(&h) {
                *acc += hv / b;
            }
            hiddens.push(h);
            d_recons.push(d_y);
        }
        let (kl, d_mean_h) = kl_sparsity(&mean_h, self.rho)?;
        let loss = recon_loss / b + self.beta * kl;
        if !loss.is_finite() {
            return Err(Error::numeric("sparse ae: non-finite loss"));
        }

        let dec_w = self.store.value(DEC_W).to_vec();
        let mut d_enc_w = vec![0.0; m * n];
        let mut d_enc_b = vec![0.0; m];
        let mut d_dec_w = vec![0.0; n * m];
        let mut d_dec_b = vec![0.0; n];
        for ((x, h), d_y) in batch.iter().zip(&hiddens).zip(&d_recons) {
            // decoder grads and dh from reconstruction
            let mut d_h = vec![0.0; m];
            for r in 0..n {
                let g = d_y[r];
                if g != 0.0 {
                    let row = &dec_w[r * m..(r + 1) * m];
                    let drow = &mut d_dec_w[r * m..(r + 1) * m];
                    for j in 0..m {
                        drow[j] += g * h[j];
                        d_h[j] += g * row[j];
                    }
                    d_dec_b[r] += g;
                }
            }
            // sparsity path through the batch mean
            for j in 0..m {
                d_h[j] += self.beta * d_mean_h[j] / b;
            }
            // through the sigmoid into the encoder
            for j in 0..m {
                let dz = d_h[j] * h[j] * (1.0 - h[j]);
                if dz == 0.0 {
                    continue;
                }
                let row = &mut d_enc_w[j * n..(j + 1) * n];
                for (acc, xv) in row.iter_mut().zip(*x) {
                    *acc += dz * xv;
                }
                d_enc_b[j] += dz;
            }
        }
        self.store.add_grad(ENC_W, &d_enc_w);
        self.store.add_grad(ENC_B, &d_enc_b);
        self.store.add_grad(DEC_W, &d_dec_w);
        self.store.add_grad(DEC_B, &d_dec_b);
        Ok(loss)
    }

    pub fn to_checkpoint(&self, seed: u64) -> Checkpoint {
        let mut dims = BTreeMap::new();
        dims.insert("input_dim".to_string(), self.input_dim as u64);
        dims.insert("hidden_dim".to_string(), self.hidden_dim as u64);
        let mut extra = BTreeMap::new();
        extra.insert("rho".to_string(), self.rho.to_string());
        extra.insert("beta".to_string(), self.beta.to_string());
        Checkpoint {
            manifest: CheckpointManifest {
                model_kind: "sparse_ae".to_string(),
                dims,
                seed,
                task_registry: None,
                normalizers: BTreeMap::new(),
                extra,
            },
            tensors: self.store.to_f32_tensors(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.manifest.model_kind != "sparse_ae" {
            return Err(Error::data(format!(
                "checkpoint holds a {:?} model, not sparse_ae",
                ckpt.manifest.model_kind
            )));
        }
        let dims = &ckpt.manifest.dims;
        let input_dim = *dims.get("input_dim").ok_or_else(|| Error::data("no input_dim"))? as usize;
        let hidden_dim =
            *dims.get("hidden_dim").ok_or_else(|| Error::data("no hidden_dim"))? as usize;
        let rho = ckpt
            .manifest
            .extra
            .get("rho")
            .and_then(|s| s.parse().ok())
            .unwrap_or(0.05);
        let beta = ckpt
            .manifest
            .extra
            .get("beta")
            .and_then(|s| s.parse().ok())
            .unwrap_or(0.1);
        let mut model = SparseAEModel::new(input_dim, hidden_dim, rho, beta, ckpt.manifest.seed)?;
        model.store.load_f32_tensors(&ckpt.tensors)?;
        Ok(model)
    }
}

/// Train the sparse autoencoder on block vectors of dimension G*d with a 2d
/// hidden layer.
pub fn train_sparse_ae(
    inputs: &[Vec<f64>],
    hidden_dim: usize,
    cfg: &SparseAEConfig,
) -> Result<(SparseAEModel, Vec<f64>)> {
    if inputs.is_empty() {
        return Err(Error::data("sparse ae: empty training set"));
    }
    let input_dim = inputs[0].len();
    for (i, x) in inputs.iter().enumerate() {
        if x.len() != input_dim {
            return Err(Error::shape(format!(
                "sparse ae: input {i} has {} entries, expected {input_dim}",
                x.len()
            )));
        }
    }
    let mut model = SparseAEModel::new(input_dim, hidden_dim, cfg.rho, cfg.beta, cfg.seed)?;
    let names = model.store.names();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut curve = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let batch: Vec<&[f64]> = (0..cfg.batch_size)
            .map(|_| inputs[rng.gen_range(0..inputs.len())].as_slice())
            .collect();
        let loss = model.batch_backward(&batch)?;
        model.store.adam_step(&names, &cfg.adam, step as u64)?;
        curve.push(loss);
    }
    Ok((model, curve))
}

/// Deterministically draw `per_group` items from each group (cycling when a
/// group has fewer), mirroring balanced per-group sampling of the training
/// set.
pub fn balance_groups(items: &[(usize, Vec<f64>)], per_group: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut by_group: BTreeMap<usize, Vec<&Vec<f64>>> = BTreeMap::new();
    for (g, v) in items {
        by_group.entry(*g).or_default().push(v);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (_, members) in by_group {
        for _ in 0..per_group {
            out.push(members[rng.gen_range(0..members.len())].clone());
        }
    }
    out
}
