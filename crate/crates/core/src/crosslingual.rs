//! Cross-language alignment: a multimodal autoencoder over concatenated
//! source/target embedding pairs. The training set holds three examples per
//! pair so the model learns to fill in either side from the other.

use crate::error::{Error, Result};
use crate::io::{Checkpoint, CheckpointManifest};
use crate::numerics::{AdamConfig, ParamStore};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One aligned product: its embedding in region A and in region B.
#[derive(Debug, Clone)]
pub struct PairedEmbedding {
    pub id: String,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossAEConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for CrossAEConfig {
    fn default() -> Self {
        CrossAEConfig {
            batch_size: 256,
            steps: 2000,
            adam: AdamConfig::default(),
            seed: 1,
        }
    }
}

/// 2n -> n (tanh) -> 2n (linear) autoencoder over concatenated pairs.
#[derive(Debug, Clone)]
pub struct CrossAEModel {
    /// per-side embedding dimension; the autoencoder sees 2n inputs
    pub side_dim: usize,
    pub store: ParamStore,
}

const ENC_W: &str = "xae.enc.w";
const ENC_B: &str = "xae.enc.b";
const DEC_W: &str = "xae.dec.w";
const DEC_B: &str = "xae.dec.b";

impl CrossAEModel {
    pub fn new(side_dim: usize, seed: u64) -> Result<Self> {
        if side_dim == 0 {
            return Err(Error::config("cross ae: side_dim must be positive"));
        }
        let n = side_dim;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let escale = (1.0 / (2 * n) as f64).sqrt();
        let enc_w: Vec<f64> = (0..n * 2 * n).map(|_| rng.gen_range(-escale..escale)).collect();
        let dscale = (1.0 / n as f64).sqrt();
        let dec_w: Vec<f64> = (0..2 * n * n).map(|_| rng.gen_range(-dscale..dscale)).collect();
        store.insert(ENC_W, vec![n, 2 * n], enc_w)?;
        store.insert(ENC_B, vec![n], vec![0.0; n])?;
        store.insert(DEC_W, vec![2 * n, n], dec_w)?;
        store.insert(DEC_B, vec![2 * n], vec![0.0; 2 * n])?;
        Ok(CrossAEModel { side_dim, store })
    }

    fn hidden_on(&self, store: &ParamStore, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.side_dim;
        if x.len() != 2 * n {
            return Err(Error::shape(format!(
                "cross ae: input has {} entries, expected {}",
                x.len(),
                2 * n
            )));
        }
        let w = store.value(ENC_W);
        let b = store.value(ENC_B);
        let mut h = vec![0.0; n];
        for r in 0..n {
            let row = &w[r * 2 * n..(r + 1) * 2 * n];
            let mut acc = b[r];
            for (wv, xv) in row.iter().zip(x) {
                acc += wv * xv;
            }
            h[r] = acc.tanh();
        }
        Ok(h)
    }

    fn decode_on(&self, store: &ParamStore, h: &[f64]) -> Vec<f64> {
        let n = self.side_dim;
        let w = store.value(DEC_W);
        let b = store.value(DEC_B);
        let mut y = vec![0.0; 2 * n];
        for r in 0..2 * n {
            let row = &w[r * n..(r + 1) * n];
            let mut acc = b[r];
            for (wv, hv) in row.iter().zip(h) {
                acc += wv * hv;
            }
            y[r] = acc;
        }
        y
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        let h = self.hidden_on(&self.store, x)?;
        Ok(self.decode_on(&self.store, &h))
    }

    /// Map a region-B vector into region A: feed [0, b] and keep the first
    /// n output coordinates.
    pub fn project_to_a(&self, b_vec: &[f64]) -> Result<Vec<f64>> {
        let n = self.side_dim;
        if b_vec.len() != n {
            return Err(Error::shape(format!(
                "cross ae: side vector has {} entries, expected {n}",
                b_vec.len()
            )));
        }
        let mut x = vec![0.0; 2 * n];
        x[n..].copy_from_slice(b_vec);
        let y = self.reconstruct(&x)?;
        Ok(y[..n].to_vec())
    }

    /// Mean squared error over a batch of (input, target) rows; pure.
    pub fn batch_loss(&self, store: &ParamStore, batch: &[(&[f64], &[f64])]) -> Result<f64> {
        let dim = 2 * self.side_dim;
        let mut total = 0.0;
        for &(x, t) in batch {
            let h = self.hidden_on(store, x)?;
            let y = self.decode_on(store, &h);
            if t.len() != dim {
                return Err(Error::shape("cross ae: bad target length"));
            }
            let mut sq = 0.0;
            for (yi, ti) in y.iter().zip(t) {
                sq += (yi - ti) * (yi - ti);
            }
            total += sq / dim as f64;
        }
        Ok(total / batch.len() as f64)
    }

    fn batch_backward(&mut self, batch: &[(&[f64], &[f64])]) -> Result<f64> {
        let n = self.side_dim;
        let dim = 2 * n;
        let b = batch.len() as f64;
        let dec_w = self.store.value(DEC_W).to_vec();
        let mut d_enc_w = vec![0.0; n * dim];
        let mut d_enc_b = vec![0.0; n];
        let mut d_dec_w = vec![0.0; dim * n];
        let mut d_dec_b = vec![0.0; dim];
        let mut total = 0.0;
        for &(x, t) in batch {
            let h = self.hidden_on(&self.store, x)?;
            let y = self.decode_on(&self.store, &h);
            if t.len() != dim {
                return Err(Error::shape("cross ae: bad target length"));
            }
            let mut d_h = vec![0.0; n];
            for r in 0..dim {
                let diff = y[r] - t[r];
                total += diff * diff / dim as f64;
                let g = 2.0 * diff / (dim as f64 * b);
                let row = &dec_w[r * n..(r + 1) * n];
                let drow = &mut d_dec_w[r * n..(r + 1) * n];
                for j in 0..n {
                    drow[j] += g * h[j];
                    d_h[j] += g * row[j];
                }
                d_dec_b[r] += g;
            }
            for j in 0..n {
                let dz = d_h[j] * (1.0 - h[j] * h[j]);
                if dz == 0.0 {
                    continue;
                }
                let row = &mut d_enc_w[j * dim..(j + 1) * dim];
                for (acc, xv) in row.iter_mut().zip(x) {
                    *acc += dz * xv;
                }
                d_enc_b[j] += dz;
            }
        }
        let loss = total / b;
        if !loss.is_finite() {
            return Err(Error::numeric("cross ae: non-finite loss"));
        }
        self.store.add_grad(ENC_W, &d_enc_w);
        self.store.add_grad(ENC_B, &d_enc_b);
        self.store.add_grad(DEC_W, &d_dec_w);
        self.store.add_grad(DEC_B, &d_dec_b);
        Ok(loss)
    }

    pub fn to_checkpoint(&self, seed: u64) -> Checkpoint {
        let mut dims = BTreeMap::new();
        dims.insert("side_dim".to_string(), self.side_dim as u64);
        Checkpoint {
            manifest: CheckpointManifest {
                model_kind: "cross_ae".to_string(),
                dims,
                seed,
                task_registry: None,
                normalizers: BTreeMap::new(),
                extra: BTreeMap::new(),
            },
            tensors: self.store.to_f32_tensors(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.manifest.model_kind != "cross_ae" {
            return Err(Error::data(format!(
                "checkpoint holds a {:?} model, not cross_ae",
                ckpt.manifest.model_kind
            )));
        }
        let side_dim = *ckpt
            .manifest
            .dims
            .get("side_dim")
            .ok_or_else(|| Error::data("no side_dim"))? as usize;
        let mut model = CrossAEModel::new(side_dim, ckpt.manifest.seed)?;
        model.store.load_f32_tensors(&ckpt.tensors)?;
        Ok(model)
    }
}

/// Expand P aligned pairs into the 3P-row training set: for each pair
/// ([a,0] -> [0,b]), ([0,b] -> [a,0]) and ([a,b] -> [a,b]), shuffled
/// deterministically.
pub fn make_pairs_dataset(
    pairs: &[PairedEmbedding],
    seed: u64,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    if pairs.is_empty() {
        return Err(Error::data("cross ae: no aligned pairs"));
    }
    let n = pairs[0].a.len();
    let mut rows = Vec::with_capacity(3 * pairs.len());
    for p in pairs {
        if p.a.len() != n || p.b.len() != n {
            return Err(Error::shape(format!(
                "pair {:?}: sides have {} and {} entries, expected {n}",
                p.id,
                p.a.len(),
                p.b.len()
            )));
        }
        let mut a_only = vec![0.0; 2 * n];
        a_only[..n].copy_from_slice(&p.a);
        let mut b_only = vec![0.0; 2 * n];
        b_only[n..].copy_from_slice(&p.b);
        let mut both = vec![0.0; 2 * n];
        both[..n].copy_from_slice(&p.a);
        both[n..].copy_from_slice(&p.b);
        rows.push((a_only.clone(), b_only.clone()));
        rows.push((b_only, a_only));
        rows.push((both.clone(), both));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rows.shuffle(&mut rng);
    Ok(rows)
}

/// Train the multimodal autoencoder on the expanded pairs dataset.
pub fn train_multimodal_ae(
    pairs: &[PairedEmbedding],
    cfg: &CrossAEConfig,
) -> Result<(CrossAEModel, Vec<f64>)> {
    let rows = make_pairs_dataset(pairs, cfg.seed)?;
    let side_dim = rows[0].0.len() / 2;
    let mut model = CrossAEModel::new(side_dim, cfg.seed)?;
    let names = model.store.names();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut curve = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let batch: Vec<(&[f64], &[f64])> = (0..cfg.batch_size)
            .map(|_| {
                let (x, t) = &rows[rng.gen_range(0..rows.len())];
                (x.as_slice(), t.as_slice())
            })
            .collect();
        let loss = model.batch_backward(&batch)?;
        model.store.adam_step(&names, &cfg.adam, step as u64)?;
        curve.push(loss);
    }
    Ok((model, curve))
}
