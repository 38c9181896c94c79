//! Bidirectional recurrent encoder over a title's word vectors. The
//! concatenated final hidden states of the forward and backward passes form
//! the product embedding. Gradients are computed by exact backpropagation
//! through time against parameters held in a `ParamStore`.

use crate::error::{Error, Result};
use crate::numerics::{sigmoid, ParamStore};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Recurrent cell family. `Lstm` is the production choice; `Rnn` is the
/// plain tanh cell kept behind the same interface for comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellType {
    Lstm,
    Rnn,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_dim: usize,
    /// per-direction hidden size; the embedding dimension is 2x this
    pub hidden: usize,
    pub cell: CellType,
    pub max_len: usize,
}

impl EncoderConfig {
    pub fn new(input_dim: usize, hidden: usize) -> Self {
        EncoderConfig {
            input_dim,
            hidden,
            cell: CellType::Lstm,
            max_len: 32,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        2 * self.hidden
    }
}

/// Embedding for one product: the concatenation [h_T_forward, h_T_backward].
#[derive(Debug, Clone, PartialEq)]
pub struct ProductEmbedding {
    pub id: String,
    pub group: usize,
    pub vector: Vec<f64>,
}

/// Hidden and cell state of one direction at one time step.
#[derive(Debug, Clone)]
pub struct EncoderState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl EncoderState {
    pub fn zeros(hidden: usize) -> Self {
        EncoderState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

const INIT_SCALE: f64 = 0.08;

/// Per-timestep values cached for the backward pass.
#[derive(Debug, Clone)]
struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    // lstm gate activations (i, f, g, o) and tanh(c); rnn uses only `h`
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

#[derive(Debug, Clone)]
struct DirectionCache {
    steps: Vec<StepCache>,
}

/// Cache produced by `Encoder::forward`, consumed by `Encoder::backward`.
#[derive(Debug, Clone)]
pub struct EncodeCache {
    fwd: DirectionCache,
    bwd: DirectionCache,
    len: usize,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub cfg: EncoderConfig,
    prefix: String,
}

impl Encoder {
    pub fn new(cfg: EncoderConfig, prefix: &str) -> Self {
        Encoder {
            cfg,
            prefix: prefix.to_string(),
        }
    }

    fn gate_rows(&self) -> usize {
        match self.cfg.cell {
            CellType::Lstm => 4 * self.cfg.hidden,
            CellType::Rnn => self.cfg.hidden,
        }
    }

    fn names(&self, dir: &str) -> (String, String, String) {
        (
            format!("{}.{dir}.wx", self.prefix),
            format!("{}.{dir}.wh", self.prefix),
            format!("{}.{dir}.b", self.prefix),
        )
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for dir in ["f", "b"] {
            let (wx, wh, b) = self.names(dir);
            out.extend([wx, wh, b]);
        }
        out
    }

    /// Insert freshly initialized parameters into the store:
    /// uniform(-0.08, 0.08) weights and, for LSTM, forget-gate bias 1.
    pub fn init_params<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) -> Result<()> {
        let rows = self.gate_rows();
        let (d, h) = (self.cfg.input_dim, self.cfg.hidden);
        for dir in ["f", "b"] {
            let (wx, wh, b) = self.names(dir);
            let wx_data: Vec<f64> = (0..rows * d)
                .map(|_| rng.gen_range(-INIT_SCALE..INIT_SCALE))
                .collect();
            let wh_data: Vec<f64> = (0..rows * h)
                .map(|_| rng.gen_range(-INIT_SCALE..INIT_SCALE))
                .collect();
            let mut b_data = vec![0.0; rows];
            if self.cfg.cell == CellType::Lstm {
                // forget gate biases start at 1
                for j in h..2 * h {
                    b_data[j] = 1.0;
                }
            }
            store.insert(&wx, vec![rows, d], wx_data)?;
            store.insert(&wh, vec![rows, h], wh_data)?;
            store.insert(&b, vec![rows], b_data)?;
        }
        Ok(())
    }

    fn step(
        &self,
        wx: &[f64],
        wh: &[f64],
        b: &[f64],
        x: &[f64],
        state: &EncoderState,
    ) -> Result<StepCache> {
        let (d, h) = (self.cfg.input_dim, self.cfg.hidden);
        if x.len() != d {
            return Err(Error::shape(format!(
                "encoder step: input has {} entries, expected {d}",
                x.len()
            )));
        }
        let rows = self.gate_rows();
        // z = Wx x + Wh h_prev + b
        let mut z = b.to_vec();
        for r in 0..rows {
            let mut acc = 0.0;
            let wxr = &wx[r * d..(r + 1) * d];
            for (w, v) in wxr.iter().zip(x) {
                acc += w * v;
            }
            let whr = &wh[r * h..(r + 1) * h];
            for (w, v) in whr.iter().zip(&state.h) {
                acc += w * v;
            }
            z[r] += acc;
        }
        match self.cfg.cell {
            CellType::Lstm => {
                let mut i = vec![0.0; h];
                let mut f = vec![0.0; h];
                let mut g = vec![0.0; h];
                let mut o = vec![0.0; h];
                for j in 0..h {
                    i[j] = sigmoid(z[j]);
                    f[j] = sigmoid(z[h + j]);
                    g[j] = z[2 * h + j].tanh();
                    o[j] = sigmoid(z[3 * h + j]);
                }
                let mut c = vec![0.0; h];
                let mut tanh_c = vec![0.0; h];
                let mut h_new = vec![0.0; h];
                for j in 0..h {
                    c[j] = f[j] * state.c[j] + i[j] * g[j];
                    tanh_c[j] = c[j].tanh();
                    h_new[j] = o[j] * tanh_c[j];
                }
                Ok(StepCache {
                    x: x.to_vec(),
                    h_prev: state.h.clone(),
                    c_prev: state.c.clone(),
                    i,
                    f,
                    g,
                    o,
                    tanh_c,
                    h: h_new,
                })
            }
            CellType::Rnn => {
                let h_new: Vec<f64> = z.iter().map(|v| v.tanh()).collect();
                Ok(StepCache {
                    x: x.to_vec(),
                    h_prev: state.h.clone(),
                    c_prev: state.c.clone(),
                    i: Vec::new(),
                    f: Vec::new(),
                    g: Vec::new(),
                    o: Vec::new(),
                    tanh_c: Vec::new(),
                    h: h_new,
                })
            }
        }
    }

    /// Single recurrent step on explicit parameters from the store. Exposed
    /// for tests and for stepping through sequences manually.
    pub fn lstm_step(
        &self,
        store: &ParamStore,
        dir: &str,
        x: &[f64],
        state: &EncoderState,
    ) -> Result<EncoderState> {
        let (wx, wh, b) = self.names(dir);
        let cache = self.step(store.value(&wx), store.value(&wh), store.value(&b), x, state)?;
        Ok(EncoderState {
            c: match self.cfg.cell {
                CellType::Lstm => {
                    let h = self.cfg.hidden;
                    let mut c = vec![0.0; h];
                    for j in 0..h {
                        c[j] = cache.f[j] * state.c[j] + cache.i[j] * cache.g[j];
                    }
                    c
                }
                CellType::Rnn => vec![0.0; self.cfg.hidden],
            },
            h: cache.h,
        })
    }

    fn run_direction(
        &self,
        store: &ParamStore,
        dir: &str,
        xs: &[&[f64]],
    ) -> Result<DirectionCache> {
        let (wx, wh, b) = self.names(dir);
        let wx = store.value(&wx);
        let wh = store.value(&wh);
        let b = store.value(&b);
        let mut state = EncoderState::zeros(self.cfg.hidden);
        let mut steps = Vec::with_capacity(xs.len());
        for x in xs {
            let cache = self.step(wx, wh, b, x, &state)?;
            state.h = cache.h.clone();
            if self.cfg.cell == CellType::Lstm {
                for j in 0..self.cfg.hidden {
                    state.c[j] = cache.f[j] * cache.c_prev[j] + cache.i[j] * cache.g[j];
                }
            }
            steps.push(cache);
        }
        Ok(DirectionCache { steps })
    }

    /// Encode a word-vector sequence. The forward direction reads left to
    /// right, the backward direction right to left, both from zero states;
    /// the output is the concatenation of the two final hidden states.
    /// Sequences longer than `max_len` are tail-truncated.
    pub fn forward(
        &self,
        store: &ParamStore,
        inputs: &[Vec<f64>],
    ) -> Result<(Vec<f64>, EncodeCache)> {
        if inputs.is_empty() {
            return Err(Error::data("encode: empty token sequence"));
        }
        let len = inputs.len().min(self.cfg.max_len);
        let fwd_xs: Vec<&[f64]> = inputs[..len].iter().map(|v| v.as_slice()).collect();
        let bwd_xs: Vec<&[f64]> = fwd_xs.iter().rev().copied().collect();
        let fwd = self.run_direction(store, "f", &fwd_xs)?;
        let bwd = self.run_direction(store, "b", &bwd_xs)?;
        let mut out = fwd.steps.last().unwrap().h.clone();
        out.extend_from_slice(&bwd.steps.last().unwrap().h);
        Ok((out, EncodeCache { fwd, bwd, len }))
    }

    fn backward_direction(
        &self,
        store: &mut ParamStore,
        dir: &str,
        cache: &DirectionCache,
        d_final_h: &[f64],
    ) -> Result<Vec<Vec<f64>>> {
        let (wx_name, wh_name, b_name) = self.names(dir);
        let (d, h) = (self.cfg.input_dim, self.cfg.hidden);
        let rows = self.gate_rows();
        let wx = store.value(&wx_name).to_vec();
        let wh = store.value(&wh_name).to_vec();

        let mut dwx = vec![0.0; rows * d];
        let mut dwh = vec![0.0; rows * h];
        let mut db = vec![0.0; rows];
        let mut dxs = vec![vec![0.0; d]; cache.steps.len()];

        let mut dh = d_final_h.to_vec();
        let mut dc = vec![0.0; h];

        for (t, step) in cache.steps.iter().enumerate().rev() {
            let mut dz = vec![0.0; rows];
            match self.cfg.cell {
                CellType::Lstm => {
                    for j in 0..h {
                        let do_ = dh[j] * step.tanh_c[j];
                        let dtanh_c = dh[j] * step.o[j];
                        let dcj = dc[j] + dtanh_c * (1.0 - step.tanh_c[j] * step.tanh_c[j]);
                        let di = dcj * step.g[j];
                        let dg = dcj * step.i[j];
                        let df = dcj * step.c_prev[j];
                        dc[j] = dcj * step.f[j];
                        dz[j] = di * step.i[j] * (1.0 - step.i[j]);
                        dz[h + j] = df * step.f[j] * (1.0 - step.f[j]);
                        dz[2 * h + j] = dg * (1.0 - step.g[j] * step.g[j]);
                        dz[3 * h + j] = do_ * step.o[j] * (1.0 - step.o[j]);
                    }
                }
                CellType::Rnn => {
                    for j in 0..h {
                        dz[j] = dh[j] * (1.0 - step.h[j] * step.h[j]);
                    }
                }
            }

            for r in 0..rows {
                let g = dz[r];
                if g == 0.0 {
                    continue;
                }
                let wx_row = &mut dwx[r * d..(r + 1) * d];
                for (acc, xv) in wx_row.iter_mut().zip(&step.x) {
                    *acc += g * xv;
                }
                let wh_row = &mut dwh[r * h..(r + 1) * h];
                for (acc, hv) in wh_row.iter_mut().zip(&step.h_prev) {
                    *acc += g * hv;
                }
                db[r] += g;
            }

            // dx_t = Wx^T dz ; dh_prev = Wh^T dz
            let dx = &mut dxs[t];
            let mut dh_prev = vec![0.0; h];
            for r in 0..rows {
                let g = dz[r];
                if g == 0.0 {
                    continue;
                }
                let wx_row = &wx[r * d..(r + 1) * d];
                for (acc, w) in dx.iter_mut().zip(wx_row) {
                    *acc += g * w;
                }
                let wh_row = &wh[r * h..(r + 1) * h];
                for (acc, w) in dh_prev.iter_mut().zip(wh_row) {
                    *acc += g * w;
                }
            }
            dh = dh_prev;
            if self.cfg.cell == CellType::Rnn {
                dc.iter_mut().for_each(|v| *v = 0.0);
            }
        }

        store.add_grad(&wx_name, &dwx);
        store.add_grad(&wh_name, &dwh);
        store.add_grad(&b_name, &db);
        Ok(dxs)
    }

    /// BPTT given the gradient of the loss with respect to the concatenated
    /// embedding. Accumulates parameter gradients in the store and returns
    /// the gradient with respect to each input vector (original order,
    /// truncated length).
    pub fn backward(
        &self,
        store: &mut ParamStore,
        cache: &EncodeCache,
        d_embedding: &[f64],
    ) -> Result<Vec<Vec<f64>>> {
        let h = self.cfg.hidden;
        if d_embedding.len() != 2 * h {
            return Err(Error::shape(format!(
                "encoder backward: gradient has {} entries, expected {}",
                d_embedding.len(),
                2 * h
            )));
        }
        let dxs_f = self.backward_direction(store, "f", &cache.fwd, &d_embedding[..h])?;
        let dxs_b = self.backward_direction(store, "b", &cache.bwd, &d_embedding[h..])?;
        let mut dxs = dxs_f;
        // backward direction processed the reversed sequence
        for (t, dx) in dxs_b.into_iter().enumerate() {
            let orig = cache.len - 1 - t;
            for (acc, v) in dxs[orig].iter_mut().zip(&dx) {
                *acc += v;
            }
        }
        Ok(dxs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn make(cell: CellType, d: usize, h: usize, seed: u64) -> (Encoder, ParamStore) {
        let mut cfg = EncoderConfig::new(d, h);
        cfg.cell = cell;
        let enc = Encoder::new(cfg, "enc");
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        enc.init_params(&mut store, &mut rng).unwrap();
        (enc, store)
    }

    fn zero_params(store: &mut ParamStore) {
        for name in store.names() {
            store.get_mut(&name).value.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    #[test]
    fn lstm_step_closed_form_at_zero_weights() {
        let (enc, mut store) = make(CellType::Lstm, 2, 3, 1);
        zero_params(&mut store);
        let prev = EncoderState {
            h: vec![0.0; 3],
            c: vec![0.4, -1.0, 2.0],
        };
        let next = enc.lstm_step(&store, "f", &[0.7, -0.1], &prev).unwrap();
        for j in 0..3 {
            let c_expected = 0.5 * prev.c[j];
            assert!((next.c[j] - c_expected).abs() < 1e-12);
            assert!((next.h[j] - 0.5 * c_expected.tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_everything_stays_zero() {
        let (enc, mut store) = make(CellType::Lstm, 2, 3, 2);
        zero_params(&mut store);
        let next = enc
            .lstm_step(&store, "f", &[0.0, 0.0], &EncoderState::zeros(3))
            .unwrap();
        assert!(next.h.iter().all(|&v| v == 0.0));
        assert!(next.c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_token_matches_one_step() {
        let (enc, store) = make(CellType::Lstm, 2, 3, 3);
        let x = vec![0.3, -0.9];
        let (emb, _) = enc.forward(&store, &[x.clone()]).unwrap();
        let f = enc
            .lstm_step(&store, "f", &x, &EncoderState::zeros(3))
            .unwrap();
        let b = enc
            .lstm_step(&store, "b", &x, &EncoderState::zeros(3))
            .unwrap();
        assert_eq!(&emb[..3], f.h.as_slice());
        assert_eq!(&emb[3..], b.h.as_slice());
    }

    #[test]
    fn palindrome_with_tied_directions_is_symmetric() {
        let (enc, mut store) = make(CellType::Lstm, 2, 3, 4);
        // tie backward params to forward params
        for part in ["wx", "wh", "b"] {
            let fwd = store.value(&format!("enc.f.{part}")).to_vec();
            store.get_mut(&format!("enc.b.{part}")).value = fwd;
        }
        let a = vec![0.5, -0.2];
        let b = vec![-0.7, 0.9];
        let xs = vec![a.clone(), b.clone(), a.clone()];
        let (emb, _) = enc.forward(&store, &xs).unwrap();
        let h = 3;
        for j in 0..h {
            assert!((emb[j] - emb[h + j]).abs() < 1e-12);
        }
    }

    #[test]
    fn encode_is_pure() {
        let (enc, store) = make(CellType::Lstm, 3, 4, 5);
        let xs: Vec<Vec<f64>> = vec![vec![0.1, 0.2, 0.3], vec![-0.5, 0.0, 0.25]];
        let (a, _) = enc.forward(&store, &xs).unwrap();
        let (b, _) = enc.forward(&store, &xs).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_sequence_is_an_error() {
        let (enc, store) = make(CellType::Lstm, 2, 3, 6);
        assert!(enc.forward(&store, &[]).is_err());
    }

    #[test]
    fn truncates_to_max_len() {
        let (mut enc, store) = {
            let (e, s) = make(CellType::Lstm, 2, 3, 7);
            (e, s)
        };
        enc.cfg.max_len = 2;
        let xs: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 0.1, 0.2]).collect();
        let (long, _) = enc.forward(&store, &xs).unwrap();
        let (short, _) = enc.forward(&store, &xs[..2].to_vec()).unwrap();
        assert_eq!(long, short);
    }

    fn check_gradients(cell: CellType, seed: u64) -> f64 {
        // loss = 0.5 * ||embedding||^2, so d_embedding = embedding
        let (enc, mut store) = make(cell, 2, 3, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        let xs: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let (emb, cache) = enc.forward(&store, &xs).unwrap();
        enc.backward(&mut store, &cache, &emb).unwrap();
        let report = grad_check(
            &mut store,
            |s| {
                let (e, _) = enc.forward(s, &xs).unwrap();
                0.5 * e.iter().map(|v| v * v).sum::<f64>()
            },
            1e-5,
            0,
            seed,
        )
        .unwrap();
        report.max_rel_error
    }

    #[test]
    fn lstm_bptt_matches_finite_differences() {
        for seed in 0..5 {
            let err = check_gradients(CellType::Lstm, seed);
            assert!(err < 1e-5, "seed {seed}: rel err {err}");
        }
    }

    #[test]
    fn rnn_bptt_matches_finite_differences() {
        for seed in 0..5 {
            let err = check_gradients(CellType::Rnn, seed);
            assert!(err < 1e-5, "seed {seed}: rel err {err}");
        }
    }

    #[test]
    fn input_gradients_match_finite_differences() {
        let (enc, mut store) = make(CellType::Lstm, 2, 3, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut xs: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let (emb, cache) = enc.forward(&store, &xs).unwrap();
        let dxs = enc.backward(&mut store, &cache, &emb).unwrap();
        let eps = 1e-5;
        for t in 0..3 {
            for j in 0..2 {
                let orig = xs[t][j];
                xs[t][j] = orig + eps;
                let (e, _) = enc.forward(&store, &xs).unwrap();
                let up = 0.5 * e.iter().map(|v| v * v).sum::<f64>();
                xs[t][j] = orig - eps;
                let (e, _) = enc.forward(&store, &xs).unwrap();
                let down = 0.5 * e.iter().map(|v| v * v).sum::<f64>();
                xs[t][j] = orig;
                let fd = (up - down) / (2.0 * eps);
                let rel = (dxs[t][j] - fd).abs() / fd.abs().max(1e-8);
                assert!(rel < 1e-5, "t={t} j={j} rel={rel}");
            }
        }
    }
}
