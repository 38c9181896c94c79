//! One function per subcommand. Every artifact write is atomic and gets a
//! sidecar manifest.

use crate::artifact::write_sidecar;
use crate::config::RunConfig;
use mrnet_core::analytics::{
    auc, importance_overlap, kfold_indices, top_quartile, train_logreg, train_rf, unseen_split,
    write_eval_csv, EvalRow, KnnIndex,
};
use mrnet_core::catalog::{
    build_tfidf, build_vocab, catalog_to_string, generate_catalog, load_catalog_file,
    tfidf_vector, Label, ProductRecord, TaskKind, TaskRegistry, TaskSpec,
};
use mrnet_core::crosslingual::{train_multimodal_ae, CrossAEModel, PairedEmbedding};
use mrnet_core::embeddings::{train_word2vec, WordEmbeddingTable};
use mrnet_core::encoder::{CellType, EncoderConfig};
use mrnet_core::io::{write_atomic, Checkpoint, EmbeddingFile};
use mrnet_core::multitask::{
    attach_decode_targets, train_alternating, train_joint, write_loss_csv, MRNetModel, TrainMode,
};
use mrnet_core::numerics::grad_check;
use mrnet_core::projector::{block_embed, train_sparse_ae, SparseAEModel};
use mrnet_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::Path;

pub struct Ctx {
    pub cfg: RunConfig,
    pub config_sha256: String,
    pub seed: u64,
    pub quiet: bool,
}

impl Ctx {
    fn say(&self, msg: String) {
        if !self.quiet {
            println!("{msg}");
        }
    }

    fn sidecar(&self, path: &Path, command: &str) -> Result<()> {
        write_sidecar(path, command, self.seed, &self.config_sha256)
    }

    fn load_registry(&self) -> Result<TaskRegistry> {
        let path = self.cfg.tasks_path();
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
        TaskRegistry::parse(&text)
    }

    fn load_records(&self, registry: &TaskRegistry) -> Result<Vec<ProductRecord>> {
        load_catalog_file(&self.cfg.catalog_path(), registry)
    }

    fn load_words(&self) -> Result<WordEmbeddingTable> {
        let path = self.cfg.word_vectors_path();
        let file = std::fs::File::open(&path)
            .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
        WordEmbeddingTable::read_text(BufReader::new(file))
    }

    fn load_embeddings(&self, path: &Path) -> Result<EmbeddingFile> {
        EmbeddingFile::read_file(path)
    }
}

pub fn gen_catalog(ctx: &Ctx) -> Result<()> {
    let mut spec = ctx.cfg.catalog.clone();
    spec.seed = ctx.seed;
    let records = generate_catalog(&spec)?;
    let catalog_path = ctx.cfg.catalog_path();
    write_atomic(&catalog_path, catalog_to_string(&records)?.as_bytes())?;
    ctx.sidecar(&catalog_path, "gen-catalog")?;
    let tasks_path = ctx.cfg.tasks_path();
    write_atomic(&tasks_path, spec.task_registry_text().as_bytes())?;
    ctx.sidecar(&tasks_path, "gen-catalog")?;
    ctx.say(format!(
        "wrote {} records to {}",
        records.len(),
        catalog_path.display()
    ));
    Ok(())
}

pub fn train_w2v(ctx: &Ctx) -> Result<()> {
    let registry = ctx.load_registry()?;
    let records = ctx.load_records(&registry)?;
    let mut cfg = ctx.cfg.word2vec.clone();
    cfg.seed = ctx.seed;
    let (table, losses) = train_word2vec(&records, &cfg)?;
    let mut buf = Vec::new();
    table.write_text(&mut buf)?;
    let path = ctx.cfg.word_vectors_path();
    write_atomic(&path, &buf)?;
    ctx.sidecar(&path, "train-word2vec")?;
    ctx.say(format!(
        "trained {} x {} word vectors, final epoch loss {:.6}",
        table.vocab.len(),
        table.dim,
        losses.last().copied().unwrap_or(f64::NAN)
    ));
    Ok(())
}

fn encoder_config(ctx: &Ctx, input_dim: usize) -> EncoderConfig {
    let mut enc = EncoderConfig::new(input_dim, ctx.cfg.model.d / 2);
    enc.cell = if ctx.cfg.model.cell == "rnn" {
        CellType::Rnn
    } else {
        CellType::Lstm
    };
    enc.max_len = ctx.cfg.model.max_len;
    enc
}

pub fn train_mrnet(ctx: &Ctx) -> Result<()> {
    let registry = ctx.load_registry()?;
    let mut records = ctx.load_records(&registry)?;
    let table = ctx.load_words()?;

    let tfidf = build_tfidf(&records, ctx.cfg.model.decode_dim, ctx.cfg.model.min_df)?;
    let decode_task = ctx.cfg.model.decode_task.clone();
    attach_decode_targets(&mut records, &tfidf, &decode_task);
    let mut tasks = registry.tasks.clone();
    tasks.push(TaskSpec {
        name: decode_task,
        kind: TaskKind::Decode(tfidf.dim),
    });
    let full_registry = TaskRegistry { tasks };

    let mut train_cfg = ctx.cfg.mrnet.clone();
    train_cfg.seed = ctx.seed;
    let mut model = MRNetModel::new(
        encoder_config(ctx, table.dim),
        &full_registry,
        train_cfg.normalizer_gamma,
        ctx.seed,
    )?;
    let points = match train_cfg.mode {
        TrainMode::Alternating => train_alternating(&mut model, &table, &records, &train_cfg)?,
        TrainMode::Joint => train_joint(&mut model, &table, &records, &train_cfg)?,
    };

    let ckpt_path = ctx.cfg.mrnet_checkpoint_path();
    let mut buf = Vec::new();
    model.to_checkpoint(ctx.seed).write(&mut buf)?;
    write_atomic(&ckpt_path, &buf)?;
    ctx.sidecar(&ckpt_path, "train-mrnet")?;

    let loss_path = ctx.cfg.loss_curve_path();
    let mut csv = Vec::new();
    write_loss_csv(&points, &mut csv)?;
    write_atomic(&loss_path, &csv)?;
    ctx.sidecar(&loss_path, "train-mrnet")?;
    ctx.say(format!(
        "trained mrnet for {} steps; checkpoint at {}",
        points.len(),
        ckpt_path.display()
    ));
    Ok(())
}

pub fn embed(ctx: &Ctx) -> Result<()> {
    let ckpt = Checkpoint::read_file(&ctx.cfg.mrnet_checkpoint_path())?;
    let model = MRNetModel::from_checkpoint(&ckpt, ctx.cfg.mrnet.normalizer_gamma)?;
    let table = ctx.load_words()?;
    let registry = ctx.load_registry()?;
    let records = ctx.load_records(&registry)?;
    let (file, skipped) = model.embed_catalog(&table, &records)?;
    let path = ctx.cfg.embeddings_path();
    file.write_file(&path)?;
    ctx.sidecar(&path, "embed")?;
    ctx.say(format!(
        "embedded {} products (dim {}, {} skipped) into {}",
        file.entries.len(),
        file.dim,
        skipped,
        path.display()
    ));
    Ok(())
}

fn group_of(records: &[ProductRecord]) -> BTreeMap<String, usize> {
    records.iter().map(|r| (r.id.clone(), r.group)).collect()
}

fn block_vectors(
    emb: &EmbeddingFile,
    groups: &BTreeMap<String, usize>,
) -> Result<(Vec<(String, Vec<f64>)>, usize)> {
    let g_total = groups.values().copied().max().unwrap_or(0) + 1;
    let mut out = Vec::with_capacity(emb.entries.len());
    for (id, vec) in &emb.entries {
        let g = *groups
            .get(id)
            .ok_or_else(|| Error::data(format!("no catalog record for embedding {id:?}")))?;
        let v: Vec<f64> = vec.iter().map(|&x| x as f64).collect();
        out.push((id.clone(), block_embed(g + 1, &v, g_total, emb.dim)?));
    }
    Ok((out, g_total))
}

pub fn train_agnostic(ctx: &Ctx) -> Result<()> {
    let registry = ctx.load_registry()?;
    let records = ctx.load_records(&registry)?;
    let emb = ctx.load_embeddings(&ctx.cfg.embeddings_path())?;
    let (blocks, g_total) = block_vectors(&emb, &group_of(&records))?;
    let inputs: Vec<Vec<f64>> = blocks.into_iter().map(|(_, v)| v).collect();
    let mut cfg = ctx.cfg.agnostic.clone();
    cfg.seed = ctx.seed;
    let (model, curve) = train_sparse_ae(&inputs, 2 * emb.dim, &cfg)?;
    let path = ctx.cfg.agnostic_checkpoint_path();
    let mut buf = Vec::new();
    model.to_checkpoint(ctx.seed).write(&mut buf)?;
    write_atomic(&path, &buf)?;
    ctx.sidecar(&path, "train-agnostic")?;
    ctx.say(format!(
        "trained sparse autoencoder over {} groups ({} -> {}), final loss {:.6}",
        g_total,
        model.input_dim,
        model.hidden_dim,
        curve.last().copied().unwrap_or(f64::NAN)
    ));
    Ok(())
}

pub fn project_agnostic(ctx: &Ctx) -> Result<()> {
    let ckpt = Checkpoint::read_file(&ctx.cfg.agnostic_checkpoint_path())?;
    let model = SparseAEModel::from_checkpoint(&ckpt)?;
    let registry = ctx.load_registry()?;
    let records = ctx.load_records(&registry)?;
    let emb = ctx.load_embeddings(&ctx.cfg.embeddings_path())?;
    let (blocks, _) = block_vectors(&emb, &group_of(&records))?;
    let mut entries = Vec::with_capacity(blocks.len());
    for (id, block) in blocks {
        let h = model.project(&block)?;
        entries.push((id, h.iter().map(|&v| v as f32).collect()));
    }
    let file = EmbeddingFile {
        dim: model.hidden_dim,
        entries,
    };
    let path = ctx.cfg.agnostic_embeddings_path();
    file.write_file(&path)?;
    ctx.sidecar(&path, "project-agnostic")?;
    ctx.say(format!(
        "projected {} group-agnostic embeddings (dim {}) into {}",
        file.entries.len(),
        file.dim,
        path.display()
    ));
    Ok(())
}

/// Fixed orthogonal map: rotate consecutive coordinate pairs by seeded
/// angles. Used to synthesize the second region when none is supplied.
fn synth_region_b(emb: &EmbeddingFile, noise: f64, seed: u64) -> EmbeddingFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angles: Vec<f64> = (0..emb.dim / 2).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    let entries = emb
        .entries
        .iter()
        .map(|(id, v)| {
            let mut out: Vec<f32> = v.clone();
            for (p, theta) in angles.iter().enumerate() {
                let (c, s) = (theta.cos(), theta.sin());
                let (x, y) = (v[2 * p] as f64, v[2 * p + 1] as f64);
                out[2 * p] = (x * c - y * s + rng.gen_range(-noise..=noise)) as f32;
                out[2 * p + 1] = (x * s + y * c + rng.gen_range(-noise..=noise)) as f32;
            }
            (id.clone(), out)
        })
        .collect();
    EmbeddingFile {
        dim: emb.dim,
        entries,
    }
}

fn paired(a: &EmbeddingFile, b: &EmbeddingFile) -> Result<Vec<PairedEmbedding>> {
    let b_map = b.to_f64_map();
    let mut pairs = Vec::new();
    for (id, v) in &a.entries {
        if let Some(bv) = b_map.get(id) {
            pairs.push(PairedEmbedding {
                id: id.clone(),
                a: v.iter().map(|&x| x as f64).collect(),
                b: bv.clone(),
            });
        }
    }
    if pairs.is_empty() {
        return Err(Error::data("no shared ids between the two regions"));
    }
    Ok(pairs)
}

pub fn train_crosslang(ctx: &Ctx) -> Result<()> {
    let region_a = ctx.load_embeddings(&ctx.cfg.embeddings_path())?;
    let b_path = ctx.cfg.region_b_embeddings_path();
    let region_b = if b_path.exists() {
        ctx.load_embeddings(&b_path)?
    } else {
        let synth = synth_region_b(&region_a, ctx.cfg.crosslang.noise, ctx.seed);
        synth.write_file(&b_path)?;
        ctx.sidecar(&b_path, "train-crosslang")?;
        ctx.say(format!("synthesized second region at {}", b_path.display()));
        synth
    };
    let pairs = paired(&region_a, &region_b)?;
    let mut cfg = ctx.cfg.crosslang.train.clone();
    cfg.seed = ctx.seed;
    let (model, curve) = train_multimodal_ae(&pairs, &cfg)?;
    let path = ctx.cfg.crosslang_checkpoint_path();
    let mut buf = Vec::new();
    model.to_checkpoint(ctx.seed).write(&mut buf)?;
    write_atomic(&path, &buf)?;
    ctx.sidecar(&path, "train-crosslang")?;
    ctx.say(format!(
        "trained cross-language autoencoder on {} pairs, final loss {:.6}",
        pairs.len(),
        curve.last().copied().unwrap_or(f64::NAN)
    ));
    Ok(())
}

pub fn project_crosslang(ctx: &Ctx) -> Result<()> {
    let ckpt = Checkpoint::read_file(&ctx.cfg.crosslang_checkpoint_path())?;
    let model = CrossAEModel::from_checkpoint(&ckpt)?;
    let region_b = ctx.load_embeddings(&ctx.cfg.region_b_embeddings_path())?;
    let mut entries = Vec::with_capacity(region_b.entries.len());
    for (id, v) in &region_b.entries {
        let x: Vec<f64> = v.iter().map(|&f| f as f64).collect();
        let proj = model.project_to_a(&x)?;
        entries.push((id.clone(), proj.iter().map(|&f| f as f32).collect()));
    }
    let file = EmbeddingFile {
        dim: model.side_dim,
        entries,
    };
    let path = ctx.cfg.crosslang_embeddings_path();
    file.write_file(&path)?;
    ctx.sidecar(&path, "project-crosslang")?;
    ctx.say(format!(
        "projected {} region-B embeddings into region A at {}",
        file.entries.len(),
        path.display()
    ));
    Ok(())
}

pub fn knn_cmd(ctx: &Ctx, id: &str, k: usize) -> Result<()> {
    let emb = ctx.load_embeddings(&ctx.cfg.embeddings_path())?;
    let index = KnnIndex::from_embedding_file(&emb)?;
    let query = emb
        .entries
        .iter()
        .find(|(eid, _)| eid == id)
        .map(|(_, v)| v.iter().map(|&x| x as f64).collect::<Vec<f64>>())
        .ok_or_else(|| Error::data(format!("id {id:?} not in embedding file")))?;
    // the query itself comes back first; fetch one extra and drop it
    let take = (k + 1).min(index.len());
    for (nid, dist) in index.knn(&query, take)?.into_iter().filter(|(nid, _)| nid != id).take(k) {
        println!("{nid} {dist}");
    }
    Ok(())
}

fn binary_labels(records: &[ProductRecord], task: &TaskSpec) -> Result<Vec<bool>> {
    let TaskKind::Class(k) = task.kind else {
        return Err(Error::config(format!("task {:?} is not a class task", task.name)));
    };
    let positive_class = if k == 2 { 1 } else { 0 };
    records
        .iter()
        .map(|r| match r.labels.get(&task.name) {
            Some(Label::Class { index, .. }) => Ok(*index == positive_class),
            _ => Err(Error::data(format!(
                "record {:?} lacks class label {:?}",
                r.id, task.name
            ))),
        })
        .collect()
}

pub fn eval(ctx: &Ctx) -> Result<()> {
    let registry = ctx.load_registry()?;
    let records = ctx.load_records(&registry)?;
    let emb = ctx.load_embeddings(&ctx.cfg.embeddings_path())?;
    let dense_map = emb.to_f64_map();
    let ecfg = &ctx.cfg.eval;

    // restrict to records with embeddings, in catalog order
    let records: Vec<ProductRecord> = records
        .into_iter()
        .filter(|r| dense_map.contains_key(&r.id))
        .collect();
    let tfidf = build_tfidf(&records, ecfg.tfidf_dim, ecfg.min_df)?;
    let dense: Vec<Vec<f64>> = records.iter().map(|r| dense_map[&r.id].clone()).collect();
    let sparse: Vec<Vec<f64>> = records
        .iter()
        .map(|r| tfidf_vector(&tfidf, &r.tokens).to_dense())
        .collect();

    let folds = kfold_indices(records.len(), ecfg.folds, ctx.seed)?;
    let mut rows = Vec::new();
    for task in registry.tasks.iter().filter(|t| matches!(t.kind, TaskKind::Class(_))) {
        let labels = binary_labels(&records, task)?;
        for (repr_name, x) in [("mrnet", &dense), ("tfidf", &sparse)] {
            for fold in 0..folds.len() {
                let test_idx = &folds[fold];
                let train_idx: Vec<usize> = folds
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != fold)
                    .flat_map(|(_, f)| f.iter().copied())
                    .collect();
                let xt: Vec<Vec<f64>> = train_idx.iter().map(|&i| x[i].clone()).collect();
                let yt: Vec<bool> = train_idx.iter().map(|&i| labels[i]).collect();
                let xs: Vec<Vec<f64>> = test_idx.iter().map(|&i| x[i].clone()).collect();
                let ys: Vec<bool> = test_idx.iter().map(|&i| labels[i]).collect();
                if ys.iter().all(|&v| v) || ys.iter().all(|&v| !v) {
                    continue;
                }

                let lr = train_logreg(&xt, &yt, &ecfg.logreg)?;
                let lr_scores: Vec<f64> = xs.iter().map(|v| lr.decision(v)).collect();
                rows.push(EvalRow {
                    task: task.name.clone(),
                    representation: repr_name.to_string(),
                    classifier: "logreg".to_string(),
                    fold,
                    metric: "auc".to_string(),
                    value: auc(&lr_scores, &ys)?,
                });

                let y_rf: Vec<usize> = yt.iter().map(|&v| v as usize).collect();
                let mut fcfg = ecfg.forest.clone();
                fcfg.seed = ctx.seed.wrapping_add(fold as u64);
                let rf = train_rf(&xt, &y_rf, &fcfg)?;
                let rf_scores: Vec<f64> = xs
                    .iter()
                    .map(|v| rf.score(v))
                    .collect::<Result<Vec<f64>>>()?;
                rows.push(EvalRow {
                    task: task.name.clone(),
                    representation: repr_name.to_string(),
                    classifier: "rf".to_string(),
                    fold,
                    metric: "auc".to_string(),
                    value: auc(&rf_scores, &ys)?,
                });
            }
        }
    }

    let path = ctx.cfg.eval_report_path();
    let mut csv = Vec::new();
    write_eval_csv(&mut csv, &rows)?;
    write_atomic(&path, &csv)?;
    ctx.sidecar(&path, "eval")?;

    // summary: mean AUC per (task, representation, classifier), with the
    // delta against the tfidf+logreg baseline of the same task
    let mut means: BTreeMap<(String, String, String), (f64, usize)> = BTreeMap::new();
    for r in &rows {
        let e = means
            .entry((r.task.clone(), r.representation.clone(), r.classifier.clone()))
            .or_insert((0.0, 0));
        e.0 += r.value;
        e.1 += 1;
    }
    let mean = |k: &(String, String, String)| means.get(k).map(|(s, n)| s / *n as f64);
    if !ctx.quiet {
        println!("task representation classifier mean_auc delta_vs_baseline");
        for ((task, repr, clf), (sum, n)) in &means {
            let m = sum / *n as f64;
            let base = mean(&(task.clone(), "tfidf".to_string(), "logreg".to_string()))
                .unwrap_or(f64::NAN);
            println!("{task} {repr} {clf} {m:.4} {:+.4}", m - base);
        }
    }
    ctx.say(format!("wrote {} rows to {}", rows.len(), path.display()));
    Ok(())
}

pub fn unseen_split_cmd(ctx: &Ctx) -> Result<()> {
    let registry = ctx.load_registry()?;
    let records = ctx.load_records(&registry)?;
    let ecfg = &ctx.cfg.eval;
    let (train, test) = unseen_split(&records, ecfg.train_fraction, ecfg.t_h, ctx.seed)?;
    let train_path = ctx.cfg.train_split_path();
    write_atomic(&train_path, catalog_to_string(&train)?.as_bytes())?;
    ctx.sidecar(&train_path, "unseen-split")?;
    let test_path = ctx.cfg.test_split_path();
    write_atomic(&test_path, catalog_to_string(&test)?.as_bytes())?;
    ctx.sidecar(&test_path, "unseen-split")?;
    ctx.say(format!(
        "split {} records into {} train / {} unseen test (t_h = {})",
        records.len(),
        train.len(),
        test.len(),
        ecfg.t_h
    ));
    Ok(())
}

pub fn interpret(ctx: &Ctx, task_name: Option<&str>) -> Result<()> {
    let registry = ctx.load_registry()?;
    let records = ctx.load_records(&registry)?;
    let emb = ctx.load_embeddings(&ctx.cfg.embeddings_path())?;
    let dense_map = emb.to_f64_map();
    let records: Vec<ProductRecord> = records
        .into_iter()
        .filter(|r| dense_map.contains_key(&r.id))
        .collect();
    let x: Vec<Vec<f64>> = records.iter().map(|r| dense_map[&r.id].clone()).collect();

    let class_tasks: Vec<&TaskSpec> = registry
        .tasks
        .iter()
        .filter(|t| matches!(t.kind, TaskKind::Class(_)))
        .collect();
    let task = match task_name {
        Some(name) => *class_tasks
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::config(format!("no class task named {name:?}")))?,
        None => *class_tasks
            .first()
            .ok_or_else(|| Error::data("no class tasks in the registry"))?,
    };

    let mut fcfg = ctx.cfg.eval.forest.clone();
    fcfg.seed = ctx.seed;
    let stable_of = |t: &TaskSpec| -> Result<Vec<usize>> {
        let y: Vec<usize> = binary_labels(&records, t)?
            .into_iter()
            .map(|v| v as usize)
            .collect();
        importance_overlap(&x, &y, ctx.cfg.eval.runs, &fcfg)
    };
    let stable = stable_of(task)?;
    let path = ctx.cfg.stable_features_path();
    let body: String = stable.iter().map(|f| format!("{f}\n")).collect();
    write_atomic(&path, body.as_bytes())?;
    ctx.sidecar(&path, "interpret")?;
    ctx.say(format!(
        "task {:?}: {} of {} features stay in the top {} across {} runs",
        task.name,
        stable.len(),
        emb.dim,
        top_quartile(emb.dim),
        ctx.cfg.eval.runs
    ));
    if let Some(other) = class_tasks.iter().find(|t| t.name != task.name) {
        let other_stable = stable_of(other)?;
        let shared = stable
            .iter()
            .filter(|f| other_stable.contains(f))
            .count();
        ctx.say(format!(
            "stable-set intersection with task {:?}: {} features",
            other.name, shared
        ));
    }
    Ok(())
}

pub fn gradcheck(ctx: &Ctx) -> Result<()> {
    let tolerance = 1e-4;
    let mut spec = ctx.cfg.catalog.clone();
    spec.n_products = 12;
    spec.seed = ctx.seed;
    let mut records = generate_catalog(&spec)?;
    let registry = TaskRegistry::parse(&spec.task_registry_text())?;
    let tfidf = build_tfidf(&records, 8, 1)?;
    attach_decode_targets(&mut records, &tfidf, "decode");
    let mut tasks = registry.tasks.clone();
    tasks.push(TaskSpec {
        name: "decode".to_string(),
        kind: TaskKind::Decode(tfidf.dim),
    });
    let full = TaskRegistry { tasks };

    let vocab = build_vocab(&records, 1)?;
    let dim = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let rows: Vec<f64> = (0..vocab.len() * dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let table = WordEmbeddingTable::from_rows(vocab, dim, rows)?;

    let mut worst: f64 = 0.0;
    for seed in 0..5u64 {
        let mut enc = EncoderConfig::new(dim, 3);
        enc.max_len = 8;
        let mut model = MRNetModel::new(enc, &full, 0.01, ctx.seed.wrapping_add(seed))?;
        model.fit_target_stats(&records);
        let batch: Vec<&ProductRecord> = records.iter().take(6).collect();
        let head_idx: Vec<usize> = (0..model.heads.len()).collect();
        let scales = vec![1.0; head_idx.len()];
        model.batch_backward(&table, &batch, &head_idx, &scales)?;
        let snapshot = model.clone();
        let report = grad_check(
            &mut model.store,
            |s| {
                snapshot
                    .batch_loss(s, &table, &batch, &head_idx, &scales)
                    .unwrap()
            },
            1e-4,
            6,
            seed,
        )?;
        ctx.say(format!(
            "seed {seed}: max relative error {:.3e} at {:?} ({} coordinates)",
            report.max_rel_error, report.worst, report.checked
        ));
        worst = worst.max(report.max_rel_error);
    }
    if worst > tolerance {
        return Err(Error::numeric(format!(
            "gradient check failed: max relative error {worst:.3e} exceeds {tolerance:.0e}"
        )));
    }
    ctx.say(format!("gradient check passed: worst {worst:.3e} <= {tolerance:.0e}"));
    Ok(())
}
