use criterion::{black_box, criterion_group, criterion_main, Criterion};
use mrnet_core::catalog::{build_tfidf, generate_catalog, tfidf_vector, CatalogSpec, TaskKind, TaskRegistry, TaskSpec};
use mrnet_core::embeddings::WordEmbeddingTable;
use mrnet_core::encoder::EncoderConfig;
use mrnet_core::multitask::MRNetModel;
use mrnet_core::analytics::KnnIndex;
use mrnet_core::catalog::build_vocab;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bench_encode(c: &mut Criterion) {
    let spec = CatalogSpec { n_products: 256, seed: 11, ..Default::default() };
    let records = generate_catalog(&spec).unwrap();
    let vocab = build_vocab(&records, 1).unwrap();
    let dim = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let rows: Vec<f64> = (0..vocab.len() * dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let table = WordEmbeddingTable::from_rows(vocab, dim, rows).unwrap();
    let registry = TaskRegistry {
        tasks: vec![TaskSpec { name: "color".into(), kind: TaskKind::Class(5) }],
    };
    let model = MRNetModel::new(EncoderConfig::new(dim, 16), &registry, 0.01, 17).unwrap();
    c.bench_function("encode_256_titles_d32", |b| {
        b.iter(|| {
            for r in &records {
                black_box(model.encode_record(&table, r).unwrap());
            }
        })
    });
}

fn bench_knn(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let entries: Vec<(String, Vec<f64>)> = (0..5000)
        .map(|i| (format!("p{i:05}"), (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect();
    let index = KnnIndex::new(entries).unwrap();
    let query: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
    c.bench_function("knn_top10_of_5000_d32", |b| {
        b.iter(|| black_box(index.knn(&query, 10).unwrap()))
    });
}

fn bench_tfidf(c: &mut Criterion) {
    let spec = CatalogSpec {
        n_products: 2000,
        noise_tokens: (0..1200).map(|i| format!("sku{i:04}")).collect(),
        noise_rate: 0.9,
        seed: 23,
        ..Default::default()
    };
    let records = generate_catalog(&spec).unwrap();
    let model = build_tfidf(&records, 1000, 1).unwrap();
    c.bench_function("tfidf_vectorize_2000_docs", |b| {
        b.iter(|| {
            for r in &records {
                black_box(tfidf_vector(&model, &r.tokens));
            }
        })
    });
}

criterion_group!(benches, bench_encode, bench_knn, bench_tfidf);
criterion_main!(benches);
