use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ssmp_bench::{alignment_problem, concatenated, index_sequences, standard_pair};
use ssmp_core::align::align_narrations;
use ssmp_core::autograd::Graph;
use ssmp_core::decode::{decode, DecodeMode, DecodeOptions};
use ssmp_core::encoder::{encode, init_params, BoundParams, EncoderConfig};
use ssmp_core::metrics::{levenshtein, pairwise_agreement};
use ssmp_core::rng::seeded;
use ssmp_core::trainer::{compute_loss, mask_sequence, predict_graph, LossMode};

fn encoder(c: &mut Criterion) {
    let params = init_params(&EncoderConfig::default()).unwrap();
    let pair = standard_pair(1);
    let movie = pair.movie.to_matrix();
    let trailer = pair.trailer.to_matrix();
    let x = concatenated(&pair);
    c.bench_function("encode_76x32", |b| b.iter(|| encode(&params, black_box(&x)).unwrap()));

    let masked = mask_sequence(&trailer, &params.mask_placeholder, 0.5, &mut seeded(3)).unwrap();
    c.bench_function("ce_forward_backward", |b| {
        b.iter(|| {
            let mut g = Graph::new();
            let bound = BoundParams::bind(&mut g, &params, true);
            let pred = predict_graph(&mut g, &params.config, &bound, &movie, &masked).unwrap();
            let loss = compute_loss(&mut g, &pred, &movie, &pair.truth, &masked, LossMode::Ce).unwrap();
            g.backward(loss).unwrap();
            black_box(bound.grads(&g))
        })
    });
}

fn decoding(c: &mut Criterion) {
    let params = init_params(&EncoderConfig::default()).unwrap();
    let movie = standard_pair(2).movie.to_matrix();
    for mode in [DecodeMode::SelfCorrective, DecodeMode::Greedy] {
        let opts = DecodeOptions {
            mode,
            seed: 0,
            k_max: 64,
        };
        c.bench_function(&format!("decode_{mode}_j12"), |b| {
            b.iter(|| decode(&params, black_box(&movie), 12, &opts).unwrap())
        });
    }
}

fn metrics(c: &mut Criterion) {
    let (a, b) = index_sequences(64);
    c.bench_function("levenshtein_64", |bn| bn.iter(|| levenshtein(black_box(&a), black_box(&b))));
    c.bench_function("agreement_64", |bn| bn.iter(|| pairwise_agreement(black_box(&a), black_box(&b))));

    let problem = alignment_problem(8, 40);
    c.bench_function("align_8x40", |bn| bn.iter(|| align_narrations(black_box(&problem)).unwrap()));
}

criterion_group!(benches, encoder, decoding, metrics);
criterion_main!(benches);
