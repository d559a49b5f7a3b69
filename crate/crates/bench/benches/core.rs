use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use monitomation_core::dtmf::{self, bin_powers, DetectorConfig};
use monitomation_core::mac::crc16_itu;
use monitomation_core::rng::StreamRng;
use monitomation_core::{load_scenario, Engine, Frame};

fn crc(c: &mut Criterion) {
    let data: Vec<u8> = (0..127u8).collect();
    let mut g = c.benchmark_group("crc16");
    g.throughput(Throughput::Bytes(data.len() as u64));
    g.bench_function("127 octets", |b| b.iter(|| crc16_itu(black_box(&data))));
    g.finish();

    let frame = Frame::data(7, 0x1234, 1, 0, vec![0x02, 1, 1, 1]);
    let raw = frame.encode().unwrap();
    c.bench_function("frame decode", |b| {
        b.iter(|| Frame::decode(black_box(&raw)).unwrap())
    });
}

fn goertzel(c: &mut Criterion) {
    let mut rng = StreamRng::new(1, 0);
    let tone = dtmf::synthesize_key('5', 100, 8000, 0.25, 0.01, &mut rng).unwrap();
    let block = &tone.samples[..205];
    c.bench_function("goertzel 8 bins x 205", |b| {
        b.iter(|| bin_powers(black_box(block), 8000))
    });

    let seq = dtmf::synthesize_sequence("*1*1*1#", 100, 60, 8000, 0.25, 0.01, &mut rng).unwrap();
    let cfg = DetectorConfig::for_sample_rate(8000);
    c.bench_function("decode 7 keys", |b| {
        b.iter(|| dtmf::decode_key_sequence(black_box(&seq), 8000, &cfg).unwrap())
    });
}

fn engine(c: &mut Criterion) {
    let text = include_str!("../../../scenarios/full_demo.json");
    let scenario = load_scenario(text).unwrap();
    let mut g = c.benchmark_group("engine");
    g.sample_size(20);
    g.bench_function("full_demo", |b| {
        b.iter_batched(
            || Engine::new(scenario.clone()),
            |e| e.run(),
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

criterion_group!(benches, crc, goertzel, engine);
criterion_main!(benches);
