use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use quadtomo::channels::{apply_en_wigner, apply_loss_wigner};
use quadtomo::DetectorModel;
use quadtomo_bench::test_grid;

fn loss_and_noise(c: &mut Criterion) {
    let mut group = c.benchmark_group("channels");
    group.sample_size(20);
    let detector = DetectorModel::from_snr(1.0, 10.0).unwrap();
    for n in [64, 128, 256] {
        let grid = test_grid(n);
        group.bench_with_input(BenchmarkId::new("apply_loss_wigner", n), &grid, |b, g| {
            b.iter(|| apply_loss_wigner(g, 0.6).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("apply_en_wigner", n), &grid, |b, g| {
            b.iter(|| apply_en_wigner(g, &detector).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, loss_and_noise);
criterion_main!(benches);
