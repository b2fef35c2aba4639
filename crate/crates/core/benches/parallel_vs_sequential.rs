use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use statt::data::{build_dataset, extract_patches, DatasetConfig, Patch, SceneConfig, Split};
use statt::model::{init_params, ModelConfig};
use statt::parallel::Exec;
use statt::train::{batch_gradient, evaluate};

fn execs() -> Vec<(&'static str, Exec)> {
    vec![
        ("sequential", Exec::Sequential),
        #[cfg(feature = "parallel")]
        ("parallel", Exec::Parallel),
    ]
}

fn patches() -> (Vec<Patch>, Vec<String>) {
    let cfg = DatasetConfig {
        scene: SceneConfig {
            height: 128,
            width: 128,
            ..SceneConfig::default()
        },
        grid: (4, 4),
        ..DatasetConfig::default()
    };
    let ds = build_dataset(&cfg).unwrap();
    let model = ModelConfig::default();
    let mut p = extract_patches(&ds, Split::Train, model.in_size, model.out_size).unwrap();
    p.retain(|p| p.labeled() > 0);
    p.truncate(32);
    (p, cfg.scene.class_names())
}

fn bench(c: &mut Criterion) {
    let model = ModelConfig::default();
    let params = init_params(&model, 0).unwrap();
    let (patches, names) = patches();
    let batch: Vec<&Patch> = patches.iter().collect();

    let mut g = c.benchmark_group("batch_gradient_32");
    g.sample_size(10);
    for (name, exec) in execs() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| batch_gradient(&params, &model, &batch, exec).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("evaluate_32");
    g.sample_size(10);
    for (name, exec) in execs() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| evaluate(&params, &model, &patches, &names, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
