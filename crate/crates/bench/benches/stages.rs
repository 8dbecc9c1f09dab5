use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::Point3;

use toothfuse::extraction::{evaluate_grid, marching_cubes, reconstruct, FnField, ScalarGrid};
use toothfuse::features::compute_fpfh;
use toothfuse::fusion::{isolate_root, FusionParams};
use toothfuse::geometry::{estimate_normals, sample_surface, voxel_downsample, MeshIndex, Transformable};
use toothfuse::implicit::{input_rows, loss_and_gradients, LatentCode, NormalizationInfo, SdfSample};
use toothfuse::metrics::one_sided_distances;
use toothfuse::pipeline::{register, PipelineConfig};
use toothfuse::TriMesh;

fn geometry(c: &mut Criterion) {
    let t = toothfuse_bench::tooth(0);
    let index = MeshIndex::new(&t.ground_truth).unwrap();
    let queries = sample_surface(&t.crown, 1000, 1).unwrap();
    c.bench_function("closest_point_1k", |b| {
        b.iter(|| {
            for q in &queries.points {
                black_box(index.closest_point(q));
            }
        })
    });
    c.bench_function("one_sided_distances_10k", |b| {
        b.iter(|| one_sided_distances(black_box(&t.crown), &t.ground_truth, 10_000, 0).unwrap())
    });
    let aligned: TriMesh = t.degraded_full.transformed(&t.true_transform);
    c.bench_function("isolate_root", |b| {
        b.iter(|| isolate_root(black_box(&aligned), &t.crown, &FusionParams::default()).unwrap())
    });
}

fn registration(c: &mut Criterion) {
    let t = toothfuse_bench::tooth(1);
    let cloud = voxel_downsample(&t.crown.to_point_cloud(), 0.5);
    let with_normals = estimate_normals(&cloud, 30).unwrap();
    c.bench_function("fpfh_voxel_0.5", |b| b.iter(|| compute_fpfh(black_box(&with_normals), 2.5).unwrap()));
    let mut group = c.benchmark_group("registration");
    group.sample_size(10);
    let cfg = PipelineConfig::default();
    group.bench_function("register_multiscale", |b| {
        b.iter(|| register(black_box(&t.degraded_full), &t.crown, &cfg).unwrap())
    });
    group.finish();
}

fn implicit(c: &mut Criterion) {
    let net = toothfuse_bench::decoder();
    let z = LatentCode::zeros(net.shape().latent_dim);
    let positions: Vec<[f64; 3]> = (0..1024).map(|i| [i as f64 / 1024.0 - 0.5, 0.1, -0.2]).collect();
    let rows = input_rows(&z.0, &positions);
    c.bench_function("forward_1024", |b| b.iter(|| net.forward(black_box(&rows), 1024)));
    let samples: Vec<SdfSample> = positions
        .iter()
        .map(|p| SdfSample {
            position: Point3::new(p[0], p[1], p[2]),
            sdf: 0.01,
        })
        .collect();
    c.bench_function("loss_and_gradients_1024", |b| {
        b.iter(|| loss_and_gradients(&net, &z.0, black_box(&samples), 0.1, 1e-4, true))
    });

    let mut group = c.benchmark_group("extraction");
    group.sample_size(10);
    group.bench_function("reconstruct_96", |b| {
        b.iter(|| reconstruct(&net, &z, &NormalizationInfo::identity(), 96).unwrap())
    });
    let sphere = FnField(|p: &Point3<f64>| p.coords.norm() - 0.5);
    let grid = evaluate_grid(&sphere, [128; 3], ScalarGrid::default_bounds()).unwrap();
    group.bench_function("marching_cubes_sphere_128", |b| b.iter(|| marching_cubes(black_box(&grid), 0.0)));
    group.finish();
}

criterion_group!(benches, geometry, registration, implicit);
criterion_main!(benches);
