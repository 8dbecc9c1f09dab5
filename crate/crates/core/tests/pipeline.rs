use nalgebra::Point3;
use toothfuse::fusion::{isolate_root, make_hybrid_proxy};
use toothfuse::geometry::{read_mesh, write_mesh, Transformable};
use toothfuse::pipeline::{register, synth_tooth, PipelineConfig, SyntheticToothSpec};

fn nearest_vertex_distance(p: &Point3<f64>, vertices: &[Point3<f64>]) -> f64 {
    vertices.iter().map(|v| (v - p).norm()).fold(f64::INFINITY, f64::min)
}

#[test]
fn synthetic_tooth_registers_and_fuses() {
    let cfg = PipelineConfig::default();
    let tooth = synth_tooth(&SyntheticToothSpec::from_seed(7, &cfg.synth)).unwrap();
    let (fine, _) = register(&tooth.degraded_full, &tooth.crown, &cfg).unwrap();

    let worst = tooth
        .degraded_full
        .vertices
        .iter()
        .map(|p| (fine.transform.apply_point(p) - tooth.true_transform.apply_point(p)).norm())
        .fold(0.0, f64::max);
    assert!(worst < 0.3, "registered pose is {worst} mm off the true pose");

    let aligned = tooth.degraded_full.transformed(&fine.transform);
    let root = isolate_root(&aligned, &tooth.crown, &cfg.fusion).unwrap();
    assert!(!root.triangles.is_empty());
    assert!(root.vertices.len() < aligned.vertices.len());
    // Point-to-surface distance never exceeds nearest-vertex distance.
    for p in &root.vertices {
        assert!(nearest_vertex_distance(p, &tooth.crown.vertices) > cfg.fusion.tau);
    }

    let proxy = make_hybrid_proxy(&tooth.crown, &root);
    let n = tooth.crown.vertices.len();
    assert_eq!(proxy.vertices.len(), n + root.vertices.len());
    assert_eq!(&proxy.vertices[..n], &tooth.crown.vertices[..]);
    assert_eq!(&proxy.vertices[n..], &root.vertices[..]);
}

#[test]
fn meshes_round_trip_through_files() {
    let cfg = PipelineConfig::default();
    let tooth = synth_tooth(&SyntheticToothSpec::from_seed(2, &cfg.synth)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for name in ["full.ply", "full.obj"] {
        let path = dir.path().join(name);
        write_mesh(&path, &tooth.degraded_full).unwrap();
        let back = read_mesh(&path).unwrap();
        assert_eq!(back.triangles, tooth.degraded_full.triangles, "{name}");
        if name.ends_with(".ply") {
            assert_eq!(back.vertices, tooth.degraded_full.vertices);
        }
    }
}
