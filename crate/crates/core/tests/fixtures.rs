//! End-to-end checks on the bundled network files.

use std::path::PathBuf;

use xbarmap::config::ToolConfig;
use xbarmap::network::{load_network, weight_reuse, NetworkSpec};
use xbarmap::packing::PackMode;
use xbarmap::sweep::{compare_one_to_one, evaluate_config, optimize, PackerChoice, SweepConfig};

fn fixture(name: &str) -> NetworkSpec {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name);
    load_network(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn config(mode: PackMode) -> SweepConfig {
    ToolConfig::bundled().sweep_config(mode).unwrap()
}

#[test]
fn every_fixture_loads_and_lowers() {
    for name in ["lenet", "resnet9", "resnet18", "resnet18-projection", "resnet50", "bert-layer", "thirteen-items"] {
        let net = fixture(name);
        assert_eq!(net.lower().unwrap().len(), net.layers.len());
    }
}

#[test]
fn first_layer_reuse() {
    let first = |name: &str| weight_reuse(&fixture(name).layers[0]).unwrap();
    assert_eq!(first("resnet50"), 12544);
    assert_eq!(first("resnet18"), 12544);
    assert_eq!(first("resnet9"), 729);
    assert_eq!(first("lenet"), 784);
}

#[test]
fn resnet18_weight_counts() {
    // 17 main-path convolutions plus the biased 512 -> 1000 classifier; the
    // projection variant adds 64·128 + 128·256 + 256·512 shortcut weights.
    assert_eq!(fixture("resnet18").weight_count().unwrap(), 11_507_880);
    assert_eq!(fixture("resnet18-projection").weight_count().unwrap(), 11_679_912);
}

#[test]
fn thirteen_items_through_the_sweep_path() {
    let net = fixture("thirteen-items");
    let g = "512x512".parse().unwrap();
    assert_eq!(evaluate_config(&net, g, &config(PackMode::Dense)).unwrap().bin_count, 2);
    assert_eq!(evaluate_config(&net, g, &config(PackMode::Pipeline)).unwrap().bin_count, 4);
    let one = compare_one_to_one(&net, g, &config(PackMode::Dense)).unwrap();
    assert_eq!(one.bin_count, 13);
    assert_eq!(one.fragments, 13);
}

#[test]
fn tile_larger_than_every_layer_gives_one_fragment_per_layer() {
    let net = fixture("lenet");
    let g = "1024x1024".parse().unwrap();
    let cfg = config(PackMode::Dense);
    let one = compare_one_to_one(&net, g, &cfg).unwrap();
    assert_eq!(one.fragments, net.layers.len());
    assert_eq!(one.bin_count, net.layers.len());
    assert!(evaluate_config(&net, g, &cfg).unwrap().bin_count <= net.layers.len());
}

#[test]
fn resnet18_sweep_invariants() {
    let net = fixture("resnet18");
    let dense = optimize(&net, &config(PackMode::Dense)).unwrap();
    let pipeline = optimize(&net, &config(PackMode::Pipeline)).unwrap();
    assert_eq!(dense.points.len(), 64);

    let best = dense.optimum_point().total_tile_area;
    assert!(dense.points.iter().all(|p| best <= p.total_tile_area));
    for m in &dense.aspect_minima {
        let p = &dense.points[m.point];
        assert_eq!(p.aspect, m.aspect);
        assert!(dense.points.iter().filter(|q| q.aspect == m.aspect).all(|q| p.total_tile_area <= q.total_tile_area));
    }

    for (d, p) in dense.points.iter().zip(&pipeline.points) {
        assert_eq!(d.geometry, p.geometry);
        assert!(d.total_tile_area <= p.total_tile_area, "{}: dense area above pipeline", d.geometry);
        let one = compare_one_to_one(&net, d.geometry, &config(PackMode::Dense)).unwrap();
        assert!(one.bin_count >= p.bin_count);
    }

    // Fewer tiles does not mean less area.
    let witness = dense
        .points
        .iter()
        .any(|a| dense.points.iter().any(|b| a.bin_count < b.bin_count && a.total_tile_area > b.total_tile_area));
    assert!(witness);
}

#[test]
fn exact_refinement_never_worsens_the_optimum() {
    let net = fixture("resnet18");
    let mut cfg = config(PackMode::Dense);
    let greedy = optimize(&net, &cfg).unwrap();
    cfg.packer = PackerChoice::GreedyThenExactAtOptimum;
    let refined = optimize(&net, &cfg).unwrap();
    let check = refined.exact_check.as_ref().expect("refinement recorded");
    assert!(check.exact_bins <= check.greedy_bins);
    assert!(refined.optimum_point().total_tile_area <= greedy.optimum_point().total_tile_area);
}

#[test]
fn sweep_is_deterministic() {
    let net = fixture("resnet50");
    let cfg = config(PackMode::Pipeline);
    let a = xbarmap::report::sweep_json(&optimize(&net, &cfg).unwrap()).unwrap();
    let b = xbarmap::report::sweep_json(&optimize(&net, &cfg).unwrap()).unwrap();
    assert_eq!(a, b);
}
