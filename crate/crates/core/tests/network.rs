//! Layer inventory, feature geometry and forward-pass properties.

use std::path::PathBuf;

use i2gfp::network::{Ablation, Architecture, ModelConfig, Network, NetworkInput, NetworkParams, Weights};
use i2gfp::toy::toy_sample;

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(format!("{name}.txt"))
}

fn manifest_text(cfg: &ModelConfig) -> String {
    Architecture::new(cfg)
        .unwrap()
        .shape_manifest()
        .into_iter()
        .map(|(path, shape)| {
            let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
            format!("{path} {}\n", dims.join("x"))
        })
        .collect()
}

/// Frozen parameter inventories; regenerate with `I2GFP_BLESS=1`.
#[test]
fn shape_manifests_match_golden_files() {
    for ablation in [Ablation::Base, Ablation::BaseIc, Ablation::I2gfp] {
        let cfg = ModelConfig::desk(64).with_ablation(ablation);
        let name = format!("desk64_{}", serde_json::to_value(ablation).unwrap().as_str().unwrap());
        let text = manifest_text(&cfg);
        let path = golden_path(&name);
        if std::env::var_os("I2GFP_BLESS").is_some() {
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            std::fs::write(&path, &text).unwrap();
        }
        let golden = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, golden, "{name} differs from {}", path.display());
    }
}

#[test]
fn full_scale_inventory_has_the_expected_size() {
    let arch = Architecture::new(&ModelConfig::full_scale()).unwrap();
    let encoder: usize = arch
        .convs
        .iter()
        .filter(|c| c.path.starts_with("encoder."))
        .map(|c| c.geom.in_ch * c.geom.out_ch * 9 + c.geom.out_ch)
        .sum();
    // VGG-16 convolution parameters with a 4-channel first layer
    assert_eq!(encoder, 14_714_688 + 64 * 9);
}

#[test]
fn ablations_differ_only_where_expected() {
    let names = |a: Ablation| -> Vec<String> {
        Architecture::new(&ModelConfig::desk(64).with_ablation(a))
            .unwrap()
            .convs
            .into_iter()
            .map(|c| c.path)
            .collect()
    };
    let (base, ic, full) = (names(Ablation::Base), names(Ablation::BaseIc), names(Ablation::I2gfp));
    assert!(base.iter().all(|n| !n.contains("shrink") && !n.starts_with("gfp.")));
    assert_eq!(ic.iter().filter(|n| n.contains("shrink")).count(), 4);
    assert_eq!(full.iter().filter(|n| n.starts_with("gfp.")).count(), 10);
    assert!(ic.iter().all(|n| full.contains(n)));
}

#[test]
fn prediction_is_a_matte_of_the_input_size() {
    for ablation in [Ablation::Base, Ablation::BaseIc, Ablation::I2gfp] {
        let cfg = ModelConfig::desk(32).with_ablation(ablation);
        let params = NetworkParams::init(&cfg).unwrap();
        let net = Network::new(&cfg).unwrap();
        let weights = Weights::from_params(&params).unwrap();
        let s = toy_sample(32, 1, 2);
        let input = NetworkInput::new(&s.image, &s.trimap).unwrap();
        let a = net.predict(&weights, &input).unwrap();
        assert_eq!(a.dims(), (32, 32));
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let b = net.predict(&weights, &input).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn wrong_input_size_is_rejected() {
    let cfg = ModelConfig::desk(32);
    let params = NetworkParams::init(&cfg).unwrap();
    let net = Network::new(&cfg).unwrap();
    let s = toy_sample(36, 1, 2);
    let err = net
        .run(&Weights::from_params(&params).unwrap(), &NetworkInput::new(&s.image, &s.trimap).unwrap())
        .err()
        .unwrap();
    assert!(err.is_config());
}

#[test]
fn parameter_init_is_seeded() {
    let cfg = ModelConfig::desk(32);
    assert_eq!(NetworkParams::init(&cfg).unwrap(), NetworkParams::init(&cfg).unwrap());
    let other = ModelConfig { seed: 1, ..cfg.clone() };
    assert_ne!(NetworkParams::init(&cfg).unwrap(), NetworkParams::init(&other).unwrap());
}

#[test]
fn params_round_trip_through_an_archive() {
    let dir = tempfile::tempdir().unwrap();
    let params = NetworkParams::init(&ModelConfig::desk(32)).unwrap();
    let path = dir.path().join("p.params");
    params.save(&path).unwrap();
    assert_eq!(NetworkParams::load(&path).unwrap(), params);
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert!(NetworkParams::load(&path).is_err());
}
