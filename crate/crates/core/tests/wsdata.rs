mod common;

use common::{example_121, feature, mlp, spec_from_seed};
use nfkit::wsdata::{
    apply_action, concat_channels, decode_wsf, encode_wsf, fold_conv, read_wsf, unfold_conv,
    write_wsf, LayerDesc, Manifest, ManifestItem,
};
use nfkit::{GroupTag, InitKind, NeuronPermutation, WeightSpaceFeature, WeightSpaceSpec};
use proptest::prelude::*;

fn bits(f: &WeightSpaceFeature) -> Vec<u64> {
    f.iter().map(|v| v.to_bits()).collect()
}

#[test]
fn zero_feature_shapes() {
    let spec = mlp(&[1, 2, 1]);
    for c in [1, 3] {
        let f = WeightSpaceFeature::zeros(&spec, c).unwrap();
        assert_eq!(f.weight(0).len(), 2 * c);
        assert_eq!(f.weight(1).len(), 2 * c);
        assert_eq!(f.bias(0).len(), 2 * c);
        assert_eq!(f.bias(1).len(), c);
        assert!(f.iter().all(|&v| v == 0.0));
        assert_eq!(f.flatten(), vec![0.0; 7 * c]);
    }
}

#[test]
fn seeded_init_is_reproducible() {
    let spec = mlp(&[1, 2, 1]);
    let a = WeightSpaceFeature::new(&spec, 1, InitKind::UniformFanIn { seed: 7 }).unwrap();
    let b = WeightSpaceFeature::new(&spec, 1, InitKind::UniformFanIn { seed: 7 }).unwrap();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn hidden_swap_relabels_entries() {
    let u = example_121();
    let perm = NeuronPermutation::new(vec![vec![0], vec![1, 0], vec![0]], GroupTag::Np).unwrap();
    let v = apply_action(&perm, &u).unwrap();
    assert_eq!(v.weight(0), &[2.0, 1.0]);
    assert_eq!(v.bias(0), &[6.0, 5.0]);
    assert_eq!(v.weight(1), &[4.0, 3.0]);
    assert_eq!(v.bias(1), &[7.0]);
}

#[test]
fn canonical_flatten_order() {
    assert_eq!(
        example_121().flatten(),
        vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]
    );
}

#[test]
fn random_permutations() {
    let ones = mlp(&[1, 1, 1, 1]);
    assert!(NeuronPermutation::random(&ones, GroupTag::Np, 3).is_identity());
    let spec = mlp(&[3, 4, 2]);
    let p = NeuronPermutation::random(&spec, GroupTag::Hnp, 11);
    assert_eq!(p.sigmas()[0], vec![0, 1, 2]);
    assert_eq!(p.sigmas()[2], vec![0, 1]);
    assert_eq!(p, NeuronPermutation::random(&spec, GroupTag::Hnp, 11));
}

#[test]
fn hnp_rejects_boundary_moves() {
    let spec = mlp(&[2, 2, 1]);
    let bad = NeuronPermutation::new(vec![vec![1, 0], vec![0, 1], vec![0]], GroupTag::Hnp);
    if let Ok(p) = bad {
        assert!(p.apply(&feature(&spec, 1, 0)).is_err());
    }
}

#[test]
fn conv_weight_layout() {
    let spec =
        WeightSpaceSpec::new(vec![LayerDesc::conv1d(2, 3, 5), LayerDesc::fc(1, 2)], true).unwrap();
    let f = WeightSpaceFeature::zeros(&spec, 1).unwrap();
    assert_eq!(f.weight(0).len(), 2 * 3 * 5);
    let folded = fold_conv(&f);
    assert_eq!(folded.weight_channels(0), 5);
    assert_eq!(folded.spec().layers()[0], LayerDesc::fc(2, 3));
}

#[test]
fn concat_zero_with_feature() {
    let spec = mlp(&[2, 3, 1]);
    let f = feature(&spec, 1, 4);
    let z = WeightSpaceFeature::zeros(&spec, 1).unwrap();
    let c = concat_channels(&z, &f).unwrap();
    assert_eq!(c.channels(), 2);
    assert_eq!(bits(&c.slice_channels(1, 1).unwrap()), bits(&f));
    assert!(c.slice_channels(0, 1).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn wsf_rejects_corruption() {
    let f = feature(&mlp(&[2, 3, 1]), 2, 1);
    let bytes = encode_wsf(&f);
    assert!(decode_wsf(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(decode_wsf(&bad).is_err());
    let mut nan = f.clone();
    nan.weight_mut(0)[0] = f64::NAN;
    assert!(decode_wsf(&encode_wsf(&nan)).is_err());
}

#[test]
fn file_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let f = feature(&spec_from_seed(5), 3, 2);
    let path = dir.path().join("a.wsf");
    write_wsf(&path, &f).unwrap();
    assert_eq!(bits(&read_wsf(&path).unwrap()), bits(&f));

    let manifest = Manifest {
        items: vec![ManifestItem {
            wsf_path: "a.wsf".into(),
            label: Some(1),
            target: None,
            edit_target_path: None,
            split: Some("test".into()),
        }],
        generator_config: serde_json::json!({"seed": 3}),
    };
    manifest.save(dir.path()).unwrap();
    let back = Manifest::load(dir.path()).unwrap();
    assert_eq!(back, manifest);
    assert_eq!(back.split("test").len(), 1);
    assert!(back.split("train").is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn action_inverse_roundtrip(spec_seed in any::<u64>(), seed in any::<u64>(), c in 1usize..4, hnp in any::<bool>()) {
        let spec = spec_from_seed(spec_seed);
        let group = if hnp { GroupTag::Hnp } else { GroupTag::Np };
        let u = feature(&spec, c, seed);
        let p = NeuronPermutation::random(&spec, group, seed ^ 1);
        let back = apply_action(&p, &apply_action(&p.inverse(), &u).unwrap()).unwrap();
        prop_assert_eq!(bits(&back), bits(&u));
    }

    #[test]
    fn action_is_a_group_action(spec_seed in any::<u64>(), seed in any::<u64>()) {
        let spec = spec_from_seed(spec_seed);
        let u = feature(&spec, 2, seed);
        let a = NeuronPermutation::random(&spec, GroupTag::Np, seed ^ 2);
        let b = NeuronPermutation::random(&spec, GroupTag::Np, seed ^ 3);
        let ab = a.compose(&b).unwrap();
        let lhs = ab.apply(&u).unwrap();
        let rhs = a.apply(&b.apply(&u).unwrap()).unwrap();
        prop_assert_eq!(bits(&lhs), bits(&rhs));
    }

    #[test]
    fn flatten_roundtrip(spec_seed in any::<u64>(), seed in any::<u64>(), c in 1usize..4) {
        let spec = spec_from_seed(spec_seed);
        let u = feature(&spec, c, seed);
        let flat = u.flatten();
        prop_assert_eq!(flat.len(), c * spec.dim());
        let back = WeightSpaceFeature::unflatten(&spec, c, &flat).unwrap();
        prop_assert_eq!(bits(&back), bits(&u));
    }

    #[test]
    fn wsf_roundtrip_is_bit_exact(spec_seed in any::<u64>(), seed in any::<u64>(), c in 1usize..4) {
        let u = feature(&spec_from_seed(spec_seed), c, seed);
        prop_assert_eq!(bits(&decode_wsf(&encode_wsf(&u)).unwrap()), bits(&u));
    }

    #[test]
    fn fold_commutes_with_action(spec_seed in any::<u64>(), seed in any::<u64>()) {
        let spec = spec_from_seed(spec_seed);
        let u = feature(&spec, 2, seed);
        let p = NeuronPermutation::random(&spec, GroupTag::Np, seed ^ 5);
        let folded = fold_conv(&u);
        prop_assert_eq!(bits(&unfold_conv(&folded, &spec).unwrap()), bits(&u));
        let a = fold_conv(&p.apply(&u).unwrap()).unfold();
        let b = folded.apply(&p).unwrap().unfold();
        prop_assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn action_commutes_with_concat(spec_seed in any::<u64>(), seed in any::<u64>()) {
        let spec = spec_from_seed(spec_seed);
        let (a, b) = (feature(&spec, 1, seed), feature(&spec, 2, seed ^ 9));
        let p = NeuronPermutation::random(&spec, GroupTag::Np, seed ^ 7);
        let lhs = p.apply(&concat_channels(&a, &b).unwrap()).unwrap();
        let rhs = concat_channels(&p.apply(&a).unwrap(), &p.apply(&b).unwrap()).unwrap();
        prop_assert_eq!(bits(&lhs), bits(&rhs));
    }
}
