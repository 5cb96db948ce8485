mod common;

use common::{example_121, feature, mlp, spec_from_seed};
use nfkit::nflayers::{
    hnp_forward, invariant_pool, invariant_pool_hnp, invariant_pool_np, io_encode, np_forward,
    pointwise_forward, Checkpoint, HeadConfig, IoEncodingConfig, PoolKind,
};
use nfkit::{
    EquivariantLayer, GroupTag, LayerFamily, NeuronPermutation, Nfn, NfnConfig, NfnOutput,
    TaskHead, WeightSpaceFeature,
};
use proptest::prelude::*;

const FAMILIES: [LayerFamily; 3] = [LayerFamily::Np, LayerFamily::Hnp, LayerFamily::Pointwise];

fn hidden_perm(spec: &nfkit::WeightSpaceSpec, seed: u64) -> NeuronPermutation {
    NeuronPermutation::random(spec, GroupTag::Hnp, seed)
}

/// `max |layer(σU) − σ·layer(U)|`.
fn raw_violation(
    layer: &EquivariantLayer,
    u: &WeightSpaceFeature,
    perm: &NeuronPermutation,
) -> f64 {
    let lhs = layer.forward(&perm.apply(u).unwrap()).unwrap();
    let rhs = perm.apply(&layer.forward(u).unwrap()).unwrap();
    lhs.max_abs_diff(&rhs)
}

fn only_block(name: &str) -> EquivariantLayer {
    let mut layer = EquivariantLayer::zeros(&mlp(&[1, 2, 1]), LayerFamily::Np, 1, 1).unwrap();
    layer.set_block(name, &[1.0]).unwrap();
    layer
}

#[test]
fn identity_and_zero_layers() {
    for seed in 0..6 {
        let spec = spec_from_seed(seed);
        let u = feature(&spec, 2, seed);
        for fam in FAMILIES {
            let id = EquivariantLayer::identity(&spec, fam, 2).unwrap();
            assert_eq!(
                id.forward(&u).unwrap().flatten(),
                u.flatten(),
                "{fam:?} on {seed}"
            );
            let zero = EquivariantLayer::zeros(&spec, fam, 2, 3).unwrap();
            assert!(zero.forward(&u).unwrap().iter().all(|&v| v == 0.0));
        }
    }
}

#[test]
fn mean_broadcast_terms_by_hand() {
    let u = example_121();
    for name in ["a_theta[1,1]", "b_theta[1,1]"] {
        let y = np_forward(&only_block(name), &u).unwrap();
        assert_eq!(y.weight(0), &[1.5, 1.5], "{name}");
        assert!(y
            .weight(1)
            .iter()
            .chain(y.bias(0))
            .chain(y.bias(1))
            .all(|&v| v == 0.0));
    }
}

#[test]
fn subset_embeddings_are_exact() {
    let spec = mlp(&[3, 4, 2, 2]);
    let pw = EquivariantLayer::init(&spec, LayerFamily::Pointwise, 2, 3, 1).unwrap();
    let np = EquivariantLayer::init(&spec, LayerFamily::Np, 2, 3, 2).unwrap();
    let pw_np = pw.embed_into(LayerFamily::Np).unwrap();
    let np_hnp = np.embed_into(LayerFamily::Hnp).unwrap();
    for s in 0..10 {
        let u = feature(&spec, 2, s);
        assert!(
            pointwise_forward(&pw, &u)
                .unwrap()
                .max_abs_diff(&np_forward(&pw_np, &u).unwrap())
                <= 1e-12
        );
        assert!(
            np_forward(&np, &u)
                .unwrap()
                .max_abs_diff(&hnp_forward(&np_hnp, &u).unwrap())
                <= 1e-12
        );
    }
}

#[test]
fn hnp_layer_breaks_boundary_symmetry() {
    let spec = mlp(&[2, 3, 1]);
    let layer = EquivariantLayer::init(&spec, LayerFamily::Hnp, 1, 1, 4).unwrap();
    let u = feature(&spec, 1, 8);
    let column_swap =
        NeuronPermutation::new(vec![vec![1, 0], vec![0, 1, 2], vec![0]], GroupTag::Np).unwrap();
    assert!(raw_violation(&layer, &u, &column_swap) > 1e-6);
    let hidden =
        NeuronPermutation::new(vec![vec![0, 1], vec![2, 0, 1], vec![0]], GroupTag::Hnp).unwrap();
    assert!(raw_violation(&layer, &u, &hidden) <= 1e-12);
}

#[test]
fn adjoint_identity() {
    for seed in 0..8 {
        let spec = spec_from_seed(seed + 100);
        for fam in FAMILIES {
            let layer = EquivariantLayer::init(&spec, fam, 2, 3, seed).unwrap();
            let x = feature(&spec, 2, seed);
            let dy = feature(&spec, 3, seed ^ 1);
            let mut grads = layer.zero_grads();
            let dx = layer.backward(&x, &dy, &mut grads).unwrap();
            let lhs = layer.forward(&x).unwrap().dot(&dy);
            let rhs = x.dot(&dx);
            assert!(
                (lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()),
                "{fam:?}: {lhs} vs {rhs}"
            );
            // The layer is linear in its parameters too.
            let via_params: f64 = layer
                .params()
                .iter()
                .zip(&grads)
                .flat_map(|(p, g)| p.iter().zip(g))
                .map(|(a, b)| a * b)
                .sum();
            assert!((lhs - via_params).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }
    }
}

#[test]
fn pooling_fixtures() {
    let u = example_121();
    assert_eq!(invariant_pool_np(&u), vec![1.5, 3.5, 5.5, 7.0]);
    assert_eq!(
        invariant_pool_hnp(&u),
        vec![1.5, 3.5, 5.5, 7.0, 1.5, 3.5, 7.0]
    );
    let z = WeightSpaceFeature::zeros(&mlp(&[2, 3, 1]), 2).unwrap();
    assert!(invariant_pool_np(&z).iter().all(|&v| v == 0.0));
}

#[test]
fn hnp_pool_sees_input_columns() {
    let spec = mlp(&[2, 3, 1]);
    let u = feature(&spec, 1, 3);
    let swap =
        NeuronPermutation::new(vec![vec![1, 0], vec![0, 1, 2], vec![0]], GroupTag::Np).unwrap();
    let a = invariant_pool_hnp(&u);
    let b = invariant_pool_hnp(&swap.apply(&u).unwrap());
    let gap = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(gap > 1e-6);
}

#[test]
fn io_encoding_of_single_input() {
    let spec = mlp(&[1, 3, 2]);
    let u = feature(&spec, 2, 0);
    let cfg = IoEncodingConfig::default();
    let e = io_encode(&u, &cfg).unwrap();
    assert_eq!(e.channels(), 2 + 13);
    let c = e.channels();
    let first = &e.weight(0)[2..c];
    let mut expect = vec![0.0];
    for _ in 0..6 {
        expect.extend([0.0, 1.0]);
    }
    assert_eq!(first, expect.as_slice());
}

#[test]
fn degenerate_pipeline_is_the_pool() {
    let spec = mlp(&[2, 3, 2]);
    let cfg = NfnConfig {
        head: Some(HeadConfig {
            pool: PoolKind::Np,
            mlp_hidden: vec![],
        }),
        task_head: TaskHead::PooledFeatures,
        ..NfnConfig::equivariant(&spec, LayerFamily::Pointwise, vec![1], 0)
    };
    let nfn = Nfn::new(cfg)
        .unwrap()
        .with_layers(vec![EquivariantLayer::identity(
            &spec,
            LayerFamily::Pointwise,
            1,
        )
        .unwrap()])
        .unwrap();
    let u = feature(&spec, 1, 5);
    let out = nfn.forward(&u).unwrap().into_vector().unwrap();
    assert_eq!(out, invariant_pool(&u, PoolKind::Np));
}

#[test]
fn checkpoint_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = mlp(&[2, 3, 1]);
    let mut cfg = NfnConfig::invariant(
        &spec,
        LayerFamily::Hnp,
        vec![4, 4],
        vec![5],
        TaskHead::ScalarSigmoid,
        3,
    );
    cfg.io_encoding = Some(IoEncodingConfig::default());
    let nfn = Nfn::new(cfg).unwrap();
    let path = dir.path().join("m.nfn");
    nfn.save(&path).unwrap();
    let back = Nfn::load(&path).unwrap();
    let u = feature(&spec, 1, 1);
    assert_eq!(nfn.forward(&u).unwrap(), back.forward(&u).unwrap());
    let bytes = nfn.to_checkpoint().encode();
    assert!(Checkpoint::decode(&bytes[..bytes.len() - 3]).is_err());
}

fn invariant_model(spec: &nfkit::WeightSpaceSpec, fam: LayerFamily, seed: u64) -> Nfn {
    let mut cfg = NfnConfig::invariant(
        spec,
        fam,
        vec![3, 3],
        vec![4],
        TaskHead::ClassLogits { classes: 2 },
        seed,
    );
    cfg.io_encoding = (fam == LayerFamily::Hnp).then(IoEncodingConfig::default);
    Nfn::new(cfg).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn layers_are_equivariant(spec_seed in any::<u64>(), seed in any::<u64>(), fam in 0usize..3, wide in any::<bool>()) {
        let spec = spec_from_seed(spec_seed);
        let fam = FAMILIES[fam];
        let c = if wide { 4 } else { 1 };
        let layer = EquivariantLayer::init(&spec, fam, c, c, seed).unwrap();
        let u = feature(&spec, c, seed ^ 1);
        let perm = NeuronPermutation::random(&spec, fam.group(), seed ^ 2);
        let y = layer.forward(&u).unwrap();
        prop_assert!(raw_violation(&layer, &u, &perm) <= 1e-10 * (1.0 + y.max_abs()));
    }

    #[test]
    fn np_pool_is_exactly_invariant(spec_seed in any::<u64>(), seed in any::<u64>()) {
        let spec = spec_from_seed(spec_seed);
        let u = feature(&spec, 2, seed);
        let p = NeuronPermutation::random(&spec, GroupTag::Np, seed ^ 1);
        prop_assert_eq!(invariant_pool_np(&p.apply(&u).unwrap()), invariant_pool_np(&u));
        let h = hidden_perm(&spec, seed ^ 2);
        prop_assert_eq!(invariant_pool_hnp(&h.apply(&u).unwrap()), invariant_pool_hnp(&u));
    }

    #[test]
    fn io_encoding_commutes_with_hidden_perms(spec_seed in any::<u64>(), seed in any::<u64>()) {
        let spec = spec_from_seed(spec_seed);
        let u = feature(&spec, 1, seed);
        let h = hidden_perm(&spec, seed ^ 3);
        let cfg = IoEncodingConfig::default();
        let lhs = io_encode(&h.apply(&u).unwrap(), &cfg).unwrap();
        let rhs = h.apply(&io_encode(&u, &cfg).unwrap()).unwrap();
        prop_assert_eq!(lhs.flatten(), rhs.flatten());
    }

    #[test]
    fn invariant_networks(spec_seed in any::<u64>(), seed in any::<u64>(), hnp in any::<bool>()) {
        let spec = spec_from_seed(spec_seed);
        let fam = if hnp { LayerFamily::Hnp } else { LayerFamily::Np };
        let nfn = invariant_model(&spec, fam, seed);
        let u = feature(&spec, 1, seed ^ 4);
        let p = NeuronPermutation::random(&spec, fam.group(), seed ^ 5);
        let a = nfn.forward(&u).unwrap().into_vector().unwrap();
        let b = nfn.forward(&p.apply(&u).unwrap()).unwrap().into_vector().unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-8);
        }
    }

    #[test]
    fn equivariant_networks(spec_seed in any::<u64>(), seed in any::<u64>(), fam in 0usize..3) {
        let spec = spec_from_seed(spec_seed);
        let fam = FAMILIES[fam];
        let nfn = Nfn::new(NfnConfig::equivariant(&spec, fam, vec![3, 2], seed)).unwrap();
        let u = feature(&spec, 1, seed ^ 6);
        let p = NeuronPermutation::random(&spec, fam.group(), seed ^ 7);
        let NfnOutput::Feature(a) = nfn.forward(&p.apply(&u).unwrap()).unwrap() else { unreachable!() };
        let NfnOutput::Feature(b) = nfn.forward(&u).unwrap() else { unreachable!() };
        prop_assert!(a.max_abs_diff(&p.apply(&b).unwrap()) <= 1e-8);
    }
}
