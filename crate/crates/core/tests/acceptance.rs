//! Acceptance criteria, one test each. Every test prints a single
//! `criterion NN PASS|FAIL` line to the real stdout (not captured) and then
//! asserts the same verdict. Tests share a lock so wall-clock limits are not
//! distorted by running side by side.

mod common;

use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use common::{feature, mlp};
use nfkit::nflayers::{invariant_pool_hnp, invariant_pool_np, EncodingMode, IoEncodingConfig};
use nfkit::orbits::{
    check_sharing, compare_rank, count_free_parameters, enumerate_orbits, materialize_layer_matrix,
};
use nfkit::selftest::{run_selftest, Level, SelftestOptions};
use nfkit::siren::{
    gen_dataset, EditTransform, Editor, EditorConfig, GenConfig, GenKind, SirenSpec,
};
use nfkit::train::{
    check_model_gradients, kendall_tau, load_examples, param_matched_width, train_loop, Example,
    FlatMlp, FlatMlpConfig, LossKind, Target, TrainConfig, Trainable, FD_STEP,
};
use nfkit::wsdata::LayerDesc;
use nfkit::{
    EquivariantLayer, GroupTag, LayerFamily, NeuronPermutation, Nfn, NfnConfig, TaskHead,
    WeightSpaceFeature, WeightSpaceSpec,
};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {id:02} {verdict} {name}: {detail}").unwrap();
    out.flush().unwrap();
}

fn finish(id: u32, name: &str, pass: bool, detail: String) {
    report(id, name, pass, &detail);
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn within(start: Instant, limit_secs: u64) -> bool {
    start.elapsed() < Duration::from_secs(limit_secs)
}

fn linf(f: &WeightSpaceFeature) -> f64 {
    f.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Trial `t` of the equivariance sweep: depth cycles through 2..=4, neuron
/// counts through {1,2,3,5}, the leading layer kind through fc/conv1d/conv2d,
/// channel counts through {1,4}.
fn sweep_case(t: usize) -> (WeightSpaceSpec, usize, usize) {
    const NS: [usize; 4] = [1, 2, 3, 5];
    let l = 2 + t % 3;
    let n: Vec<usize> = (0..=l).map(|i| NS[(t + 3 * i + t / 4) % 4]).collect();
    let conv = (t / 3) % 3;
    let conv_layers = if conv == 0 { 0 } else { 1 + t % (l - 1) };
    let layers = (0..l)
        .map(|i| match (i < conv_layers, conv) {
            (true, 1) => LayerDesc::conv1d(n[i + 1], n[i], 3),
            (true, _) => LayerDesc::conv2d(n[i + 1], n[i], 2, 2),
            _ => LayerDesc::fc(n[i + 1], n[i]),
        })
        .collect();
    let spec = WeightSpaceSpec::new(layers, conv_layers > 0).unwrap();
    (spec, [1, 4][t % 2], [1, 4][(t / 2) % 2])
}

#[test]
fn criterion_01_layer_equivariance() {
    let _g = serial();
    let start = Instant::now();
    let (mut worst, mut failures) = (0.0f64, Vec::new());
    let (mut depths, mut counts, mut kinds, mut chans) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for family in [LayerFamily::Np, LayerFamily::Hnp, LayerFamily::Pointwise] {
        for t in 0..50 {
            let (spec, c_in, c_out) = sweep_case(t);
            depths.push(spec.num_layers());
            counts.extend(spec.neuron_counts());
            kinds.extend(spec.layers().iter().map(|l| l.filter.len()));
            chans.extend([c_in, c_out]);
            let seed = 1000 * family as u64 + t as u64;
            let layer = EquivariantLayer::init(&spec, family, c_in, c_out, seed).unwrap();
            let u = feature(&spec, c_in, seed ^ 0xA5);
            let perm = NeuronPermutation::random(&spec, family.group(), seed ^ 0x5A);
            let y = layer.forward(&u).unwrap();
            let lhs = layer.forward(&perm.apply(&u).unwrap()).unwrap();
            let err = lhs.max_abs_diff(&perm.apply(&y).unwrap());
            let bound = 1e-10 * (1.0 + linf(&y));
            worst = worst.max(err / bound);
            if err > bound {
                failures.push(format!("{family:?} trial {t}"));
            }
        }
    }
    let covered = [2, 3, 4].iter().all(|l| depths.contains(l))
        && [1, 2, 3, 5].iter().all(|n| counts.contains(n))
        && [0, 1, 2].iter().all(|k| kinds.contains(k))
        && [1, 4].iter().all(|c| chans.contains(c));
    let fast = within(start, 120);
    finish(
        1,
        "layer equivariance",
        failures.is_empty() && covered && fast,
        format!(
            "150 trials, worst err/bound {worst:.2e}, coverage {covered}, {:.1}s (< 120s), failures {failures:?}",
            start.elapsed().as_secs_f64()
        ),
    )
}

/// Every fc spec with `L` in 2..=4, neuron counts in {1,2,3} and dim <= 64.
fn oracle_specs() -> Vec<WeightSpaceSpec> {
    let mut out = Vec::new();
    for l in 2..=4usize {
        let total = 3usize.pow(l as u32 + 1);
        for code in 0..total {
            let n: Vec<usize> = (0..=l)
                .map(|i| 1 + code / 3usize.pow(i as u32) % 3)
                .collect();
            let spec = mlp(&n);
            if spec.dim() <= 64 {
                out.push(spec);
            }
        }
    }
    out
}

#[test]
fn criterion_02_oracle_certification() {
    let _g = serial();
    let start = Instant::now();
    let specs = oracle_specs();
    let mut worst = 0.0f64;
    for (i, spec) in specs.iter().enumerate() {
        for family in [LayerFamily::Np, LayerFamily::Hnp] {
            let scheme = enumerate_orbits(spec, family.group()).unwrap();
            let layer =
                EquivariantLayer::init(spec, family, 1, 1, i as u64 * 2 + family as u64).unwrap();
            let m = materialize_layer_matrix(&layer, spec).unwrap();
            worst = worst.max(check_sharing(&m, &scheme).unwrap().worst_violation);
        }
    }
    let mut ranks = Vec::new();
    for n in [vec![3, 3, 3], vec![3, 3, 3, 3]] {
        for family in [LayerFamily::Np, LayerFamily::Hnp] {
            let r = compare_rank(&mlp(&n), family.group(), family).unwrap();
            ranks.push((n.clone(), family, r.span_dim_closed_form, r.orbit_count));
        }
    }
    let ranks_ok = ranks.iter().all(|r| r.2 == r.3);
    let fast = within(start, 300);
    finish(
        2,
        "oracle certification",
        worst <= 1e-10 && ranks_ok && fast,
        format!(
            "{} specs, worst sharing violation {worst:.2e} (<= 1e-10); span/orbits {:?}; {:.1}s (< 300s)",
            specs.len(),
            ranks.iter().map(|r| format!("{:?} {:?} {}/{}", r.0, r.1, r.2, r.3)).collect::<Vec<_>>(),
            start.elapsed().as_secs_f64()
        ),
    )
}

#[test]
fn criterion_03_orbit_count_fixtures() {
    let _g = serial();
    let a = count_free_parameters(&enumerate_orbits(&mlp(&[1, 1, 1]), GroupTag::Np).unwrap());
    let b = count_free_parameters(&enumerate_orbits(&mlp(&[1, 2, 1]), GroupTag::Np).unwrap());
    finish(
        3,
        "orbit-count fixtures",
        a == 16 && b == 25,
        format!("(1,1,1) NP -> {a} (expect 16), (1,2,1) NP -> {b} (expect 25)"),
    )
}

#[test]
fn criterion_04_parameter_count_scaling() {
    let _g = serial();
    let mut worst: (f64, String) = (0.0, String::new());
    let mut failing = Vec::new();
    for group in [GroupTag::Np, GroupTag::Hnp] {
        for n0 in [1usize, 5, 10] {
            for nl in [1usize, 5, 10] {
                let counts: Vec<usize> = (2..=6usize)
                    .map(|l| {
                        let mut n = vec![2; l + 1];
                        n[0] = n0;
                        n[l] = nl;
                        count_free_parameters(&enumerate_orbits(&mlp(&n), group).unwrap())
                    })
                    .collect();
                for (k, w) in counts.windows(2).enumerate() {
                    let l = (k + 2) as f64;
                    let s = match group {
                        GroupTag::Np => l,
                        GroupTag::Hnp => l + (n0 + nl) as f64,
                    };
                    let predicted = ((s + 1.0) / s).powi(2);
                    let dev = (w[1] as f64 / w[0] as f64) / predicted - 1.0;
                    let case = format!(
                        "{group} n0={n0} nL={nl} L={}->{}: {}->{}",
                        k + 2,
                        k + 3,
                        w[0],
                        w[1]
                    );
                    if dev.abs() > worst.0 {
                        worst = (dev.abs(), case.clone());
                    }
                    if dev.abs() > 0.25 {
                        failing.push(format!("{case} ({:+.1}%)", 100.0 * dev));
                    }
                }
            }
        }
    }
    finish(
        4,
        "parameter-count scaling",
        failing.is_empty(),
        format!(
            "worst ratio deviation {:.1}% at {} (bound 25%); out of bound: {failing:?}",
            100.0 * worst.0,
            worst.1
        ),
    )
}

#[test]
fn criterion_05_invariance() {
    let _g = serial();
    let mut exact = true;
    for t in 0..50u64 {
        let (spec, _, _) = sweep_case(t as usize);
        let u = feature(&spec, 2, t);
        let np = NeuronPermutation::random(&spec, GroupTag::Np, t ^ 1);
        let hnp = NeuronPermutation::random(&spec, GroupTag::Hnp, t ^ 2);
        exact &= invariant_pool_np(&np.apply(&u).unwrap()) == invariant_pool_np(&u);
        exact &= invariant_pool_hnp(&hnp.apply(&u).unwrap()) == invariant_pool_hnp(&u);
    }
    // Input columns (1,0) and (0,1) summed over hidden units differ, so swapping
    // the two inputs moves the HNP pool.
    let u = WeightSpaceFeature::from_matrices(
        &[
            vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]],
            vec![vec![1.0, 1.0, 1.0]],
        ],
        &[vec![0.0; 3], vec![0.0]],
    )
    .unwrap();
    let swap =
        NeuronPermutation::new(vec![vec![1, 0], vec![0, 1, 2], vec![0]], GroupTag::Np).unwrap();
    let gap = max_diff(
        &invariant_pool_hnp(&u),
        &invariant_pool_hnp(&swap.apply(&u).unwrap()),
    );
    let mut worst_net = 0.0f64;
    let spec = mlp(&[2, 3, 4, 2]);
    // The IO encoding marks input and output positions, so an NP network using
    // it is only hidden-invariant.
    let cases = [
        (LayerFamily::Np, false, GroupTag::Np),
        (LayerFamily::Np, true, GroupTag::Hnp),
        (LayerFamily::Hnp, false, GroupTag::Hnp),
    ];
    for (family, io, group) in cases {
        for t in 0..50u64 {
            let mut cfg = NfnConfig::invariant(
                &spec,
                family,
                vec![4, 4],
                vec![8],
                TaskHead::ClassLogits { classes: 3 },
                t,
            );
            cfg.io_encoding = io.then(IoEncodingConfig::default);
            let nfn = Nfn::new(cfg).unwrap();
            let u = feature(&spec, 1, 100 + t);
            let perm = NeuronPermutation::random(&spec, group, 200 + t);
            let a = nfn.forward(&u).unwrap().into_vector().unwrap();
            let b = nfn
                .forward(&perm.apply(&u).unwrap())
                .unwrap()
                .into_vector()
                .unwrap();
            worst_net = worst_net.max(max_diff(&a, &b));
        }
    }
    finish(
        5,
        "invariance",
        exact && gap > 1e-6 && worst_net <= 1e-8,
        format!("pools exact {exact}; HNP pool NP-swap gap {gap:.3} (> 1e-6); worst network diff {worst_net:.2e} over 150 trials (<= 1e-8)"),
    )
}

fn grad_error<M: Trainable>(model: &M, batch: &[Example], loss: LossKind) -> f64 {
    check_model_gradients(model, batch, loss, FD_STEP)
        .unwrap()
        .max_rel_error
}

#[test]
fn criterion_06_gradient_checks() {
    let _g = serial();
    let start = Instant::now();
    let mut results: Vec<(String, f64)> = Vec::new();
    let fc = mlp(&[2, 3, 2]);
    let conv = sweep_case(3).0;
    assert!(conv.has_conv());
    for spec in [&fc, &conv] {
        let inputs: Vec<WeightSpaceFeature> = (0..2).map(|k| feature(spec, 1, 10 + k)).collect();
        let kind = if spec.has_conv() { "conv" } else { "fc" };
        for family in [LayerFamily::Np, LayerFamily::Hnp, LayerFamily::Pointwise] {
            let nfn = Nfn::new(NfnConfig::equivariant(spec, family, vec![3, 1], 7)).unwrap();
            let batch: Vec<Example> = inputs
                .iter()
                .map(|u| Example::new(u.clone(), Target::Values(u.map(|v| v.sin()).flatten())))
                .collect();
            results.push((
                format!("{family:?} layers {kind}"),
                grad_error(&nfn, &batch, LossKind::Mse),
            ));
        }
        for family in [LayerFamily::Np, LayerFamily::Hnp] {
            let cfg = NfnConfig::invariant(
                spec,
                family,
                vec![3, 2],
                vec![4],
                TaskHead::ClassLogits { classes: 3 },
                8,
            );
            let nfn = Nfn::new(cfg).unwrap();
            let batch: Vec<Example> = inputs
                .iter()
                .zip([0, 2])
                .map(|(u, y)| Example::new(u.clone(), Target::Label(y)))
                .collect();
            results.push((
                format!("{family:?} pool + mlp head {kind}"),
                grad_error(&nfn, &batch, LossKind::CrossEntropy),
            ));
        }
    }
    let inputs: Vec<WeightSpaceFeature> = (0..2).map(|k| feature(&fc, 1, 20 + k)).collect();
    let mut cfg = NfnConfig::invariant(
        &fc,
        LayerFamily::Np,
        vec![3, 2],
        vec![4],
        TaskHead::ScalarSigmoid,
        9,
    );
    cfg.io_encoding = Some(IoEncodingConfig {
        num_bands: 2,
        max_freq: 3.0,
        mode: EncodingMode::Learned,
    });
    let nfn = Nfn::new(cfg).unwrap();
    let batch: Vec<Example> = inputs
        .iter()
        .zip([0.0, 1.0])
        .map(|(u, y)| Example::new(u.clone(), Target::Scalar(y)))
        .collect();
    results.push((
        "learned io encoding".into(),
        grad_error(&nfn, &batch, LossKind::Bce),
    ));
    let flat = FlatMlp::new(FlatMlpConfig {
        spec: fc.clone(),
        in_channels: 1,
        hidden: vec![5, 4],
        task_head: TaskHead::ScalarSigmoid,
        seed: 10,
    })
    .unwrap();
    results.push(("flat mlp".into(), grad_error(&flat, &batch, LossKind::Bce)));
    let siren = SirenSpec {
        hidden: vec![3],
        ..SirenSpec::default()
    };
    let mut ncfg = NfnConfig::equivariant(&siren.weight_space(), LayerFamily::Np, vec![2, 1], 11);
    ncfg.io_encoding = Some(IoEncodingConfig::default());
    let editor = Editor::new(EditorConfig {
        nfn: ncfg,
        siren: siren.clone(),
        resolution: 3,
        gamma_init: 0.5,
    })
    .unwrap();
    let batch: Vec<Example> = (0..2u64)
        .map(|k| {
            let target = (0..9)
                .map(|p| ((p + k as usize) % 3) as f64 - 1.0)
                .collect();
            Example::new(siren.init(30 + k), Target::Values(target))
        })
        .collect();
    results.push((
        "siren editor".into(),
        grad_error(&editor, &batch, LossKind::Mse),
    ));
    let worst = results.iter().fold(0.0f64, |m, r| m.max(r.1));
    let fast = within(start, 180);
    finish(
        6,
        "gradient checks",
        worst <= 1e-6 && fast,
        format!(
            "{} graphs at h=1e-5, worst relative error {worst:.2e} (<= 1e-6), {:.1}s (< 180s): {}",
            results.len(),
            start.elapsed().as_secs_f64(),
            results
                .iter()
                .map(|r| format!("{} {:.1e}", r.0, r.1))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

#[test]
fn criterion_07_subset_embeddings() {
    let _g = serial();
    let mut worst = [0.0f64; 2];
    for (k, (small, big)) in [
        (LayerFamily::Pointwise, LayerFamily::Np),
        (LayerFamily::Np, LayerFamily::Hnp),
    ]
    .into_iter()
    .enumerate()
    {
        for t in 0..10 {
            let (spec, _, _) = sweep_case(t * 5 + k);
            let layer = EquivariantLayer::init(&spec, small, 2, 3, t as u64).unwrap();
            let embedded = layer.embed_into(big).unwrap();
            let u = feature(&spec, 2, 50 + t as u64);
            let d = layer
                .forward(&u)
                .unwrap()
                .max_abs_diff(&embedded.forward(&u).unwrap());
            worst[k] = worst[k].max(d);
        }
    }
    finish(
        7,
        "subset embeddings",
        worst.iter().all(|&w| w <= 1e-12),
        format!(
            "pointwise->NP {:.1e}, NP->HNP {:.1e} over 10 features each (<= 1e-12)",
            worst[0], worst[1]
        ),
    )
}

fn accuracy<M: Trainable>(
    model: &mut M,
    train: &[Example],
    test: &[Example],
    cfg: &TrainConfig,
) -> f64 {
    let report = train_loop(model, train, Some(test), cfg).unwrap();
    report.final_metrics.test.unwrap()["accuracy"]
}

#[test]
fn criterion_08_inr_classification_demo() {
    let _g = serial();
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let siren = SirenSpec {
        hidden: vec![8, 8],
        ..SirenSpec::default()
    };
    let mut gen = GenConfig::new(GenKind::InrClassify, 200, 100, 1);
    gen.siren = siren.clone();
    gen.fit_steps = 200;
    gen.fit_lr = 1e-3;
    gen_dataset(&gen, dir.path()).unwrap();
    let train = load_examples(dir.path(), "train").unwrap();
    let test = load_examples(dir.path(), "test").unwrap();
    let spec = siren.weight_space();
    let (mut nfn_acc, mut mlp_acc) = (Vec::new(), Vec::new());
    for seed in 1..=3u64 {
        let cfg = TrainConfig {
            lr: 1e-4,
            batch_size: 32,
            steps: 5000,
            seed,
            eval_every: 1000,
            loss: LossKind::Bce,
            augment: None,
        };
        let mut ncfg = NfnConfig::invariant(
            &spec,
            LayerFamily::Np,
            vec![16, 16, 16],
            vec![64],
            TaskHead::ScalarSigmoid,
            seed,
        );
        ncfg.io_encoding = Some(IoEncodingConfig::default());
        let mut nfn = Nfn::new(ncfg).unwrap();
        nfn_acc.push(accuracy(&mut nfn, &train, &test, &cfg));
        let h = param_matched_width(spec.dim(), 1, nfn.num_params());
        let mut flat = FlatMlp::new(FlatMlpConfig {
            spec: spec.clone(),
            in_channels: 1,
            hidden: vec![h, h],
            task_head: TaskHead::ScalarSigmoid,
            seed,
        })
        .unwrap();
        let aug = TrainConfig {
            augment: Some(GroupTag::Hnp),
            ..cfg
        };
        mlp_acc.push(accuracy(&mut flat, &train, &test, &aug));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (nfn, base) = (mean(&nfn_acc), mean(&mlp_acc));
    let fast = within(start, 900);
    finish(
        8,
        "INR classification demo",
        nfn >= 0.9 && nfn - base >= 0.10 && fast,
        format!(
            "NP-NFN test accuracy {nfn:.3} {nfn_acc:?}, augmented MLP {base:.3} {mlp_acc:?}, gap {:.1} points (>= 90%, >= 10 points), {:.0}s (< 900s)",
            100.0 * (nfn - base),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn editor_test_mse(
    family: LayerFamily,
    siren: &SirenSpec,
    train: &[Example],
    test: &[Example],
) -> f64 {
    let mut ncfg = NfnConfig::equivariant(&siren.weight_space(), family, vec![32, 32, 32, 1], 1);
    ncfg.io_encoding = Some(IoEncodingConfig::default());
    let mut editor = Editor::new(EditorConfig {
        nfn: ncfg,
        siren: siren.clone(),
        resolution: 16,
        gamma_init: 0.01,
    })
    .unwrap();
    let cfg = TrainConfig {
        lr: 1e-3,
        batch_size: 8,
        steps: 6000,
        seed: 1,
        eval_every: 6000,
        loss: LossKind::Mse,
        augment: None,
    };
    let report = train_loop(&mut editor, train, Some(test), &cfg).unwrap();
    report.final_metrics.test.unwrap()["loss"]
}

#[test]
fn criterion_09_editing_demo() {
    let _g = serial();
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let siren = SirenSpec {
        hidden: vec![64],
        ..SirenSpec::default()
    };
    let mut gen = GenConfig::new(GenKind::Edit, 100, 30, 1);
    gen.siren = siren.clone();
    gen.fit_steps = 1000;
    gen.fit_lr = 1e-3;
    gen.transform = EditTransform::Dilate;
    gen_dataset(&gen, dir.path()).unwrap();
    let train = load_examples(dir.path(), "train").unwrap();
    let test = load_examples(dir.path(), "test").unwrap();
    let np = editor_test_mse(LayerFamily::Np, &siren, &train, &test);
    let pt = editor_test_mse(LayerFamily::Pointwise, &siren, &train, &test);
    let fast = within(start, 1200);
    finish(
        9,
        "editing demo",
        np <= 0.5 * pt && fast,
        format!(
            "dilation test MSE: NP editor {np:.4}, pointwise editor {pt:.4}, ratio {:.3} (<= 0.5), {:.0}s (< 1200s)",
            np / pt,
            start.elapsed().as_secs_f64()
        ),
    )
}

#[test]
fn criterion_10_kendall_fixtures() {
    let _g = serial();
    let got = [
        kendall_tau(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(),
        kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(),
        kendall_tau(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap(),
    ];
    let want = [1.0, -1.0, 2.0 / 6f64.sqrt()];
    let worst = max_diff(&got, &want);
    finish(
        10,
        "Kendall tau fixtures",
        worst <= 1e-12,
        format!("{got:?} vs {want:?}, max |diff| {worst:.1e} (<= 1e-12)"),
    )
}

fn fixed_training_json() -> String {
    let spec = mlp(&[2, 3, 1]);
    let data: Vec<Example> = (0..12u64)
        .map(|k| {
            let u = feature(&spec, 1, 300 + k);
            let label = usize::from(u.weight(0)[0] > 0.0);
            Example::new(u, Target::Label(label))
        })
        .collect();
    let mut nfn = Nfn::new(NfnConfig::invariant(
        &spec,
        LayerFamily::Hnp,
        vec![4],
        vec![8],
        TaskHead::ClassLogits { classes: 2 },
        3,
    ))
    .unwrap();
    let cfg = TrainConfig {
        lr: 1e-2,
        batch_size: 4,
        steps: 50,
        seed: 5,
        eval_every: 10,
        loss: LossKind::CrossEntropy,
        augment: Some(GroupTag::Hnp),
    };
    let report = train_loop(&mut nfn, &data[..8], Some(&data[8..]), &cfg).unwrap();
    report.to_jsonl() + &serde_json::to_string(&report.final_metrics).unwrap()
}

#[test]
fn criterion_11_determinism() {
    let _g = serial();
    let opts = SelftestOptions::new(Level::Quick);
    let a = run_selftest(&opts).unwrap().to_json();
    let b = run_selftest(&opts).unwrap().to_json();
    let (c, d) = (fixed_training_json(), fixed_training_json());
    finish(
        11,
        "determinism",
        a == b && c == d,
        format!(
            "selftest quick JSON identical: {} ({} bytes); training metrics JSON identical: {} ({} bytes)",
            a == b,
            a.len(),
            c == d,
            c.len()
        ),
    )
}
