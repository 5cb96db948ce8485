//! Built-in property suites: layer equivariance, orbit-oracle certification,
//! pooling invariance, gradient checks, and file-format roundtrips.
//!
//! Reports carry no timings, so the JSON of a run is a pure function of the
//! options.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nflayers::{
    invariant_pool_hnp, invariant_pool_np, Checkpoint, EncodingMode, EquivariantLayer,
    IoEncodingConfig, LayerFamily, Nfn, NfnConfig, TaskHead,
};
use crate::orbits::{
    check_sharing, compare_rank, enumerate_orbits, materialize_layer_matrix, SchemeFile,
    SharingScheme, SHARING_TOL,
};
use crate::siren::{Editor, EditorConfig, SirenSpec};
use crate::train::{
    check_model_gradients, Example, FlatMlp, FlatMlpConfig, LossKind, Target, Trainable, FD_STEP,
};
use crate::wsdata::{
    decode_wsf, encode_wsf, GroupTag, InitKind, LayerDesc, NeuronPermutation, WeightSpaceFeature,
    WeightSpaceSpec,
};

/// Relative tolerance of the layer equivariance check.
pub const EQUIVARIANCE_TOL: f64 = 1e-10;
/// Absolute tolerance of full-network invariance.
pub const INVARIANCE_TOL: f64 = 1e-8;
/// Minimum gap that shows HNP pooling is not NP-invariant.
pub const NON_INVARIANCE_GAP: f64 = 1e-6;
/// Finite-difference gradient tolerance.
pub const GRADIENT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Quick,
    Full,
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quick" => Ok(Level::Quick),
            "full" => Ok(Level::Full),
            other => Err(Error::invalid(format!("unknown selftest level '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelftestOptions {
    pub level: Level,
    pub seed: u64,
    /// Flip the sign of one adjoint term in every tested network, so the
    /// gradient suite must fail.
    #[serde(default)]
    pub inject_fault: bool,
}

impl SelftestOptions {
    pub fn new(level: Level) -> Self {
        SelftestOptions {
            level,
            seed: 0,
            inject_fault: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub checks: usize,
    /// Largest normalized violation seen (error / tolerance; pass iff <= 1).
    pub worst: f64,
    /// First failing case.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<String>,
}

struct Suite {
    name: &'static str,
    checks: usize,
    worst: f64,
    counterexample: Option<String>,
}

impl Suite {
    fn new(name: &'static str) -> Self {
        Suite {
            name,
            checks: 0,
            worst: 0.0,
            counterexample: None,
        }
    }

    /// Records one check with normalized violation `v`.
    fn check(&mut self, v: f64, describe: impl FnOnce() -> String) {
        self.checks += 1;
        let v = if v.is_nan() { f64::INFINITY } else { v };
        self.worst = self.worst.max(v);
        if v > 1.0 && self.counterexample.is_none() {
            self.counterexample = Some(describe());
        }
    }

    fn finish(self) -> SuiteResult {
        SuiteResult {
            name: self.name.to_string(),
            passed: self.counterexample.is_none(),
            checks: self.checks,
            worst: self.worst,
            counterexample: self.counterexample,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub options: SelftestOptions,
    pub suites: Vec<SuiteResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }

    pub fn first_failure(&self) -> Option<&SuiteResult> {
        self.suites.iter().find(|s| !s.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<12} {:>6} {:>8} {:>12}\n",
            "suite", "result", "checks", "worst/tol"
        );
        for s in &self.suites {
            out += &format!(
                "{:<12} {:>6} {:>8} {:>12.3e}\n",
                s.name,
                if s.passed { "pass" } else { "FAIL" },
                s.checks,
                s.worst
            );
        }
        for s in self.suites.iter().filter(|s| !s.passed) {
            out += &format!(
                "{}: {}\n",
                s.name,
                s.counterexample.as_deref().unwrap_or("")
            );
        }
        out
    }
}

pub fn run_selftest(opts: &SelftestOptions) -> Result<SelftestReport> {
    let suites = vec![
        equivariance_suite(opts)?,
        oracle_suite(opts)?,
        pooling_suite(opts)?,
        gradient_suite(opts)?,
        format_suite(opts)?,
    ];
    Ok(SelftestReport {
        options: *opts,
        suites,
    })
}

/// Random spec with `L` in `{2, 3, 4}` and neuron counts drawn from
/// `{1, 2, 3, 5}`. About a third of the specs start with conv1d or conv2d
/// layers followed by a pooled transition to fc layers.
pub fn random_spec(rng: &mut impl Rng) -> WeightSpaceSpec {
    let l = rng.gen_range(2..=4);
    let n: Vec<usize> = (0..=l)
        .map(|_| *[1, 2, 3, 5].choose(rng).unwrap())
        .collect();
    let conv = rng.gen_range(0..3);
    let conv_layers = if conv == 0 { 0 } else { rng.gen_range(1..l) };
    let layers = (0..l)
        .map(|i| {
            if i < conv_layers && conv == 1 {
                LayerDesc::conv1d(n[i + 1], n[i], 3)
            } else if i < conv_layers {
                LayerDesc::conv2d(n[i + 1], n[i], 2, 2)
            } else {
                LayerDesc::fc(n[i + 1], n[i])
            }
        })
        .collect();
    WeightSpaceSpec::new(layers, conv_layers > 0).expect("valid random spec")
}

fn random_feature(spec: &WeightSpaceSpec, channels: usize, seed: u64) -> WeightSpaceFeature {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = WeightSpaceFeature::zeros(spec, channels).expect("valid spec");
    f.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    f
}

fn describe_spec(spec: &WeightSpaceSpec) -> String {
    let filters: Vec<String> = spec
        .layers()
        .iter()
        .map(|l| {
            if l.filter.is_empty() {
                "fc".to_string()
            } else {
                format!("{:?}", l.filter)
            }
        })
        .collect();
    format!(
        "n={:?} layers=[{}]",
        spec.neuron_counts(),
        filters.join(",")
    )
}

fn linf(f: &WeightSpaceFeature) -> f64 {
    f.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `||layer(sigma U) - sigma layer(U)||_inf / (tol (1 + ||layer(U)||_inf))`.
pub fn equivariance_violation(
    layer: &EquivariantLayer,
    u: &WeightSpaceFeature,
    perm: &NeuronPermutation,
) -> Result<f64> {
    let y = layer.forward(u)?;
    let lhs = layer.forward(&perm.apply(u)?)?;
    let rhs = perm.apply(&y)?;
    Ok(lhs.max_abs_diff(&rhs) / (EQUIVARIANCE_TOL * (1.0 + linf(&y))))
}

fn trials(opts: &SelftestOptions, quick: usize, full: usize) -> usize {
    match opts.level {
        Level::Quick => quick,
        Level::Full => full,
    }
}

fn equivariance_suite(opts: &SelftestOptions) -> Result<SuiteResult> {
    let mut suite = Suite::new("equivariance");
    let n = trials(opts, 10, 50);
    for (fi, family) in [LayerFamily::Np, LayerFamily::Hnp, LayerFamily::Pointwise]
        .into_iter()
        .enumerate()
    {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (0xE0 + fi as u64));
        for t in 0..n {
            let spec = random_spec(&mut rng);
            let c_in = *[1, 4].choose(&mut rng).unwrap();
            let c_out = *[1, 4].choose(&mut rng).unwrap();
            let seed: u64 = rng.gen();
            let layer = EquivariantLayer::init(&spec, family, c_in, c_out, seed)?;
            let u = random_feature(&spec, c_in, seed ^ 1);
            let perm = NeuronPermutation::random(&spec, family.group(), seed ^ 2);
            let v = equivariance_violation(&layer, &u, &perm)?;
            suite.check(v, || {
                format!(
                    "{family:?} trial {t}: spec {} c={c_in}->{c_out} seed {seed} sigma {:?}",
                    describe_spec(&spec),
                    perm.sigmas()
                )
            });
        }
        // Embedding a smaller family reproduces its outputs.
        let target = match family {
            LayerFamily::Pointwise => Some(LayerFamily::Np),
            LayerFamily::Np => Some(LayerFamily::Hnp),
            LayerFamily::Hnp => None,
        };
        if let Some(target) = target {
            for t in 0..n.min(10) {
                let spec = random_spec(&mut rng);
                let seed: u64 = rng.gen();
                let layer = EquivariantLayer::init(&spec, family, 2, 3, seed)?;
                let big = layer.embed_into(target)?;
                let u = random_feature(&spec, 2, seed ^ 3);
                let d = layer.forward(&u)?.max_abs_diff(&big.forward(&u)?);
                suite.check(d / 1e-12, || {
                    format!(
                        "{family:?}->{target:?} embedding trial {t}: spec {} seed {seed}",
                        describe_spec(&spec)
                    )
                });
            }
        }
    }
    Ok(suite.finish())
}

/// Fully connected specs `L in {2, 3}`, `n_i in {1, 2, 3}`, with `dim <= 64`.
pub fn small_oracle_specs() -> Vec<WeightSpaceSpec> {
    let mut out = Vec::new();
    for l in 2..=3usize {
        let mut counts = vec![1usize; l + 1];
        loop {
            let spec = WeightSpaceSpec::mlp(&counts).expect("positive");
            if spec.dim() <= 64 {
                out.push(spec);
            }
            let mut i = 0;
            while i <= l && counts[i] == 3 {
                counts[i] = 1;
                i += 1;
            }
            if i > l {
                break;
            }
            counts[i] += 1;
        }
    }
    out
}

fn oracle_suite(opts: &SelftestOptions) -> Result<SuiteResult> {
    let mut suite = Suite::new("oracle");
    let specs = match opts.level {
        Level::Quick => vec![
            WeightSpaceSpec::mlp(&[1, 1, 1])?,
            WeightSpaceSpec::mlp(&[1, 2, 1])?,
            WeightSpaceSpec::mlp(&[2, 3, 2])?,
            WeightSpaceSpec::mlp(&[2, 1, 2, 1])?,
        ],
        Level::Full => small_oracle_specs(),
    };
    for (si, spec) in specs.iter().enumerate() {
        for family in [LayerFamily::Np, LayerFamily::Hnp, LayerFamily::Pointwise] {
            let scheme = enumerate_orbits(spec, family.group())?;
            let seed = opts.seed.wrapping_add(si as u64 * 31 + family as u64);
            let layer = EquivariantLayer::init(spec, family, 1, 1, seed)?;
            let m = materialize_layer_matrix(&layer, spec)?;
            let check = check_sharing(&m, &scheme)?;
            suite.check(check.worst_violation / SHARING_TOL, || {
                format!(
                    "{family:?} layer violates {} sharing on {}",
                    scheme.group,
                    describe_spec(spec)
                )
            });
        }
    }
    let rank_specs: Vec<Vec<usize>> = match opts.level {
        Level::Quick => vec![vec![1, 2, 1], vec![3, 3, 3]],
        Level::Full => vec![vec![1, 2, 1], vec![3, 3, 3], vec![3, 3, 3, 3]],
    };
    for n in rank_specs {
        let spec = WeightSpaceSpec::mlp(&n)?;
        for family in [LayerFamily::Np, LayerFamily::Hnp] {
            let r = compare_rank(&spec, family.group(), family)?;
            let ok = r.span_dim_closed_form == r.orbit_count;
            suite.check(if ok { 0.0 } else { f64::INFINITY }, || {
                format!(
                    "{family:?} span {} != orbit count {} on n={n:?}",
                    r.span_dim_closed_form, r.orbit_count
                )
            });
        }
    }
    Ok(suite.finish())
}

fn pooling_suite(opts: &SelftestOptions) -> Result<SuiteResult> {
    let mut suite = Suite::new("pooling");
    let n = trials(opts, 10, 50);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9001);
    for t in 0..n {
        let spec = random_spec(&mut rng);
        let seed: u64 = rng.gen();
        let u = random_feature(&spec, 2, seed);
        let np = NeuronPermutation::random(&spec, GroupTag::Np, seed ^ 1);
        let exact = invariant_pool_np(&np.apply(&u)?) == invariant_pool_np(&u);
        suite.check(if exact { 0.0 } else { f64::INFINITY }, || {
            format!(
                "NP pool changed under sigma {:?} on {} seed {seed}",
                np.sigmas(),
                describe_spec(&spec)
            )
        });
        let hnp = NeuronPermutation::random(&spec, GroupTag::Hnp, seed ^ 2);
        let exact = invariant_pool_hnp(&hnp.apply(&u)?) == invariant_pool_hnp(&u);
        suite.check(if exact { 0.0 } else { f64::INFINITY }, || {
            format!(
                "HNP pool changed under sigma {:?} on {} seed {seed}",
                hnp.sigmas(),
                describe_spec(&spec)
            )
        });
        if t == 0 {
            // Swapping the two inputs of a net whose input columns differ
            // changes the HNP pool.
            let spec2 = WeightSpaceSpec::mlp(&[2, 3, 1])?;
            let u2 = WeightSpaceFeature::from_matrices(
                &[
                    vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]],
                    vec![vec![1.0, 1.0, 1.0]],
                ],
                &[vec![0.0; 3], vec![0.0]],
            )?;
            let swap =
                NeuronPermutation::new(vec![vec![1, 0], vec![0, 1, 2], vec![0]], GroupTag::Np)?;
            let a = invariant_pool_hnp(&u2);
            let b = invariant_pool_hnp(&swap.apply(&u2)?);
            let gap = a
                .iter()
                .zip(&b)
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            suite.check(
                if gap > NON_INVARIANCE_GAP {
                    0.0
                } else {
                    f64::INFINITY
                },
                || {
                    format!(
                        "HNP pool unexpectedly NP-invariant on {}",
                        describe_spec(&spec2)
                    )
                },
            );
        }
    }
    for family in [LayerFamily::Np, LayerFamily::Hnp] {
        let spec = WeightSpaceSpec::mlp(&[2, 3, 4, 2])?;
        for t in 0..n {
            let seed = opts.seed.wrapping_add(t as u64 * 7 + family as u64);
            let mut cfg = NfnConfig::invariant(
                &spec,
                family,
                vec![4, 4],
                vec![8],
                TaskHead::ClassLogits { classes: 3 },
                seed,
            );
            if family == LayerFamily::Np {
                cfg.io_encoding = None;
            }
            let nfn = Nfn::new(cfg)?;
            let u = random_feature(&spec, 1, seed ^ 5);
            let perm = NeuronPermutation::random(&spec, family.group(), seed ^ 6);
            let a = nfn.forward(&u)?.into_vector().expect("invariant head");
            let b = nfn
                .forward(&perm.apply(&u)?)?
                .into_vector()
                .expect("invariant head");
            let d = a
                .iter()
                .zip(&b)
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            suite.check(d / INVARIANCE_TOL, || {
                format!(
                    "{family:?} network not invariant on {} seed {seed} sigma {:?}",
                    describe_spec(&spec),
                    perm.sigmas()
                )
            });
        }
    }
    Ok(suite.finish())
}

fn inject(nfn: &mut Nfn, on: bool) {
    for l in nfn.layers_mut() {
        l.inject_adjoint_fault(on);
    }
}

fn check_model<M: Trainable>(
    suite: &mut Suite,
    name: &str,
    model: &M,
    batch: &[Example],
    loss: LossKind,
    seed: u64,
) -> Result<()> {
    let r = check_model_gradients(model, batch, loss, FD_STEP)?;
    suite.check(r.max_rel_error / GRADIENT_TOL, || {
        format!(
            "gradient check {name} seed {seed}: relative error {:.3e} at block/entry {:?} (analytic {:.6e}, numeric {:.6e})",
            r.max_rel_error, r.worst, r.analytic, r.numeric
        )
    });
    Ok(())
}

fn gradient_suite(opts: &SelftestOptions) -> Result<SuiteResult> {
    let mut suite = Suite::new("gradient");
    let seeds: Vec<u64> = (0..trials(opts, 1, 3) as u64)
        .map(|s| opts.seed.wrapping_add(s))
        .collect();
    let spec = WeightSpaceSpec::mlp(&[2, 3, 2])?;
    for &seed in &seeds {
        let inputs: Vec<WeightSpaceFeature> = (0..2)
            .map(|k| random_feature(&spec, 1, seed * 10 + k))
            .collect();

        let mut cfg = NfnConfig::invariant(
            &spec,
            LayerFamily::Np,
            vec![3, 2],
            vec![4],
            TaskHead::ScalarSigmoid,
            seed,
        );
        cfg.io_encoding = Some(IoEncodingConfig {
            num_bands: 2,
            max_freq: 3.0,
            mode: EncodingMode::Learned,
        });
        let mut nfn = Nfn::new(cfg)?;
        inject(&mut nfn, opts.inject_fault);
        let batch: Vec<Example> = inputs
            .iter()
            .zip([0.0, 1.0])
            .map(|(u, y)| Example::new(u.clone(), Target::Scalar(y)))
            .collect();
        check_model(
            &mut suite,
            "np-invariant (learned io encoding, bce)",
            &nfn,
            &batch,
            LossKind::Bce,
            seed,
        )?;

        let cfg = NfnConfig::invariant(
            &spec,
            LayerFamily::Hnp,
            vec![3, 2],
            vec![4],
            TaskHead::ClassLogits { classes: 3 },
            seed,
        );
        let mut nfn = Nfn::new(cfg)?;
        inject(&mut nfn, opts.inject_fault);
        let batch: Vec<Example> = inputs
            .iter()
            .zip([0, 2])
            .map(|(u, y)| Example::new(u.clone(), Target::Label(y)))
            .collect();
        check_model(
            &mut suite,
            "hnp-invariant (cross entropy)",
            &nfn,
            &batch,
            LossKind::CrossEntropy,
            seed,
        )?;

        for family in [LayerFamily::Np, LayerFamily::Hnp, LayerFamily::Pointwise] {
            let mut cfg = NfnConfig::equivariant(&spec, family, vec![3, 1], seed);
            cfg.io_encoding = Some(IoEncodingConfig::default());
            let mut nfn = Nfn::new(cfg)?;
            inject(&mut nfn, opts.inject_fault);
            let batch: Vec<Example> = inputs
                .iter()
                .map(|u| Example::new(u.clone(), Target::Values(u.map(|v| v.sin()).flatten())))
                .collect();
            check_model(
                &mut suite,
                &format!("{family:?} equivariant (mse)"),
                &nfn,
                &batch,
                LossKind::Mse,
                seed,
            )?;
        }

        let mlp = FlatMlp::new(FlatMlpConfig {
            spec: spec.clone(),
            in_channels: 1,
            hidden: vec![5, 4],
            task_head: TaskHead::ScalarSigmoid,
            seed,
        })?;
        let batch: Vec<Example> = inputs
            .iter()
            .zip([1.0, 0.0])
            .map(|(u, y)| Example::new(u.clone(), Target::Scalar(y)))
            .collect();
        check_model(&mut suite, "flat mlp", &mlp, &batch, LossKind::Bce, seed)?;

        let siren = SirenSpec {
            hidden: vec![3],
            ..SirenSpec::default()
        };
        let sspec = siren.weight_space();
        let mut ncfg = NfnConfig::equivariant(&sspec, LayerFamily::Np, vec![2, 1], seed);
        ncfg.io_encoding = Some(IoEncodingConfig::default());
        let mut editor = Editor::new(EditorConfig {
            nfn: ncfg,
            siren: siren.clone(),
            resolution: 3,
            gamma_init: 0.5,
        })?;
        inject(editor.nfn_mut(), opts.inject_fault);
        let batch: Vec<Example> = (0..2)
            .map(|k| {
                let u = siren.init(seed * 10 + k);
                let target = (0..9)
                    .map(|p| ((p + k as usize) % 3) as f64 - 1.0)
                    .collect();
                Example::new(u, Target::Values(target))
            })
            .collect();
        check_model(
            &mut suite,
            "siren editor",
            &editor,
            &batch,
            LossKind::Mse,
            seed,
        )?;
    }
    Ok(suite.finish())
}

fn format_suite(opts: &SelftestOptions) -> Result<SuiteResult> {
    let mut suite = Suite::new("format");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xF0);
    for t in 0..trials(opts, 10, 50) {
        let spec = random_spec(&mut rng);
        let c = rng.gen_range(1..=3);
        let seed: u64 = rng.gen();
        let u = WeightSpaceFeature::new(&spec, c, InitKind::UniformFanIn { seed })?;
        let bytes = encode_wsf(&u);
        let back = decode_wsf(&bytes)?;
        let same = back.spec() == u.spec()
            && back.channels() == c
            && back
                .iter()
                .zip(u.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits());
        suite.check(if same { 0.0 } else { f64::INFINITY }, || {
            format!(
                "WSF roundtrip changed trial {t} on {}",
                describe_spec(&spec)
            )
        });
        let cut = rng.gen_range(0..bytes.len());
        let rejected = decode_wsf(&bytes[..cut]).is_err();
        suite.check(if rejected { 0.0 } else { f64::INFINITY }, || {
            format!("WSF truncated to {cut} bytes was accepted")
        });
    }
    let spec = WeightSpaceSpec::mlp(&[2, 3, 1])?;
    let nfn = Nfn::new(NfnConfig::invariant(
        &spec,
        LayerFamily::Hnp,
        vec![2],
        vec![3],
        TaskHead::ScalarSigmoid,
        opts.seed,
    ))?;
    let bytes = nfn.to_checkpoint().encode();
    let back = Nfn::from_checkpoint(&Checkpoint::decode(&bytes)?)?;
    let same = back
        .params()
        .iter()
        .flat_map(|b| b.iter())
        .map(|v| v.to_bits())
        .eq(nfn
            .params()
            .iter()
            .flat_map(|b| b.iter())
            .map(|v| v.to_bits()));
    suite.check(if same { 0.0 } else { f64::INFINITY }, || {
        "checkpoint roundtrip changed parameters".to_string()
    });
    let rejected = Checkpoint::decode(&bytes[..bytes.len() - 1]).is_err();
    suite.check(if rejected { 0.0 } else { f64::INFINITY }, || {
        "truncated checkpoint was accepted".to_string()
    });
    for group in [GroupTag::Np, GroupTag::Hnp] {
        let scheme = enumerate_orbits(&WeightSpaceSpec::mlp(&[1, 2, 1])?, group)?;
        let text = serde_json::to_string(&SchemeFile::from(&scheme)).expect("scheme serializes");
        let parsed: SchemeFile = serde_json::from_str(&text).map_err(|e| Error::Format {
            kind: "scheme",
            msg: e.to_string(),
        })?;
        let back = SharingScheme::try_from(parsed)?;
        suite.check(if back == scheme { 0.0 } else { f64::INFINITY }, || {
            format!("{group} scheme roundtrip changed orbits")
        });
    }
    Ok(suite.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_specs_are_bounded() {
        let specs = small_oracle_specs();
        assert!(specs.iter().all(|s| s.dim() <= 64));
        assert!(specs.iter().any(|s| s.neuron_counts() == vec![3, 3, 3]));
    }

    #[test]
    fn random_specs_cover_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let specs: Vec<_> = (0..40).map(|_| random_spec(&mut rng)).collect();
        assert!(specs.iter().any(|s| s.has_conv()));
        assert!(specs.iter().any(|s| !s.has_conv()));
    }
}
