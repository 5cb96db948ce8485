use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::image::{class_image, contrast, dilate, glyph, image_to_feature, Image};
use super::net::{fit_siren, SirenSpec};
use crate::error::{ensure, Error, Result};
use crate::nflayers::Mlp;
use crate::train::{bce_with_logit, thread_count};
use crate::wsdata::{write_wsf, Manifest, ManifestItem, WeightSpaceFeature, WeightSpaceSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenKind {
    /// SIRENs of faint (0) and strong (1) stripe images.
    InrClassify,
    /// Small ReLU classifiers trained with varied hyperparameters; target is
    /// their test accuracy.
    PredictGen,
    /// SIRENs of glyph images paired with a transformed target image.
    Edit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditTransform {
    Dilate,
    Contrast,
}

impl EditTransform {
    pub fn apply(self, img: &Image) -> Image {
        match self {
            EditTransform::Dilate => dilate(img),
            EditTransform::Contrast => contrast(img),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub kind: GenKind,
    pub n_train: usize,
    #[serde(default)]
    pub n_test: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default)]
    pub siren: SirenSpec,
    #[serde(default = "default_fit_steps")]
    pub fit_steps: usize,
    #[serde(default = "default_fit_lr")]
    pub fit_lr: f64,
    #[serde(default = "default_transform")]
    pub transform: EditTransform,
    #[serde(default = "default_classifier_hidden")]
    pub classifier_hidden: Vec<usize>,
    #[serde(default = "default_classifier_steps")]
    pub classifier_steps: usize,
}

fn default_resolution() -> usize {
    16
}
fn default_fit_steps() -> usize {
    5000
}
fn default_fit_lr() -> f64 {
    5e-5
}
fn default_transform() -> EditTransform {
    EditTransform::Dilate
}
fn default_classifier_hidden() -> Vec<usize> {
    vec![8]
}
fn default_classifier_steps() -> usize {
    300
}

impl GenConfig {
    pub fn new(kind: GenKind, n_train: usize, n_test: usize, seed: u64) -> Self {
        GenConfig {
            kind,
            n_train,
            n_test,
            seed,
            resolution: default_resolution(),
            siren: SirenSpec::default(),
            fit_steps: default_fit_steps(),
            fit_lr: default_fit_lr(),
            transform: default_transform(),
            classifier_hidden: default_classifier_hidden(),
            classifier_steps: default_classifier_steps(),
        }
    }

    /// Weight space of the generated items.
    pub fn weight_space(&self) -> WeightSpaceSpec {
        match self.kind {
            GenKind::PredictGen => {
                let mut n = vec![2];
                n.extend(&self.classifier_hidden);
                n.push(1);
                WeightSpaceSpec::mlp(&n).expect("positive widths")
            }
            _ => self.siren.weight_space(),
        }
    }
}

/// SplitMix64 step: decorrelated per-item seeds from one dataset seed.
pub fn item_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Generated {
    input: WeightSpaceFeature,
    label: Option<usize>,
    target: Option<f64>,
    edit_target: Option<Image>,
}

fn generate_one(cfg: &GenConfig, index: usize) -> Result<Generated> {
    let seed = item_seed(cfg.seed, index as u64);
    match cfg.kind {
        GenKind::InrClassify => {
            let class = index % 2;
            let img = class_image(cfg.resolution, class, seed);
            let fit = fit_siren(&img, &cfg.siren, cfg.fit_steps, cfg.fit_lr, seed ^ 0xF17)?;
            Ok(Generated {
                input: fit.weights,
                label: Some(class),
                target: None,
                edit_target: None,
            })
        }
        GenKind::Edit => {
            let img = glyph(cfg.resolution, seed);
            let fit = fit_siren(&img, &cfg.siren, cfg.fit_steps, cfg.fit_lr, seed ^ 0xF17)?;
            Ok(Generated {
                input: fit.weights,
                label: None,
                target: None,
                edit_target: Some(cfg.transform.apply(&img)),
            })
        }
        GenKind::PredictGen => {
            let (weights, acc) = train_blob_classifier(cfg, seed)?;
            Ok(Generated {
                input: weights,
                label: None,
                target: Some(acc),
                edit_target: None,
            })
        }
    }
}

/// Two Gaussian blobs shared by every classifier of a dataset.
fn blobs(n: usize, rng: &mut ChaCha8Rng) -> Vec<([f64; 2], f64)> {
    (0..n)
        .map(|i| {
            let y = (i % 2) as f64;
            let cx = if y == 1.0 { 1.0 } else { -1.0 };
            let gauss = |rng: &mut ChaCha8Rng| {
                // Box-Muller
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen();
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            };
            let p = [cx + gauss(rng), 0.5 * cx + gauss(rng)];
            (p, y)
        })
        .collect()
}

fn train_blob_classifier(cfg: &GenConfig, seed: u64) -> Result<(WeightSpaceFeature, f64)> {
    let mut data_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xB10B);
    let train = blobs(64, &mut data_rng);
    let test = blobs(256, &mut data_rng);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lr = 10f64.powf(rng.gen_range(-3.0..0.0));
    let steps = rng.gen_range(cfg.classifier_steps / 10..=cfg.classifier_steps.max(1));
    let mut sizes = vec![2];
    sizes.extend(&cfg.classifier_hidden);
    sizes.push(1);
    let mut mlp = Mlp::init(&sizes, rng.gen())?;
    for _ in 0..steps {
        let mut grads = mlp.zero_grads();
        for (x, y) in &train {
            let cache = mlp.forward_cached(x)?;
            let (_, g) = bce_with_logit(cache.output()[0], *y);
            mlp.backward(&cache, &[g / train.len() as f64], &mut grads)?;
        }
        for (p, g) in mlp.params_mut().into_iter().zip(&grads) {
            for (a, b) in p.iter_mut().zip(g) {
                *a -= lr * b;
            }
        }
    }
    let mut correct = 0;
    for (x, y) in &test {
        let z = mlp.forward(x)?[0];
        correct += usize::from((z > 0.0) == (*y == 1.0));
    }
    let spec = WeightSpaceSpec::mlp(&sizes)?;
    let blocks = mlp.params();
    let weights = blocks.iter().step_by(2).map(|b| b.to_vec()).collect();
    let biases = blocks
        .iter()
        .skip(1)
        .step_by(2)
        .map(|b| b.to_vec())
        .collect();
    let feat = WeightSpaceFeature::from_parts(&spec, 1, weights, biases)
        .map_err(|e| Error::Numeric(format!("classifier training diverged: {e}")))?;
    Ok((feat, correct as f64 / test.len() as f64))
}

/// Generates `n_train + n_test` items into `out_dir` and writes its manifest.
/// Items are independent, so they are produced on `NFKIT_THREADS` workers;
/// the output does not depend on the thread count.
pub fn gen_dataset(cfg: &GenConfig, out_dir: &Path) -> Result<Manifest> {
    ensure!(
        cfg.n_train + cfg.n_test > 0,
        "dataset must have at least one item"
    );
    ensure!(cfg.resolution >= 4, "resolution must be at least 4");
    cfg.siren.validate()?;
    ensure!(
        cfg.kind != GenKind::PredictGen || cfg.classifier_hidden.iter().all(|&h| h > 0),
        "classifier widths must be positive"
    );
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let total = cfg.n_train + cfg.n_test;
    let threads = thread_count().min(total);
    let indices: Vec<usize> = (0..total).collect();
    let chunk = total.div_ceil(threads);
    let results: Vec<Result<Generated>> = std::thread::scope(|s| {
        let handles: Vec<_> = indices
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(|&i| generate_one(cfg, i)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("generator worker panicked"))
            .collect()
    });
    let mut items = Vec::with_capacity(total);
    for (i, r) in results.into_iter().enumerate() {
        let g = r?;
        let split = if i < cfg.n_train { "train" } else { "test" };
        let name = format!("{split}_{i:05}.wsf");
        write_wsf(out_dir.join(&name), &g.input)?;
        let edit_target_path = match &g.edit_target {
            Some(img) => {
                let tname = format!("{split}_{i:05}_target.wsf");
                write_wsf(out_dir.join(&tname), &image_to_feature(img))?;
                Some(tname)
            }
            None => None,
        };
        items.push(ManifestItem {
            wsf_path: name,
            label: g.label,
            target: g.target,
            edit_target_path,
            split: Some(split.to_string()),
        });
    }
    let manifest = Manifest {
        items,
        generator_config: serde_json::to_value(cfg).expect("config serializes"),
    };
    manifest.save(out_dir)?;
    Ok(manifest)
}
