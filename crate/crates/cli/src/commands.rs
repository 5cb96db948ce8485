use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nfkit::nflayers::{closed_form_param_count, Checkpoint};
use nfkit::orbits::{compare_rank, enumerate_orbits_with_limit, write_scheme, DEFAULT_DIM_LIMIT};
use nfkit::selftest::{run_selftest, Level, SelftestOptions};
use nfkit::siren::{feature_to_image, gen_dataset, render, write_pgm, GenConfig, SirenSpec};
use nfkit::train::{load_examples, LossKind};
use nfkit::wsdata::{read_wsf, write_wsf, LayerDesc};
use nfkit::{GroupTag, LayerFamily, WeightSpaceSpec};
use serde_json::{json, Map, Value};

use crate::config::{merge, read_json, AnyModel, RunConfig};
use crate::Failure;

/// Largest weight-space dimension for which the span rank is also computed.
const RANK_DIM_LIMIT: usize = 64;

/// A spec file holds either a full spec object or a list of neuron counts.
fn read_spec(path: &Path) -> Result<WeightSpaceSpec> {
    let v: Value = read_json(path, "spec")?;
    let spec = if let Value::Array(_) = v {
        let counts: Vec<usize> = serde_json::from_value(v)
            .map_err(|e| nfkit::Error::InvalidArgument(format!("spec {}: {e}", path.display())))?;
        WeightSpaceSpec::mlp(&counts)?
    } else {
        serde_json::from_value(v)
            .map_err(|e| nfkit::Error::InvalidArgument(format!("spec {}: {e}", path.display())))?
    };
    Ok(spec)
}

pub fn derive_sharing(
    spec: &Path,
    group: GroupTag,
    out: &Path,
    max_dim: Option<usize>,
) -> Result<()> {
    let spec = read_spec(spec)?;
    let scheme = enumerate_orbits_with_limit(&spec, group, max_dim.unwrap_or(DEFAULT_DIM_LIMIT))?;
    write_scheme(&scheme, out)?;
    let family = match group {
        GroupTag::Np => LayerFamily::Np,
        GroupTag::Hnp => LayerFamily::Hnp,
    };
    println!("orbit_count={}", scheme.orbit_count);
    println!(
        "closed_form_params={}",
        closed_form_param_count(&spec, family, 1, 1)
    );
    if spec.dim() <= RANK_DIM_LIMIT && !spec.has_conv() {
        let r = compare_rank(&spec, group, family)?;
        println!("span_dim_closed_form={}", r.span_dim_closed_form);
        println!(
            "span_matches_orbits={}",
            if r.span_dim_closed_form == r.orbit_count {
                "yes"
            } else {
                "no"
            }
        );
    } else {
        println!(
            "span_dim_closed_form=skipped (dim {} > {RANK_DIM_LIMIT} or conv)",
            spec.dim()
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

pub fn selftest(
    level: Level,
    seed: u64,
    inject_fault: bool,
    json_out: Option<&Path>,
) -> Result<()> {
    let report = run_selftest(&SelftestOptions {
        level,
        seed,
        inject_fault,
    })?;
    print!("{}", report.table());
    if let Some(p) = json_out {
        write_text(p, &(report.to_json() + "\n"))?;
    }
    if let Some(f) = report.first_failure() {
        bail!(Failure {
            code: 3,
            msg: format!(
                "property failure in suite '{}': {}",
                f.name,
                f.counterexample.as_deref().unwrap_or("")
            ),
        });
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub struct GenOverrides {
    pub kind: Option<String>,
    pub n_train: Option<usize>,
    pub n_test: Option<usize>,
    pub seed: Option<u64>,
    pub resolution: Option<usize>,
    pub fit_steps: Option<usize>,
    pub fit_lr: Option<f64>,
    pub hidden: Option<Vec<usize>>,
    pub transform: Option<String>,
}

pub fn gen_data(config: Option<&Path>, o: GenOverrides, out: &Path) -> Result<()> {
    let mut base: Map<String, Value> = match config {
        Some(p) => read_json(p, "generator config")?,
        None => Map::new(),
    };
    let hidden = o.hidden.map(|h| {
        let mut siren = base
            .get("siren")
            .cloned()
            .unwrap_or_else(|| serde_json::to_value(SirenSpec::default()).unwrap());
        siren["hidden"] = json!(h);
        siren
    });
    merge(
        &mut base,
        &[
            ("kind", o.kind.map(Value::from)),
            ("n_train", o.n_train.map(Value::from)),
            ("n_test", o.n_test.map(Value::from)),
            ("seed", o.seed.map(Value::from)),
            ("resolution", o.resolution.map(Value::from)),
            ("fit_steps", o.fit_steps.map(Value::from)),
            ("fit_lr", o.fit_lr.map(Value::from)),
            ("transform", o.transform.map(Value::from)),
            ("siren", hidden),
        ],
    );
    if !base.contains_key("seed") {
        bail!(nfkit::Error::InvalidArgument(
            "a generator seed is mandatory (config or --seed)".into()
        ));
    }
    let cfg: GenConfig = serde_json::from_value(Value::Object(base))
        .map_err(|e| nfkit::Error::InvalidArgument(format!("generator config: {e}")))?;
    let manifest = gen_dataset(&cfg, out)?;
    println!("wrote {} items to {}", manifest.items.len(), out.display());
    Ok(())
}

pub struct TrainOverrides {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub steps: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub eval_every: Option<usize>,
}

pub fn train(config: &Path, o: TrainOverrides) -> Result<()> {
    let mut cfg: RunConfig = read_json(config, "run config")?;
    if o.data.is_some() {
        cfg.data = o.data;
    }
    if o.out.is_some() {
        cfg.out = o.out;
    }
    merge(
        &mut cfg.train,
        &[
            ("steps", o.steps.map(Value::from)),
            ("lr", o.lr.map(Value::from)),
            ("batch_size", o.batch_size.map(Value::from)),
            ("seed", o.seed.map(Value::from)),
            ("eval_every", o.eval_every.map(Value::from)),
        ],
    );
    let tc = cfg.train_config()?;
    let Some(data) = cfg.data.clone() else {
        bail!(nfkit::Error::InvalidArgument(
            "no dataset given (config 'data' or --data)".into()
        ));
    };
    let Some(out) = cfg.out.clone() else {
        bail!(nfkit::Error::InvalidArgument(
            "no output directory given (config 'out' or --out)".into()
        ));
    };
    let train = load_examples(&data, "train")?;
    let test = load_examples(&data, "test")?;
    let Some(first) = train.first() else {
        bail!(nfkit::Error::InvalidArgument(format!(
            "{} has no training items",
            data.display()
        )));
    };
    let mut model = cfg.build_model(first.input.spec())?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let test_ref = (!test.is_empty()).then_some(test.as_slice());
    match model.train(&train, test_ref, &tc) {
        Ok(report) => {
            model.to_checkpoint().save(&out.join("model.nfn"))?;
            write_text(&out.join("report.jsonl"), &report.to_jsonl())?;
            let metrics = json!({
                "final": report.final_metrics,
                "best": report.best_metrics,
                "num_params": model.num_params(),
            });
            let text = serde_json::to_string_pretty(&metrics)? + "\n";
            write_text(&out.join("metrics.json"), &text)?;
            print!("{text}");
            Ok(())
        }
        Err(e @ nfkit::Error::Numeric(_)) => {
            let path = out.join("last_good.nfn");
            model.to_checkpoint().save(&path)?;
            bail!(Failure {
                code: 4,
                msg: format!("{e}; last good checkpoint: {}", path.display()),
            })
        }
        Err(e) => Err(e.into()),
    }
}

pub fn eval(checkpoint: &Path, data: &Path, split: &str, loss: Option<LossKind>) -> Result<()> {
    let model = AnyModel::from_checkpoint(&Checkpoint::load(checkpoint)?)?;
    let examples = load_examples(data, split)?;
    if examples.is_empty() {
        bail!(nfkit::Error::InvalidArgument(format!(
            "split '{split}' of {} is empty",
            data.display()
        )));
    }
    let metrics = model.evaluate(&examples, loss.unwrap_or_else(|| model.natural_loss()))?;
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    Ok(())
}

pub fn edit(checkpoint: &Path, input: &Path, out: &Path, size: Option<usize>) -> Result<()> {
    let AnyModel::Editor(editor) = AnyModel::from_checkpoint(&Checkpoint::load(checkpoint)?)?
    else {
        bail!(nfkit::Error::InvalidArgument(format!(
            "{} is not an editor checkpoint",
            checkpoint.display()
        )));
    };
    let u = read_wsf(input)?;
    let edited = editor.edit(&u)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_wsf(out.join("edited.wsf"), &edited)?;
    let n = size.unwrap_or(editor.config().resolution);
    let omega0 = editor.config().siren.omega0;
    write_pgm(&render(&u, n, n, omega0)?, &out.join("before.pgm"))?;
    write_pgm(&render(&edited, n, n, omega0)?, &out.join("after.pgm"))?;
    println!(
        "wrote edited.wsf, before.pgm, after.pgm to {}",
        out.display()
    );
    Ok(())
}

pub fn render_cmd(input: &Path, out: &Path, size: usize, omega0: f64) -> Result<()> {
    let f = read_wsf(input)?;
    // Single-layer containers hold images directly.
    let img = if f.num_layers() == 1
        && f.spec().layers()[0] == LayerDesc::fc(f.spec().neurons(1), f.spec().neurons(0))
    {
        feature_to_image(&f)?
    } else {
        render(&f, size, size, omega0)?
    };
    write_pgm(&img, out)?;
    println!(
        "wrote {}x{} image to {}",
        img.width,
        img.height,
        out.display()
    );
    Ok(())
}
