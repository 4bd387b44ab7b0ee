use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;

use semreduce_core::analysis::{
    export_report, grad_cam, overlay, sensitivity_scan, AblationMode, Heatmap,
};
use semreduce_core::checkpoint::Checkpoint;
use semreduce_core::models::{
    evaluate_modular, evaluate_perception, evaluate_steernet, steer_input, train_control,
    train_perception, train_steernet, ControlHead, EpochStats, Hyperparams, PerceptionCoder,
    PerceptionConfig, SteerNet, SteerNetConfig,
};
use semreduce_core::scenegen::{load_dataset, Dataset, DatasetConfig, Split};
use semreduce_core::semantics::write_ppm;

use crate::config::{load_config_file, pick, resolve_hyperparams, RunConfig};

/// Human-readable MSE in units of 1e-3.
fn mse_e3(v: f64) -> String {
    format!("{:.3}", v * 1e3)
}

fn parse_split(name: &str) -> Result<Split> {
    match name {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => bail!("unknown split {other:?} (use train, val or test)"),
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Number of scenes
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output dataset directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Split ratios as "train,val,test"
    #[arg(long)]
    pub ratios: Option<String>,
    /// JSON config file (flat keys; flags take precedence)
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let (file, generator) = load_config_file(args.config.as_deref())?;
    let out = pick(args.out.clone(), file.out.clone(), PathBuf::new());
    if out.as_os_str().is_empty() {
        bail!("generate needs --out (or an \"out\" config key)");
    }
    let (train_ratio, val_ratio, test_ratio) = match &args.ratios {
        Some(spec) => {
            let parts: Vec<f64> = spec
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .with_context(|| format!("parsing --ratios {spec:?}"))?;
            if parts.len() != 3 {
                bail!("--ratios needs three comma-separated numbers, got {spec:?}");
            }
            (parts[0], parts[1], parts[2])
        }
        None => (
            pick(None, file.train_ratio, 0.8),
            pick(None, file.val_ratio, 0.1),
            pick(None, file.test_ratio, 0.1),
        ),
    };
    let config = DatasetConfig {
        master_seed: pick(args.seed, file.seed, 0),
        n: pick(args.n, file.n, 2000),
        train_ratio,
        val_ratio,
        test_ratio,
        label_set: semreduce_core::semantics::LabelSetKind::Full13,
        generator,
    };
    let dataset = Dataset::generate(config).context("generating dataset")?;
    dataset.write(&out).with_context(|| format!("writing dataset to {}", out.display()))?;
    let (train, val, test) = dataset.config.split_sizes();
    println!("manifest: {}", out.join("manifest.csv").display());
    println!("scenes: {} (train {train} / val {val} / test {test})", dataset.config.n);
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// One of steernet-rgb, steernet-seg13, steernet-seg7, perception-13,
    /// perception-7, control
    #[arg(long)]
    pub preset: Option<String>,
    /// Dataset directory
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, value_name = "RATE")]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Perception checkpoint (required by the control preset)
    #[arg(long)]
    pub perception: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let (file, _) = load_config_file(args.config.as_deref())?;
    let preset = pick(args.preset.clone(), file.preset.clone(), String::new());
    if preset.is_empty() {
        bail!("train needs --preset");
    }
    let data = pick(args.data.clone(), file.data.clone(), PathBuf::new());
    if data.as_os_str().is_empty() {
        bail!("train needs --data <dataset dir>");
    }
    let out = pick(args.out.clone(), file.out.clone(), PathBuf::new());
    if out.as_os_str().is_empty() {
        bail!("train needs --out");
    }
    let dataset =
        load_dataset(&data).with_context(|| format!("loading dataset from {}", data.display()))?;
    let (h, w) = (dataset.config.generator.height, dataset.config.generator.width);

    fs::create_dir_all(&out)?;
    let mut run = RunConfig::new("train");
    run.preset = Some(preset.clone());
    run.data = Some(data.clone());

    if let Some(config) = SteerNetConfig::preset(&preset, h, w) {
        let hp = resolve_hyperparams(args.lr, args.batch, args.epochs, args.seed, &file, Hyperparams::steer());
        run.seed = Some(hp.seed);
        run.hyperparams = Some(hp);
        let (net, stats) = train_steernet(&config, &dataset, &hp)?;
        write_loss_csv(&out, &stats)?;
        net.to_checkpoint().write(&out.join(format!("{preset}.ckpt")))?;
        run.write(&out)?;
        let train = evaluate_steernet(&net, &dataset, Split::Train)?;
        let val = evaluate_steernet(&net, &dataset, Split::Val)?;
        let test = evaluate_steernet(&net, &dataset, Split::Test)?;
        println!("checkpoint: {}", out.join(format!("{preset}.ckpt")).display());
        println!(
            "mse (x1e-3): train {} / val {} / test {}",
            mse_e3(train),
            mse_e3(val),
            mse_e3(test)
        );
    } else if let Some(config) = PerceptionConfig::preset(&preset, h, w) {
        let hp = resolve_hyperparams(args.lr, args.batch, args.epochs, args.seed, &file, Hyperparams::perception());
        run.seed = Some(hp.seed);
        run.hyperparams = Some(hp);
        let (model, stats) = train_perception(&config, &dataset, &hp)?;
        let mut csv = String::from("epoch,train_ce,val_ce,val_pixel_accuracy\n");
        for s in &stats {
            csv.push_str(&format!("{},{},{},{}\n", s.epoch, s.train_loss, s.val_loss, s.val_pixel_accuracy));
        }
        fs::write(out.join("loss.csv"), csv)?;
        model.to_checkpoint().write(&out.join(format!("{preset}.ckpt")))?;
        run.write(&out)?;
        let (test_ce, test_acc) = evaluate_perception(&model, &dataset, Split::Test)?;
        println!("checkpoint: {}", out.join(format!("{preset}.ckpt")).display());
        println!("test cross-entropy {test_ce:.4}, test pixel accuracy {test_acc:.4}");
    } else if preset == "control" {
        let perception_path = pick(args.perception.clone(), None, PathBuf::new());
        if perception_path.as_os_str().is_empty() {
            bail!(
                "preset \"control\" requires --perception <checkpoint>: train a perception-13 or perception-7 model first"
            );
        }
        let perception = PerceptionCoder::from_checkpoint(&Checkpoint::read(&perception_path)?)?;
        let hp = resolve_hyperparams(args.lr, args.batch, args.epochs, args.seed, &file, Hyperparams::control());
        run.seed = Some(hp.seed);
        run.hyperparams = Some(hp);
        run.perception = Some(perception_path.clone());
        let (head, stats) = train_control(&perception, &dataset, &hp)?;
        write_loss_csv(&out, &stats)?;
        head.to_checkpoint().write(&out.join("control.ckpt"))?;
        run.write(&out)?;
        let train = evaluate_modular(&perception, &head, &dataset, Split::Train)?;
        let val = evaluate_modular(&perception, &head, &dataset, Split::Val)?;
        let test = evaluate_modular(&perception, &head, &dataset, Split::Test)?;
        println!("checkpoint: {}", out.join("control.ckpt").display());
        println!(
            "mse (x1e-3): train {} / val {} / test {}",
            mse_e3(train),
            mse_e3(val),
            mse_e3(test)
        );
    } else {
        bail!(
            "unknown preset {preset:?} (expected steernet-rgb, steernet-seg13, steernet-seg7, perception-13, perception-7 or control)"
        );
    }
    Ok(())
}

fn write_loss_csv(out: &Path, stats: &[EpochStats]) -> Result<()> {
    let mut csv = String::from("epoch,train_mse,val_mse\n");
    for s in stats {
        csv.push_str(&format!("{},{},{}\n", s.epoch, s.train_loss, s.val_loss));
    }
    fs::write(out.join("loss.csv"), csv)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Steering-model checkpoint
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Perception checkpoint (modular pipeline, with --control)
    #[arg(long)]
    pub perception: Option<PathBuf>,
    /// Control-head checkpoint (modular pipeline, with --perception)
    #[arg(long)]
    pub control: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// train, val or test (default test)
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let (file, _) = load_config_file(args.config.as_deref())?;
    let data = pick(args.data.clone(), file.data.clone(), PathBuf::new());
    if data.as_os_str().is_empty() {
        bail!("eval needs --data <dataset dir>");
    }
    let dataset = load_dataset(&data)?;
    let split_name = pick(args.split.clone(), file.split.clone(), "test".to_string());
    let split = parse_split(&split_name)?;
    let mse = match (&args.checkpoint, &args.perception, &args.control) {
        (Some(ckpt), None, None) => {
            let net = SteerNet::from_checkpoint(&Checkpoint::read(ckpt)?)?;
            evaluate_steernet(&net, &dataset, split)?
        }
        (None, Some(p), Some(c)) => {
            let perception = PerceptionCoder::from_checkpoint(&Checkpoint::read(p)?)?;
            let head = ControlHead::from_checkpoint(&Checkpoint::read(c)?)?;
            evaluate_modular(&perception, &head, &dataset, split)?
        }
        _ => bail!("eval needs either --checkpoint or both --perception and --control"),
    };
    println!("{split_name} mse (x1e-3): {}", mse_e3(mse));
    Ok(())
}

#[derive(Debug, Args)]
pub struct GradcamArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated scene ids
    #[arg(long)]
    pub ids: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overlay opacity in [0,1]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Conv layer to attribute (1, 4 or 7)
    #[arg(long)]
    pub layer: Option<usize>,
    /// Also emit maps for the negated steering output
    #[arg(long)]
    pub signed: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn heatmap_csv(map: &Heatmap) -> String {
    let mut csv = String::new();
    for y in 0..map.height() {
        let row: Vec<String> = (0..map.width()).map(|x| map.get(y, x).to_string()).collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    csv
}

pub fn cmd_gradcam(args: &GradcamArgs) -> Result<()> {
    let (file, _) = load_config_file(args.config.as_deref())?;
    let ckpt_path = args.checkpoint.clone().context("gradcam needs --checkpoint")?;
    let data = pick(args.data.clone(), file.data.clone(), PathBuf::new());
    if data.as_os_str().is_empty() {
        bail!("gradcam needs --data <dataset dir>");
    }
    let out = pick(args.out.clone(), file.out.clone(), PathBuf::new());
    if out.as_os_str().is_empty() {
        bail!("gradcam needs --out");
    }
    let ids: Vec<usize> = pick(args.ids.clone(), file.ids.clone(), String::new())
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<usize>().with_context(|| format!("parsing id {p:?}")))
        .collect::<Result<_>>()?;
    if ids.is_empty() {
        bail!("gradcam needs --ids (comma-separated scene ids)");
    }
    let alpha = pick(args.alpha, file.alpha, 0.5);
    let layer = pick(args.layer, file.layer, 7);

    let net = SteerNet::from_checkpoint(&Checkpoint::read(&ckpt_path)?)?;
    let dataset = load_dataset(&data)?;
    fs::create_dir_all(&out)?;

    for &id in &ids {
        let scene = dataset
            .scenes
            .get(id)
            .with_context(|| format!("id {id} out of range (dataset has {} scenes)", dataset.scenes.len()))?;
        let x = steer_input(scene, net.config.channels)?;
        let passes: &[(bool, &str)] = if args.signed { &[(false, ""), (true, "_neg")] } else { &[(false, "")] };
        for &(negate, suffix) in passes {
            let cam = grad_cam(&net, &x, layer, negate)?;
            let blended = overlay(&cam, &scene.rgb, alpha)?;
            write_ppm(&out.join(format!("cam_{id:05}{suffix}.ppm")), &blended)?;
            fs::write(out.join(format!("cam_{id:05}{suffix}.csv")), heatmap_csv(&cam))?;
        }
    }

    let mut run = RunConfig::new("gradcam");
    run.checkpoint = Some(ckpt_path);
    run.data = Some(data);
    run.alpha = Some(alpha);
    run.layer = Some(layer);
    run.ids = Some(ids.clone());
    run.write(&out)?;
    println!("wrote {} overlay/value pairs to {}", ids.len() * if args.signed { 2 } else { 1 }, out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// zero (default) or camouflage
    #[arg(long)]
    pub mode: Option<String>,
    /// Camouflage target label name (e.g. roads)
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn cmd_sensitivity(args: &SensitivityArgs) -> Result<()> {
    let (file, _) = load_config_file(args.config.as_deref())?;
    let ckpt_path = args.checkpoint.clone().context("sensitivity needs --checkpoint")?;
    let data = pick(args.data.clone(), file.data.clone(), PathBuf::new());
    if data.as_os_str().is_empty() {
        bail!("sensitivity needs --data <dataset dir>");
    }
    let out = pick(args.out.clone(), file.out.clone(), PathBuf::new());
    if out.as_os_str().is_empty() {
        bail!("sensitivity needs --out");
    }
    let dataset = load_dataset(&data)?;
    let mode_name = pick(args.mode.clone(), file.mode.clone(), "zero".to_string());
    let ablation = match mode_name.as_str() {
        "zero" => AblationMode::Zero,
        "camouflage" => {
            let target_name = pick(args.target.clone(), file.target.clone(), String::new());
            if target_name.is_empty() {
                bail!("camouflage mode needs --target <label name>");
            }
            let target = dataset
                .config
                .label_set
                .id_of(&target_name)
                .with_context(|| format!("label {target_name:?} is not in the dataset's label set"))?;
            AblationMode::Camouflage { target }
        }
        other => bail!("unknown mode {other:?} (use zero or camouflage)"),
    };

    let net = SteerNet::from_checkpoint(&Checkpoint::read(&ckpt_path)?)?;
    let report = sensitivity_scan(&net, &dataset, Split::Test, ablation)?;
    export_report(&report, &out)?;

    let mut run = RunConfig::new("sensitivity");
    run.checkpoint = Some(ckpt_path);
    run.data = Some(data);
    run.mode = Some(mode_name);
    run.target = args.target.clone().or(file.target.clone());
    run.write(&out)?;

    println!("baseline mse (x1e-3): {}", mse_e3(report.baseline_mse));
    println!("{:<16} {:>14} {:>14}", "label", "ablated(1e-3)", "delta(1e-3)");
    for entry in &report.entries {
        println!(
            "{:<16} {:>14} {:>14}",
            entry.label,
            mse_e3(entry.ablated_mse),
            mse_e3(entry.delta_mse)
        );
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct RemapArgs {
    /// Input dataset directory
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output dataset directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn cmd_remap(args: &RemapArgs) -> Result<()> {
    let (file, _) = load_config_file(args.config.as_deref())?;
    let data = pick(args.data.clone(), file.data.clone(), PathBuf::new());
    if data.as_os_str().is_empty() {
        bail!("remap needs --data <dataset dir>");
    }
    let out = pick(args.out.clone(), file.out.clone(), PathBuf::new());
    if out.as_os_str().is_empty() {
        bail!("remap needs --out");
    }
    let dataset = load_dataset(&data)?;
    let remapped = dataset.remapped();
    remapped.write(&out)?;
    // No run_config.json here: the dataset's own config.json fully resolves
    // it, and keeping the directory free of invocation paths makes double
    // application byte-identical to single application.
    println!(
        "remapped {} scenes to the compact 7-class set at {}",
        remapped.config.n,
        out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Training output directory of the all-labels control pipeline
    #[arg(long)]
    pub all: Option<PathBuf>,
    /// Training output directory of the remapped control pipeline
    #[arg(long)]
    pub remapped: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn load_pipeline(dir: &Path) -> Result<(PerceptionCoder, ControlHead, Dataset)> {
    let run = RunConfig::read(dir)?;
    if run.preset.as_deref() != Some("control") {
        bail!(
            "{} is not a control training directory (preset {:?})",
            dir.display(),
            run.preset
        );
    }
    let perception_path = run
        .perception
        .with_context(|| format!("{}/run_config.json lacks a perception path", dir.display()))?;
    let data = run.data.with_context(|| format!("{}/run_config.json lacks a data path", dir.display()))?;
    let perception = PerceptionCoder::from_checkpoint(&Checkpoint::read(&perception_path)?)?;
    let head = ControlHead::from_checkpoint(&Checkpoint::read(&dir.join("control.ckpt"))?)?;
    let dataset = load_dataset(&data)?;
    Ok((perception, head, dataset))
}

pub fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let (file, _) = load_config_file(args.config.as_deref())?;
    let all_dir = args.all.clone().context("compare needs --all <control training dir>")?;
    let remapped_dir = args.remapped.clone().context("compare needs --remapped <control training dir>")?;
    let out = pick(args.out.clone(), file.out.clone(), PathBuf::new());
    if out.as_os_str().is_empty() {
        bail!("compare needs --out");
    }

    let mut rows = Vec::new();
    for (name, dir) in [("all-labels", &all_dir), ("remapped", &remapped_dir)] {
        let (perception, head, dataset) = load_pipeline(dir)
            .with_context(|| format!("loading the {name} pipeline from {}", dir.display()))?;
        let train = evaluate_modular(&perception, &head, &dataset, Split::Train)?;
        let val = evaluate_modular(&perception, &head, &dataset, Split::Val)?;
        let test = evaluate_modular(&perception, &head, &dataset, Split::Test)?;
        rows.push((name, train, val, test));
    }

    fs::create_dir_all(&out)?;
    let mut csv = String::from("model,train_mse,val_mse,test_mse\n");
    for (name, train, val, test) in &rows {
        csv.push_str(&format!("{name},{train},{val},{test}\n"));
    }
    fs::write(out.join("compare.csv"), csv)?;

    let mut run = RunConfig::new("compare");
    run.compare_all = Some(all_dir);
    run.compare_remapped = Some(remapped_dir);
    run.write(&out)?;

    println!("{:<12} {:>12} {:>12} {:>12}", "model", "train(1e-3)", "val(1e-3)", "test(1e-3)");
    for (name, train, val, test) in &rows {
        println!(
            "{:<12} {:>12} {:>12} {:>12}",
            name,
            mse_e3(*train),
            mse_e3(*val),
            mse_e3(*test)
        );
    }
    Ok(())
}
