use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use texdcn::dcn::{self, evaluate_loss, load_checkpoint, save_checkpoint};
use texdcn::linker::{self, LabeledSignature};
use texdcn::net::Architecture;
use texdcn::signature::{self, write_label_maps, write_signature_table};
use texdcn::synth::{self, PhantomSpec};
use texdcn::{gradcheck, volume_io};

use crate::config::PipelineConfig;
use crate::{Cli, CliError, Command, ExtractArgs, LinkArgs, SignatureArgs, TaskArg, TrainArgs};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    set(&mut cfg.seed, cli.seed);
    let out = cli.out;
    match cli.command {
        Command::Phantom { n } => {
            set(&mut cfg.n_cases, n);
            phantom(&cfg, &out)
        }
        Command::Extract(args) => extract(cfg, &out, args),
        Command::Train(args) => train(cfg, &out, args),
        Command::Signature(args) => signature(cfg, &out, args),
        Command::Link(args) => link(cfg, &out, args),
        Command::Gradcheck { seeds } => run_gradcheck(seeds),
    }
}

fn prepare(cfg: &PipelineConfig, out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    cfg.echo(out)
}

fn resolve(out: &Path, p: &Path) -> PathBuf {
    out.join(p)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn phantom(cfg: &PipelineConfig, out: &Path) -> Result<(), CliError> {
    if cfg.n_cases == 0 {
        return Err(usage("--n must be at least 1"));
    }
    prepare(cfg, out)?;
    let spec = PhantomSpec {
        n_cases: cfg.n_cases,
        seed: cfg.seed,
        ..PhantomSpec::default()
    };
    let manifest = synth::generate_cohort(&spec, out)?;
    info!("generated {} cases", spec.n_cases);
    println!("{}", manifest.display());
    Ok(())
}

fn extract(mut cfg: PipelineConfig, out: &Path, args: ExtractArgs) -> Result<(), CliError> {
    set(&mut cfg.manifest, args.manifest);
    set(&mut cfg.n_patches, args.n);
    set(&mut cfg.window_mm, args.window_mm);
    set(&mut cfg.out_px, args.out_px);
    if cfg.n_patches == 0 {
        return Err(usage("--n must be at least 1"));
    }
    prepare(&cfg, out)?;
    let records = volume_io::read_manifest(resolve(out, &cfg.manifest))?;
    let set = volume_io::extract_cohort(&records, cfg.n_patches, cfg.window_mm, cfg.out_px, cfg.seed)?;
    let path = resolve(out, &cfg.patches);
    volume_io::write_patchset(&path, &set)?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    arch: String,
    k: usize,
    param_count: usize,
    patches: usize,
    recon: f64,
    cluster: f64,
    total: f64,
}

fn train(mut cfg: PipelineConfig, out: &Path, args: TrainArgs) -> Result<(), CliError> {
    set(&mut cfg.patches, args.patches);
    set(&mut cfg.arch, args.arch);
    set(&mut cfg.lambda, args.lambda);
    set(&mut cfg.k, args.k);
    set(&mut cfg.pretrain_epochs, args.pretrain_epochs);
    set(&mut cfg.joint_epochs, args.joint_epochs);
    set(&mut cfg.batch_size, args.batch_size);
    set(&mut cfg.learning_rate, args.learning_rate);
    set(&mut cfg.centroid_update_mode, args.centroid_update_mode.map(Into::into));
    let arch = Architecture::from_name(&cfg.arch).ok_or_else(|| usage(format!("unknown architecture `{}`", cfg.arch)))?;
    let train_cfg = cfg.train();
    train_cfg.validate().map_err(|e| usage(e.to_string()))?;
    prepare(&cfg, out)?;

    let set = volume_io::read_patchset(resolve(out, &cfg.patches))?;
    let patches = set.tensors();
    let model = match args.resume {
        Some(path) => {
            let start = load_checkpoint(&path)?;
            info!("resuming from {} (k = {})", path.display(), start.k());
            let (model, joint) = dcn::joint_train(&start, &patches, &train_cfg)?;
            joint.write_csv(out.join("joint_log.csv"))?;
            model
        }
        None => {
            let (model, pre, joint) = dcn::train(arch, &patches, &train_cfg)?;
            pre.write_csv(out.join("pretrain_log.csv"))?;
            joint.write_csv(out.join("joint_log.csv"))?;
            model
        }
    };
    let path = resolve(out, &cfg.checkpoint);
    save_checkpoint(&path, &model)?;
    let loss = evaluate_loss(&model, &patches, cfg.lambda)?;
    info!("final loss {:.6} (recon {:.6}, cluster {:.6})", loss.total, loss.recon, loss.cluster);
    write_json(
        &out.join("train_summary.json"),
        &TrainSummary {
            arch: model.arch().name().to_string(),
            k: model.k(),
            param_count: model.params.param_count(),
            patches: patches.len(),
            recon: loss.recon,
            cluster: loss.cluster,
            total: loss.total,
        },
    )?;
    println!("{}", path.display());
    Ok(())
}

fn signature(mut cfg: PipelineConfig, out: &Path, args: SignatureArgs) -> Result<(), CliError> {
    set(&mut cfg.checkpoint, args.checkpoint);
    set(&mut cfg.manifest, args.manifest);
    set(&mut cfg.stride_px, args.stride);
    set(&mut cfg.window_mm, args.window_mm);
    if cfg.stride_px == 0 {
        return Err(usage("--stride must be at least 1"));
    }
    prepare(&cfg, out)?;
    let model = load_checkpoint(resolve(out, &cfg.checkpoint))?;
    let records = volume_io::read_manifest(resolve(out, &cfg.manifest))?;
    let rows = signature::signatures_for_manifest(&model, &records, cfg.window())?;
    for r in &rows {
        info!("{}: {} windows", r.signature.case_id, r.signature.window_count);
    }
    let path = resolve(out, &cfg.signatures);
    write_signature_table(&path, &rows)?;
    let maps: Vec<_> = rows.iter().map(|r| &r.labels).collect();
    write_label_maps(out.join("labelmaps.csv"), &maps)?;
    println!("{}", path.display());
    Ok(())
}

fn link(mut cfg: PipelineConfig, out: &Path, args: LinkArgs) -> Result<(), CliError> {
    set(&mut cfg.signatures, args.signatures);
    set(&mut cfg.n_trees, args.n_trees);
    if cfg.n_trees == 0 {
        return Err(usage("--n-trees must be at least 1"));
    }
    prepare(&cfg, out)?;
    let table = signature::read_signature_table(resolve(out, &cfg.signatures))?;
    let data: Vec<LabeledSignature> = table.iter().map(|(g, s)| LabeledSignature::new(*g, s)).collect();
    let link_cfg = cfg.link();

    let forest = match args.task {
        TaskArg::Both | TaskArg::BinaryForest => {
            let r = linker::loo_forest(&data, &link_cfg)?;
            let m = r.metrics.core();
            info!(
                "forest: accuracy {:.3} sensitivity {:.3} specificity {:.3} f1 {:.3}",
                m.accuracy, m.sensitivity, m.specificity, m.f1
            );
            for f in &r.failed_folds {
                log::warn!("fold {} failed: {}", f.case_id, f.reason);
            }
            linker::write_importance_csv(out.join("importance.csv"), &r.importance)?;
            linker::importance_svg(out.join("importance.svg"), &r.importance)?;
            Some(r)
        }
        TaskArg::GradeLasso => None,
    };
    let lasso = match args.task {
        TaskArg::Both | TaskArg::GradeLasso => {
            let r = linker::loo_lasso(&data, &link_cfg)?;
            match r.spearman {
                Some(rho) => info!("lasso: spearman {rho:.3}"),
                None => log::warn!("lasso: constant predictions, spearman undefined"),
            }
            linker::write_regression_csv(out.join("regression.csv"), &r)?;
            linker::regression_svg(out.join("regression.svg"), &r)?;
            Some(r)
        }
        TaskArg::BinaryForest => None,
    };
    let path = out.join("metrics.json");
    linker::write_metrics_json(&path, forest.as_ref(), lasso.as_ref())?;
    println!("{}", path.display());
    Ok(())
}

fn run_gradcheck(seeds: u64) -> Result<(), CliError> {
    if seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    let results = gradcheck::run_suite(&(0..seeds).collect::<Vec<_>>());
    let mut failed = 0;
    for r in &results {
        println!(
            "{} {:<28} seed {} max_abs {:.3e} max_rel {:.3e}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.seed,
            r.deviation.max_abs,
            r.deviation.max_rel
        );
        failed += usize::from(!r.passed);
    }
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} of {} checks failed", results.len())));
    }
    Ok(())
}
