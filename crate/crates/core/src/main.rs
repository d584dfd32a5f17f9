use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rsgg::checkpoint::Checkpoint;
use rsgg::config::{ExperimentConfig, OracleChoice};
use rsgg::eval::{
    ablation_to_tsv, evaluate, evaluate_candidates, run_ablation, save_rows, score, AblationKind,
    Evaluation,
};
use rsgg::graph::{kfold_split, load_records, save_records, GraphRecords};
use rsgg::models::GanModel;
use rsgg::oracle::{train_gcn_oracle, GcnClassifier};
use rsgg::render::render_pictorial;
use rsgg::sampler::explain;
use rsgg::synth::generate_tree_cycles;
use rsgg::training::train;
use rsgg::{Dataset, Error, FoldAssignment, LabeledGraph, OracleHandle, Result};

#[derive(Parser)]
#[command(
    name = "rsgg",
    about = "Counterfactual explanations for graph classifiers"
)]
struct Cli {
    /// Experiment configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replaces every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset.
    GenData,
    /// Train the GCN oracle (no-op for the exact cycle oracle).
    TrainOracle,
    /// Train one generator/discriminator pair per fold and class.
    Train,
    /// Explain every test instance and write the candidates.
    Explain,
    /// Explain and score every test instance, or score external candidates.
    Evaluate {
        /// Score this candidate file instead of running the sampler.
        #[arg(long)]
        candidates: Option<PathBuf>,
    },
    /// Regenerate, retrain and evaluate over a grid of one data parameter.
    Ablate {
        /// cycle-size, cycle-count, node-count or dataset-size.
        #[arg(long)]
        kind: Option<String>,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<usize>>,
    },
    /// Render a results file as a raster image.
    Render {
        /// Results file; defaults to results.tsv in the output directory.
        #[arg(long)]
        results: Option<PathBuf>,
        /// Output image; defaults to pictorial.ppm in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    let out = cfg.output_dir();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write(&out.join("config.toml"), cfg.to_toml().as_bytes())?;

    match cli.command {
        Command::GenData => {
            let ds = generate_tree_cycles(&cfg.dataset.synth)?;
            let path = cfg.dataset_path();
            ds.save(&path)?;
            println!("wrote {} instances to {}", ds.len(), path.display());
        }
        Command::TrainOracle => match cfg.oracle.kind {
            OracleChoice::ExactCycle => println!("exact cycle oracle needs no training"),
            OracleChoice::TrainedGcn => {
                let ds = Dataset::load(cfg.dataset_path())?;
                let folds = kfold_split(&ds, cfg.evaluation.folds, cfg.evaluation.fold_seed)?;
                let (oracle, acc) = train_gcn_oracle(
                    &ds,
                    &folds.train_indices(0),
                    &folds.test_indices(0),
                    &cfg.oracle.gcn,
                )?;
                let rsgg::oracle::OracleKind::TrainedGcn(Some(model)) = oracle.kind() else {
                    unreachable!("trained oracle holds a model");
                };
                model.to_checkpoint().save(out.join("oracle.ckpt"))?;
                if let Some(a) = acc {
                    println!("held-out accuracy {a:.4}");
                }
            }
        },
        Command::Train => {
            let (ds, folds, oracle) = setup(&cfg, &out)?;
            let models = train(&ds, &folds, &oracle, &cfg.training)?;
            let dir = out.join("checkpoints");
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for fm in &models {
                for c in 0..2 {
                    fm.models[c]
                        .to_checkpoint()
                        .save(checkpoint_path(&out, fm.fold, c))?;
                    write(
                        &dir.join(format!("losses_fold{}_class{c}.tsv", fm.fold)),
                        fm.traces[c].to_tsv().as_bytes(),
                    )?;
                }
            }
            println!("trained {} folds", models.len());
        }
        Command::Explain => {
            let (ds, folds, oracle) = setup(&cfg, &out)?;
            let banks = load_models(&out, folds.k)?;
            let mut records = Vec::new();
            let mut rows = Vec::new();
            for (fold, bank) in banks.iter().enumerate() {
                for i in folds.test_indices(fold) {
                    let rec =
                        explain(&ds.instances[i].graph, i, fold, bank, &oracle, &cfg.sampler)?;
                    rows.push(score(&ds, &rec, &oracle)?);
                    if rec.valid {
                        let label = oracle.predict(&rec.candidate)?;
                        records.push((i, LabeledGraph::new(rec.candidate, label)?));
                    }
                }
            }
            save_records(
                &GraphRecords {
                    name: format!("{}-candidates", ds.name),
                    params: BTreeMap::new(),
                    records,
                },
                out.join("candidates.txt"),
            )?;
            save_rows(&rows, out.join("results.tsv"))?;
            println!("explained {} instances", rows.len());
        }
        Command::Evaluate { candidates } => {
            let (ds, folds, oracle) = setup(&cfg, &out)?;
            let mut ev = match candidates {
                Some(p) => {
                    let recs = load_records(&p)?;
                    let map = recs
                        .records
                        .into_iter()
                        .map(|(i, g)| (i, g.graph))
                        .collect();
                    evaluate_candidates(&ds, &folds, &oracle, &map)?
                }
                None => {
                    let banks = load_models(&out, folds.k)?;
                    evaluate(&ds, &folds, &oracle, &banks, &cfg.sampler)?
                }
            };
            ev.report.config_echo = cfg.to_toml();
            write_evaluation(&out, &ev)?;
            print!("{}", ev.report.to_text());
        }
        Command::Ablate { kind, grid } => {
            let kind = match kind {
                Some(k) => AblationKind::parse(&k)?,
                None => cfg.ablation.kind,
            };
            let grid = grid.unwrap_or_else(|| cfg.ablation.grid.clone());
            let oracle = build_oracle(&cfg, &out)?;
            let points = run_ablation(kind, &grid, &cfg.experiment_spec(), &oracle)?;
            let text = ablation_to_tsv(kind, &points);
            let name = serde_kind(kind);
            write(&out.join(format!("ablation_{name}.tsv")), text.as_bytes())?;
            print!("{text}");
        }
        Command::Render {
            results,
            out: img_path,
        } => {
            let ds = Dataset::load(cfg.dataset_path())?;
            let rows = rsgg::eval::load_rows(results.unwrap_or_else(|| out.join("results.tsv")))?;
            let (img, cells) = render_pictorial(&ds, &rows)?;
            let path = img_path.unwrap_or_else(|| out.join("pictorial.ppm"));
            img.save_ppm(&path)?;
            println!("rendered {} cells to {}", cells.len(), path.display());
        }
    }
    Ok(())
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn serde_kind(kind: AblationKind) -> &'static str {
    match kind {
        AblationKind::CycleSize => "cycle-size",
        AblationKind::CycleCount => "cycle-count",
        AblationKind::NodeCount => "node-count",
        AblationKind::DatasetSize => "dataset-size",
    }
}

fn build_oracle(cfg: &ExperimentConfig, out: &Path) -> Result<OracleHandle> {
    match cfg.oracle.kind {
        OracleChoice::ExactCycle => Ok(OracleHandle::exact_cycle()),
        OracleChoice::TrainedGcn => {
            let path = out.join("oracle.ckpt");
            if !path.exists() {
                return Err(Error::MissingCheckpoint(path.display().to_string()));
            }
            Ok(OracleHandle::gcn(GcnClassifier::from_checkpoint(
                &Checkpoint::load(&path)?,
            )?))
        }
    }
}

fn setup(cfg: &ExperimentConfig, out: &Path) -> Result<(Dataset, FoldAssignment, OracleHandle)> {
    let ds = Dataset::load(cfg.dataset_path())?;
    let folds = kfold_split(&ds, cfg.evaluation.folds, cfg.evaluation.fold_seed)?;
    let oracle = build_oracle(cfg, out)?;
    Ok((ds, folds, oracle))
}

fn checkpoint_path(out: &Path, fold: usize, class: usize) -> PathBuf {
    out.join("checkpoints")
        .join(format!("fold{fold}_class{class}.ckpt"))
}

fn load_models(out: &Path, k: usize) -> Result<Vec<[GanModel; 2]>> {
    let mut banks = Vec::with_capacity(k);
    for fold in 0..k {
        let mut pair = Vec::with_capacity(2);
        for c in 0..2 {
            let path = checkpoint_path(out, fold, c);
            if !path.exists() {
                return Err(Error::MissingCheckpoint(path.display().to_string()));
            }
            pair.push(GanModel::from_checkpoint(&Checkpoint::load(&path)?)?);
        }
        let [m0, m1]: [GanModel; 2] = pair.try_into().expect("two classes");
        banks.push([m0, m1]);
    }
    Ok(banks)
}

fn write_evaluation(out: &Path, ev: &Evaluation) -> Result<()> {
    save_rows(&ev.rows, out.join("results.tsv"))?;
    write(&out.join("report.txt"), ev.report.to_text().as_bytes())?;
    write(&out.join("timing.txt"), ev.report.timing_text().as_bytes())
}
