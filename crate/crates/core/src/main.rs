use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ivtsc::admm::sample_image;
use ivtsc::dgp::SimulationOptions;
use ivtsc::harness::{
    csv_io, evaluate, load_model, outputs, pgm, read_json, run_experiment, write_json, write_manifest, DgpChoice,
    ExperimentConfig, SimulateSpec,
};
use ivtsc::imaging::{jrp, rp, EmbeddingSpec, ImagingConfig, ThresholdSpec};
use ivtsc::interval::{combine, combine_mv};
use ivtsc::{admm, gradcheck, Error, Result};

#[derive(Parser)]
#[command(name = "ivtsc", version, about = "Interval-valued time series classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a labeled interval dataset and write it as CSV.
    Simulate(SimulateArgs),
    /// Render recurrence images of every sample as PGM files.
    Image(ImageArgs),
    /// Train a network and combination coefficients from a JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a trained model on an interval CSV.
    Eval(EvalArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    /// 1, 2, 3, c1 or c2.
    #[arg(long)]
    dgp: String,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-0.9,-0.5,0,0.3,0.7")]
    rhos: Vec<f64>,
    #[arg(long)]
    per_class: usize,
    #[arg(long)]
    length: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct ImagingArgs {
    /// Smoothness of the recurrence images; omit for hard images.
    #[arg(long)]
    nu: Option<f64>,
    /// fixed:X or q:Q.
    #[arg(long, default_value = "fixed:0.17453292519943295")]
    eps: String,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 1)]
    kappa: usize,
}

impl ImagingArgs {
    fn threshold(&self) -> Result<ThresholdSpec> {
        self.eps.parse()
    }

    fn embedding(&self) -> Result<EmbeddingSpec> {
        EmbeddingSpec::new(self.m, self.kappa)
    }
}

#[derive(Args, Serialize)]
struct ImageArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    imaging: ImagingArgs,
    /// JSON array of combination coefficients; defaults to the interval centres.
    #[arg(long)]
    alpha: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    alpha: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    nu: f64,
    #[arg(long, default_value = "fixed:0.17453292519943295")]
    eps: String,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 1)]
    kappa: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let spec = SimulateSpec {
        dgp: args.dgp.parse::<DgpChoice>()?,
        rhos: args.rhos.clone(),
        per_class: args.per_class,
        length: args.length,
        options: SimulationOptions::default(),
    };
    let data = spec.build(args.seed)?;
    csv_io::write_dataset_file(&data, &args.out)?;
    write_manifest(&manifest_path(&args.out), "simulate", Some(args.seed), &spec)?;
    println!("wrote {} samples to {}", data.len(), args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct IndexEntry {
    sample_id: String,
    label: usize,
    file: String,
    size: usize,
}

fn image(args: &ImageArgs) -> Result<()> {
    let data = csv_io::read_dataset_file(&args.input)?;
    let emb = args.imaging.embedding()?;
    let thr = args.imaging.threshold()?;
    let dim = admm::coefficient_dim(&data);
    let alpha: Vec<f64> = match &args.alpha {
        Some(path) => read_json(path)?,
        None => vec![0.5; dim],
    };
    if alpha.len() != dim {
        return Err(Error::LengthMismatch {
            expected: dim,
            got: alpha.len(),
        });
    }
    std::fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    let mut index = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let img = match &data.samples {
            ivtsc::dgp::Samples::Univariate(s) => {
                rp(&combine(s[i].lower(), s[i].upper(), &alpha)?, &emb, &thr, args.imaging.nu)?
            }
            ivtsc::dgp::Samples::Multivariate(s) => {
                let c = combine_mv(s[i].lower(), s[i].upper(), &alpha)?;
                jrp(&c, &emb, &vec![thr; c.len()], args.imaging.nu)?
            }
        };
        let id = csv_io::sample_id(i);
        let file = format!("{id}.pgm");
        pgm::export_pgm(&img, &args.out.join(&file))?;
        index.push(IndexEntry {
            sample_id: id,
            label: data.label(i).unwrap_or(0),
            file,
            size: img.size(),
        });
    }
    write_json(&args.out.join("index.json"), &index)?;
    write_manifest(&args.out.join(outputs::MANIFEST), "image", None, args)?;
    println!("wrote {} images to {}", index.len(), args.out.display());
    Ok(())
}

fn train(config: &Path) -> Result<()> {
    let cfg = ExperimentConfig::from_file(config)?;
    let result = run_experiment(&cfg)?;
    println!(
        "trained {} iterations; train accuracy {:.4}, eval accuracy {:.4}; outputs in {}",
        result.history.len(),
        result.train_report.scores.accuracy,
        result.eval_report.scores.accuracy,
        result.output_dir.display()
    );
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let imaging = ImagingConfig {
        emb: EmbeddingSpec::new(args.m, args.kappa)?,
        thr: args.eps.parse()?,
        nu: args.nu,
    };
    imaging.validate()?;
    let model = load_model(&args.model)?;
    let beta: Vec<f64> = read_json(&args.alpha)?;
    let data = csv_io::read_dataset_file(&args.input)?;
    // Fail early with a clear message if the geometry does not fit.
    sample_image(&data, 0, &beta, &imaging)?;
    let report = evaluate(&model, &data, &beta, &imaging)?;
    write_json(&args.report, &report)?;
    write_manifest(&manifest_path(&args.report), "eval", None, args)?;
    println!("accuracy {:.4} on {} samples", report.scores.accuracy, report.n_eval);
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate(args) => simulate(&args).map(|_| true),
        Command::Image(args) => image(&args).map(|_| true),
        Command::Train { config } => train(&config).map(|_| true),
        Command::Eval(args) => eval(&args).map(|_| true),
        Command::Gradcheck { seed, trials } => {
            let report = gradcheck::run(seed, trials)?;
            for s in &report.suites {
                println!(
                    "{:<10} max_rel_err {:.3e}  checked {:>7}  skipped {:>5}",
                    s.name, s.max_rel_err, s.checked, s.skipped
                );
            }
            let passed = report.passed();
            println!(
                "{} max_rel_err {:.3e} (tolerance {:.0e}, {} trials, seed {})",
                if passed { "PASS" } else { "FAIL" },
                report.max_rel_err(),
                report.tolerance,
                report.trials,
                report.seed
            );
            Ok(passed)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
