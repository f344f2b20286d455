//! gazepipe: synthetic eye-gaze dataset generation, evaluation runs and
//! figure export.
//!
//! Exit codes: 0 success, 2 configuration/validation error, 3 I/O error,
//! 4 runtime cell failure.

mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gazepipe_core::error::Error;
use gazepipe_core::figures;
use gazepipe_core::harness::{
    render_table, run_plan, train_cell_models, CellReport, EvalReport, ExperimentPlan, InputSet,
    Profile,
};
use gazepipe_core::io as gio;
use gazepipe_core::ml::{serialize, ClassifierKind};
use gazepipe_core::pipeline::{preprocess_dataset, PreprocessedDataset};
use gazepipe_core::synthgen::{gen_dataset, ExperimentKind};

#[derive(Parser)]
#[command(
    name = "gazepipe",
    version,
    about = "Eye-gaze variation estimation pipeline: synthesis, evaluation, figures"
)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Generate a synthetic dataset from a key=value config file
    Synth {
        /// Generator config (experiment, subjects, trials, seed, ...)
        #[arg(long)]
        config: PathBuf,
        /// Output dataset directory
        #[arg(long)]
        out: PathBuf,
        /// Override the config's master seed
        #[arg(long)]
        seed: Option<u64>,
        /// Force the degraded-NEMG failure mode
        #[arg(long)]
        degraded_nemg: bool,
        /// Override the config's noise scale
        #[arg(long)]
        noise_scale: Option<f64>,
    },
    /// Preprocess a dataset and run the evaluation grid
    Run {
        /// Plan config (profile, input_sets, classifiers, repetitions, seed)
        #[arg(long)]
        config: PathBuf,
        /// Dataset directory produced by `synth`
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory for the report files
        #[arg(long)]
        out: PathBuf,
        /// Override the plan profile (ci or full)
        #[arg(long)]
        profile: Option<String>,
        /// Override the plan master seed
        #[arg(long)]
        seed: Option<u64>,
        /// Also save one trained model per cell (first repetition's split)
        #[arg(long)]
        save_models: Option<PathBuf>,
    },
    /// Emit class-mean waveform panels and the peak curve (SVG + CSV)
    Plot {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render the accuracy table from a per-repetition CSV
    Table {
        /// repetitions.csv written by `run`
        #[arg(long)]
        repetitions: PathBuf,
        /// Write the table here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Model file utilities
    Model {
        #[command(subcommand)]
        command: ModelCommands,
    },
}

#[derive(Subcommand)]
enum ModelCommands {
    /// Print the header of a serialized model file
    Dump { path: PathBuf },
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// GAZEPIPE_THREADS caps the rayon worker count.
fn configure_threads() {
    if let Ok(value) = std::env::var("GAZEPIPE_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
            }
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Validation(_) | Error::DegenerateInput(_) => 2,
        Error::Io(_) => 3,
        Error::Training(_) | Error::Cell { .. } => 4,
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Commands::Synth { config, out, seed, degraded_nemg, noise_scale } => {
            cmd_synth(&config, &out, seed, degraded_nemg, noise_scale)
        }
        Commands::Run { config, dataset, out, profile, seed, save_models } => {
            cmd_run(&config, &dataset, &out, profile, seed, save_models)
        }
        Commands::Plot { dataset, out } => cmd_plot(&dataset, &out),
        Commands::Table { repetitions, out } => cmd_table(&repetitions, out),
        Commands::Model { command: ModelCommands::Dump { path } } => cmd_model_dump(&path),
    }
}

fn cmd_synth(
    config_path: &Path,
    out: &Path,
    seed: Option<u64>,
    degraded_nemg: bool,
    noise_scale: Option<f64>,
) -> Result<(), Error> {
    let text = fs::read_to_string(config_path)?;
    let mut config = gio::parse_generator_config(&text)?;
    if let Some(seed) = seed {
        config.master_seed = seed;
    }
    if degraded_nemg {
        config.degraded_nemg = true;
    }
    if let Some(ns) = noise_scale {
        config.noise_scale = ns;
    }
    config.validate()?;

    let dataset = gen_dataset(&config)?;
    gio::write_dataset(&dataset, out)?;
    println!(
        "wrote {} {} segments to {}",
        dataset.segments.len(),
        config.experiment.name(),
        out.display()
    );
    Ok(())
}

fn load_preprocessed(dataset_dir: &Path) -> Result<PreprocessedDataset, Error> {
    let dataset = gio::read_dataset(dataset_dir)?;
    preprocess_dataset(&dataset)
}

fn cmd_run(
    config_path: &Path,
    dataset_dir: &Path,
    out: &Path,
    profile: Option<String>,
    seed: Option<u64>,
    save_models: Option<PathBuf>,
) -> Result<(), Error> {
    let dataset = gio::read_dataset(dataset_dir)?;
    let text = fs::read_to_string(config_path)?;
    let mut plan = gio::parse_plan(&text, dataset.config.experiment)?;
    if let Some(name) = profile {
        let profile = Profile::from_name(&name)?;
        plan.repetitions = profile.repetitions(dataset.config.experiment);
        plan.nn_epochs = profile.nn_epochs(dataset.config.experiment);
    }
    if let Some(seed) = seed {
        plan.master_seed = seed;
    }
    plan.validate()?;

    let pre = preprocess_dataset(&dataset)?;
    let report = run_plan(&plan, &pre)?;
    let written = gio::write_report(&report, out)?;
    for path in &written {
        println!("wrote {}", path.display());
    }
    print!("{}", render_table(&report));

    if let Some(model_dir) = save_models {
        fs::create_dir_all(&model_dir)?;
        for (name, model) in train_cell_models(&plan, &pre, 0)? {
            let path = model_dir.join(format!("{name}.gzml"));
            let mut file = fs::File::create(&path)?;
            serialize::write_model(&model, &mut file)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn write_panel(
    out: &Path,
    stem: &str,
    title: &str,
    y_label: &str,
    fig: &figures::FigureData,
) -> Result<(), Error> {
    fs::write(out.join(format!("{stem}.csv")), fig.to_csv())?;
    let series: Vec<svg::Series> = fig
        .curves
        .iter()
        .map(|c| svg::Series {
            label: format!("{:+.0} deg", c.delta_deg),
            points: fig.time_s.iter().copied().zip(c.mean.iter().copied()).collect(),
        })
        .collect();
    fs::write(
        out.join(format!("{stem}.svg")),
        svg::line_chart(title, "time after switch (s)", y_label, &series),
    )?;
    println!("wrote {}/{stem}.csv and .svg", out.display());
    Ok(())
}

fn cmd_plot(dataset_dir: &Path, out: &Path) -> Result<(), Error> {
    let pre = load_preprocessed(dataset_dir)?;
    fs::create_dir_all(out)?;

    write_panel(
        out,
        "heog_class_means",
        "Class-mean HEOG waveforms",
        "normalized HEOG",
        &figures::heog_class_means(&pre)?,
    )?;

    let peaks = figures::heog_peak_curve(&pre)?;
    fs::write(out.join("heog_peak_curve.csv"), peaks.to_csv())?;
    let series = vec![svg::Series {
        label: "mean signed peak".to_string(),
        points: peaks.points.iter().map(|&(d, m, _)| (d, m)).collect(),
    }];
    fs::write(
        out.join("heog_peak_curve.svg"),
        svg::line_chart(
            "HEOG peak vs eye-gaze variation",
            "gaze variation (deg)",
            "normalized signed peak",
            &series,
        ),
    )?;
    println!("wrote {}/heog_peak_curve.csv and .svg", out.display());

    match figures::yaw_class_means(&pre)? {
        Some(fig) => {
            write_panel(out, "yaw_class_means", "Class-mean head yaw", "normalized yaw", &fig)?
        }
        None => eprintln!("warning: no IMU data, skipping yaw panel"),
    }
    match figures::nemg_class_means(&pre)? {
        Some((left, right)) => {
            write_panel(
                out,
                "nemg_rms_left_class_means",
                "Class-mean left SCM RMS envelope",
                "normalized RMS",
                &left,
            )?;
            write_panel(
                out,
                "nemg_rms_right_class_means",
                "Class-mean right SCM RMS envelope",
                "normalized RMS",
                &right,
            )?;
        }
        None => eprintln!("warning: no NEMG data, skipping envelope panels"),
    }
    Ok(())
}

/// Rebuild cell summaries from a repetitions.csv written by `run`.
fn cmd_table(repetitions: &Path, out: Option<PathBuf>) -> Result<(), Error> {
    let text = fs::read_to_string(repetitions)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::validation("empty repetitions file".to_string()))?;
    if header != "input_set,classifier,repetition,accuracy_pct" {
        return Err(Error::validation(format!("unexpected header `{header}`")));
    }

    let mut order: Vec<(InputSet, ClassifierKind)> = Vec::new();
    let mut accs: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::validation(format!("line {}: expected 4 fields", ln + 2)));
        }
        let set = InputSet::from_name(fields[0])?;
        let clf = ClassifierKind::from_name(fields[1])?;
        let acc: f64 = fields[3]
            .parse()
            .map_err(|_| Error::validation(format!("line {}: bad accuracy", ln + 2)))?;
        let key = (set, clf);
        match order.iter().position(|&k| k == key) {
            Some(i) => accs[i].push(acc),
            None => {
                order.push(key);
                accs.push(vec![acc]);
            }
        }
    }
    if order.is_empty() {
        return Err(Error::validation("repetitions file has no rows".to_string()));
    }

    let cells: Vec<CellReport> = order
        .iter()
        .zip(&accs)
        .map(|(&(input_set, classifier), per_rep)| {
            let n = per_rep.len() as f64;
            let mean = per_rep.iter().sum::<f64>() / n;
            let var = per_rep.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
            CellReport {
                input_set,
                classifier,
                per_repetition_pct: per_rep.clone(),
                mean_pct: mean,
                std_pct: var.sqrt(),
                confusion: Vec::new(),
            }
        })
        .collect();

    let mut input_sets: Vec<InputSet> = order.iter().map(|&(s, _)| s).collect();
    input_sets.sort();
    input_sets.dedup();
    let mut classifiers: Vec<ClassifierKind> = order.iter().map(|&(_, c)| c).collect();
    classifiers.sort();
    classifiers.dedup();
    // Presentation-only plan echo; rendering uses the set/classifier lists.
    let report = EvalReport {
        plan: ExperimentPlan {
            experiment: ExperimentKind::HeadFree,
            input_sets,
            classifiers,
            train_fraction: 0.8,
            repetitions: accs[0].len(),
            nn_epochs: 1,
            master_seed: 0,
        },
        classes: 0,
        test_counts: Vec::new(),
        cells,
    };
    let table = render_table(&report);
    match out {
        Some(path) => fs::write(path, table)?,
        None => print!("{table}"),
    }
    Ok(())
}

fn cmd_model_dump(path: &Path) -> Result<(), Error> {
    let mut file = fs::File::open(path)?;
    print!("{}", serialize::dump_header(&mut file)?);
    Ok(())
}
