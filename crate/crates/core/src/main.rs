use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cnmix::cn::fit_cn;
use cnmix::io::datasets::{self, CATALOG};
use cnmix::io::study::{write_flags_csv, write_study_csv};
use cnmix::io::{
    emit_plot_data, load_csv, load_model, parse_values, run_perturbation_study, save_model, Dataset,
    LoadOptions, ModelDocument, StudySettings,
};
use cnmix::modelsel::{fit_candidate, grid_search, Family, FitStatus, FittedModel, ModelId};
use cnmix::{Error, FitConfig};

/// Contaminated Gaussian models with automatic detection of bad points.
#[derive(Parser)]
#[command(name = "cnmix", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one contaminated Gaussian distribution.
    FitCn(FitArgs),
    /// Fit a Gaussian factor analysis model.
    FitGfa(FitArgs),
    /// Fit a contaminated Gaussian factor analysis model.
    FitCnfa(FitArgs),
    /// Fit a mixture of Gaussian factor analyzers.
    FitMgfa(FitArgs),
    /// Fit a mixture of contaminated Gaussian factor analyzers.
    FitMcnfa(FitArgs),
    /// Grid search over components and factors, ranked by BIC.
    Select(SelectArgs),
    /// Emit point and contour tables for a saved model.
    PlotData(PlotArgs),
    /// Refit after overwriting one cell with a range of values.
    PerturbStudy(StudyArgs),
    /// List the reference datasets.
    Datasets,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// CSV file, or a dataset name from `datasets`.
    #[arg(long)]
    input: String,
    /// Categorical column to keep out of the fit.
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long, default_value = ",")]
    delimiter: char,
    /// Z-score every variable before fitting.
    #[arg(long)]
    standardize: bool,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    #[arg(long, default_value_t = 0.5)]
    alpha_min: f64,
    #[arg(long, default_value_t = 0.001)]
    epsilon: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl ConfigArgs {
    fn config(&self) -> FitConfig {
        FitConfig {
            alpha_min: self.alpha_min,
            epsilon: self.epsilon,
            max_iter: self.max_iter,
            seed: self.seed,
            ..FitConfig::default()
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Number of factors.
    #[arg(long, default_value_t = 1)]
    q: usize,
    /// Number of mixture components.
    #[arg(long, default_value_t = 1)]
    g: usize,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out_model: Option<PathBuf>,
    #[arg(long)]
    out_flags: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    /// gfa, cnfa, mgfa or mcnfa.
    #[arg(long, default_value = "mcnfa", value_parser = parse_family)]
    family: Family,
    #[arg(long, default_value = "1..3", value_parser = parse_range)]
    g_range: SizeRange,
    #[arg(long, default_value = "1..3", value_parser = parse_range)]
    q_range: SizeRange,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out_model: Option<PathBuf>,
    #[arg(long)]
    out_flags: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Contour grid size per axis (two-variable models only).
    #[arg(long, default_value_t = 100)]
    grid: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StudyArgs {
    /// CSV file or dataset name.
    #[arg(long)]
    dataset: String,
    #[arg(long)]
    label_column: Option<String>,
    /// One-based row to perturb.
    #[arg(long)]
    row: usize,
    #[arg(long)]
    column: String,
    /// Values as lo:hi:step.
    #[arg(long)]
    values: String,
    #[arg(long, default_value = "mcnfa", value_parser = parse_family)]
    family: Family,
    #[arg(long, default_value = "1..3", value_parser = parse_range)]
    g_range: SizeRange,
    #[arg(long, default_value = "1..3", value_parser = parse_range)]
    q_range: SizeRange,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
}

fn parse_family(s: &str) -> Result<Family, String> {
    match s {
        "gfa" => Ok(Family::Gfa),
        "cnfa" => Ok(Family::Cnfa),
        "mgfa" => Ok(Family::Mgfa),
        "mcnfa" => Ok(Family::Mcnfa),
        _ => Err(format!("unknown family '{s}' (gfa, cnfa, mgfa, mcnfa)")),
    }
}

/// Inclusive `A..B` range of component or factor counts.
#[derive(Clone, Debug)]
struct SizeRange(Vec<usize>);

fn parse_range(s: &str) -> Result<SizeRange, String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected A..B, got '{s}'"))?;
    let a: usize = a.trim().parse().map_err(|_| format!("bad range start in '{s}'"))?;
    let b: usize = b.trim().parse().map_err(|_| format!("bad range end in '{s}'"))?;
    if a == 0 || b < a {
        return Err(format!("range '{s}' must satisfy 1 <= A <= B"));
    }
    Ok(SizeRange((a..=b).collect()))
}

/// Failures split by exit code: bad input vs. numerical trouble.
enum Failure {
    Usage(String),
    Fit(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::NonNumericColumn(_)
            | Error::SchemaMismatch(_)
            | Error::InvalidArgument(_)
            | Error::DimensionMismatch { .. }
            | Error::DimensionUnsupported(_)
            | Error::InvalidRank { .. } => Failure::Usage(e.to_string()),
            other => Failure::Fit(other),
        }
    }
}

fn load(args: &DataArgs) -> Result<Dataset, Failure> {
    if args.input == "state.x77" || args.input == "f.voles" {
        let mut d = datasets::resolve(&args.input)?;
        if args.standardize {
            d.data = d.data.standardized();
            d.standardized = true;
        }
        return Ok(d);
    }
    let delimiter = u8::try_from(args.delimiter)
        .map_err(|_| Failure::Usage(format!("--delimiter '{}' is not a single byte", args.delimiter)))?;
    let opts = LoadOptions {
        delimiter,
        label_column: args.label_column.clone(),
        standardize: args.standardize,
    };
    Ok(load_csv(&args.input, &opts)?)
}

fn fit(family: Option<Family>, args: &FitArgs) -> Result<(), Failure> {
    let d = load(&args.data)?;
    let cfg = args.config.config();
    let labels = d.labels.as_deref();
    let (doc, good, weights) = match family {
        None => {
            let r = fit_cn(&d.data, &cfg)?;
            let doc = ModelDocument::from_cn(&r, &d.data, &cfg, d.standardized)?;
            println!("alpha = {:.6}, eta = {:.6}", r.params.alpha, r.params.eta);
            (doc, r.good_prob, r.weights)
        }
        Some(family) => {
            let id = ModelId {
                family,
                g: args.g,
                q: args.q,
            };
            let fitted = fit_candidate(&d.data, id, &cfg)?;
            let doc = ModelDocument::from_fitted(&fitted, &d.data, &cfg, d.standardized);
            let (good, weights) = match &fitted {
                FittedModel::Single(r) => {
                    if r.contaminated {
                        println!("alpha = {:.6}, eta = {:.6}", r.params.alpha, r.params.eta);
                    }
                    (r.good_prob.clone(), r.weights.clone())
                }
                FittedModel::Mixture(r) => {
                    for (g, c) in r.params.components.iter().enumerate() {
                        println!(
                            "component {}: pi = {:.4}, alpha = {:.6}, eta = {:.6}",
                            g + 1,
                            r.params.pi[g],
                            c.alpha,
                            c.eta
                        );
                    }
                    let w = (0..r.labels.len()).map(|i| r.w[(i, r.labels[i])]).collect();
                    (r.good_prob.clone(), w)
                }
            };
            (doc, good, weights)
        }
    };
    summarize(&doc, &good, labels);
    if let Some(p) = &args.out_model {
        save_model(&doc, p)?;
    }
    if let Some(p) = &args.out_flags {
        write_flags_csv(p, labels, &good, &weights)?;
    }
    Ok(())
}

fn summarize(doc: &ModelDocument, good: &[f64], labels: Option<&[String]>) {
    let md = &doc.metadata;
    println!(
        "{:?}: loglik = {:.4}, m = {}, BIC = {:.4}, iterations = {}{}",
        doc.family,
        md.loglik,
        md.m,
        md.bic,
        md.iterations,
        if md.converged { "" } else { " (not converged)" }
    );
    let bad: Vec<String> = good
        .iter()
        .enumerate()
        .filter(|(_, g)| cnmix::cn::is_bad(**g))
        .map(|(i, _)| labels.map_or_else(|| format!("row {}", i + 1), |l| format!("{} (row {})", l[i], i + 1)))
        .collect();
    println!("bad points: {}", if bad.is_empty() { "none".into() } else { bad.join(", ") });
}

fn select(args: &SelectArgs) -> Result<(), Failure> {
    let d = load(&args.data)?;
    let cfg = args.config.config();
    let g_range = if args.family.is_mixture() { args.g_range.0.clone() } else { vec![1] };
    let grid = grid_search(&d.data, args.family, &g_range, &args.q_range.0, &cfg)?;
    println!("{:>3} {:>3} {:>5} {:>14} {:>14}  status", "G", "q", "m", "loglik", "BIC");
    for s in grid.ranked() {
        match &s.status {
            FitStatus::Fitted => println!("{:>3} {:>3} {:>5} {:>14.4} {:>14.4}  ok", s.id.g, s.id.q, s.m, s.loglik, s.bic),
            FitStatus::Failed(why) => println!("{:>3} {:>3} {:>5} {:>14} {:>14}  failed: {why}", s.id.g, s.id.q, "-", "-", "-"),
        }
    }
    let best = grid.best_fit();
    let doc = ModelDocument::from_fitted(best, &d.data, &cfg, d.standardized);
    let (good, weights) = match best {
        FittedModel::Single(r) => (r.good_prob.clone(), r.weights.clone()),
        FittedModel::Mixture(r) => (
            r.good_prob.clone(),
            (0..r.labels.len()).map(|i| r.w[(i, r.labels[i])]).collect(),
        ),
    };
    let id = grid.best().score.id;
    println!("selected G = {}, q = {}", id.g, id.q);
    summarize(&doc, &good, d.labels.as_deref());
    if let Some(p) = &args.out_model {
        save_model(&doc, p)?;
    }
    if let Some(p) = &args.out_flags {
        write_flags_csv(p, d.labels.as_deref(), &good, &weights)?;
    }
    Ok(())
}

fn plot(args: &PlotArgs) -> Result<(), Failure> {
    let doc = load_model(&args.model)?;
    let mut data_args = args.data.clone();
    // the document records whether it was fitted on standardized data
    data_args.standardize = false;
    let d = load(&data_args)?;
    let grid = (doc.p() == 2).then_some(args.grid);
    if grid.is_none() {
        eprintln!("note: {}; writing the point table only", Error::DimensionUnsupported(doc.p()));
    }
    let out = emit_plot_data(&doc, &d, grid)?;
    let text = serde_json::to_string_pretty(&out).expect("plot documents serialize");
    std::fs::write(&args.out, text).map_err(|e| Failure::Usage(format!("{}: {e}", args.out.display())))?;
    println!("wrote {} points{}", out.points.len(), if out.contour.is_some() { " and a contour grid" } else { "" });
    Ok(())
}

fn study(args: &StudyArgs) -> Result<(), Failure> {
    let d = load(&DataArgs {
        input: args.dataset.clone(),
        label_column: args.label_column.clone(),
        delimiter: ',',
        standardize: false,
    })?;
    if args.row == 0 {
        return Err(Failure::Usage("--row is one-based".into()));
    }
    let values = parse_values(&args.values)?;
    let settings = StudySettings {
        family: args.family,
        g_range: if args.family.is_mixture() { args.g_range.0.clone() } else { vec![1] },
        q_range: args.q_range.0.clone(),
        cfg: args.config.config(),
    };
    let rows = run_perturbation_study(&d, args.row - 1, &args.column, &values, &settings)?;
    write_study_csv(&rows, &args.out)?;
    let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
    println!("{:>10} {:>3} {:>3} {:>14} {:>6} {:>5} {:>10}  status", "value", "G", "q", "BIC", "miscl", "bad", "eta");
    for r in &rows {
        println!(
            "{:>10} {:>3} {:>3} {:>14} {:>6} {:>5} {:>10}  {}",
            r.value,
            opt(r.best_g.map(|v| v.to_string())),
            opt(r.best_q.map(|v| v.to_string())),
            opt(r.bic.map(|v| format!("{v:.3}"))),
            opt(r.misclassified.map(|v| v.to_string())),
            opt(r.perturbed_bad.map(|v| v.to_string())),
            opt(r.eta.map(|v| format!("{v:.3}"))),
            r.status
        );
    }
    Ok(())
}

fn list_datasets() {
    for d in CATALOG {
        let label = d.label.map_or_else(String::new, |l| format!(" + label {l}"));
        println!("{:<10} {}x{}{}  {}", d.name, d.shape.0, d.shape.1, label, d.description);
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::FitCn(a) => fit(None, a),
        Command::FitGfa(a) => fit(Some(Family::Gfa), a),
        Command::FitCnfa(a) => fit(Some(Family::Cnfa), a),
        Command::FitMgfa(a) => fit(Some(Family::Mgfa), a),
        Command::FitMcnfa(a) => fit(Some(Family::Mcnfa), a),
        Command::Select(a) => select(a),
        Command::PlotData(a) => plot(a),
        Command::PerturbStudy(a) => study(a),
        Command::Datasets => {
            list_datasets();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Fit(e)) => {
            eprintln!("fit failed: {e}");
            ExitCode::from(2)
        }
    }
}
