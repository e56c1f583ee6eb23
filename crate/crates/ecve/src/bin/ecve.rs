//! `ecve` command-line tool: fit reductions on CSV data, apply them, run
//! simulation studies, benchmark single cells, and self-check the gradient.

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use ecve::ensemble::{apply_ensemble, build_ensemble, ResponseScaler};
use ecve::objective::{
    gradient_ensemble, gradient_fd, ObjectiveConfig, Sample, Weighting,
};
use ecve::optimizer::OptimizerConfig;
use ecve::seed::split_seed;
use ecve::simulation::{
    aligned_table, generate, long_csv_rows, run_study, summary_csv_row, DistId, MethodSpec,
    ModelId, ModelSpec, PredictorDist, StudyResult, DEFAULT_P, LONG_CSV_HEADER,
    SUMMARY_CSV_HEADER,
};
use ecve::stiefel::random_stiefel;
use ecve::{bandwidth_rule, Bandwidth, EcveFit, EnsembleSpec, Error, Result};

#[derive(Parser)]
#[command(name = "ecve", version, about = "Ensemble conditional variance estimation for sufficient dimension reduction")]
struct Cli {
    /// Worker thread cap (falls back to ECVE_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON config file; CLI flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a reduction on a CSV dataset and save it as JSON.
    Fit(FitArgs),
    /// Apply a saved reduction to a CSV dataset.
    Reduce(ReduceArgs),
    /// Run a simulation study (possibly over several sample sizes).
    Simulate(SimArgs),
    /// Time a single simulation cell and print its summary.
    Bench(SimArgs),
    /// Verify the analytic gradient against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Name of the response column.
    #[arg(long)]
    response: Option<String>,
    /// Reduction dimension.
    #[arg(long)]
    k: Option<usize>,
    /// Method: ensemble spec plus optional `+weighted`, e.g. `fourier`,
    /// `indicator:8+weighted`.
    #[arg(long)]
    method: Option<String>,
    /// Comma-separated predictor columns to drop before fitting.
    #[arg(long)]
    drop: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output path for the fit JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReduceArgs {
    /// Saved fit JSON produced by `ecve fit`.
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Response column to pass through to the output (if present).
    #[arg(long)]
    response: Option<String>,
    /// Comma-separated predictor columns to drop (must match the fit).
    #[arg(long)]
    drop: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    /// Model id (M1..M7).
    #[arg(long)]
    model: Option<String>,
    /// Predictor distribution (I, II, III).
    #[arg(long)]
    dist: Option<String>,
    /// Sample size, or a comma-separated list for a sweep.
    #[arg(long)]
    n: Option<String>,
    /// Number of replicates.
    #[arg(long)]
    reps: Option<usize>,
    /// Method: ensemble spec plus optional `+weighted`.
    #[arg(long)]
    method: Option<String>,
    /// Override the model's true dimension (defaults to it).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the summary CSV here (long-format CSV goes next to it).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Flat optional mirror of the CLI flags, readable from a JSON config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    csv: Option<PathBuf>,
    response: Option<String>,
    k: Option<usize>,
    method: Option<String>,
    drop: Option<String>,
    model: Option<String>,
    dist: Option<String>,
    n: Option<String>,
    reps: Option<usize>,
    seed: Option<u64>,
    threads: Option<usize>,
    out: Option<PathBuf>,
    p: Option<usize>,
    q: Option<usize>,
    m: Option<usize>,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Io(format!("config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Parse(format!("config {}: {e}", p.display())))
        }
    }
}

fn pick<T: Clone>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn pick_req<T: Clone>(flag: Option<T>, file: Option<T>, what: &str) -> Result<T> {
    flag.or(file)
        .ok_or_else(|| Error::InvalidConfig(format!("missing required option --{what}")))
}

/// Write atomically: temp file in the destination directory, then rename.
fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty());
    let dir = dir.unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| Error::Io(format!("temp file in {}: {e}", dir.display())))?;
    use std::io::Write;
    tmp.write_all(contents.as_bytes())
        .map_err(|e| Error::Io(format!("write {}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| Error::Io(format!("rename into {}: {e}", path.display())))?;
    Ok(())
}

struct CsvData {
    headers: Vec<String>,
    columns: Vec<Vec<f64>>,
}

fn read_numeric_csv(path: &Path) -> Result<CsvData> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        if record.len() != headers.len() {
            return Err(Error::Parse(format!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                row_idx + 2,
                record.len(),
                headers.len()
            )));
        }
        for (col_idx, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Parse(format!(
                    "{}: non-numeric value '{field}' at row {}, column '{}'",
                    path.display(),
                    row_idx + 2,
                    headers[col_idx]
                ))
            })?;
            columns[col_idx].push(v);
        }
    }
    if columns.first().map_or(true, |c| c.is_empty()) {
        return Err(Error::DegenerateData(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok(CsvData { headers, columns })
}

fn parse_drop_list(spec: Option<&str>) -> Vec<String> {
    spec.map(|s| {
        s.split(',')
            .map(|t| t.trim().to_string())
            .filter(|t| !t.is_empty())
            .collect()
    })
    .unwrap_or_default()
}

/// Split a CSV into predictor matrix + names, optional response vector.
fn split_predictors(
    data: &CsvData,
    response: Option<&str>,
    drop: &[String],
) -> Result<(DMatrix<f64>, Vec<String>, Option<DVector<f64>>)> {
    for name in drop.iter().map(String::as_str).chain(response) {
        if !data.headers.iter().any(|h| h == name) {
            return Err(Error::InvalidConfig(format!(
                "column '{name}' not found; available: {}",
                data.headers.join(", ")
            )));
        }
    }
    let mut names = Vec::new();
    let mut cols: Vec<&Vec<f64>> = Vec::new();
    let mut y = None;
    for (h, col) in data.headers.iter().zip(&data.columns) {
        if Some(h.as_str()) == response {
            y = Some(DVector::from_column_slice(col));
        } else if !drop.iter().any(|d| d == h) {
            names.push(h.clone());
            cols.push(col);
        }
    }
    if cols.is_empty() {
        return Err(Error::DegenerateData("no predictor columns left".into()));
    }
    let n = cols[0].len();
    let x = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    Ok((x, names, y))
}

fn cmd_fit(args: FitArgs, file: &FileConfig) -> Result<()> {
    let csv_path = pick_req(args.csv, file.csv.clone(), "csv")?;
    let response = pick_req(args.response, file.response.clone(), "response")?;
    let k = pick(args.k, file.k, 1);
    let method_str = pick(args.method, file.method.clone(), "fourier".to_string());
    let drop_spec = args.drop.or_else(|| file.drop.clone());
    let seed = pick(args.seed, file.seed, 17);
    let out = pick(args.out, file.out.clone(), PathBuf::from("fit.json"));

    let method = MethodSpec::parse(&method_str)?;
    let data = read_numeric_csv(&csv_path)?;
    let drop = parse_drop_list(drop_spec.as_deref());
    let (x, names, y) = split_predictors(&data, Some(&response), &drop)?;
    let y = y.expect("response requested");
    if k >= x.ncols() {
        return Err(Error::InvalidDimension(format!(
            "k={k} must be smaller than the {} retained predictors",
            x.ncols()
        )));
    }

    let opt = OptimizerConfig {
        seed,
        ..OptimizerConfig::default()
    };
    let fitted = method.fit(&x, &y, k, &opt)?;

    println!(
        "fitted {} (k={k}, m={}, h={:.4}) on {} rows; objective {:.6}",
        method,
        fitted.config.m,
        fitted.config.bandwidth,
        x.nrows(),
        fitted.objective_value
    );
    println!();
    println!("coefficients of the estimated reduction (standardized predictors):");
    let b_std = fitted.standardized_basis();
    let width = names.iter().map(|s| s.len()).max().unwrap_or(8).max(8);
    for (i, name) in names.iter().enumerate() {
        let coefs: Vec<String> = (0..k)
            .map(|j| format!("{:>8.2}", b_std.matrix()[(i, j)]))
            .collect();
        println!("  {name:<width$} {}", coefs.join(" "));
    }

    atomic_write(&out, &fitted.to_json())?;
    println!();
    println!("fit written to {}", out.display());
    Ok(())
}

fn cmd_reduce(args: ReduceArgs, file: &FileConfig) -> Result<()> {
    let csv_path = pick_req(args.csv, file.csv.clone(), "csv")?;
    let out = pick(args.out, file.out.clone(), PathBuf::from("reduced.csv"));
    let fit_json = std::fs::read_to_string(&args.fit)
        .map_err(|e| Error::Io(format!("{}: {e}", args.fit.display())))?;
    let fitted = EcveFit::from_json(&fit_json)?;

    let data = read_numeric_csv(&csv_path)?;
    let drop = parse_drop_list(args.drop.as_deref().or(file.drop.as_deref()));
    let response = args.response.or_else(|| file.response.clone());
    let response = response.filter(|r| data.headers.iter().any(|h| h == r));
    let (x, _, y) = split_predictors(&data, response.as_deref(), &drop)?;
    if x.ncols() != fitted.p() {
        return Err(Error::InvalidDimension(format!(
            "fit expects p={} predictors, CSV provides {}",
            fitted.p(),
            x.ncols()
        )));
    }
    let reduced = fitted.reduce(&x)?;

    let mut outbuf = String::new();
    let mut header: Vec<String> = (1..=fitted.k()).map(|j| format!("z{j}")).collect();
    if let Some(r) = &response {
        header.push(r.clone());
    }
    outbuf.push_str(&header.join(","));
    outbuf.push('\n');
    for i in 0..reduced.nrows() {
        let mut fields: Vec<String> =
            (0..fitted.k()).map(|j| format!("{}", reduced[(i, j)])).collect();
        if let Some(yv) = &y {
            fields.push(format!("{}", yv[i]));
        }
        outbuf.push_str(&fields.join(","));
        outbuf.push('\n');
    }
    atomic_write(&out, &outbuf)?;
    println!(
        "reduced {} rows to {} columns; written to {}",
        reduced.nrows(),
        header.len(),
        out.display()
    );
    Ok(())
}

fn parse_n_list(spec: &str) -> Result<Vec<usize>> {
    let ns: Vec<usize> = spec
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Parse(format!("invalid sample size list '{spec}'")))?;
    if ns.is_empty() || ns.contains(&0) {
        return Err(Error::Parse(format!("invalid sample size list '{spec}'")));
    }
    Ok(ns)
}

fn run_sim_cells(args: SimArgs, file: &FileConfig) -> Result<(Vec<StudyResult>, Option<PathBuf>)> {
    let model_str = pick(args.model, file.model.clone(), "M1".to_string());
    let dist_str = pick(args.dist, file.dist.clone(), "I".to_string());
    let n_spec = pick(args.n, file.n.clone(), "100".to_string());
    let reps = pick(args.reps, file.reps, 30);
    let method_str = pick(args.method, file.method.clone(), "fourier".to_string());
    let seed = pick(args.seed, file.seed, 17);
    let out = args.out.or_else(|| file.out.clone());

    let model_id = ModelId::parse(&model_str)?;
    let mut model = ModelSpec::new(model_id);
    if let Some(k) = args.k.or(file.k) {
        if k < 1 || k >= model.p {
            return Err(Error::InvalidDimension(format!(
                "k={k} must satisfy 1 <= k < {}",
                model.p
            )));
        }
        model.k = k;
    }
    let dist = PredictorDist::new(DistId::parse(&dist_str)?, DEFAULT_P);
    let method = MethodSpec::parse(&method_str)?;
    let n_list = parse_n_list(&n_spec)?;
    let opt = OptimizerConfig::default();

    let mut results = Vec::new();
    for (i, &n) in n_list.iter().enumerate() {
        results.push(run_study(
            &model,
            &dist,
            n,
            &method,
            reps,
            split_seed(seed, 1000 + i as u64),
            &opt,
        )?);
    }
    Ok((results, out))
}

fn emit_results(results: &[StudyResult], out: Option<&Path>) -> Result<()> {
    print!("{}", aligned_table(results));
    if let Some(out) = out {
        let mut summary = String::from(SUMMARY_CSV_HEADER);
        summary.push('\n');
        for s in results {
            summary.push_str(&summary_csv_row(s));
            summary.push('\n');
        }
        atomic_write(out, &summary)?;
        let long_path = out.with_extension("long.csv");
        let mut long = String::from(LONG_CSV_HEADER);
        long.push('\n');
        for s in results {
            for row in long_csv_rows(s) {
                long.push_str(&row);
                long.push('\n');
            }
        }
        atomic_write(&long_path, &long)?;
        println!("summary CSV: {}", out.display());
        println!("per-replicate CSV: {}", long_path.display());
    }
    Ok(())
}

fn cmd_simulate(args: SimArgs, file: &FileConfig) -> Result<()> {
    let (results, out) = run_sim_cells(args, file)?;
    emit_results(&results, out.as_deref())
}

fn cmd_bench(args: SimArgs, file: &FileConfig) -> Result<()> {
    let started = Instant::now();
    let (results, out) = run_sim_cells(args, file)?;
    emit_results(&results, out.as_deref())?;
    println!("wall time: {:.2} s", started.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs, file: &FileConfig) -> Result<bool> {
    let p = pick(args.p, file.p, 5);
    let q = pick(args.q, file.q, 3);
    let n = pick(args.n, file.n.as_deref().and_then(|s| s.parse().ok()), 20);
    let m = pick(args.m, file.m, 4);
    let seed = pick(args.seed, file.seed, 17);
    if q >= p || n < 2 {
        return Err(Error::InvalidConfig(format!(
            "gradcheck needs q < p and n >= 2, got p={p} q={q} n={n}"
        )));
    }

    let kinds = ["fourier", "indicator", "monomial", "boxcox", "identity"];
    let eps = 1e-5;
    let mut max_rel = 0.0f64;
    for instance in 0..20 {
        let inst_seed = split_seed(seed, instance);
        let mut rng = ChaCha8Rng::seed_from_u64(inst_seed);
        let model = ModelSpec {
            id: ModelId::M2,
            k: p - q,
            p,
        };
        let dist = PredictorDist::new(DistId::I, p);
        let (x, y, _) = generate(&model, &dist, n, split_seed(inst_seed, 1))?;
        let kind_spec = kinds[instance as usize % kinds.len()];
        let spec = if kind_spec == "identity" {
            EnsembleSpec::parse(kind_spec)?
        } else {
            EnsembleSpec::parse(&format!("{kind_spec}:{m}"))?
        };
        let ensemble = build_ensemble(spec.kind, spec.resolve_m(n).min(m), &y)?;
        let scaler = ResponseScaler::fit(spec.kind, &y)?;
        let fy = apply_ensemble(&ensemble, &scaler, &y)?;
        let sample = Sample::new(x, y, fy)?;
        let h = bandwidth_rule(sample.x(), q)?;
        let weighting = if instance % 2 == 0 {
            Weighting::Uniform
        } else {
            Weighting::Weighted
        };
        let cfg = ObjectiveConfig::new(h, weighting);
        let v = random_stiefel(p, q, &mut rng)?;
        let analytic = gradient_ensemble(&v, &sample, &cfg)?;
        let fd = gradient_fd(&v, &sample, &cfg, eps)?;
        let rel = (&analytic - &fd).norm() / fd.norm().max(1e-12);
        max_rel = max_rel.max(rel);
    }
    println!("max relative error (analytic vs central FD, eps={eps:.0e}): {max_rel:.3e}");

    // Order check: halving eps should shrink the FD error about fourfold.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, 777));
        let model = ModelSpec {
            id: ModelId::M2,
            k: p - q,
            p,
        };
        let dist = PredictorDist::new(DistId::I, p);
        let (x, y, _) = generate(&model, &dist, n, split_seed(seed, 778))?;
        let spec = EnsembleSpec::parse(&format!("fourier:{m}"))?;
        let ensemble = build_ensemble(spec.kind, m, &y)?;
        let scaler = ResponseScaler::fit(spec.kind, &y)?;
        let fy = apply_ensemble(&ensemble, &scaler, &y)?;
        let sample = Sample::new(x, y, fy)?;
        let h = bandwidth_rule(sample.x(), q)?;
        let cfg = ObjectiveConfig::new(h, Weighting::Uniform);
        let v = random_stiefel(p, q, &mut rng)?;
        let analytic = gradient_ensemble(&v, &sample, &cfg)?;
        let e_coarse = (gradient_fd(&v, &sample, &cfg, 1e-3)? - &analytic).norm();
        let e_fine = (gradient_fd(&v, &sample, &cfg, 5e-4)? - &analytic).norm();
        if e_fine > 0.0 {
            println!(
                "eps halving 1e-3 -> 5e-4: FD error {:.3e} -> {:.3e} (ratio {:.2}, expect ~4)",
                e_coarse,
                e_fine,
                e_coarse / e_fine
            );
        }
    }

    // Constant responses must give a numerically zero gradient.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, 999));
        let dist = PredictorDist::new(DistId::I, p);
        let model = ModelSpec {
            id: ModelId::M1,
            k: p - q,
            p,
        };
        let (x, _, _) = generate(&model, &dist, n, split_seed(seed, 1000))?;
        let y = DVector::from_element(n, 3.5);
        let fy = DMatrix::from_element(n, 1, 3.5);
        let sample = Sample::new(x, y, fy)?;
        let h = Bandwidth::new(1.0)?;
        let cfg = ObjectiveConfig::new(h, Weighting::Uniform);
        let v = random_stiefel(p, q, &mut rng)?;
        let g = gradient_ensemble(&v, &sample, &cfg)?;
        println!("constant-response gradient norm: {:.3e}", g.norm());
    }

    let pass = max_rel < 1e-4;
    println!("gradcheck: {}", if pass { "PASS" } else { "FAIL" });
    Ok(pass)
}

fn configure_threads(cli_threads: Option<usize>, file_threads: Option<usize>) -> Result<()> {
    let env_threads = std::env::var("ECVE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    if let Some(t) = cli_threads.or(env_threads).or(file_threads) {
        if t == 0 {
            return Err(Error::InvalidConfig("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run() -> Result<bool> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let file = load_config(cli.config.as_deref())?;
    configure_threads(cli.threads, file.threads)?;
    match cli.command {
        Command::Fit(args) => cmd_fit(args, &file).map(|()| true),
        Command::Reduce(args) => cmd_reduce(args, &file).map(|()| true),
        Command::Simulate(args) => cmd_simulate(args, &file).map(|()| true),
        Command::Bench(args) => cmd_bench(args, &file).map(|()| true),
        Command::Gradcheck(args) => cmd_gradcheck(args, &file),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
