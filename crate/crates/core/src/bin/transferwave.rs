//! Command-line entry point: load a filter bank (JSON file or builtin),
//! run the analysis pipeline, and write the serialized report plus optional
//! CSV sample dumps.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use transferwave::cli::{
    analyze, cascade_samples_csv, exit_code_for, load_filter, p_samples_csv, AnalyzeOptions,
    BUILTINS,
};
use transferwave::trigmat::el_condition;

#[derive(Parser, Debug)]
#[command(
    name = "transferwave",
    about = "Spectral analysis of matrix-valued transfer operators for multiwavelet filter banks"
)]
struct Args {
    /// Filter spec JSON file (alternative to --builtin)
    file: Option<PathBuf>,

    /// Builtin filter name
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(BUILTINS))]
    builtin: Option<String>,

    /// Numerical tolerance for certificates
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,

    /// Grid level: 2^level sample points per dimension
    #[arg(long, default_value_t = 8)]
    grid_level: u32,

    /// Depth cap for cascade iterations
    #[arg(long, default_value_t = 20)]
    max_depth: usize,

    /// Output directory for report.json (stdout when omitted)
    #[arg(long)]
    output: Option<PathBuf>,

    /// Seed for the Wedderburn generic element
    #[arg(long, default_value_t = 7)]
    seed: u64,

    /// Also emit CSV sample dumps of P(x) and a cascade run
    #[arg(long, default_value_t = false)]
    samples: bool,
}

fn run(args: &Args) -> transferwave::Result<()> {
    let source = match (&args.file, &args.builtin) {
        (Some(path), None) => path.to_string_lossy().to_string(),
        (None, Some(name)) => name.clone(),
        (Some(_), Some(_)) => {
            return Err(transferwave::Error::ParseError(
                "pass either a file or --builtin, not both".into(),
            ))
        }
        (None, None) => {
            return Err(transferwave::Error::ParseError(
                "no input: pass a filter spec file or --builtin <name>".into(),
            ))
        }
    };

    let t_load = Instant::now();
    let (m, sys, spec) = load_filter(&source)?;
    let name = spec.name.clone().unwrap_or_else(|| source.clone());
    eprintln!("loaded `{name}` in {:?}", t_load.elapsed());

    let opts = AnalyzeOptions {
        tol: args.tol,
        grid_level: args.grid_level,
        max_depth: args.max_depth,
        seed: args.seed,
    };
    let t_run = Instant::now();
    let analysis = analyze(&m, &sys, &name, &opts)?;
    eprintln!("analysis completed in {:?}", t_run.elapsed());

    let json = analysis.report.to_json();
    match &args.output {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join("report.json");
            std::fs::write(&path, &json)?;
            eprintln!("report written to {}", path.display());
        }
        None => print!("{json}"),
    }

    if args.samples {
        let dir = args.output.clone().unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir)?;
        let el = el_condition(&m, &sys, args.tol)?;
        if el.holds && analysis.report.qmf.passes {
            let t_csv = Instant::now();
            let points: Vec<Vec<f64>> = sample_points(sys.n());
            let pcsv = p_samples_csv(&m, &sys, &el, &points, args.tol.max(1e-10))?;
            std::fs::write(dir.join("p_samples.csv"), pcsv)?;
            let ccsv = cascade_samples_csv(
                &m,
                &sys,
                &el,
                analysis.strong.as_ref(),
                &points,
                args.max_depth,
            )?;
            std::fs::write(dir.join("cascade_samples.csv"), ccsv)?;
            eprintln!("sample CSVs written in {:?}", t_csv.elapsed());
        } else {
            eprintln!("samples skipped: QMF + E(l) preconditions not met");
        }
    }
    Ok(())
}

fn sample_points(n: usize) -> Vec<Vec<f64>> {
    match n {
        1 => (-256..=256).map(|i| vec![i as f64 / 64.0]).collect(),
        _ => {
            let per = 33i64;
            let mut out = Vec::new();
            let mut idx = vec![0i64; n];
            loop {
                out.push(idx.iter().map(|&i| (i - per / 2) as f64 / 8.0).collect());
                let mut dim = 0;
                loop {
                    idx[dim] += 1;
                    if idx[dim] < per {
                        break;
                    }
                    idx[dim] = 0;
                    dim += 1;
                    if dim == n {
                        return out;
                    }
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e) as u8)
        }
    }
}
