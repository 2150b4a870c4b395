use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mflo_cli::error::{CliError, CliResult};
use mflo_cli::export::{extension, state_from_report, write_state, Which};
use mflo_cli::job::{load_job, ExportFormat};
use mflo_cli::pipeline::{decompose, history_csv, rank_csv, run_fit};
use mflo_cli::report::FitReport;
use mflo_cli::verify::{format_table, run_battery, GATE_TABLE};
use mflo_core::basis::DEFAULT_MAX_QUBITS;
use mflo_core::encoding::{cnot_count_canonical, cnot_count_tucker, two_center_analysis};

#[derive(Parser)]
#[command(name = "mflo", version, about = "Fit molecular orbitals with discrete Lorentzians and cost their encoding circuits")]
struct Cli {
    /// Worker threads for grid assembly and CP restarts. Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit every orbital of a job, sweep CP ranks and write the report.
    Fit(FitArgs),
    /// Redo the rank sweep of an existing report.
    Decompose(DecomposeArgs),
    /// CNOT and ancilla counts for given Lorentzian counts.
    GateCount(GateCountArgs),
    /// Write the ideal, Tucker or canonical statevector of a fitted orbital.
    ExportState(ExportArgs),
    /// Success probability of a two-Lorentzian superposition against θ, as CSV.
    TwoCenter(TwoCenterArgs),
    /// Run the verification battery.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    job: PathBuf,
    /// Report path; overrides the job's `outputs.report`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Per-axis qubit limit for statevector exports.
    #[arg(long, default_value_t = DEFAULT_MAX_QUBITS)]
    max_qubits: u32,
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    ranks: Vec<usize>,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GateCountArgs {
    /// Lorentzians per direction, e.g. `3,3,3`.
    #[arg(long, value_delimiter = ',', required_unless_present = "table")]
    counts: Vec<usize>,
    #[arg(long, required_unless_present = "table")]
    n_qe: Option<u32>,
    /// Also count the canonical form of this rank.
    #[arg(long)]
    rank: Option<usize>,
    /// Print the built-in table of published counts instead.
    #[arg(long, conflicts_with_all = ["counts", "n_qe", "rank"])]
    table: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Form {
    Ideal,
    Tucker,
    Canonical,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Binary,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    orbital: String,
    #[arg(long, value_enum)]
    which: Form,
    /// Requested rank of the canonical form.
    #[arg(long, required_if_eq("which", "canonical"))]
    rank: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_QUBITS)]
    max_qubits: u32,
}

#[derive(Args)]
struct TwoCenterArgs {
    #[arg(long, default_value_t = 5)]
    n: u32,
    #[arg(long)]
    a: f64,
    #[arg(long)]
    ka: usize,
    #[arg(long)]
    kb: usize,
    /// θ samples, evenly spaced over [−π/2, π/2].
    #[arg(long, default_value_t = 21)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Also fit this job and check its report.
    #[arg(long)]
    job: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_QUBITS)]
    max_qubits: u32,
}

fn write_out(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io("<stdout>", e)),
    }
}

fn read_report(path: &Path) -> CliResult<FitReport> {
    FitReport::from_json(&std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?)
}

fn fit(args: FitArgs) -> CliResult<()> {
    let job = load_job(&args.job)?;
    let report = run_fit(&job, args.seed)?;
    let job_dir = args.job.parent().unwrap_or(Path::new("."));
    let report_path = args
        .out
        .clone()
        .or_else(|| job.outputs.report.as_ref().map(|r| job_dir.join(r)));
    write_out(report_path.as_deref(), &report.to_json())?;

    let (dir, stem) = match &report_path {
        Some(p) => (
            p.parent().unwrap_or(Path::new(".")).to_path_buf(),
            p.file_stem().map_or("report".into(), |s| s.to_string_lossy().into_owned()),
        ),
        None => (job_dir.to_path_buf(), job.name.clone()),
    };
    let side = |orbital: &str, what: &str, ext: &str| dir.join(format!("{stem}.{orbital}.{what}.{ext}"));
    for o in &report.orbitals {
        if job.outputs.history_csv {
            let p = side(&o.name, "history", "csv");
            std::fs::write(&p, history_csv(o)).map_err(|e| CliError::io(&p, e))?;
        }
        if job.outputs.rank_csv {
            let p = side(&o.name, "ranks", "csv");
            std::fs::write(&p, rank_csv(o)).map_err(|e| CliError::io(&p, e))?;
        }
        if job.outputs.export_states {
            let format = job.outputs.export_format;
            let mut forms = vec![Which::Ideal, Which::Tucker];
            forms.extend(o.canonical.iter().map(|c| Which::Canonical(c.requested_rank)));
            for w in forms {
                let state = state_from_report(&report, &o.name, w, args.max_qubits)?;
                write_state(&side(&o.name, &w.file_stem(), extension(format)), &state, w, format)?;
            }
        }
    }
    let failed = report.failed_checks();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verify(failed))
    }
}

fn gate_count(args: GateCountArgs) -> CliResult<()> {
    let mut reports = Vec::new();
    if args.table {
        for row in GATE_TABLE {
            reports.push(cnot_count_tucker(row.counts, row.n_qe)?);
            if let Some((rank, _)) = row.canonical {
                reports.push(cnot_count_canonical(row.counts, row.n_qe, rank)?);
            }
        }
    } else {
        let counts: [usize; 3] = args
            .counts
            .try_into()
            .map_err(|_| CliError::schema("/counts", "give exactly three Lorentzian counts"))?;
        let n_qe = args.n_qe.expect("clap enforces n_qe");
        reports.push(cnot_count_tucker(counts, n_qe)?);
        if let Some(rank) = args.rank {
            reports.push(cnot_count_canonical(counts, n_qe, rank)?);
        }
    }
    let text = if args.json {
        serde_json::to_string_pretty(&reports).expect("reports serialize") + "\n"
    } else {
        let mut s = String::from("form       counts      n_qe  R   ancillas  S-ph  amp   total\n");
        for r in &reports {
            let form = match r.form {
                mflo_core::encoding::Form::Tucker => "tucker",
                mflo_core::encoding::Form::Canonical => "canonical",
            };
            let c = r.lorentzian_counts;
            let anc = r.ancillas.lorentzian + r.ancillas.canonical.unwrap_or(0);
            s.push_str(&format!(
                "{form:<10} {:<11} {:<5} {:<3} {:<9} {:<5} {:<5} {}\n",
                format!("{},{},{}", c[0], c[1], c[2]),
                r.n_qe,
                r.rank.map_or("-".into(), |x| x.to_string()),
                anc,
                r.sph,
                r.amp,
                r.total
            ));
        }
        s
    };
    write_out(None, &text)
}

fn export_state(args: ExportArgs) -> CliResult<()> {
    let report = read_report(&args.report)?;
    let which = match args.which {
        Form::Ideal => Which::Ideal,
        Form::Tucker => Which::Tucker,
        Form::Canonical => Which::Canonical(args.rank.expect("clap enforces rank")),
    };
    let format = match args.format {
        Format::Csv => ExportFormat::Csv,
        Format::Binary => ExportFormat::Binary,
    };
    let state = state_from_report(&report, &args.orbital, which, args.max_qubits)?;
    write_state(&args.out, &state, which, format)
}

fn two_center(args: TwoCenterArgs) -> CliResult<()> {
    if args.points < 2 {
        return Err(CliError::schema("/points", "need at least two θ samples"));
    }
    let step = std::f64::consts::PI / (args.points - 1) as f64;
    let thetas: Vec<f64> = (0..args.points)
        .map(|i| -std::f64::consts::FRAC_PI_2 + i as f64 * step)
        .collect();
    let table = two_center_analysis(args.n, args.a, args.ka, args.kb, &thetas)?;
    write_out(args.out.as_deref(), &table.to_csv())
}

fn verify(args: VerifyArgs) -> CliResult<()> {
    let job = args.job.as_deref().map(load_job).transpose()?;
    let outcomes = run_battery(&GATE_TABLE, job.as_ref(), args.max_qubits);
    write_out(None, &format_table(&outcomes))?;
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name.clone()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verify(failed))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", CliError::Compute(e.to_string()).to_json());
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Fit(a) => fit(a),
        Command::Decompose(a) => (|| {
            let mut report = read_report(&a.report)?;
            decompose(&mut report, &a.ranks, a.restarts, a.seed)?;
            write_out(a.out.as_deref(), &report.to_json())
        })(),
        Command::GateCount(a) => gate_count(a),
        Command::ExportState(a) => export_state(a),
        Command::TwoCenter(a) => two_center(a),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
