mod manifest;
mod output;

use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use procal::attacks::{self, AttackConfig, AttackReport};
use procal::baselines::{CondensationConfig, RandomRotationConfig, DEFAULT_RP_ITERATIONS, DEFAULT_RP_SIGMA};
use procal::dataset;
use procal::grouping::GroupingConfig;
use procal::stream::{self, CsvSource, RecordSource, StreamConfig};
use procal::synth::{self, BlobSpec};
use procal::utility::{self, CvConfig};
use procal::{seed, Dataset, Error, PerturbConfig, PerturbMethod, PerturbedDataset};

use manifest::Manifest;

const DEFAULT_KPRIME: usize = 100;

#[derive(Parser)]
#[command(name = "procal", version, about = "Rotation-based condensation perturbation and its evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Perturb a CSV dataset, statically or as a stream.
    Perturb(PerturbArgs),
    /// Run naive-inference, known-I/O and ICA attacks and report resilience.
    Attack(AttackArgs),
    /// Compare 1-NN cross-validated accuracy of original and perturbed data.
    Evaluate(EvaluateArgs),
    /// Time perturbation over a sweep of synthetic dataset sizes.
    Bench(BenchArgs),
    /// Re-run a command from its manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Procal,
    Dc,
    Rp,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Static,
    Stream,
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Input CSV; `-` reads standard input.
    #[arg(long = "in")]
    input: PathBuf,
    /// 0-based position of the class column.
    #[arg(long)]
    class_col: Option<usize>,
    /// Input has no header row.
    #[arg(long)]
    no_header: bool,
}

#[derive(Args, Clone)]
struct GroupingArgs {
    /// Number of k-means clusters.
    #[arg(long, conflicts_with = "kprime")]
    k: Option<usize>,
    /// Records per group (default 100).
    #[arg(long)]
    kprime: Option<usize>,
}

#[derive(Args, Clone)]
struct RpArgs {
    /// Random rotation candidates.
    #[arg(long, default_value_t = DEFAULT_RP_ITERATIONS)]
    iterations: usize,
    /// Spread of random rotation candidates around the identity.
    #[arg(long, default_value_t = DEFAULT_RP_SIGMA)]
    sigma: f64,
}

#[derive(Args)]
struct PerturbArgs {
    #[arg(long, value_enum, default_value_t = Method::Procal)]
    method: Method,
    #[arg(long, value_enum, default_value_t = Mode::Static)]
    mode: Mode,
    #[command(flatten)]
    grouping: GroupingArgs,
    /// Stream buffer size l.
    #[arg(long)]
    buffer: Option<usize>,
    /// Stream chunks per release t.
    #[arg(long)]
    threshold: Option<usize>,
    /// Stream replay rate limit in rows per second.
    #[arg(long)]
    rate: Option<f64>,
    #[command(flatten)]
    rp: RpArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    input: InputArgs,
    /// Output CSV; `-` writes standard output.
    #[arg(long)]
    out: PathBuf,
    /// Also write `<out>.provenance.csv` mapping output rows to input rows.
    #[arg(long)]
    test_mode: bool,
    /// Manifest path (default `<out>.manifest`).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Methods to regenerate and attack, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "procal,dc,rp")]
    method: Vec<Method>,
    /// Attack an existing perturbed CSV instead of regenerating.
    #[arg(long, requires = "provenance")]
    perturbed: Option<PathBuf>,
    /// Provenance sidecar of `--perturbed`.
    #[arg(long)]
    provenance: Option<PathBuf>,
    #[command(flatten)]
    grouping: GroupingArgs,
    #[command(flatten)]
    rp: RpArgs,
    #[arg(long, default_value_t = attacks::DEFAULT_KNOWN_FRACTION)]
    known_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report CSV; an aligned table goes next to it with a `.txt` extension.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "procal,dc,rp")]
    methods: Vec<Method>,
    #[command(flatten)]
    grouping: GroupingArgs,
    #[command(flatten)]
    rp: RpArgs,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 1)]
    knn_k: usize,
    /// Z-normalize features on each training fold before kNN.
    #[arg(long)]
    normalize: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Accuracy CSV; an aligned table goes next to it with a `.txt` extension.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Sweep {
    M,
    N,
}

#[derive(Args)]
struct BenchArgs {
    /// Which dimension to sweep.
    #[arg(long, value_enum)]
    sweep: Sweep,
    /// Values of the swept dimension.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<usize>,
    /// Value of the other dimension.
    #[arg(long)]
    fixed: usize,
    #[command(flatten)]
    grouping: GroupingArgs,
    #[arg(long, value_enum, default_value_t = Mode::Static)]
    mode: Mode,
    #[arg(long, default_value_t = 1000)]
    buffer: usize,
    #[arg(long, default_value_t = 3)]
    threshold: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Timing CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Core(Error),
    Io(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Core(e) => match e {
                Error::InvalidGroupSize(_)
                | Error::InvalidClusterCount { .. }
                | Error::InvalidStreamConfig(_)
                | Error::InvalidConfig(_)
                | Error::InvalidClassColumn { .. } => 2,
                Error::ConvergenceFailure { .. }
                | Error::NonConvergence { .. }
                | Error::DegenerateSystem(_)
                | Error::NoFallbackAvailable => 4,
                _ => 3,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Io(m) => m.clone(),
            CliError::Core(e) => format!("{e} ({e:?})"),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    match run(argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(argv: Vec<String>) -> CliResult<()> {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                return Err(CliError::Usage(e.to_string().trim_end().to_string()));
            }
            print!("{e}");
            return Ok(());
        }
    };
    let args = argv[1..].to_vec();
    match cli.command {
        Command::Perturb(a) => cmd_perturb(a, args),
        Command::Attack(a) => cmd_attack(a, args),
        Command::Evaluate(a) => cmd_evaluate(a, args),
        Command::Bench(a) => cmd_bench(a, args),
        Command::Replay { manifest } => {
            let recorded = manifest::read_args(&manifest).map_err(CliError::Io)?;
            if recorded.first().map(String::as_str) == Some("replay") {
                return Err(CliError::Usage("a manifest cannot replay another replay".into()));
            }
            let mut argv = vec![argv[0].clone()];
            argv.extend(recorded);
            run(argv)
        }
    }
}

fn is_std(path: &Path) -> bool {
    path.as_os_str() == "-"
}

fn load_input(input: &InputArgs) -> CliResult<Dataset> {
    let header = !input.no_header;
    if is_std(&input.input) {
        Ok(dataset::read_csv(io::stdin().lock(), header, input.class_col)?)
    } else {
        Ok(dataset::load_csv(&input.input, header, input.class_col)?)
    }
}

fn grouping_config(g: &GroupingArgs, seed: u64) -> GroupingConfig {
    let gseed = seed::derive(seed, "cli-grouping", 0);
    match g.k {
        Some(k) => GroupingConfig::by_cluster_count(k, gseed),
        None => GroupingConfig::by_group_size(g.kprime.unwrap_or(DEFAULT_KPRIME), gseed),
    }
}

fn method_config(method: Method, g: &GroupingArgs, rp: &RpArgs, seed: u64) -> CliResult<PerturbMethod> {
    let mseed = seed::derive(seed, "cli-method", method as u64);
    Ok(match method {
        Method::Procal => {
            PerturbMethod::Procal(PerturbConfig::new(grouping_config(g, seed), mseed).with_provenance())
        }
        Method::Dc => {
            if g.k.is_some() {
                return Err(CliError::Usage("dc groups by size: use --kprime, not --k".into()));
            }
            PerturbMethod::Condensation(CondensationConfig::new(g.kprime.unwrap_or(DEFAULT_KPRIME), mseed))
        }
        Method::Rp => PerturbMethod::RandomRotation(RandomRotationConfig {
            iterations: rp.iterations,
            sigma: rp.sigma,
            ..RandomRotationConfig::with_seed(mseed)
        }),
    })
}

fn manifest_path(explicit: &Option<PathBuf>, out: &Path) -> PathBuf {
    explicit.clone().unwrap_or_else(|| {
        if is_std(out) {
            PathBuf::from("procal.manifest")
        } else {
            output::with_suffix(out, ".manifest")
        }
    })
}

fn csv_bytes(d: &Dataset, header: bool) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    d.write_csv(&mut buf, header)?;
    Ok(buf)
}

fn provenance_bytes(p: &[usize]) -> Vec<u8> {
    let mut s = String::from("source_row\n");
    for i in p {
        s.push_str(&i.to_string());
        s.push('\n');
    }
    s.into_bytes()
}

fn emit(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if is_std(path) {
        let mut out = io::stdout().lock();
        out.write_all(bytes).and_then(|_| out.flush()).map_err(io_err(path))
    } else {
        output::write_atomic(path, bytes).map_err(io_err(path))
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn cmd_perturb(a: PerturbArgs, args: Vec<String>) -> CliResult<()> {
    let start = Instant::now();
    let header = !a.input.no_header;
    let mut outputs = vec![path_str(&a.out)];
    let provenance_path = output::with_suffix(&a.out, ".provenance.csv");
    if a.test_mode && is_std(&a.out) {
        return Err(CliError::Usage("--test-mode needs a file --out for the provenance sidecar".into()));
    }
    if a.mode == Mode::Stream {
        if a.method != Method::Procal {
            return Err(CliError::Usage("stream mode is only available for --method procal".into()));
        }
        let (Some(l), Some(t)) = (a.buffer, a.threshold) else {
            return Err(CliError::Usage("stream mode needs --buffer and --threshold".into()));
        };
        let mut cfg = StreamConfig::new(l, t, grouping_config(&a.grouping, a.seed), seed::derive(a.seed, "cli-stream", 0));
        cfg.keep_provenance = a.test_mode;
        let provenance = if is_std(&a.input.input) {
            let src = CsvSource::stdin(header, a.input.class_col)?;
            run_stream(src, cfg, &a.out, header)?
        } else {
            let src = CsvSource::replay(&a.input.input, header, a.input.class_col, a.rate)?;
            run_stream(src, cfg, &a.out, header)?
        };
        if let Some(p) = provenance {
            emit(&provenance_path, &provenance_bytes(&p))?;
            outputs.push(path_str(&provenance_path));
        }
    } else {
        if a.buffer.is_some() || a.threshold.is_some() || a.rate.is_some() {
            return Err(CliError::Usage("--buffer, --threshold and --rate apply to --mode stream only".into()));
        }
        let d = load_input(&a.input)?;
        let method = method_config(a.method, &a.grouping, &a.rp, a.seed)?;
        let p = method.apply(&d)?;
        emit(&a.out, &csv_bytes(&p.data, header)?)?;
        if a.test_mode {
            emit(&provenance_path, &provenance_bytes(p.provenance()?))?;
            outputs.push(path_str(&provenance_path));
        }
    }
    Manifest {
        command: "perturb".into(),
        args,
        seed: a.seed,
        inputs: vec![path_str(&a.input.input)],
        outputs,
        timings: vec![("total".into(), start.elapsed())],
    }
    .write(&manifest_path(&a.manifest, &a.out))
    .map_err(io_err(&a.out))
}

/// Streams releases to `out` in order; returns the concatenated provenance
/// when the config keeps it.
fn run_stream<S: RecordSource>(
    source: S,
    cfg: StreamConfig,
    out: &Path,
    header: bool,
) -> CliResult<Option<Vec<usize>>> {
    let session = stream::open_stream(source, cfg)?;
    let mut provenance = cfg.keep_provenance.then(Vec::new);
    if is_std(out) {
        let stdout = io::stdout();
        let mut w = BufWriter::new(stdout.lock());
        write_releases(session, &mut w, header, &mut provenance)?;
        w.flush().map_err(io_err(out))?;
    } else {
        let tmp = output::temp_beside(out).map_err(io_err(out))?;
        let mut w = BufWriter::new(tmp);
        write_releases(session, &mut w, header, &mut provenance)?;
        let tmp = w.into_inner().map_err(|e| CliError::Io(format!("{}: {}", out.display(), e.error())))?;
        tmp.persist(out).map_err(|e| CliError::Io(format!("{}: {}", out.display(), e.error)))?;
    }
    Ok(provenance)
}

fn write_releases<S: RecordSource, W: Write>(
    mut session: stream::StreamSession<S>,
    w: &mut W,
    header: bool,
    provenance: &mut Option<Vec<usize>>,
) -> CliResult<()> {
    let mut first = true;
    while let Some(block) = session.next_release()? {
        let d = session.template().with_records(block.rows)?;
        d.write_csv(&mut *w, header && first)?;
        first = false;
        if let (Some(all), Some(p)) = (provenance.as_mut(), block.provenance) {
            all.extend(p);
        }
    }
    if first && header {
        // empty stream: still emit the header
        session.template().write_csv(&mut *w, true)?;
    }
    Ok(())
}

fn read_provenance(path: &Path, rows: usize) -> CliResult<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let p: Vec<usize> = text
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse()
                .map_err(|_| CliError::Io(format!("{}: bad row index {l:?}", path.display())))
        })
        .collect::<CliResult<_>>()?;
    if p.len() != rows {
        return Err(CliError::Core(Error::ProvenanceMissing));
    }
    Ok(p)
}

fn cmd_attack(a: AttackArgs, args: Vec<String>) -> CliResult<()> {
    let start = Instant::now();
    let d = load_input(&a.input)?;
    let cfg = AttackConfig {
        known_fraction: a.known_fraction,
        seed: seed::derive(a.seed, "cli-attack", 0),
    };
    let mut inputs = vec![path_str(&a.input.input)];
    let mut reports: Vec<AttackReport> = Vec::new();
    if let Some(pp) = &a.perturbed {
        let prov_path = a.provenance.as_ref().expect("clap requires --provenance");
        let data = dataset::load_csv(pp, !a.input.no_header, a.input.class_col)?;
        let provenance = Some(read_provenance(prov_path, data.len())?);
        let p = PerturbedDataset { data, provenance };
        reports.push(attacks::attack_report(&path_str(pp), &d, &p, &cfg)?);
        inputs.push(path_str(pp));
        inputs.push(path_str(prov_path));
    } else {
        for &m in &a.method {
            let method = method_config(m, &a.grouping, &a.rp, a.seed)?;
            let p = method.apply(&d)?;
            reports.push(attacks::attack_report(&method.name(), &d, &p, &cfg)?);
        }
    }
    let txt = output::text_companion(&a.out);
    emit(&a.out, attacks::reports_to_csv(&reports).as_bytes())?;
    emit(&txt, attacks::reports_to_table(&reports).as_bytes())?;
    Manifest {
        command: "attack".into(),
        args,
        seed: a.seed,
        inputs,
        outputs: vec![path_str(&a.out), path_str(&txt)],
        timings: vec![("total".into(), start.elapsed())],
    }
    .write(&manifest_path(&a.manifest, &a.out))
    .map_err(io_err(&a.out))
}

fn cmd_evaluate(a: EvaluateArgs, args: Vec<String>) -> CliResult<()> {
    let start = Instant::now();
    let d = load_input(&a.input)?;
    let methods = a
        .methods
        .iter()
        .map(|&m| method_config(m, &a.grouping, &a.rp, a.seed))
        .collect::<CliResult<Vec<_>>>()?;
    let cv = CvConfig {
        folds: a.folds,
        knn_k: a.knn_k,
        seed: seed::derive(a.seed, "cli-cv", 0),
        normalize: a.normalize,
    };
    let table = utility::utility_comparison(&d, &methods, &cv)?;
    let txt = output::text_companion(&a.out);
    emit(&a.out, table.to_csv().as_bytes())?;
    emit(&txt, table.to_table().as_bytes())?;
    Manifest {
        command: "evaluate".into(),
        args,
        seed: a.seed,
        inputs: vec![path_str(&a.input.input)],
        outputs: vec![path_str(&a.out), path_str(&txt)],
        timings: vec![("total".into(), start.elapsed())],
    }
    .write(&manifest_path(&a.manifest, &a.out))
    .map_err(io_err(&a.out))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn cmd_bench(a: BenchArgs, args: Vec<String>) -> CliResult<()> {
    let start = Instant::now();
    if a.repeats == 0 {
        return Err(CliError::Usage("--repeats must be positive".into()));
    }
    let mut csv = String::from("sweep,m,n,mode,repeats,data_sha256,output_sha256,median_seconds,min_seconds\n");
    let mut timings = Vec::new();
    for &v in &a.values {
        let (m, n) = match a.sweep {
            Sweep::M => (v, a.fixed),
            Sweep::N => (a.fixed, v),
        };
        let d = synth::gaussian_blobs(&BlobSpec::default().with_size(m, n), seed::derive(a.seed, "cli-bench-data", 0));
        let method = match a.mode {
            Mode::Static => PerturbMethod::Procal(PerturbConfig::new(
                grouping_config(&a.grouping, a.seed),
                seed::derive(a.seed, "cli-bench", 0),
            )),
            Mode::Stream => PerturbMethod::ProcalStream(StreamConfig::new(
                a.buffer,
                a.threshold,
                grouping_config(&a.grouping, a.seed),
                seed::derive(a.seed, "cli-bench", 0),
            )),
        };
        let mut times: Vec<Duration> = Vec::with_capacity(a.repeats);
        let mut out = None;
        for _ in 0..a.repeats {
            let t = Instant::now();
            let p = method.apply(&d)?;
            times.push(t.elapsed());
            out = Some(p);
        }
        times.sort();
        let median = times[times.len() / 2];
        let out = out.expect("repeats > 0");
        let sweep = match a.sweep {
            Sweep::M => "m",
            Sweep::N => "n",
        };
        let mode = match a.mode {
            Mode::Static => "static",
            Mode::Stream => "stream",
        };
        csv.push_str(&format!(
            "{sweep},{m},{n},{mode},{},{},{},{:.6},{:.6}\n",
            a.repeats,
            sha256_hex(&csv_bytes(&d, true)?),
            sha256_hex(&csv_bytes(&out.data, true)?),
            median.as_secs_f64(),
            times[0].as_secs_f64(),
        ));
        timings.push((format!("{sweep}{v}_median"), median));
    }
    emit(&a.out, csv.as_bytes())?;
    timings.push(("total".into(), start.elapsed()));
    Manifest {
        command: "bench".into(),
        args,
        seed: a.seed,
        inputs: vec![],
        outputs: vec![path_str(&a.out)],
        timings,
    }
    .write(&manifest_path(&a.manifest, &a.out))
    .map_err(io_err(&a.out))
}
