//! `mmsynth`: preprocessing, LiDAR-to-mmWave conversion, consistency loss
//! and pose metrics over sequence files.
//!
//! Exit codes: 0 success, 1 parse / I/O / configuration error, 2 contract
//! violation (unlabeled input to `convert`, missing predictions, misaligned
//! sequences, missing seed, bad command line).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mmwave_synth::convert::{convert_sequence_with_stats, extended_skeleton_flow, interpolate_point_flow, StageStats};
use mmwave_synth::io::{load_config, read_sequence, write_sequence_as, Config, Encoding};
use mmwave_synth::metrics::frame_metrics;
use mmwave_synth::preprocess::preprocess_sequence;
use mmwave_synth::rng::fnv1a;
use mmwave_synth::utcl::{mse_loss, utcl_loss};
use mmwave_synth::{Error, SeededRng, Sequence};
use rayon::prelude::*;

const STAGES_SUFFIX: &str = ".stages.csv";
const STAGES_HEADER: &str = "t,input,after_npa,after_fpf,after_rs,after_ni,nu,mean_flow_all,mean_flow_kept";
const STATS_HEADER: &str = "file,t,points,after_npa,after_fpf,after_rs,after_ni";
const HIST_HEADER: &str = "file,bin_lo_m,bin_hi_m,count";
const HIST_BIN_M: f64 = 0.01;
const HIST_BINS: usize = 20;

#[derive(Parser)]
#[command(
    name = "mmsynth",
    version,
    about = "LiDAR-to-mmWave point cloud conversion and pose evaluation"
)]
struct Cli {
    /// Suppress summaries on stdout.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize, box-filter, augment and resample sequences.
    Preprocess {
        #[command(flatten)]
        io: Batch,
        /// Skip the rigid augmentation (no seed needed).
        #[arg(long)]
        no_augment: bool,
    },
    /// Convert labeled LiDAR sequences to mmWave-style sequences.
    Convert {
        #[command(flatten)]
        io: Batch,
    },
    /// Evaluate the temporal consistency loss on adjacent predicted frames.
    Loss {
        /// Sequence providing the point clouds.
        #[arg(long = "in")]
        input: PathBuf,
        /// Sequence of predicted skeletons, same timesteps.
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth sequence for the supervised term.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// MPJPE and PA-MPJPE in cm.
    Metrics {
        /// Predicted sequence; repeat for several sequences.
        #[arg(long, required = true)]
        pred: Vec<PathBuf>,
        /// Ground-truth sequence, paired with --pred by position.
        #[arg(long, required = true)]
        gt: Vec<PathBuf>,
    },
    /// Per-frame point counts and flow-magnitude histograms as CSV.
    Stats {
        #[arg(long = "in", required = true)]
        input: Vec<PathBuf>,
        /// Per-frame CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Flow-magnitude histogram CSV (labeled inputs only).
        #[arg(long)]
        hist: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Batch {
    /// Sequence file or directory of sequence files.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output file, or directory when --in is a directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config file seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for directory inputs (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Binary,
}

impl From<Format> for Encoding {
    fn from(f: Format) -> Self {
        match f {
            Format::Text => Encoding::Text,
            Format::Binary => Encoding::Binary,
        }
    }
}

enum Failure {
    /// Unreadable or malformed input, bad config, failed write.
    Input(String),
    Contract(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Contract(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Contract(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_parse_or_io() {
            Failure::Input(e.to_string())
        } else {
            Failure::Contract(e.to_string())
        }
    }
}

type CmdResult = Result<(), Failure>;

fn context(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| match Failure::from(e) {
        Failure::Input(m) if m.starts_with(&*path.to_string_lossy()) => Failure::Input(m),
        Failure::Input(m) => Failure::Input(format!("{}: {m}", path.display())),
        Failure::Contract(m) => Failure::Contract(format!("{}: {m}", path.display())),
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Input(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Preprocess { io, no_augment } => cmd_preprocess(&io, !no_augment, cli.quiet),
        Command::Convert { io } => cmd_convert(&io, cli.quiet),
        Command::Loss {
            input,
            pred,
            gt,
            config,
        } => cmd_loss(&input, &pred, gt.as_deref(), config.as_deref()),
        Command::Metrics { pred, gt } => cmd_metrics(&pred, &gt),
        Command::Stats { input, out, hist } => cmd_stats(&input, out.as_deref(), hist.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("mmsynth: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn load(config: Option<&Path>) -> Result<Config, Failure> {
    match config {
        Some(p) => load_config(p).map_err(Failure::from),
        None => Ok(Config::default()),
    }
}

/// One input file and where its output goes.
struct Job {
    input: PathBuf,
    output: PathBuf,
    /// Name relative to the input root; keys the file's RNG stream.
    name: String,
}

fn plan(batch: &Batch) -> Result<Vec<Job>, Failure> {
    let meta = fs::metadata(&batch.input).map_err(|e| io_failure(&batch.input, e))?;
    if !meta.is_dir() {
        let name = batch
            .input
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        return Ok(vec![Job {
            input: batch.input.clone(),
            output: batch.out.clone(),
            name,
        }]);
    }
    fs::create_dir_all(&batch.out).map_err(|e| io_failure(&batch.out, e))?;
    let mut names = Vec::new();
    for entry in fs::read_dir(&batch.input).map_err(|e| io_failure(&batch.input, e))? {
        let entry = entry.map_err(|e| io_failure(&batch.input, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with('.') || name.ends_with(STAGES_SUFFIX) || !entry.path().is_file() {
            continue;
        }
        names.push(name);
    }
    names.sort();
    Ok(names
        .into_iter()
        .map(|name| Job {
            input: batch.input.join(&name),
            output: batch.out.join(&name),
            name,
        })
        .collect())
}

/// Runs `f` over every job on a pool of `jobs` threads; results come back
/// in job order regardless of scheduling.
fn run_jobs<T: Send>(
    jobs: &[Job],
    threads: Option<usize>,
    f: impl Fn(&Job) -> Result<T, Failure> + Sync,
) -> Result<Vec<Result<T, Failure>>, Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Contract(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| jobs.par_iter().map(&f).collect()))
}

fn require_seed(batch: &Batch, cfg: &Config) -> Result<u64, Failure> {
    batch
        .seed
        .or(cfg.seed)
        .ok_or_else(|| Failure::Contract("a seed is required (--seed or `seed` in the config)".into()))
}

/// Reports every per-file failure, returns the first in job order.
fn settle<T>(results: Vec<Result<T, Failure>>) -> Result<Vec<T>, Failure> {
    let mut ok = Vec::new();
    let mut first = None;
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(f) => {
                if first.is_none() {
                    first = Some(f);
                } else {
                    eprintln!("mmsynth: {}", f.message());
                }
            }
        }
    }
    match first {
        Some(f) => Err(f),
        None => Ok(ok),
    }
}

fn cmd_preprocess(batch: &Batch, augment: bool, quiet: bool) -> CmdResult {
    let cfg = load(batch.config.as_deref())?;
    let seed = if augment {
        require_seed(batch, &cfg)?
    } else {
        batch.seed.or(cfg.seed).unwrap_or(0)
    };
    let jobs = plan(batch)?;
    let results = run_jobs(&jobs, batch.jobs, |job| {
        let seq = read_sequence(&job.input).map_err(context(&job.input))?;
        let rng = SeededRng::new(seed, fnv1a(job.name.as_bytes()));
        let out = preprocess_sequence(&seq, &cfg.preprocess, &rng, augment).map_err(context(&job.input))?;
        write_sequence_as(&out.sequence, &job.output, batch.format.into()).map_err(context(&job.output))?;
        Ok(format!(
            "sequence={} frames={} points={} offset={:.6},{:.6},{:.6} angle_deg={:.6} scale={:.6}",
            job.name,
            out.sequence.len(),
            cfg.preprocess.target_points,
            out.offset.x,
            out.offset.y,
            out.offset.z,
            out.augment.angle_rad.to_degrees(),
            out.augment.scale
        ))
    })?;
    for line in settle(results)? {
        if !quiet {
            println!("{line}");
        }
    }
    Ok(())
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(STAGES_SUFFIX);
    PathBuf::from(s)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn stages_csv(stages: &[StageStats]) -> String {
    let mut s = String::from(STAGES_HEADER);
    s.push('\n');
    for st in stages {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            st.t,
            st.input,
            st.after_npa,
            st.after_fpf,
            st.after_rs,
            st.after_ni,
            opt(st.nu),
            opt(st.mean_flow_all),
            opt(st.mean_flow_kept)
        );
    }
    s
}

fn convert_summary(name: &str, stages: &[StageStats]) -> String {
    let n = stages.len() as f64;
    let mean = |f: fn(&StageStats) -> usize| stages.iter().map(|s| f(s) as f64).sum::<f64>() / n;
    format!(
        "sequence={name} frames={} input={:.1} after_npa={:.1} after_fpf={:.1} after_rs={:.1} after_ni={:.1}",
        stages.len(),
        mean(|s| s.input),
        mean(|s| s.after_npa),
        mean(|s| s.after_fpf),
        mean(|s| s.after_rs),
        mean(|s| s.after_ni)
    )
}

fn cmd_convert(batch: &Batch, quiet: bool) -> CmdResult {
    let cfg = load(batch.config.as_deref())?;
    let seed = require_seed(batch, &cfg)?;
    let jobs = plan(batch)?;
    let results = run_jobs(&jobs, batch.jobs, |job| {
        let seq = read_sequence(&job.input).map_err(context(&job.input))?;
        let rng = SeededRng::new(seed, fnv1a(job.name.as_bytes()));
        let out = convert_sequence_with_stats(&seq, &cfg.conversion, &rng).map_err(context(&job.input))?;
        write_sequence_as(&out.sequence, &job.output, batch.format.into()).map_err(context(&job.output))?;
        let side = sidecar_path(&job.output);
        fs::write(&side, stages_csv(&out.stages)).map_err(|e| io_failure(&side, e))?;
        Ok(convert_summary(&job.name, &out.stages))
    })?;
    for line in settle(results)? {
        if !quiet {
            println!("{line}");
        }
    }
    Ok(())
}

fn read(path: &Path) -> Result<Sequence, Failure> {
    read_sequence(path).map_err(context(path))
}

fn by_time(seq: &Sequence) -> BTreeMap<u64, &mmwave_synth::Frame> {
    seq.frames().iter().map(|f| (f.t, f)).collect()
}

fn cmd_loss(input: &Path, pred: &Path, gt: Option<&Path>, config: Option<&Path>) -> CmdResult {
    let cfg = load(config)?.utcl;
    let frames = read(input)?;
    let preds = read(pred)?;
    let gts = gt.map(read).transpose()?;
    if frames.len() < 2 {
        return Err(Failure::Contract(format!(
            "{}: need at least two frames to form an adjacent pair",
            input.display()
        )));
    }
    let pred_at = by_time(&preds);
    let gt_at = gts.as_ref().map(by_time);
    let skeleton = |t: u64| -> Result<_, Failure> {
        pred_at
            .get(&t)
            .and_then(|f| f.skeleton)
            .ok_or_else(|| Failure::Contract(format!("missing prediction for frame t={t}")))
    };

    let mut out = String::new();
    for pair in frames.frames().windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        let s_cur = skeleton(cur.t)?;
        let s_prev = skeleton(prev.t)?;
        let mut report = utcl_loss(&cur.cloud, &s_cur, &s_prev, &cfg);
        if let Some(gt_at) = &gt_at {
            let g = gt_at
                .get(&cur.t)
                .and_then(|f| f.skeleton)
                .ok_or_else(|| Failure::Contract(format!("missing ground truth for frame t={}", cur.t)))?;
            report = report.with_label_loss(mse_loss(&s_cur, &g), &cfg);
        }
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let _ = writeln!(out, "frame={}", cur.t);
        let _ = writeln!(out, "l_dyn={:.6}", report.l_dyn);
        let _ = writeln!(out, "l_sta={:.6}", report.l_sta);
        let _ = writeln!(out, "l_con={:.6}", report.l_con);
        if let Some(l) = report.l_lab {
            let _ = writeln!(out, "l_lab={l:.6}");
        }
        let _ = writeln!(out, "l_total={:.6}", report.l_total);
        let _ = writeln!(out, "dyn_joints={}", join(&report.dyn_indices));
        let _ = writeln!(out, "sta_joints={}", join(&report.sta_indices));
    }
    print!("{out}");
    Ok(())
}

fn display_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn cmd_metrics(preds: &[PathBuf], gts: &[PathBuf]) -> CmdResult {
    if preds.len() != gts.len() {
        return Err(Failure::Contract(format!(
            "{} --pred files but {} --gt files",
            preds.len(),
            gts.len()
        )));
    }
    let mut out = String::new();
    let (mut frames, mut sum_mpjpe, mut sum_pa) = (0usize, 0.0, 0.0);
    for (p, g) in preds.iter().zip(gts) {
        let per_frame = frame_metrics(&read(p)?, &read(g)?).map_err(context(p))?;
        if per_frame.is_empty() {
            return Err(Failure::Contract(format!("{}: empty sequence", p.display())));
        }
        let n = per_frame.len();
        let m: f64 = per_frame.iter().map(|x| x.0).sum();
        let pa: f64 = per_frame.iter().map(|x| x.1).sum();
        let _ = writeln!(
            out,
            "sequence={} frames={n} mpjpe_cm={:.2} pa_mpjpe_cm={:.2}",
            display_name(p),
            m / n as f64,
            pa / n as f64
        );
        frames += n;
        sum_mpjpe += m;
        sum_pa += pa;
    }
    let _ = writeln!(
        out,
        "aggregate sequences={} frames={frames} mpjpe_cm={:.2} pa_mpjpe_cm={:.2}",
        preds.len(),
        sum_mpjpe / frames as f64,
        sum_pa / frames as f64
    );
    print!("{out}");
    Ok(())
}

/// Stage columns keyed by timestep, from a convert sidecar.
fn read_sidecar(path: &Path) -> Result<BTreeMap<u64, [String; 4]>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == STAGES_HEADER => {}
        _ => {
            return Err(Failure::Input(format!(
                "{}:1: unexpected stage log header",
                path.display()
            )))
        }
    }
    let mut rows = BTreeMap::new();
    for (i, line) in lines {
        let cols: Vec<&str> = line.split(',').collect();
        let bad = || Failure::Input(format!("{}:{}: malformed stage log row", path.display(), i + 1));
        if cols.len() != 9 {
            return Err(bad());
        }
        let t: u64 = cols[0].parse().map_err(|_| bad())?;
        for c in &cols[2..6] {
            c.parse::<usize>().map_err(|_| bad())?;
        }
        rows.insert(t, [cols[2], cols[3], cols[4], cols[5]].map(str::to_owned));
    }
    Ok(rows)
}

/// Interpolated flow magnitudes of every frame after the first.
fn flow_histogram(seq: &Sequence) -> Result<[usize; HIST_BINS + 1], Failure> {
    let mut bins = [0usize; HIST_BINS + 1];
    for pair in seq.frames().windows(2) {
        let ext = extended_skeleton_flow(&pair[0], &pair[1])?;
        let flow = interpolate_point_flow(
            &pair[1].cloud,
            &ext,
            mmwave_synth::convert::ConversionConfig::default().idw_epsilon,
        );
        for m in flow.magnitudes() {
            let b = ((m / HIST_BIN_M).floor() as usize).min(HIST_BINS);
            bins[b] += 1;
        }
    }
    Ok(bins)
}

fn cmd_stats(inputs: &[PathBuf], out: Option<&Path>, hist: Option<&Path>) -> CmdResult {
    let mut csv = String::from(STATS_HEADER);
    csv.push('\n');
    let mut hcsv = String::from(HIST_HEADER);
    hcsv.push('\n');
    for path in inputs {
        let seq = read(path)?;
        let name = display_name(path);
        let side = sidecar_path(path);
        let stages = if side.is_file() {
            read_sidecar(&side)?
        } else {
            BTreeMap::new()
        };
        for f in seq.frames() {
            let cols = stages.get(&f.t).cloned().unwrap_or_default();
            let _ = writeln!(csv, "{name},{},{},{}", f.t, f.cloud.len(), cols.join(","));
        }
        if hist.is_some() && seq.is_labeled() {
            let bins =
                flow_histogram(&seq).map_err(|f| Failure::Contract(format!("{}: {}", path.display(), f.message())))?;
            for (b, count) in bins.iter().enumerate() {
                let lo = b as f64 * HIST_BIN_M;
                let hi = if b == HIST_BINS {
                    "inf".to_string()
                } else {
                    format!("{:.2}", lo + HIST_BIN_M)
                };
                let _ = writeln!(hcsv, "{name},{lo:.2},{hi},{count}");
            }
        }
    }
    match out {
        Some(p) => fs::write(p, csv).map_err(|e| io_failure(p, e))?,
        None => print!("{csv}"),
    }
    if let Some(p) = hist {
        fs::write(p, hcsv).map_err(|e| io_failure(p, e))?;
    }
    Ok(())
}
