//! `sci` command line: simulate, reconstruct, bench and theory subcommands.
//!
//! Every run writes a config digest into its text outputs. The digest covers
//! the subcommand, its settings and the contents (not paths) of input files,
//! so two runs with identical inputs agree regardless of where they write.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::error::{Result, SciError};
use crate::eval::bench::{config_digest, reconstruct_with, run_benchmark, BenchSettings, SolverSettings};
use crate::eval::metrics::{psnr, ssim};
use crate::eval::scenes::{SceneKind, SceneSpec};
use crate::io::{
    read_cube, read_masks, read_measurement, read_png_sequence, write_atomic, write_cube, write_masks,
    write_measurement, write_png_frames, ScitDtype,
};
use crate::masks::{make_masks, MaskKind};
use crate::operator::{NoiseModel, SensingMode, SensingOperator};
use crate::patch::GmmModel;
use crate::theory::{theorem_check, TheoremCheckConfig, TrialSignals, Verdict};

/// Exit code of a completed theory run whose verdict is a failure.
pub const EXIT_VERDICT_FAIL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "sci", version, about = "Snapshot compressive imaging toolkit", args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode a cube into a coded snapshot measurement.
    Simulate(SimulateArgs),
    /// Recover a cube from a measurement and its masks.
    Reconstruct(ReconstructArgs),
    /// Run solvers over seeded synthetic scenes.
    Bench(BenchArgs),
    /// Monte Carlo check of the compressive recovery bound.
    Theory(TheoryArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Cacti,
    Cassi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MaskArg {
    Bernoulli,
    CoveredBernoulli,
    Gaussian,
    ShiftedBase,
    Conjugate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SignalsArg {
    Perturbed,
    Codewords,
}

#[derive(Debug, Clone, Args)]
struct ModeOpts {
    #[arg(long, value_enum, default_value = "cacti")]
    mode: ModeArg,
    /// Dispersion shift in pixels per channel (cassi).
    #[arg(long)]
    step: Option<usize>,
    /// Undispersed channel (cassi).
    #[arg(long, default_value_t = 0)]
    reference_channel: usize,
}

impl ModeOpts {
    fn mode(&self) -> Result<SensingMode> {
        match self.mode {
            ModeArg::Cacti => Ok(SensingMode::Cacti),
            ModeArg::Cassi => {
                let step = self
                    .step
                    .ok_or_else(|| SciError::InvalidArgument("cassi mode requires --step".into()))?;
                Ok(SensingMode::Cassi {
                    step,
                    reference: self.reference_channel,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Args)]
struct MaskOpts {
    #[arg(long = "masks", value_enum, default_value = "covered-bernoulli")]
    kind: MaskArg,
    /// Open probability of binary masks.
    #[arg(long, default_value_t = 0.5)]
    mask_p: f64,
    /// Row shift per frame of shifted-base masks.
    #[arg(long, default_value_t = 1)]
    mask_step: usize,
}

impl MaskOpts {
    fn kind(&self) -> MaskKind {
        match self.kind {
            MaskArg::Bernoulli => MaskKind::Bernoulli { p: self.mask_p },
            MaskArg::CoveredBernoulli => MaskKind::CoveredBernoulli { p: self.mask_p },
            MaskArg::Gaussian => MaskKind::Gaussian,
            MaskArg::ShiftedBase => MaskKind::ShiftedBase { step: self.mask_step },
            MaskArg::Conjugate => MaskKind::Conjugate { p: self.mask_p },
        }
    }
}

#[derive(Debug, Clone, Args)]
struct SimulateArgs {
    /// Source cube in SCIT format.
    #[arg(long, conflicts_with_all = ["input_png", "scene"])]
    input: Option<PathBuf>,
    /// Comma-separated PNG frames, in frame order.
    #[arg(long, value_delimiter = ',', conflicts_with = "scene")]
    input_png: Vec<PathBuf>,
    /// Synthetic scene instead of an input file.
    #[arg(long)]
    scene: Option<String>,
    #[arg(long, default_value_t = 64)]
    nx: usize,
    #[arg(long, default_value_t = 64)]
    ny: usize,
    #[arg(long, default_value_t = 8)]
    nt: usize,
    #[command(flatten)]
    mode: ModeOpts,
    #[command(flatten)]
    masks: MaskOpts,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Standard deviation of additive Gaussian detector noise.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Args)]
struct ReconstructArgs {
    #[arg(long)]
    measurement: PathBuf,
    #[arg(long = "masks")]
    masks_file: PathBuf,
    #[command(flatten)]
    mode: ModeOpts,
    #[arg(long, default_value = "gap-tv")]
    solver: String,
    /// Ground-truth cube; enables PSNR/SSIM in the summary and trace.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Noise level assumed by the gmm solver.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Seed recorded in the outputs (reconstruction itself is deterministic).
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Pretrained prior for the gmm solver; trained on synthetic scenes if absent.
    #[arg(long)]
    gmm_model: Option<PathBuf>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    tv_weight: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Sparse-coding penalty.
    #[arg(long)]
    lambda: Option<f64>,
    /// Also export frames as 8-bit PNG.
    #[arg(long)]
    png: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "moving-square,gaussian-blob,smooth-field")]
    scenes: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 64)]
    nx: usize,
    #[arg(long, default_value_t = 64)]
    ny: usize,
    #[arg(long, default_value_t = 8)]
    nt: usize,
    #[arg(long, value_delimiter = ',', default_value = "lsq,gap-tv,admm-tv")]
    solvers: Vec<String>,
    #[command(flatten)]
    masks: MaskOpts,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    tv_weight: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Args)]
struct TheoryArgs {
    #[arg(long, default_value_t = 8)]
    nx: usize,
    #[arg(long, default_value_t = 8)]
    ny: usize,
    #[arg(long, default_value_t = 2)]
    nt: usize,
    #[arg(long, default_value_t = 2)]
    levels: usize,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, value_enum, default_value = "perturbed")]
    signals: SignalsArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `argv` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Simulate(a) => cmd_simulate(&a).map(|_| 0),
        Command::Reconstruct(a) => cmd_reconstruct(&a).map(|_| 0),
        Command::Bench(a) => cmd_bench(&a).map(|_| 0),
        Command::Theory(a) => cmd_theory(&a).map(|v| if v == Verdict::Pass { 0 } else { EXIT_VERDICT_FAIL }),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Replaces `--config FILE` with the file's `key=value` lines as flags placed
/// right after the subcommand, so flags given on the command line win.
fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut file = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            let p = it
                .next()
                .ok_or_else(|| SciError::InvalidArgument("--config needs a file".into()))?;
            file = Some(PathBuf::from(p));
        } else if let Some(p) = s.strip_prefix("--config=") {
            file = Some(PathBuf::from(p));
        } else {
            rest.push(a);
        }
    }
    let Some(file) = file else { return Ok(rest) };
    let text = fs::read_to_string(&file).map_err(|e| SciError::io(&file, e))?;
    let mut flags = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            SciError::InvalidArgument(format!("{}:{}: expected key=value", file.display(), n + 1))
        })?;
        let key = format!("--{}", k.trim().replace('_', "-"));
        match v.trim() {
            "true" => flags.push(OsString::from(key)),
            "false" => {}
            v => {
                flags.push(OsString::from(key));
                flags.push(OsString::from(v));
            }
        }
    }
    // program name and subcommand stay in front
    let at = rest.len().min(2);
    rest.splice(at..at, flags);
    Ok(rest)
}

fn fingerprint(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| SciError::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| SciError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

fn parse_scene(name: &str) -> Result<SceneKind> {
    name.parse()
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let mode = a.mode.mode()?;
    let mut key = String::from("simulate");
    let cube = if let Some(p) = &a.input {
        let _ = write!(key, ";input={}", fingerprint(p)?);
        read_cube(p)?
    } else if !a.input_png.is_empty() {
        for p in &a.input_png {
            let _ = write!(key, ";png={}", fingerprint(p)?);
        }
        read_png_sequence(&a.input_png)?
    } else {
        let name = a.scene.as_deref().ok_or_else(|| {
            SciError::InvalidArgument("simulate needs --input, --input-png or --scene".into())
        })?;
        let spec = SceneSpec::new(parse_scene(name)?, a.nx, a.ny, a.nt, a.seed);
        let _ = write!(key, ";scene={}", spec.id());
        spec.generate()?
    };
    let (nx, ny, nt) = cube.dims();
    let kind = a.masks.kind();
    let masks = make_masks(kind, nx, ny, nt, a.seed)?;
    let op = SensingOperator::new(masks, mode)?;
    let noise = if a.sigma > 0.0 {
        NoiseModel::gaussian(a.sigma, a.seed.wrapping_add(1))?
    } else {
        NoiseModel::noiseless()
    };
    let y = op.forward(&cube, &noise)?;
    let _ = write!(key, ";mode={mode:?};masks={kind:?};seed={};sigma={}", a.seed, a.sigma);
    let digest = config_digest(&key);

    create_out(&a.out)?;
    write_measurement(&a.out.join("measurement.scit"), &y)?;
    write_masks(&a.out.join("masks.scit"), op.masks())?;
    write_cube(&a.out.join("truth.scit"), &cube, ScitDtype::F64)?;
    let mut meta = String::new();
    let _ = writeln!(meta, "mode={}", mode.name());
    if let SensingMode::Cassi { step, reference } = mode {
        let _ = writeln!(meta, "step={step}\nreference_channel={reference}");
    }
    let _ = writeln!(meta, "masks={}", kind.name());
    let _ = writeln!(meta, "sigma={}", a.sigma);
    let _ = writeln!(meta, "seed={}", a.seed);
    let _ = writeln!(meta, "dims={nx}x{ny}x{nt}");
    let _ = writeln!(meta, "measurement_dims={}x{}", y.rows(), y.cols());
    let _ = writeln!(meta, "config={digest}");
    write_text(&a.out.join("meta.txt"), &meta)?;
    log::info!("simulated {nx}x{ny}x{nt} -> {}x{} ({digest})", y.rows(), y.cols());
    print!("{meta}");
    Ok(())
}

fn solver_settings(iters: Option<usize>, tv_weight: Option<f64>, rho: Option<f64>, tol: Option<f64>) -> SolverSettings {
    let mut s = SolverSettings::default();
    if let Some(n) = iters {
        s.iterative.max_iters = n;
    }
    if let Some(w) = tv_weight {
        s.iterative.tv_weight = w;
    }
    if let Some(r) = rho {
        s.iterative.rho = r;
    }
    if let Some(t) = tol {
        s.iterative.tol = t;
    }
    s
}

fn cmd_reconstruct(a: &ReconstructArgs) -> Result<()> {
    let mode = a.mode.mode()?;
    crate::eval::bench::check_solver_id(&a.solver)?;
    let masks = read_masks(&a.masks_file)?;
    let mut y = read_measurement(&a.measurement, mode, masks.nt())?;
    y.noise_sigma = a.sigma;
    let op = SensingOperator::new(masks, mode)?;
    let reference = a.reference.as_deref().map(read_cube).transpose()?;
    let gmm = a.gmm_model.as_deref().map(GmmModel::load).transpose()?;
    let mut settings = solver_settings(a.iters, a.tv_weight, a.rho, a.tol);
    if let Some(l) = a.lambda {
        settings.sparse.lambda = l;
    }

    let mut key = format!(
        "reconstruct;measurement={};masks={};mode={mode:?};solver={};sigma={};seed={};{}",
        fingerprint(&a.measurement)?,
        fingerprint(&a.masks_file)?,
        a.solver,
        a.sigma,
        a.seed,
        settings.describe(&a.solver)
    );
    if let Some(p) = &a.reference {
        let _ = write!(key, ";reference={}", fingerprint(p)?);
    }
    if let Some(p) = &a.gmm_model {
        let _ = write!(key, ";gmm_model={}", fingerprint(p)?);
    }
    let digest = config_digest(&key);

    let rec = reconstruct_with(&a.solver, &op, &y, &settings, reference.as_ref(), gmm.as_ref())?;
    create_out(&a.out)?;
    write_cube(&a.out.join("reconstruction.scit"), &rec.cube, ScitDtype::F64)?;
    let trace = rec.trace.as_ref().map(|t| t.to_csv()).unwrap_or_else(|| "iter,residual,change,psnr\n".into());
    write_text(&a.out.join("trace.csv"), &trace)?;
    if a.png {
        write_png_frames(&a.out, "frame", &rec.cube)?;
    }
    let mut summary = String::new();
    let _ = writeln!(summary, "solver={}", a.solver);
    let _ = writeln!(summary, "mode={}", mode.name());
    let (nx, ny, nt) = rec.cube.dims();
    let _ = writeln!(summary, "dims={nx}x{ny}x{nt}");
    let _ = writeln!(summary, "iterations={}", rec.iterations);
    if let Some(r) = &reference {
        let _ = writeln!(summary, "psnr_db={:.6}", psnr(r, &rec.cube, r.peak())?);
        match ssim(r, &rec.cube) {
            Ok(v) => {
                let _ = writeln!(summary, "ssim={v:.6}");
            }
            Err(e) => log::warn!("ssim skipped: {e}"),
        }
    }
    let _ = writeln!(summary, "config={digest}");
    write_text(&a.out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let kinds = a.scenes.iter().map(|s| parse_scene(s)).collect::<Result<Vec<_>>>()?;
    let mut scenes = Vec::with_capacity(kinds.len() * a.seeds.len());
    for &kind in &kinds {
        for &seed in &a.seeds {
            scenes.push(SceneSpec::new(kind, a.nx, a.ny, a.nt, seed));
        }
    }
    let settings = BenchSettings {
        masks: a.masks.kind(),
        sigma: a.sigma,
        solvers: solver_settings(a.iters, a.tv_weight, None, None),
    };
    let solvers: Vec<&str> = a.solvers.iter().map(String::as_str).collect();
    let report = run_benchmark(&scenes, &solvers, &settings)?;
    let digest = config_digest(&format!(
        "bench;scenes={:?};seeds={:?};dims={}x{}x{};solvers={:?};masks={:?};sigma={};{}",
        a.scenes,
        a.seeds,
        a.nx,
        a.ny,
        a.nt,
        a.solvers,
        settings.masks,
        a.sigma,
        settings.solvers.iterative.describe()
    ));
    create_out(&a.out)?;
    write_text(&a.out.join("bench.csv"), &report.to_csv())?;
    let mut table = report.to_table();
    for s in &solvers {
        if let Some(m) = report.mean_psnr(s) {
            let _ = writeln!(table, "mean psnr {s}: {m:.2} dB");
        }
    }
    let _ = writeln!(table, "config={digest}");
    write_text(&a.out.join("bench.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_theory(a: &TheoryArgs) -> Result<Verdict> {
    let mut cfg = TheoremCheckConfig::new((a.nx, a.ny, a.nt), a.levels, a.trials, a.epsilon, a.seed);
    cfg.rho = a.rho;
    cfg.sigma = a.sigma;
    cfg.signals = match a.signals {
        SignalsArg::Perturbed => TrialSignals::Perturbed,
        SignalsArg::Codewords => TrialSignals::Codewords,
    };
    let report = theorem_check(&cfg)?;
    let digest = config_digest(&format!("theory;{cfg:?}"));
    create_out(&a.out)?;
    write_text(&a.out.join("theory.csv"), &report.to_csv())?;
    let text = format!("{}config={digest}\n", report.to_text());
    write_text(&a.out.join("theory.txt"), &text)?;
    print!("{text}");
    Ok(report.verdict)
}
