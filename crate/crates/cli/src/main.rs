//! Command-line pipeline: burst simulation, alignment, reconstruction,
//! equivariance measurement and parameter sweeps.
//!
//! Exit codes: 0 success, 2 usage error, 3 I/O or format error, 4 check
//! failure (non-converged alignment, failed selftest).

use clap::{Args, Parser, Subcommand};
use equiburst::{
    align_burst, align_features, bicubic_baseline, io, l1_fidelity, mdta_fuse, psnr, reconstruct, run_network,
    run_sweep, ssim, AffineTransform, AlignmentResult, BurstSequence, EquivNetSpec, FeatureMode, MdtaParams,
    ReconstructConfig, SearchConfig, SweepConfig,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "equiburst", version, about = "Equivariant burst super-resolution pipeline")]
struct Cli {
    /// Base directory for relative output paths.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a degraded burst from an HR image.
    Simulate(SimulateArgs),
    /// Estimate per-frame transforms for a burst.
    Align(AlignArgs),
    /// Reconstruct an upscaled image from a burst.
    Reconstruct(ReconstructArgs),
    /// Measure equivariance errors against the certified bounds.
    Equiv(SweepArgs),
    /// Run a parameter sweep over mesh size, filter size and group order.
    Sweep(SweepArgs),
    /// Run the built-in property suite.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// HR input image (PFM). Mutually exclusive with --demo.
    #[arg(long = "in", value_name = "PFM")]
    input: Option<PathBuf>,
    /// Render a procedural HR test scene of this size instead of reading one.
    #[arg(long, value_name = "N", conflicts_with = "input")]
    demo: Option<usize>,
    /// Output burst directory.
    #[arg(long, default_value = "burst")]
    out: PathBuf,
    #[arg(long, default_value_t = 14)]
    frames: usize,
    #[arg(long, default_value_t = 2)]
    scale: usize,
    /// Rotation half-range, degrees.
    #[arg(long, default_value_t = 1.0)]
    theta_max: f64,
    /// Translation half-range, HR pixels.
    #[arg(long, default_value_t = 3.0)]
    shift_max: f64,
    /// Gaussian noise sigma.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Skip Bayer mosaicking (frames stay RGB).
    #[arg(long)]
    no_mosaic: bool,
}

#[derive(Args)]
struct AlignArgs {
    /// Burst directory produced by `simulate`.
    #[arg(long)]
    burst: PathBuf,
    /// Output alignment manifest.
    #[arg(long, default_value = "alignment.manifest")]
    out: PathBuf,
    /// Angular search half-range, degrees.
    #[arg(long, default_value_t = 10.0)]
    theta_max: f64,
    /// Coarse angular step, degrees.
    #[arg(long, default_value_t = 0.5)]
    theta_step: f64,
    /// Translation search half-range, pixels.
    #[arg(long, default_value_t = 4.0)]
    shift_max: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_evals: usize,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    burst: PathBuf,
    /// Alignment manifest from `align`; omit with --use-ground-truth.
    #[arg(long)]
    alignment: Option<PathBuf>,
    /// Use the simulator's ground-truth transforms.
    #[arg(long, conflicts_with = "alignment")]
    use_ground_truth: bool,
    /// Output image (PFM).
    #[arg(long, default_value = "sr.pfm")]
    out: PathBuf,
    /// HR ground truth; enables the metrics CSV.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Metrics CSV path (with --gt).
    #[arg(long, default_value = "metrics.csv")]
    metrics: PathBuf,
    /// Feature mode: zero | shift-and-add | equivariant.
    #[arg(long, default_value = "shift-and-add")]
    features: String,
    /// Residual-to-weight sharpness.
    #[arg(long, default_value_t = 10.0)]
    lambda: f64,
    /// Expected burst scale; errors if the burst disagrees.
    #[arg(long)]
    scale: Option<usize>,
    /// Equivariant-network shape (equivariant mode).
    #[arg(long, default_value_t = 3)]
    layers: usize,
    #[arg(long, default_value_t = 4)]
    group_order: usize,
    #[arg(long, default_value_t = 3)]
    filter_size: usize,
    #[arg(long, default_value_t = 4)]
    channels: usize,
    #[arg(long, default_value_t = 17)]
    net_seed: u64,
    #[arg(long, default_value_t = 0)]
    proj_seed: u64,
}

#[derive(Args)]
struct SweepArgs {
    /// key=value sweep configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output CSV.
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct SelftestArgs {
    /// Trim repetition counts.
    #[arg(long)]
    quick: bool,
}

enum CliError {
    Usage(String),
    Io(String),
    Check(String),
}

impl From<equiburst::Error> for CliError {
    fn from(e: equiburst::Error) -> Self {
        match e {
            equiburst::Error::InvalidArgument(_) => CliError::Usage(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

type CliResult = Result<(), CliError>;

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn write_run_manifest(dir: &Path, entries: &[(String, String)]) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("create {}: {e}", dir.display())))?;
    io::write_kv(&dir.join("run.manifest"), entries)?;
    Ok(())
}

fn cmd_simulate(base: &Path, a: &SimulateArgs) -> CliResult {
    let hr = match (&a.input, a.demo) {
        (Some(path), None) => io::read_pfm(&resolve(base, path))?,
        (None, Some(n)) => equiburst::scene::test_scene(n, a.seed),
        (None, None) => return Err(CliError::Usage("either --in or --demo is required".into())),
        _ => unreachable!(),
    };
    let burst = equiburst::synthesize_burst(
        &hr,
        a.frames,
        a.scale,
        a.theta_max.to_radians(),
        a.shift_max,
        a.sigma,
        a.seed,
        !a.no_mosaic,
    )?;
    let out = resolve(base, &a.out);
    burst.write_dir(&out)?;
    write_run_manifest(
        &out,
        &[
            ("command".into(), "simulate".into()),
            ("frames".into(), a.frames.to_string()),
            ("scale".into(), a.scale.to_string()),
            ("theta_max_deg".into(), format!("{:.17e}", a.theta_max)),
            ("shift_max_px".into(), format!("{:.17e}", a.shift_max)),
            ("sigma".into(), format!("{:.17e}", a.sigma)),
            ("seed".into(), a.seed.to_string()),
            ("mosaic".into(), if a.no_mosaic { "0".into() } else { "1".into() }),
        ],
    )?;
    println!("wrote {} frames to {}", burst.frames.len(), out.display());
    Ok(())
}

fn search_config(a: &AlignArgs) -> SearchConfig {
    SearchConfig {
        theta_max: a.theta_max.to_radians(),
        theta_step: a.theta_step.to_radians(),
        shift_max: a.shift_max,
        tol: a.tol,
        max_evals: a.max_evals,
    }
}

fn cmd_align(base: &Path, a: &AlignArgs) -> CliResult {
    let burst = BurstSequence::read_dir(&resolve(base, &a.burst))?;
    let result = align_burst(&burst.frames, &search_config(a))?;
    let mut text = String::new();
    text.push_str(&format!("command=align\nburst={}\nframes={}\n", a.burst.display(), burst.frames.len()));
    text.push_str(&format!(
        "theta_max_deg={:.17e}\ntheta_step_deg={:.17e}\nshift_max_px={:.17e}\ntol={:.17e}\nmax_evals={}\n",
        a.theta_max, a.theta_step, a.shift_max, a.tol, a.max_evals
    ));
    for j in 0..result.transforms.len() {
        text.push_str(&format!(
            "frame={j} {} residual={:.17e} iterations={} converged={}\n",
            result.transforms[j].to_manifest(),
            result.residuals[j],
            result.iterations[j],
            if result.converged[j] { 1 } else { 0 }
        ));
    }
    let out = resolve(base, &a.out);
    std::fs::write(&out, text).map_err(|e| CliError::Io(format!("write {}: {e}", out.display())))?;
    println!("wrote alignment for {} frames to {}", result.transforms.len(), out.display());
    if !result.all_converged() {
        return Err(CliError::Check("some frames did not converge".into()));
    }
    Ok(())
}

/// Parse an alignment manifest written by `cmd_align`.
fn read_alignment(path: &Path, frames: usize) -> Result<AlignmentResult, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("read {}: {e}", path.display())))?;
    let mut transforms = vec![AffineTransform::identity(); frames];
    let mut residuals = vec![0.0; frames];
    let mut seen = vec![false; frames];
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("frame=") {
            let j: usize = rest
                .split_whitespace()
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| CliError::Io(format!("line {lineno}: bad frame index")))?;
            if j >= frames {
                return Err(CliError::Io(format!("line {lineno}: frame {j} out of range")));
            }
            transforms[j] = equiburst::transform_from_manifest(rest)
                .map_err(|e| CliError::Io(format!("line {lineno}: {e}")))?;
            for tok in rest.split_whitespace() {
                if let Some(v) = tok.strip_prefix("residual=") {
                    residuals[j] =
                        v.parse().map_err(|_| CliError::Io(format!("line {lineno}: bad residual")))?;
                }
            }
            seen[j] = true;
        }
    }
    if !seen.iter().all(|&s| s) {
        return Err(CliError::Io("alignment manifest does not cover every frame".into()));
    }
    Ok(AlignmentResult {
        transforms,
        residuals,
        iterations: vec![0; frames],
        converged: vec![true; frames],
    })
}

fn cmd_reconstruct(base: &Path, a: &ReconstructArgs) -> CliResult {
    let burst = BurstSequence::read_dir(&resolve(base, &a.burst))?;
    if let Some(s) = a.scale {
        if s != burst.scale {
            return Err(CliError::Usage(format!("--scale {s} does not match burst scale {}", burst.scale)));
        }
    }
    let alignment = if a.use_ground_truth {
        AlignmentResult::from_ground_truth(&burst.transforms)
    } else {
        match &a.alignment {
            Some(p) => read_alignment(&resolve(base, p), burst.frames.len())?,
            None => return Err(CliError::Usage("need --alignment or --use-ground-truth".into())),
        }
    };

    let mode: FeatureMode = a.features.parse()?;
    let fused = if mode == FeatureMode::Equivariant {
        let h = burst.frames[0].mesh_size;
        let spec = EquivNetSpec::random(
            a.layers,
            burst.frames[0].channels,
            a.channels,
            a.channels,
            a.group_order,
            a.filter_size,
            h,
            true,
            a.net_seed,
        )?;
        let features: Vec<_> = burst
            .frames
            .iter()
            .map(|f| run_network(&spec, f).map(|o| o.features))
            .collect::<Result<_, _>>()?;
        let aligned = align_features(&features, &alignment.transforms)?;
        let cf = aligned[0].group_order * aligned[0].channels;
        let params = MdtaParams::seeded(aligned.len(), cf, a.net_seed ^ 0x5EED, false)?;
        mdta_fuse(&aligned, &params)?
    } else {
        Vec::new()
    };

    let cfg = ReconstructConfig { mode, lambda: a.lambda, seed: a.proj_seed };
    let sr = reconstruct(&burst, &alignment, &fused, &cfg)?;
    let out = resolve(base, &a.out);
    io::write_pfm(&out, &sr)?;
    println!("wrote {}x{} reconstruction to {}", sr.height, sr.width, out.display());

    if let Some(gt_path) = &a.gt {
        let gt = io::read_pfm(&resolve(base, gt_path))?;
        // metrics of the artifact as written, so recomputing from the
        // files reproduces the CSV exactly
        let sr = io::read_pfm(&out)?;
        let p = psnr(&sr, &gt, 1.0)?;
        let s = ssim(&sr, &gt, 1.0)?;
        let l1 = l1_fidelity(&sr, &gt)?;
        let baseline = bicubic_baseline(&burst)?;
        let pb = psnr(&baseline, &gt, 1.0)?;
        let metrics_path = resolve(base, &a.metrics);
        let csv = format!("psnr,ssim,l1\n{p:.17e},{s:.17e},{l1:.17e}\n");
        std::fs::write(&metrics_path, csv)
            .map_err(|e| CliError::Io(format!("write {}: {e}", metrics_path.display())))?;
        println!("psnr={p:.3} dB ssim={s:.5} l1={l1:.6} (bicubic baseline {pb:.3} dB)");
    }
    Ok(())
}

fn cmd_sweep(base: &Path, a: &SweepArgs, label: &str) -> CliResult {
    let cfg_path = resolve(base, &a.config);
    let text =
        std::fs::read_to_string(&cfg_path).map_err(|e| CliError::Io(format!("read {}: {e}", cfg_path.display())))?;
    let cfg = SweepConfig::parse(&text)?;
    let outcome = run_sweep(&cfg)?;
    let mut csv = String::new();
    csv.push_str(&format!("# {label} config:\n"));
    for (k, v) in cfg.to_kv() {
        csv.push_str(&format!("# {k}={v}\n"));
    }
    csv.push_str(&outcome.to_csv());
    let out = resolve(base, &a.out);
    std::fs::write(&out, &csv).map_err(|e| CliError::Io(format!("write {}: {e}", out.display())))?;
    let mut sound = true;
    for r in &outcome.records {
        if !r.err_commutation.is_nan() && r.err_commutation > r.bound_remark2 {
            sound = false;
        }
        if r.err_equivariance > r.bound_thm1 {
            sound = false;
        }
    }
    println!("wrote {} records to {}", outcome.records.len(), out.display());
    for s in outcome.slopes_h.iter() {
        match s.slope {
            Some(v) => println!("# slope_h[{}]={v:.4}", s.label),
            None => println!("# slope_h[{}]=undefined", s.label),
        }
    }
    for s in outcome.slopes_t.iter() {
        match s.slope {
            Some(v) => println!("# slope_t[{}]={v:.4}", s.label),
            None => println!("# slope_t[{}]=undefined", s.label),
        }
    }
    if !sound {
        return Err(CliError::Check("measured error exceeded a certified bound".into()));
    }
    Ok(())
}

fn cmd_selftest(a: &SelftestArgs) -> CliResult {
    let results = equiburst::selftest::run_selftest(a.quick);
    let mut ok = true;
    for r in &results {
        println!("[{}] {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        ok &= r.passed;
    }
    if ok {
        Ok(())
    } else {
        Err(CliError::Check("selftest failed".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let base = cli.out_dir.clone();
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(&base, a),
        Command::Align(a) => cmd_align(&base, a),
        Command::Reconstruct(a) => cmd_reconstruct(&base, a),
        Command::Equiv(a) => cmd_sweep(&base, a, "equiv"),
        Command::Sweep(a) => cmd_sweep(&base, a, "sweep"),
        Command::Selftest(a) => cmd_selftest(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("i/o error: {msg}");
            ExitCode::from(3)
        }
        Err(CliError::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(4)
        }
    }
}
