use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use spinr::aperture::{CylindricalApertureSpec, SensorPose};
use spinr::backprojection::{backproject, Intensity};
use spinr::bench::{bench_forward, write_csv};
use spinr::checkpoint::{load_field, save_field};
use spinr::dataset::MeasurementSet;
use spinr::field;
use spinr::metrics::{evaluate, Threshold};
use spinr::optim::OptimizerConfig;
use spinr::phantom::PhantomSpec;
use spinr::signal::{dirichlet_envelope, tone_dft, ChirpConfig, ToneParams};
use spinr::simulate::{simulate, SimulationOptions};
use spinr::train::{fit, FitConfig, QuadratureConfig};
use spinr::volume::{GridSpec, Volume};
use spinr::{aperture, Result, SpinrError, Vec3};

#[derive(Parser)]
#[command(name = "spinr", version, about = "FMCW radar forward models and volumetric reconstruction")]
struct Cli {
    /// Worker threads; 1 gives bit-exact reproducibility.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum IntensityArg {
    Magnitude,
    RealPart,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate measurements of a phantom.
    Simulate {
        #[arg(long)]
        phantom: PathBuf,
        /// Aperture JSON; defaults to 4 heights x 90 angles at 0.23 m.
        #[arg(long)]
        aperture: Option<PathBuf>,
        /// Chirp JSON; defaults to the AWR1843-like chirp.
        #[arg(long)]
        chirp: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        mono: bool,
        /// Store all N bins per pose (required by --mode tf-ts).
        #[arg(long)]
        full_spectrum: bool,
        #[arg(long)]
        f64_payload: bool,
    },
    /// Fit a field to a dataset.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "spectral")]
        mode: String,
        #[arg(long, default_value = "grid")]
        field: String,
        /// Field parameters as inline JSON, e.g. '{"resolution": 64}'.
        #[arg(long, default_value = "{}")]
        field_config: String,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        /// Defaults to 1e-2 for grid fields and 1e-3 for networks.
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Quadrature cells per axis.
        #[arg(long, default_value_t = 64)]
        quadrature: usize,
        /// Jitter one sample per cell each step instead of using cell centers.
        #[arg(long)]
        stratified: bool,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Coherent backprojection onto a voxel grid.
    Backproject {
        #[arg(long)]
        data: PathBuf,
        /// Voxels along the longest scene axis.
        #[arg(long, default_value_t = 64)]
        grid: usize,
        #[arg(long, value_enum, default_value_t = IntensityArg::Magnitude)]
        intensity: IntensityArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample a trained field onto a voxel grid.
    ExportVolume {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 64)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Voxelize a phantom into a ground-truth volume.
    PhantomVolume {
        #[arg(long)]
        phantom: PathBuf,
        #[arg(long, default_value_t = 64)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a predicted volume with ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Relative threshold against each volume's own maximum.
        #[arg(long, default_value_t = 0.5, conflicts_with = "top_fraction")]
        threshold: f64,
        #[arg(long)]
        top_fraction: Option<f64>,
    },
    /// Forward-model latency per scatterer count.
    Bench {
        /// Comma-separated counts; scientific notation accepted.
        #[arg(long, default_value = "1e2,1e3,1e4")]
        counts: String,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long)]
        chirp: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// DFT of a unit tone: one row per bin.
    Leakage {
        /// Tone frequency in bins (2*pi*alpha/N rad/sample).
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| SpinrError::InvalidConfig(format!("{}: {e}", path.display())))
}

fn chirp_or_default(path: &Option<PathBuf>) -> Result<ChirpConfig> {
    let cfg = match path {
        Some(p) => read_json(p)?,
        None => ChirpConfig::awr1843(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn parse_counts(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            let v: f64 = t
                .trim()
                .parse()
                .map_err(|_| SpinrError::InvalidConfig(format!("bad count {t:?}")))?;
            if v.is_nan() || v < 1.0 || v.fract() != 0.0 {
                return Err(SpinrError::InvalidConfig(format!("count must be a positive integer, got {t:?}")));
            }
            Ok(v as usize)
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| SpinrError::InvalidConfig(e.to_string()))?;
    }
    match cli.cmd {
        Command::Simulate {
            phantom,
            aperture,
            chirp,
            out,
            noise,
            seed,
            mono,
            full_spectrum,
            f64_payload,
        } => {
            let phantom: PhantomSpec = read_json(&phantom)?;
            let ap = match aperture {
                Some(p) => read_json(&p)?,
                None => CylindricalApertureSpec::desk_default(),
            };
            let cfg = chirp_or_default(&chirp)?;
            let opts = SimulationOptions {
                noise_sigma: noise,
                seed,
                mono,
                full_spectrum,
                f64_payload,
            };
            let set = simulate(&phantom, &ap, &cfg, &opts)?;
            set.write(&out)?;
            eprintln!(
                "wrote {} poses, bins {}..={} to {}",
                set.len(),
                set.window.k_min,
                set.window.k_max,
                out.display()
            );
        }
        Command::Fit {
            data,
            mode,
            field: kind,
            field_config,
            epochs,
            batch,
            lr,
            seed,
            quadrature,
            stratified,
            lambda,
            out,
            log,
        } => {
            let data = MeasurementSet::read(&data)?;
            let params: serde_json::Value = serde_json::from_str(&field_config)
                .map_err(|e| SpinrError::InvalidConfig(format!("--field-config: {e}")))?;
            let mut f = field::registry().get(&kind)?.build(&data.bounds, &params, seed)?;
            let mut optimizer = OptimizerConfig::for_field(&kind, epochs, batch, seed);
            if let Some(lr) = lr {
                optimizer.learning_rate = lr;
            }
            let cfg = FitConfig {
                mode,
                quadrature: if stratified {
                    QuadratureConfig::stratified(quadrature)
                } else {
                    QuadratureConfig::centers(quadrature)
                },
                optimizer,
                loss: spinr::loss::LossConfig {
                    lambda,
                    ..Default::default()
                },
            };
            let mut sink = log.map(|p| File::create(p).map(BufWriter::new)).transpose()?;
            let train_log = fit(&data, f.as_mut(), &cfg, sink.as_mut().map(|w| w as &mut dyn Write))?;
            if let Some(w) = sink.as_mut() {
                w.flush()?;
            }
            save_field(f.as_ref(), &out)?;
            if let Some(last) = train_log.steps.last() {
                eprintln!("{} steps, final loss {:.6e}", train_log.steps.len(), last.loss);
            }
        }
        Command::Backproject {
            data,
            grid,
            intensity,
            out,
        } => {
            let data = MeasurementSet::read(&data)?;
            let spec = GridSpec::covering(&data.bounds, grid)?;
            let mode = match intensity {
                IntensityArg::Magnitude => Intensity::Magnitude,
                IntensityArg::RealPart => Intensity::RealPart,
            };
            backproject(&data, &spec, mode)?.save(&out)?;
        }
        Command::ExportVolume { ckpt, grid, out } => {
            let f = load_field(&ckpt)?;
            let spec = GridSpec::covering(&f.bounds(), grid)?;
            Volume::from_grid(spec, f.query(&spec.centers()))?.save(&out)?;
        }
        Command::PhantomVolume { phantom, grid, out } => {
            let phantom: PhantomSpec = read_json(&phantom)?;
            let spec = GridSpec::covering(&phantom.bounds, grid)?;
            phantom.voxelize(&spec)?.save(&out)?;
        }
        Command::Eval {
            pred,
            gt,
            report,
            threshold,
            top_fraction,
        } => {
            let policy = match top_fraction {
                Some(p) => Threshold::TopFraction(p),
                None => Threshold::Relative(threshold),
            };
            let r = evaluate(&Volume::load(&pred)?, &Volume::load(&gt)?, policy)?;
            let text = serde_json::to_string_pretty(&r)?;
            std::fs::write(&report, &text)?;
            println!("{text}");
        }
        Command::Bench {
            counts,
            reps,
            chirp,
            seed,
            out,
        } => {
            let cfg = chirp_or_default(&chirp)?;
            let ap = CylindricalApertureSpec::desk_default();
            let bounds = aperture::SceneBounds::cube(Vec3::zeros(), 0.24)?;
            let pose = SensorPose::monostatic(Vec3::new(ap.radius, 0.0, 0.0));
            let window = aperture::bin_window(&cfg, &bounds, &[pose], ap.guard)?;
            let rows = bench_forward(&cfg, &pose, &bounds, &window, &parse_counts(&counts)?, reps, seed)?;
            let mut w = BufWriter::new(File::create(&out)?);
            write_csv(&rows, &mut w)?;
            w.flush()?;
            write_csv(&rows, &mut std::io::stdout().lock())?;
        }
        Command::Leakage { alpha, n, out } => {
            if n == 0 {
                return Err(SpinrError::InvalidConfig("n must be >= 1".into()));
            }
            let omega = std::f64::consts::TAU * alpha / n as f64;
            let tone = ToneParams::new(1.0, 0.0, omega)?;
            let env = dirichlet_envelope(omega, n)?;
            let mut w = BufWriter::new(File::create(&out)?);
            writeln!(w, "k,re,im,magnitude,envelope")?;
            for (k, e) in env.iter().enumerate() {
                let v = tone_dft(&tone, n, k);
                writeln!(w, "{k},{:e},{:e},{:e},{e:e}", v.re, v.im, v.norm())?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            ExitCode::FAILURE
        }
    }
}
