//! Command line front end: every subcommand reads the same JSON run
//! configuration, so a config snapshot plus a command line reproduces any
//! artifact exactly.

use std::fs;
use std::path::{Path, PathBuf};
use std::process;

use clap::{Parser, Subcommand};

use kdesign_core::bayesopt::maximin_design;
use kdesign_core::density::{
    build_basis, elementary_density, draw_generators, save_basis, DensityGrid,
};
use kdesign_core::grid::ImageGrid;
use kdesign_core::io::{
    load_image, load_real_image, load_trajectory, save_complex_image, save_trajectory,
    ImagePayload,
};
use kdesign_core::kinematics::speed_acceleration;
use kdesign_core::metrics::psnr;
use kdesign_core::pipeline::{
    baseline_radial_density, compare_kernels, detrended_amplitude, load_dataset, phantom_set,
    prepare_basis, run_optimize, scan_density_plane, scan_shift, scheme_from_density,
    BaselineParams, BasisSource, EvalContext, RunConfig,
};
use kdesign_core::recon::{simulate_measurements, tv_reconstruct, ReconProblem};
use kdesign_core::rng::mix_seed;
use kdesign_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "kdesign", version, about = "Variable-density k-space sampling design")]
struct Cli {
    /// JSON run configuration; built-in defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving all written artifacts.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the density family from the configured generators and save it.
    PcaBuild,
    /// Dump the maximin design the optimizer would start from.
    DesignInit {
        /// Number of design points (default: the configured n_init).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Generate a constrained trajectory for a saved density raster.
    Sample {
        /// Base path of the density raster pair (.json/.raw).
        #[arg(long)]
        density: PathBuf,
        /// Output trajectory path (default: <out-dir>/trajectory.traj).
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Simulate measurements of a saved image through a saved trajectory,
    /// reconstruct, and report PSNR.
    Reconstruct {
        #[arg(long)]
        trajectory: PathBuf,
        /// Base path of the reference image.
        #[arg(long)]
        image: PathBuf,
        /// Base path of the written reconstruction (default: <out-dir>/recon).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full density optimization and write report + artifacts.
    Optimize,
    /// Scan the cost surface around a scheme or across the family.
    Scan {
        #[command(subcommand)]
        mode: ScanMode,
    },
    /// Run the sampler once per interaction kernel and tabulate quality.
    CompareKernels {
        /// Images scored per kernel (default: the configured k_train).
        #[arg(long)]
        k: Option<usize>,
    },
    /// Write synthetic phantoms for standalone experiments.
    Phantoms {
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
}

#[derive(Subcommand, Debug)]
enum ScanMode {
    /// Translate a fixed trajectory over a centered shift grid.
    Shift {
        #[arg(long)]
        trajectory: PathBuf,
        /// Full width of the shift range per axis, k-space units.
        #[arg(long)]
        extent: f64,
        /// Grid points per axis.
        #[arg(long, default_value_t = 11)]
        grid: usize,
        /// Images to average (default: the configured k_train).
        #[arg(long)]
        k: Option<usize>,
    },
    /// Sweep two family coordinates around the hull centroid.
    DensityPlane {
        #[arg(long, default_value_t = 0)]
        axis_a: usize,
        #[arg(long, default_value_t = 1)]
        axis_b: usize,
        /// Full width of the coordinate range per axis.
        #[arg(long)]
        extent: f64,
        #[arg(long, default_value_t = 11)]
        grid: usize,
        #[arg(long)]
        k: Option<usize>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {}", e);
        process::exit(if e.is_config_error() { 2 } else { 3 });
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// First `k` training images: synthetic phantoms, or the leading block of
/// the configured dataset.
fn training_images(cfg: &RunConfig, k: usize) -> Result<Vec<ImageGrid>> {
    if k == 0 {
        return Err(Error::invalid_parameter("k", "need at least one image"));
    }
    match &cfg.dataset {
        Some(dir) => Ok(load_dataset(dir, k, 0)?.0),
        None => phantom_set(cfg.n_grid, cfg.n_grid, cfg.seed, "train phantom", k),
    }
}

fn centered_axis(center: f64, extent: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid_parameter("grid", "must be at least 1"));
    }
    if !(extent >= 0.0) || !extent.is_finite() {
        return Err(Error::invalid_parameter("extent", "must be nonnegative and finite"));
    }
    if n == 1 {
        return Ok(vec![center]);
    }
    Ok((0..n)
        .map(|i| center - extent / 2.0 + extent * i as f64 / (n - 1) as f64)
        .collect())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    fs::write(path, body)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {}", e)))?;
    }
    let cfg = load_config(&cli)?;
    let out = &cli.out_dir;
    match cli.command {
        Command::PcaBuild => {
            let spec = match &cfg.basis {
                BasisSource::Generate(spec) => spec,
                BasisSource::Path(p) => {
                    return Err(Error::Config(format!(
                        "config points at an already-built family ({}); switch basis to a generator spec",
                        p.display()
                    )))
                }
            };
            let shapes = draw_generators(
                &spec.gbox,
                spec.count,
                cfg.n_grid,
                cfg.n_grid,
                cfg.m_total(),
                spec.seed,
            )?;
            let rasters = shapes
                .iter()
                .map(|p| elementary_density(p, cfg.n_grid))
                .collect::<Result<Vec<_>>>()?;
            let build = build_basis(&rasters, spec.n_modes, spec.seed)?;
            fs::create_dir_all(out)?;
            let dir = out.join("basis");
            save_basis(&build.basis, &dir)?;
            println!(
                "basis: {} modes at {}x{} from {} generators, tail energy {:.3e}",
                build.basis.n_modes(),
                cfg.n_grid,
                cfg.n_grid,
                spec.count,
                build.tail_energy_fraction
            );
            println!(
                "eigenvalues: {}",
                build
                    .eigenvalues
                    .iter()
                    .map(|v| format!("{:.6e}", v))
                    .collect::<Vec<_>>()
                    .join(" ")
            );
            println!("wrote {}", dir.display());
        }
        Command::DesignInit { n } => {
            let basis = prepare_basis(&cfg)?;
            let n = n.unwrap_or(cfg.bo.n_init);
            // Same derivation chain as the optimizer, so this dump is
            // exactly its initialization design.
            let seed = mix_seed(mix_seed(cfg.seed, "bo stream", &[cfg.bo.seed]), "bo init", &[]);
            let design = maximin_design(basis.hull(), n, seed)?;
            fs::create_dir_all(out)?;
            let path = out.join("design.json");
            write_json(&path, &design)?;
            println!("design: {} points in {} dimensions", design.len(), basis.hull().dim());
            println!("wrote {}", path.display());
        }
        Command::Sample { density, trajectory } => {
            let (n1, n2, cells) = load_real_image(&density)?;
            if n1 != n2 {
                return Err(Error::ShapeMismatch(format!(
                    "density raster must be square, got {}x{}",
                    n1, n2
                )));
            }
            let rho = DensityGrid::from_masses(n1, cells)?;
            let constraints = cfg.constraint_spec()?;
            let scheme = scheme_from_density(
                &rho,
                &constraints,
                &cfg.sampler,
                cfg.n_shots,
                cfg.points_per_shot(),
                cfg.effective_shannon_gap(),
                cfg.seed,
            )?;
            let path = trajectory.unwrap_or_else(|| out.join("trajectory.traj"));
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent)?;
                }
            }
            save_trajectory(&path, &scheme)?;
            let (speed, accel) = speed_acceleration(&scheme)?;
            println!(
                "trajectory: {} shots x {} points, prefix {}, speed {:.4e} (cap {:.4e}), accel {:.4e} (cap {:.4e})",
                scheme.n_shots(),
                scheme.points_per_shot(),
                scheme.fixed_prefix_len(),
                speed,
                constraints.max_speed(),
                accel,
                constraints.max_accel()
            );
            println!("wrote {}", path.display());
        }
        Command::Reconstruct { trajectory, image, out: recon_out } => {
            let scheme = load_trajectory(&trajectory)?;
            let reference = match load_image(&image)? {
                ImagePayload::Complex(img) => img,
                ImagePayload::Real { n1, n2, data } => ImageGrid::from_real(n1, n2, &data)?,
            };
            let problem =
                ReconProblem::new(&scheme, cfg.window, reference.n1(), reference.n2())?;
            let y = simulate_measurements(&problem, scheme.content_hash(), &reference, &cfg.noise)?;
            let recon = tv_reconstruct(&problem, &y, &cfg.tv)?;
            let value = psnr(&reference, &recon)?;
            let base = recon_out.unwrap_or_else(|| out.join("recon"));
            if let Some(parent) = base.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent)?;
                }
            }
            save_complex_image(&base, &recon)?;
            println!(
                "psnr {:.4} dB ({} samples against {}x{} reference)",
                value,
                scheme.m_total(),
                reference.n1(),
                reference.n2()
            );
            println!("wrote {}.json / {0}.raw", base.display());
        }
        Command::Optimize => {
            let report = run_optimize(&cfg, out)?;
            println!(
                "best cost {:.6e} after {} evaluations ({} failed attempts)",
                report.best_cost, report.n_evals, report.n_failures
            );
            println!(
                "holdout psnr {:.4} dB mean over {} images",
                report.holdout_psnr_mean,
                report.holdout_psnr.len()
            );
            println!("wrote {}", out.join("report.json").display());
        }
        Command::Scan { mode } => {
            fs::create_dir_all(out)?;
            let (scan, path) = match mode {
                ScanMode::Shift { trajectory, extent, grid, k } => {
                    let scheme = load_trajectory(&trajectory)?;
                    let images = training_images(&cfg, k.unwrap_or(cfg.k_train))?;
                    let axis = centered_axis(0.0, extent, grid)?;
                    let scan = scan_shift(
                        &scheme,
                        &images,
                        cfg.window,
                        &cfg.tv,
                        &cfg.noise,
                        &axis,
                        &axis,
                    )?;
                    (scan, out.join("scan_shift.json"))
                }
                ScanMode::DensityPlane { axis_a, axis_b, extent, grid, k } => {
                    let basis = prepare_basis(&cfg)?;
                    let images = training_images(&cfg, k.unwrap_or(cfg.k_train))?;
                    let ctx = EvalContext::new(&cfg, &basis, &images)?;
                    let base = basis.hull().centroid();
                    let a = centered_axis(base[axis_a], extent, grid)?;
                    let b = centered_axis(base[axis_b], extent, grid)?;
                    let scan = scan_density_plane(&ctx, &base, axis_a, axis_b, &a, &b)?;
                    (scan, out.join("scan_density.json"))
                }
            };
            write_json(&path, &scan)?;
            println!(
                "scan: {} x {} cells, detrended amplitude {:.6e}",
                scan.a.len(),
                scan.b.len(),
                detrended_amplitude(&scan)?
            );
            println!("wrote {}", path.display());
        }
        Command::CompareKernels { k } => {
            let images = training_images(&cfg, k.unwrap_or(cfg.k_train))?;
            let rho = baseline_radial_density(&BaselineParams::default(), cfg.n_grid)?;
            let rows = compare_kernels(&cfg, &rho, &images, kdesign_core::BOX_HALF / 2.0)?;
            fs::create_dir_all(out)?;
            let path = out.join("kernels.json");
            write_json(&path, &rows)?;
            for row in &rows {
                println!(
                    "{:<6} psnr {:.4} dB (std {:.4}), neighbor spacing {:.4} px",
                    format!("{:?}", row.kernel).to_lowercase(),
                    row.psnr_mean,
                    row.psnr_std,
                    row.neighbor_spacing
                );
            }
            println!("wrote {}", path.display());
        }
        Command::Phantoms { count } => {
            let images = phantom_set(cfg.n_grid, cfg.n_grid, cfg.seed, "train phantom", count)?;
            fs::create_dir_all(out)?;
            for (k, img) in images.iter().enumerate() {
                let base = out.join(format!("phantom{:03}", k));
                save_complex_image(&base, img)?;
                println!("wrote {}.json / {0}.raw", base.display());
            }
        }
    }
    Ok(())
}
