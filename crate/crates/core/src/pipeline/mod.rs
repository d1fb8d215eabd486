//! End-to-end orchestration: basis preparation, the density-to-scheme
//! map, the scalar reconstruction cost handed to the optimizer, and the
//! artifact layout of a full optimization run.
//!
//! A run is reproducible from its config snapshot alone. Every stochastic
//! stage (phantom draws, scheme initialization, optimizer streams) derives
//! its generator from the master seed, and wall times are written as zero
//! unless explicitly enabled, so history files and reports are
//! byte-identical across repetitions and machines.

pub mod diagnostics;
pub mod phantom;

pub use diagnostics::{
    baseline_radial_density, compare_kernels, detrended_amplitude, scan_density_plane, scan_shift,
    BaselineParams, CostScan, KernelComparison,
};
pub use phantom::{phantom_set, synthetic_phantom};

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bayesopt::{optimize_density, BoConfig};
use crate::density::{
    build_basis, draw_generators, elementary_density, generate_density, load_basis, save_basis,
    DensityBasis, DensityGrid, GeneratorBox,
};
use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::io::{load_image, save_real_image, save_trajectory, ImagePayload};
use crate::kinematics::{hardware_constraints, ConstraintSpec, HardwareParams, PinnedPoint};
use crate::metrics::psnr;
use crate::nuft::InterpWindow;
use crate::recon::{
    simulate_measurements, tv_reconstruct, NoiseSpec, ReconProblem, TvConfig,
};
use crate::rng::{hash_f64_slice, mix_seed, rng_from};
use crate::sampler::{radial_prefix, sample_scheme, DiscrepancyKernel, KernelKind, SamplerConfig};
use crate::scheme::SamplingScheme;

/// How to obtain the density family for a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisSource {
    /// Directory written by [`save_basis`].
    Path(PathBuf),
    /// Draw elementary generators and fit the family on the fly.
    Generate(GeneratorSpec),
}

impl Default for BasisSource {
    fn default() -> Self {
        BasisSource::Generate(GeneratorSpec::default())
    }
}

/// Generator family for an on-the-fly basis fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSpec {
    /// Number of elementary densities drawn.
    pub count: usize,
    /// Retained coefficient dimension.
    pub n_modes: usize,
    /// Seed of the generator draw (independent of the run seed, so the
    /// same family can be reused across runs).
    pub seed: u64,
    pub gbox: GeneratorBox,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec { count: 24, n_modes: 8, seed: 7, gbox: GeneratorBox::default() }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_modes == 0 {
            return Err(Error::invalid_parameter("n_modes", "must be at least 1"));
        }
        if self.count < self.n_modes + 1 {
            return Err(Error::invalid_parameter(
                "count",
                format!("need at least n_modes + 1 = {} generators, got {}", self.n_modes + 1, self.count),
            ));
        }
        self.gbox.validate()
    }
}

/// Inner-sampler settings exposed to run configs. The exclusion radius is
/// not configurable here: it always equals the radius covered by the
/// radial prefix of the run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSettings {
    pub tau: f64,
    pub iters: usize,
    pub kernel: KernelKind,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        SamplerSettings { tau: 2.0, iters: 200, kernel: KernelKind::Log }
    }
}

/// Explicit kinematic bounds; when absent the run derives them from the
/// standard gradient hardware calibrated to the grid.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSettings {
    pub max_speed: f64,
    pub max_accel: f64,
}

/// Full configuration of an optimization run.
///
/// `seed` is the master seed: phantom draws, scheme initialization, and
/// the optimizer stream are all derived from it (`bo.seed` is folded in
/// rather than used verbatim). Two runs with equal configs are
/// byte-identical on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Image grid size (even, >= 2); densities are rastered at the same
    /// resolution.
    pub n_grid: usize,
    /// Fraction of the pixel count to sample, in (0, 1].
    pub undersampling: f64,
    pub n_shots: usize,
    pub basis: BasisSource,
    /// Kinematic bounds; `None` derives them from standard hardware.
    pub constraints: Option<ConstraintSettings>,
    /// Target adjacent-shot spacing ending the radial prefix; `None`
    /// means half a pixel, `pi / n_grid`.
    pub shannon_gap: Option<f64>,
    pub sampler: SamplerSettings,
    pub tv: TvConfig,
    pub noise: NoiseSpec,
    pub bo: BoConfig,
    /// Training images per objective evaluation.
    pub k_train: usize,
    /// Held-out images scored in the report.
    pub k_holdout: usize,
    /// Directory of saved images to use instead of synthetic phantoms;
    /// bases are taken in lexicographic order, training first.
    pub dataset: Option<PathBuf>,
    pub window: InterpWindow,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_grid: 32,
            undersampling: 0.25,
            n_shots: 8,
            basis: BasisSource::default(),
            constraints: None,
            shannon_gap: None,
            sampler: SamplerSettings::default(),
            tv: TvConfig::default(),
            noise: NoiseSpec::none(),
            bo: BoConfig::default(),
            k_train: 32,
            k_holdout: 16,
            dataset: None,
            window: InterpWindow::Dirac,
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Shot length implied by the undersampling target.
    pub fn points_per_shot(&self) -> usize {
        if self.n_shots == 0 {
            return 0;
        }
        let target = self.undersampling * (self.n_grid * self.n_grid) as f64;
        (target / self.n_shots as f64).round() as usize
    }

    pub fn m_total(&self) -> usize {
        self.n_shots * self.points_per_shot()
    }

    /// Effective prefix-ending gap (explicit value or half a pixel).
    pub fn effective_shannon_gap(&self) -> f64 {
        self.shannon_gap.unwrap_or_else(|| crate::sampler::default_shannon_gap(self.n_grid))
    }

    /// Kinematic bounds for this run, without pins.
    pub fn constraint_spec(&self) -> Result<ConstraintSpec> {
        match self.constraints {
            Some(c) => ConstraintSpec::new(c.max_speed, c.max_accel),
            None => {
                let hw = HardwareParams::standard_for_grid(self.n_grid);
                let (speed, accel) = hardware_constraints(&hw)?;
                ConstraintSpec::new(speed, accel)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grid < 2 || self.n_grid % 2 != 0 {
            return Err(Error::invalid_parameter(
                "n_grid",
                format!("must be even and at least 2, got {}", self.n_grid),
            ));
        }
        if !(self.undersampling > 0.0 && self.undersampling <= 1.0) {
            return Err(Error::invalid_parameter(
                "undersampling",
                format!("must lie in (0, 1], got {}", self.undersampling),
            ));
        }
        if self.n_shots == 0 {
            return Err(Error::invalid_parameter("n_shots", "must be at least 1"));
        }
        let p = self.points_per_shot();
        if p < 2 {
            return Err(Error::invalid_parameter(
                "undersampling",
                format!("budget leaves {} points per shot; need at least 2", p),
            ));
        }
        if self.n_shots * p > self.n_grid * self.n_grid {
            return Err(Error::invalid_parameter(
                "undersampling",
                format!(
                    "rounded budget {} exceeds the pixel count {}",
                    self.n_shots * p,
                    self.n_grid * self.n_grid
                ),
            ));
        }
        if let Some(g) = self.shannon_gap {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::invalid_parameter(
                    "shannon_gap",
                    format!("must be positive and finite, got {}", g),
                ));
            }
        }
        if !(self.sampler.tau > 0.0) || !self.sampler.tau.is_finite() {
            return Err(Error::invalid_parameter(
                "sampler.tau",
                format!("must be positive and finite, got {}", self.sampler.tau),
            ));
        }
        if self.sampler.iters == 0 {
            return Err(Error::invalid_parameter("sampler.iters", "must be at least 1"));
        }
        if self.k_train == 0 || self.k_holdout == 0 {
            return Err(Error::invalid_parameter(
                "k_train/k_holdout",
                "need at least one training and one held-out image",
            ));
        }
        self.constraint_spec()?;
        self.tv.validate()?;
        self.noise.validate()?;
        self.bo.validate()?;
        if let BasisSource::Generate(spec) = &self.basis {
            spec.validate()?;
        }
        Ok(())
    }
}

/// Load or fit the density family of a run.
///
/// Generated families raster at `cfg.n_grid` and calibrate plateaus
/// against the run's sample budget; loaded families must match the grid.
pub fn prepare_basis(cfg: &RunConfig) -> Result<DensityBasis> {
    let basis = match &cfg.basis {
        BasisSource::Path(dir) => load_basis(dir)?,
        BasisSource::Generate(spec) => {
            spec.validate()?;
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
            build_basis(&rasters, spec.n_modes, spec.seed)?.basis
        }
    };
    if basis.res() != cfg.n_grid {
        return Err(Error::ShapeMismatch(format!(
            "basis raster {}x{} does not match the {}x{} grid",
            basis.res(),
            basis.res(),
            cfg.n_grid,
            cfg.n_grid
        )));
    }
    Ok(basis)
}

/// Draw `count` points from `rho` restricted to cells whose centers lie
/// outside the exclusion disk. Positions are uniform within a cell; a
/// draw landing inside the disk (possible for straddling cells) is
/// redrawn within the same cell a bounded number of times.
fn draw_points_outside(
    rho: &DensityGrid,
    exclusion_radius: f64,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<[f64; 2]>> {
    let res = rho.res();
    let w = rho.cell_width();
    let r2 = exclusion_radius * exclusion_radius;
    let mut centers = Vec::new();
    let mut cum = Vec::new();
    let mut total = 0.0;
    for i in 0..res {
        for j in 0..res {
            let c = rho.cell_center(i, j);
            let m = rho.cells()[i * res + j];
            if m > 0.0 && c[0] * c[0] + c[1] * c[1] > r2 {
                total += m;
                centers.push(c);
                cum.push(total);
            }
        }
    }
    if total <= 0.0 {
        return Err(Error::InvalidInput(
            "density carries no mass outside the exclusion disk".into(),
        ));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let u = rng.gen::<f64>() * total;
        let k = cum.partition_point(|&c| c <= u).min(centers.len() - 1);
        let c = centers[k];
        let mut p = c;
        for _ in 0..16 {
            p = [c[0] + (rng.gen::<f64>() - 0.5) * w, c[1] + (rng.gen::<f64>() - 0.5) * w];
            if p[0] * p[0] + p[1] * p[1] > r2 {
                break;
            }
        }
        out.push(p);
    }
    Ok(out)
}

/// Map a density to a feasible sampling scheme.
///
/// Builds the radial prefix for the given constraints, initializes every
/// shot with the prefix continued by draws from `rho` outside the prefix
/// disk (sorted by radius, so shots keep walking outward), pins the
/// prefix, and runs the discrepancy sampler. The init stream is seeded by
/// the exact density raster, so equal densities give equal schemes and
/// different densities decorrelate.
pub fn scheme_from_density(
    rho: &DensityGrid,
    constraints: &ConstraintSpec,
    settings: &SamplerSettings,
    n_shots: usize,
    points_per_shot: usize,
    shannon_gap: f64,
    seed: u64,
) -> Result<SamplingScheme> {
    let prefix = radial_prefix(constraints, n_shots, shannon_gap)?;
    if prefix.prefix_len >= points_per_shot {
        return Err(Error::InvalidInput(format!(
            "radial prefix of length {} leaves no free points in shots of length {}",
            prefix.prefix_len, points_per_shot
        )));
    }
    let rho_hash = hash_f64_slice(rho.cells());
    let n_free = points_per_shot - prefix.prefix_len;
    let mut points = Vec::with_capacity(n_shots * points_per_shot);
    let mut pins = Vec::with_capacity(n_shots * prefix.prefix_len);
    for s in 0..n_shots {
        for (q, &p) in prefix.shots[s].iter().enumerate() {
            points.push(p);
            pins.push(PinnedPoint { shot: s, index: q, position: p });
        }
        let mut rng = rng_from(mix_seed(seed, "scheme init", &[rho_hash, s as u64]));
        let mut free = draw_points_outside(rho, prefix.exclusion_radius, n_free, &mut rng)?;
        free.sort_by(|a, b| {
            let ra = a[0] * a[0] + a[1] * a[1];
            let rb = b[0] * b[0] + b[1] * b[1];
            ra.total_cmp(&rb).then_with(|| a[1].atan2(a[0]).total_cmp(&b[1].atan2(b[0])))
        });
        points.extend_from_slice(&free);
    }
    let init = SamplingScheme::new(n_shots, points_per_shot, prefix.prefix_len, points)?;
    let spec = constraints.clone().with_pins(pins)?;
    let sampler_cfg = SamplerConfig {
        tau: settings.tau,
        iters: settings.iters,
        kernel: DiscrepancyKernel::new(settings.kernel),
        exclusion_radius: prefix.exclusion_radius,
    };
    sample_scheme(rho, &spec, &sampler_cfg, &init)
}

/// Everything held fixed across objective evaluations of one run: the
/// family, the image subset, and all sampler/reconstruction settings.
pub struct EvalContext<'a> {
    basis: &'a DensityBasis,
    images: &'a [ImageGrid],
    constraints: ConstraintSpec,
    sampler: SamplerSettings,
    n_shots: usize,
    points_per_shot: usize,
    shannon_gap: f64,
    window: InterpWindow,
    tv: TvConfig,
    noise: NoiseSpec,
    seed: u64,
}

impl<'a> EvalContext<'a> {
    pub fn new(cfg: &RunConfig, basis: &'a DensityBasis, images: &'a [ImageGrid]) -> Result<Self> {
        cfg.validate()?;
        if images.is_empty() {
            return Err(Error::InvalidInput("evaluation context needs at least one image".into()));
        }
        Ok(EvalContext {
            basis,
            images,
            constraints: cfg.constraint_spec()?,
            sampler: cfg.sampler,
            n_shots: cfg.n_shots,
            points_per_shot: cfg.points_per_shot(),
            shannon_gap: cfg.effective_shannon_gap(),
            window: cfg.window,
            tv: cfg.tv,
            noise: cfg.noise,
            seed: cfg.seed,
        })
    }

    pub fn basis(&self) -> &DensityBasis {
        self.basis
    }

    pub fn images(&self) -> &[ImageGrid] {
        self.images
    }

    /// Scheme at hull-projected coordinates.
    pub fn scheme_for(&self, z: &[f64]) -> Result<SamplingScheme> {
        let z_proj = self.basis.hull().project(z)?;
        self.scheme_for_unprojected(&z_proj)
    }

    /// Scheme at raw coordinates; out-of-hull excursions are handled by
    /// the family's clip-and-renormalize rule, not by projection. Used by
    /// landscape scans that deliberately step off the hull.
    pub fn scheme_for_unprojected(&self, z: &[f64]) -> Result<SamplingScheme> {
        let rho = generate_density(self.basis, z)?;
        scheme_from_density(
            &rho,
            &self.constraints,
            &self.sampler,
            self.n_shots,
            self.points_per_shot,
            self.shannon_gap,
            self.seed,
        )
    }

    fn cost_of_scheme(&self, scheme: &SamplingScheme) -> Result<f64> {
        crate::recon::evaluate_scheme_cost(scheme, self.images, self.window, &self.tv, &self.noise)
    }

    /// The black box handed to the optimizer: mean reconstruction cost of
    /// the scheme generated at the projected coordinates.
    pub fn cost(&self, z: &[f64]) -> Result<f64> {
        let scheme = self.scheme_for(z)?;
        self.cost_of_scheme(&scheme)
    }

    /// Cost at raw coordinates (see [`Self::scheme_for_unprojected`]).
    pub fn cost_unprojected(&self, z: &[f64]) -> Result<f64> {
        let scheme = self.scheme_for_unprojected(z)?;
        self.cost_of_scheme(&scheme)
    }
}

/// Relative paths (within the output directory) of the files a run writes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactPaths {
    pub config: String,
    pub basis_dir: String,
    pub history: String,
    /// Base path of the density raster pair (`.json` + `.raw`).
    pub best_density: String,
    pub best_trajectory: String,
}

/// Wall-clock breakdown in seconds; all zero unless `bo.record_timings`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub basis_s: f64,
    pub optimize_s: f64,
    pub holdout_s: f64,
    pub total_s: f64,
}

/// Summary of one optimization run, written as `report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub best_z: Vec<f64>,
    pub best_cost: f64,
    pub n_evals: usize,
    pub n_failures: usize,
    pub holdout_psnr: Vec<f64>,
    pub holdout_psnr_mean: f64,
    pub artifacts: ArtifactPaths,
    pub timings: Timings,
}

/// Load `k_train + k_holdout` images from a directory of saved rasters,
/// in lexicographic base-name order, training block first.
pub fn load_dataset(
    dir: &Path,
    k_train: usize,
    k_holdout: usize,
) -> Result<(Vec<ImageGrid>, Vec<ImageGrid>)> {
    let mut bases: Vec<PathBuf> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            bases.push(path.with_extension(""));
        }
    }
    bases.sort();
    let needed = k_train + k_holdout;
    if bases.len() < needed {
        return Err(Error::InvalidInput(format!(
            "dataset {} has {} images, need {}",
            dir.display(),
            bases.len(),
            needed
        )));
    }
    let mut images = Vec::with_capacity(needed);
    for base in bases.iter().take(needed) {
        let img = match load_image(base)? {
            ImagePayload::Complex(img) => img,
            ImagePayload::Real { n1, n2, data } => ImageGrid::from_real(n1, n2, &data)?,
        };
        images.push(img);
    }
    let holdout = images.split_off(k_train);
    Ok((images, holdout))
}

fn train_holdout_images(cfg: &RunConfig) -> Result<(Vec<ImageGrid>, Vec<ImageGrid>)> {
    match &cfg.dataset {
        Some(dir) => {
            let (train, holdout) = load_dataset(dir, cfg.k_train, cfg.k_holdout)?;
            for img in train.iter().chain(&holdout) {
                if img.n1() != cfg.n_grid || img.n2() != cfg.n_grid {
                    return Err(Error::ShapeMismatch(format!(
                        "dataset image is {}x{}, run grid is {}",
                        img.n1(),
                        img.n2(),
                        cfg.n_grid
                    )));
                }
            }
            Ok((train, holdout))
        }
        None => Ok((
            phantom_set(cfg.n_grid, cfg.n_grid, cfg.seed, "train phantom", cfg.k_train)?,
            phantom_set(cfg.n_grid, cfg.n_grid, cfg.seed, "holdout phantom", cfg.k_holdout)?,
        )),
    }
}

/// Per-image held-out PSNR of a scheme, sharing one operator and norm.
pub fn holdout_psnrs(
    scheme: &SamplingScheme,
    images: &[ImageGrid],
    window: InterpWindow,
    tv: &TvConfig,
    noise: &NoiseSpec,
) -> Result<Vec<f64>> {
    if images.is_empty() {
        return Err(Error::InvalidInput("held-out set is empty".into()));
    }
    let problem = ReconProblem::new(scheme, window, images[0].n1(), images[0].n2())?;
    let scheme_hash = scheme.content_hash();
    images
        .iter()
        .map(|img| {
            let y = simulate_measurements(&problem, scheme_hash, img, noise)?;
            let recon = tv_reconstruct(&problem, &y, tv)?;
            psnr(img, &recon)
        })
        .collect()
}

/// Run the full optimization pipeline into `out_dir`.
///
/// Writes `config.json` (snapshot), `basis/`, `history.jsonl` (streamed,
/// one record per attempt), `best_density.{json,raw}`,
/// `best_trajectory.traj`, and `report.json`; returns the report.
pub fn run_optimize(cfg: &RunConfig, out_dir: &Path) -> Result<RunReport> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let t_total = Instant::now();

    let mut snapshot = serde_json::to_string_pretty(cfg)?;
    snapshot.push('\n');
    fs::write(out_dir.join("config.json"), snapshot)?;

    let t_basis = Instant::now();
    let basis = prepare_basis(cfg)?;
    save_basis(&basis, &out_dir.join("basis"))?;
    let basis_s = t_basis.elapsed().as_secs_f64();

    let (train, holdout) = train_holdout_images(cfg)?;
    let ctx = EvalContext::new(cfg, &basis, &train)?;

    let mut bo = cfg.bo.clone();
    bo.seed = mix_seed(cfg.seed, "bo stream", &[cfg.bo.seed]);

    let hist_path = out_dir.join("history.jsonl");
    let mut hist = BufWriter::new(fs::File::create(&hist_path)?);
    let t_opt = Instant::now();
    let outcome = optimize_density(basis.hull(), &bo, |z| ctx.cost(z), |rec| {
        serde_json::to_writer(&mut hist, rec)?;
        hist.write_all(b"\n")?;
        Ok(())
    })?;
    hist.flush()?;
    let optimize_s = t_opt.elapsed().as_secs_f64();

    let rho_best = generate_density(&basis, &outcome.best_z)?;
    save_real_image(
        &out_dir.join("best_density"),
        rho_best.res(),
        rho_best.res(),
        rho_best.cells(),
    )?;
    let best_scheme = ctx.scheme_for(&outcome.best_z)?;
    save_trajectory(&out_dir.join("best_trajectory.traj"), &best_scheme)?;

    let t_holdout = Instant::now();
    let psnrs = holdout_psnrs(&best_scheme, &holdout, cfg.window, &cfg.tv, &cfg.noise)?;
    let holdout_s = t_holdout.elapsed().as_secs_f64();
    let psnr_mean = psnrs.iter().sum::<f64>() / psnrs.len() as f64;

    let timings = if cfg.bo.record_timings {
        Timings { basis_s, optimize_s, holdout_s, total_s: t_total.elapsed().as_secs_f64() }
    } else {
        Timings::default()
    };
    let report = RunReport {
        best_z: outcome.best_z,
        best_cost: outcome.best_cost,
        n_evals: cfg.bo.n_evals,
        n_failures: outcome.n_failures,
        holdout_psnr: psnrs,
        holdout_psnr_mean: psnr_mean,
        artifacts: ArtifactPaths {
            config: "config.json".into(),
            basis_dir: "basis".into(),
            history: "history.jsonl".into(),
            best_density: "best_density".into(),
            best_trajectory: "best_trajectory.traj".into(),
        },
        timings,
    };
    let mut report_json = serde_json::to_string_pretty(&report)?;
    report_json.push('\n');
    fs::write(out_dir.join("report.json"), report_json)?;
    Ok(report)
}
