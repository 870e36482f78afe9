//! End-to-end runs: simulate, synchronize, image, map and score.

use std::fs;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, Engine, ScenarioConfig};
use crate::geometry::{PropagationPath, Vec3};
use crate::imaging::{
    azimuth_resolution, backprojection_image, check_sampling, path_slab, range_resolution, reconstruct_image,
    resync_phasors, threshold_image, write_point_cloud, SamplingReport, VoxelGrid,
};
use crate::mapping::{fuse_mapped, map_vp_to_rp, search_theta1, VirtualPosition};
use crate::metrics::{directed_hausdorff, hausdorff, sweep_csv, sweep_stats, SweepRun};
use crate::signal::{add_phase_noise, simulate, write_tensor, DemodulatedSignal};
use crate::sync::synchronize;

/// Zero-padding factor of the back-projection range profiles.
const BP_OVERSAMPLE: usize = 8;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{stage} failed: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("unknown sweep parameter `{0}` (expected tv_distance, num_mirrors or M)")]
    UnknownParameter(String),
    #[error("sweep value {value} is invalid for {param}: {message}")]
    SweepValue { param: String, value: f64, message: String },
}

impl PipelineError {
    fn stage(stage: &'static str, e: impl std::fmt::Display) -> Self {
        PipelineError::Stage {
            stage,
            message: e.to_string(),
        }
    }

    /// Process exit code for the CLI: 2 for bad input, 1 for pipeline failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Stage { .. } => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub simulate_s: f64,
    pub sync_s: f64,
    pub imaging_s: f64,
    pub mapping_s: f64,
    pub scoring_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathReport {
    pub index: usize,
    pub los: bool,
    pub rep_a_true: Vec3,
    pub rep_b_true: Vec3,
    pub rep_a_est: Vec3,
    pub rep_b_est: Vec3,
    pub rep_a_error_m: f64,
    pub rep_b_error_m: f64,
    pub sync_converged: bool,
    /// Trace of the analytic position covariance of representative a.
    pub covariance_trace_m2: f64,
    pub engine: Engine,
    pub voxels: [usize; 3],
    pub occupied: usize,
    pub theta: f64,
}

/// Outcome of one run. Timings are kept out of the serialized report so that
/// identical inputs give identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub seed: u64,
    pub sigma_true_s: f64,
    pub sigma_hat_s: f64,
    pub sigma_error_s: f64,
    pub paths: Vec<PathReport>,
    pub theta1_star: f64,
    pub mapping_objective_m: f64,
    pub rep_a_star: Vec3,
    pub rep_b_star: Vec3,
    pub rep_a_star_error_m: f64,
    pub rep_b_star_error_m: f64,
    pub voxel_m: f64,
    pub recon_points: usize,
    pub truth_points: usize,
    pub hausdorff_m: f64,
    pub directed_hausdorff_m: f64,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub timings: StageTimings,
}

/// Point clouds and tensors produced by a run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub signal: DemodulatedSignal,
    pub virtual_clouds: Vec<Vec<(Vec3, f64)>>,
    pub mapped_clouds: Vec<Vec<(Vec3, f64)>>,
    pub recon: Vec<Vec3>,
    pub truth: Vec<Vec3>,
}

/// Imaging volume around one path's located representative antennas: an XZ
/// square centered on their midpoint with side `|ab| + 2 margin`, the Y span
/// of the two points padded by `margin`, each side capped at `max_extent`.
/// The part behind the aperture plane is cut off, leaving at least one voxel
/// layer in front of it.
pub fn imaging_volume(a: &Vec3, b: &Vec3, margin: f64, max_extent: f64, pitch: f64, z0: f64) -> Result<VoxelGrid, PipelineError> {
    let mid = 0.5 * (a + b);
    let half_xz = (0.5 * (a.x - b.x).hypot(a.z - b.z) + margin).min(0.5 * max_extent);
    let half_y = (0.5 * (a.y - b.y).abs() + margin).min(0.5 * max_extent);
    let mut lo = Vec3::new(mid.x - half_xz, mid.y - half_y, mid.z - half_xz);
    let mut hi = Vec3::new(mid.x + half_xz, mid.y + half_y, mid.z + half_xz);
    if lo.z < z0 + pitch {
        lo.z = z0 + pitch;
        hi.z = hi.z.max(lo.z + pitch);
    }
    VoxelGrid::covering(lo, hi, pitch).map_err(|e| PipelineError::stage("imaging", e))
}

fn sampling_for(cfg: &ScenarioConfig, grid: &VoxelGrid) -> SamplingReport {
    let a = &cfg.sv_aperture;
    let spec = cfg.sfcw_spec();
    let center = Vec3::from(a.origin) + Vec3::new(0.5 * a.width_m, 0.5 * a.height_m, 0.0);
    let far = (0..8)
        .map(|c| {
            let corner = Vec3::new(
                if c & 1 == 0 { grid.origin.x } else { grid.max_corner().x },
                if c & 2 == 0 { grid.origin.y } else { grid.max_corner().y },
                if c & 4 == 0 { grid.origin.z } else { grid.max_corner().z },
            );
            (corner - center).norm()
        })
        .fold(0.0, f64::max);
    check_sampling(
        a.width_m / (a.nx - 1) as f64,
        a.height_m / (a.ny - 1) as f64,
        spec.center(),
        spec.delta,
        far,
    )
}

fn pick_engine(requested: Engine, report: &SamplingReport) -> Engine {
    match requested {
        Engine::Auto if report.spatial_pass => Engine::Fourier,
        Engine::Auto => Engine::Backprojection,
        e => e,
    }
}

/// Runs the whole pipeline on a validated configuration.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(RunReport, RunArtifacts), PipelineError> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    let mut timings = StageTimings::default();
    let scn = cfg.scenario();
    let spec = cfg.sfcw_spec();
    let sw = cfg.sw_spec();
    let paths: Vec<PropagationPath> = scn.paths();

    let t = Instant::now();
    let clean = simulate(&scn, &spec, &sw, 0.0).map_err(|e| PipelineError::stage("simulate", e))?;
    let signal = add_phase_noise(&clean, cfg.phase_noise_std_rad, cfg.seed);
    drop(clean);
    timings.simulate_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let sync = synchronize(&signal, sw.delta, &scn.sv, cfg.phase_noise_std_rad).map_err(|e| PipelineError::stage("sync", e))?;
    let synced = resync_phasors(&signal, &spec, sync.sigma_hat);
    timings.sync_s = t.elapsed().as_secs_f64();
    for (l, p) in sync.paths.iter().enumerate() {
        for (name, fix) in [("a", &p.rep_a), ("b", &p.rep_b)] {
            if !fix.converged {
                warnings.push(format!("path {l}: locating representative {name} did not converge"));
            }
            if fix.init_fallback {
                warnings.push(format!("path {l}: initial guess for representative {name} fell back to the seed"));
            }
        }
    }

    let t = Instant::now();
    let pitch = cfg.voxel_pitch();
    let z0 = cfg.sv_aperture.origin[2];
    let mut virtual_clouds = Vec::with_capacity(paths.len());
    let mut path_info = Vec::with_capacity(paths.len());
    for (l, path) in paths.iter().enumerate() {
        let ps = &sync.paths[l];
        let grid = imaging_volume(&ps.rep_a.position, &ps.rep_b.position, cfg.imaging.margin_m, cfg.imaging.max_extent_m, pitch, z0)?;
        let sampling = sampling_for(cfg, &grid);
        for w in sampling.warnings() {
            let tagged = format!("path {l}: {w}");
            if !warnings.contains(&tagged) {
                warnings.push(tagged);
            }
        }
        let engine = pick_engine(cfg.imaging.engine, &sampling);
        let data = path_slab(&synced, l);
        let image = match engine {
            Engine::Fourier => reconstruct_image(data, &scn.sv, &spec, path.gamma(), &grid),
            _ => backprojection_image(data, &scn.sv, &spec, path.gamma(), &grid, BP_OVERSAMPLE),
        }
        .map_err(|e| PipelineError::stage("imaging", e))?;
        let binary = threshold_image(&image, cfg.imaging.nu).map_err(|e| PipelineError::stage("imaging", e))?;
        let cloud = binary.points();
        if cloud.is_empty() {
            return Err(PipelineError::stage("imaging", format!("path {l}: empty image")));
        }
        path_info.push((engine, grid.dims, cloud.len()));
        virtual_clouds.push(cloud);
    }
    timings.imaging_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let vps = sync
        .paths
        .iter()
        .enumerate()
        .map(|(l, p)| VirtualPosition::new(l, p.rep_a.position, p.rep_b.position))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| PipelineError::stage("mapping", e))?;
    let mapped = search_theta1(&vps).map_err(|e| PipelineError::stage("mapping", e))?;
    let mut mapped_clouds = Vec::with_capacity(paths.len());
    for (l, path) in paths.iter().enumerate() {
        let cloud = &virtual_clouds[l];
        if path.is_los() {
            // the line-of-sight image already sits at the real position
            mapped_clouds.push(cloud.clone());
            continue;
        }
        let pts: Vec<Vec3> = cloud.iter().map(|(p, _)| *p).collect();
        let moved = map_vp_to_rp(&pts, mapped.thetas[l], &vps[l].rep_a, &mapped.rep_a_star)
            .map_err(|e| PipelineError::stage("mapping", e))?;
        mapped_clouds.push(moved.into_iter().zip(cloud.iter().map(|(_, v)| *v)).collect());
    }
    let point_sets: Vec<Vec<Vec3>> = mapped_clouds.iter().map(|c| c.iter().map(|(p, _)| *p).collect()).collect();
    let recon = fuse_mapped(&point_sets, pitch);
    timings.mapping_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let truth = scn.tv.points.clone();
    let h = hausdorff(&recon, &truth).map_err(|e| PipelineError::stage("scoring", e))?;
    let hd = directed_hausdorff(&recon, &truth).map_err(|e| PipelineError::stage("scoring", e))?;
    timings.scoring_s = t.elapsed().as_secs_f64();

    let (ta, tb) = scn.rep_points();
    let path_reports = paths
        .iter()
        .enumerate()
        .map(|(l, path)| {
            let ps = &sync.paths[l];
            let (a_true, b_true) = (path.image_of(&ta), path.image_of(&tb));
            PathReport {
                index: l,
                los: path.is_los(),
                rep_a_true: a_true,
                rep_b_true: b_true,
                rep_a_est: ps.rep_a.position,
                rep_b_est: ps.rep_b.position,
                rep_a_error_m: (ps.rep_a.position - a_true).norm(),
                rep_b_error_m: (ps.rep_b.position - b_true).norm(),
                sync_converged: ps.rep_a.converged && ps.rep_b.converged,
                covariance_trace_m2: ps.rep_a.covariance.trace(),
                engine: path_info[l].0,
                voxels: path_info[l].1,
                occupied: path_info[l].2,
                theta: mapped.thetas[l],
            }
        })
        .collect();

    let report = RunReport {
        seed: cfg.seed,
        sigma_true_s: cfg.sigma_s,
        sigma_hat_s: sync.sigma_hat,
        sigma_error_s: (sync.sigma_hat - cfg.sigma_s).abs(),
        paths: path_reports,
        theta1_star: mapped.theta1_star,
        mapping_objective_m: mapped.objective,
        rep_a_star: mapped.rep_a_star,
        rep_b_star: mapped.rep_b_star,
        rep_a_star_error_m: (mapped.rep_a_star - ta).norm(),
        rep_b_star_error_m: (mapped.rep_b_star - tb).norm(),
        voxel_m: pitch,
        recon_points: recon.len(),
        truth_points: truth.len(),
        hausdorff_m: h,
        directed_hausdorff_m: hd,
        warnings,
        timings,
    };
    let artifacts = RunArtifacts {
        signal: synced,
        virtual_clouds,
        mapped_clouds,
        recon,
        truth,
    };
    Ok((report, artifacts))
}

fn write_cloud(path: &Path, cloud: &[(Vec3, f64)]) -> std::io::Result<()> {
    write_point_cloud(BufWriter::new(fs::File::create(path)?), cloud)
}

/// Writes `report.json`, `timings.json`, the point clouds and, with `dump`,
/// the binary phasor tensors into `dir`.
pub fn write_artifacts(dir: &Path, report: &RunReport, art: &RunArtifacts, dump: bool) -> Result<(), PipelineError> {
    let io = |e: std::io::Error| PipelineError::stage("output", e);
    fs::create_dir_all(dir).map_err(io)?;
    let json = serde_json::to_string_pretty(report).map_err(|e| PipelineError::stage("output", e))?;
    fs::write(dir.join("report.json"), json + "\n").map_err(io)?;
    let timings = serde_json::to_string_pretty(&report.timings).map_err(|e| PipelineError::stage("output", e))?;
    fs::write(dir.join("timings.json"), timings + "\n").map_err(io)?;
    for (l, cloud) in art.virtual_clouds.iter().enumerate() {
        write_cloud(&dir.join(format!("virtual_path{l}.txt")), cloud).map_err(io)?;
    }
    for (l, cloud) in art.mapped_clouds.iter().enumerate() {
        write_cloud(&dir.join(format!("mapped_path{l}.txt")), cloud).map_err(io)?;
    }
    let ones = |pts: &[Vec3]| pts.iter().map(|p| (*p, 1.0)).collect::<Vec<_>>();
    write_cloud(&dir.join("reconstruction.txt"), &ones(&art.recon)).map_err(io)?;
    write_cloud(&dir.join("ground_truth.txt"), &ones(&art.truth)).map_err(io)?;
    if dump {
        for (name, t) in [("sfcw", &art.signal.sfcw), ("sw_alpha", &art.signal.sw_alpha), ("sw_beta", &art.signal.sw_beta)] {
            let f = fs::File::create(dir.join(format!("{name}.bin"))).map_err(io)?;
            write_tensor(BufWriter::new(f), t).map_err(io)?;
        }
    }
    Ok(())
}

/// Parameter varied by [`run_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Distance from the aperture center to the TV center, moving the TV along
    /// the line through its configured center.
    TvDistance,
    /// Number of mirrors, taken from the front of the configured list.
    NumMirrors,
    /// Receive antenna count; must be a perfect square.
    M,
}

impl std::str::FromStr for SweepParam {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tv_distance" => Ok(SweepParam::TvDistance),
            "num_mirrors" => Ok(SweepParam::NumMirrors),
            "M" | "m" => Ok(SweepParam::M),
            other => Err(PipelineError::UnknownParameter(other.to_string())),
        }
    }
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::TvDistance => "tv_distance",
            SweepParam::NumMirrors => "num_mirrors",
            SweepParam::M => "M",
        }
    }

    /// Configuration with the parameter set to `value`.
    pub fn apply(&self, cfg: &ScenarioConfig, value: f64) -> Result<ScenarioConfig, PipelineError> {
        let bad = |message: &str| PipelineError::SweepValue {
            param: self.name().to_string(),
            value,
            message: message.to_string(),
        };
        let mut out = cfg.clone();
        match self {
            SweepParam::TvDistance => {
                let a = &cfg.sv_aperture;
                let center = Vec3::from(a.origin) + Vec3::new(0.5 * a.width_m, 0.5 * a.height_m, 0.0);
                let dir = Vec3::from(cfg.tv.center) - center;
                if !(value > 0.0) || dir.norm() == 0.0 {
                    return Err(bad("distance must be positive and the TV must not sit on the aperture center"));
                }
                let moved = center + dir.normalize() * value;
                out.tv.center = [moved.x, moved.y, moved.z];
            }
            SweepParam::NumMirrors => {
                let n = value as usize;
                if value.fract() != 0.0 || n > cfg.mirrors.len() {
                    return Err(bad(&format!("need an integer no larger than the {} configured mirrors", cfg.mirrors.len())));
                }
                out.mirrors = cfg.mirrors[..n].to_vec();
            }
            SweepParam::M => {
                let side = value.sqrt().round() as usize;
                if side < 2 || (side * side) as f64 != value {
                    return Err(bad("M must be a perfect square of at least 4"));
                }
                out.sv_aperture.nx = side;
                out.sv_aperture.ny = side;
            }
        }
        out.validate()?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub runs: Vec<SweepRun>,
    pub csv: String,
    /// For `M`: `param,empirical_trace,analytic_trace` of the located
    /// representative antenna on the first path.
    pub covariance_csv: Option<String>,
}

/// Monte-Carlo sweep over `values`, `seeds` runs each (seeds `cfg.seed ..
/// cfg.seed + seeds`). Runs execute in parallel; results do not depend on
/// scheduling.
pub fn run_sweep(cfg: &ScenarioConfig, param: SweepParam, values: &[f64], seeds: u64) -> Result<SweepOutcome, PipelineError> {
    let configs = values
        .iter()
        .map(|&v| param.apply(cfg, v).map(|c| (v, c)))
        .collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<(f64, ScenarioConfig)> = configs
        .iter()
        .flat_map(|(v, c)| {
            (0..seeds).map(move |s| {
                let mut c = c.clone();
                c.seed = cfg.seed + s;
                (*v, c)
            })
        })
        .collect();
    let results = jobs
        .par_iter()
        .map(|(v, c)| run_scenario(c).map(|(r, _)| (*v, r)))
        .collect::<Result<Vec<_>, _>>()?;
    let runs: Vec<SweepRun> = results
        .iter()
        .map(|(v, r)| SweepRun {
            param: *v,
            hausdorff: r.hausdorff_m,
            directed: r.directed_hausdorff_m,
        })
        .collect();
    let csv = sweep_csv(&sweep_stats(&runs));
    let covariance_csv = (param == SweepParam::M).then(|| {
        let mut out = String::from("param,empirical_trace,analytic_trace\n");
        for v in values {
            let group: Vec<&RunReport> = results.iter().filter(|(p, _)| p == v).map(|(_, r)| r).collect();
            let pts: Vec<Vec3> = group.iter().map(|r| r.paths[0].rep_a_est).collect();
            let analytic = group.iter().map(|r| r.paths[0].covariance_trace_m2).sum::<f64>() / group.len() as f64;
            out.push_str(&format!("{v},{:.9e},{:.9e}\n", sample_covariance(&pts).trace(), analytic));
        }
        out
    });
    Ok(SweepOutcome {
        runs,
        csv,
        covariance_csv,
    })
}

/// Unbiased sample covariance of a point set; zero for fewer than two points.
pub fn sample_covariance(points: &[Vec3]) -> Matrix3<f64> {
    let n = points.len();
    if n < 2 {
        return Matrix3::zeros();
    }
    let mean = points.iter().fold(Vec3::zeros(), |a, p| a + p) / n as f64;
    points.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p - mean;
        acc + d * d.transpose()
    }) / (n - 1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolutionReport {
    pub center_frequency_hz: f64,
    pub bandwidth_hz: f64,
    pub tv_range_m: f64,
    pub aperture_m: f64,
    /// The cross-range formula evaluated with aperture size and range in the
    /// order it is usually quoted, `c sqrt(D^2 + R^2) / (2 f_c R)`.
    pub azimuth_resolution_quoted_m: f64,
    /// Cross-range resolution `c sqrt(R^2 + D^2) / (2 f_c D)` at the TV range.
    pub azimuth_resolution_m: f64,
    pub range_resolution_m: f64,
    pub voxel_m: f64,
    pub sampling: SamplingReport,
    pub warnings: Vec<String>,
}

/// Resolution and sampling figures for a configuration.
pub fn resolve(cfg: &ScenarioConfig) -> Result<ResolutionReport, PipelineError> {
    let spec = cfg.sfcw_spec();
    let a = &cfg.sv_aperture;
    let d = a.width_m.max(a.height_m);
    let range = cfg.tv_range();
    let stage = |e| PipelineError::stage("resolve", e);
    let azimuth_resolution_quoted_m = azimuth_resolution(spec.center(), d, range).map_err(stage)?;
    let azimuth_resolution_m = azimuth_resolution(spec.center(), range, d).map_err(stage)?;
    let range_resolution_m = range_resolution(spec.f1, spec.f_last()).map_err(stage)?;
    // farthest path image of the representative antennas bounds the scene depth
    let scn = cfg.scenario();
    let center = Vec3::from(a.origin) + Vec3::new(0.5 * a.width_m, 0.5 * a.height_m, 0.0);
    let (pa, pb) = scn.rep_points();
    let r_max = scn
        .paths()
        .iter()
        .flat_map(|p| [p.image_of(&pa), p.image_of(&pb)])
        .map(|q| (q - center).norm() + cfg.imaging.margin_m)
        .fold(0.0, f64::max);
    let sampling = check_sampling(
        a.width_m / (a.nx - 1) as f64,
        a.height_m / (a.ny - 1) as f64,
        spec.center(),
        spec.delta,
        r_max,
    );
    Ok(ResolutionReport {
        center_frequency_hz: spec.center(),
        bandwidth_hz: spec.f_last() - spec.f1,
        tv_range_m: range,
        aperture_m: d,
        azimuth_resolution_quoted_m,
        azimuth_resolution_m,
        range_resolution_m,
        voxel_m: cfg.voxel_pitch(),
        warnings: sampling.warnings(),
        sampling,
    })
}
