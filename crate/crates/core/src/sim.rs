//! Seeded Monte Carlo trials, energy-split sweeps and result export.
//!
//! Trial `i` of every grid point uses seed `base_seed + i`. From that seed
//! three ChaCha8 streams are derived: stream 0 draws the channel, stream 1
//! the information bits and stream 2 the noise. Grid points therefore see
//! the same channels, so schemes and equalizers are compared on paired
//! realizations.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{apply_channel_time, sample_channel, NoiseModel};
use crate::equalizer::{Csi, Equalizer, MrcConfig, Receiver};
use crate::estimator::{nmse, ChannelVector, Refit, ThresholdRule};
use crate::metrics::{
    bit_errors, papr_db, spectral_efficiency, CsiMode, PointSummary, TrialRecord,
};
use crate::numerics::{QamConstellation, QamOrder};
use crate::pilot::{default_guard_offset, validate_config, EnergySplit, FrameLayout, Scheme};
use crate::zak::{add_cp, remove_cp, FrameConfig, ZakTransform};
use crate::{Error, Result};

const CHANNEL_STREAM: u64 = 0;
const BITS_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

/// Full description of a sweep. Missing JSON fields take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub frame: FrameConfig,
    pub schemes: Vec<Scheme>,
    pub equalizers: Vec<Equalizer>,
    /// Also run the iterative receiver with `n_iter` estimation passes.
    pub iterative: bool,
    pub n_iter: usize,
    pub alphas: Vec<f64>,
    pub qam_order: QamOrder,
    pub snr_db: f64,
    /// Remove the channel noise. The receiver still assumes the noise
    /// variance given by `snr_db` (zero if that is not finite).
    pub noiseless: bool,
    /// Average energy per DD cell; the frame energy is `M N` times this.
    pub energy_per_cell: f64,
    pub paths: usize,
    pub trials: usize,
    pub base_seed: u64,
    /// Also run every single-pass point with the true channel.
    pub icsi: bool,
    pub chu_root: i64,
    pub s1d_column: usize,
    /// Embedded pilot position; defaults to `(ell_max, N/2)`.
    pub ep_row: Option<usize>,
    pub ep_col: Option<usize>,
    /// First guard column relative to the pilot column.
    pub ep_guard_offset: Option<i64>,
    /// Guard width in Doppler columns; defaults to `2 k_max`.
    pub ep_guard_width: Option<usize>,
    pub threshold_s1d: ThresholdRule,
    pub threshold_ep: ThresholdRule,
    pub refit: Refit,
    pub mrc: MrcConfig,
    /// Keep every trial record in the result.
    pub keep_records: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            frame: FrameConfig::default(),
            schemes: vec![Scheme::S1d, Scheme::Ep],
            equalizers: vec![Equalizer::Lmmse, Equalizer::Mrc],
            iterative: true,
            n_iter: 3,
            alphas: vec![0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            qam_order: QamOrder::Qam4,
            snr_db: 15.0,
            noiseless: false,
            energy_per_cell: 1.0,
            paths: 5,
            trials: 2000,
            base_seed: 1,
            icsi: false,
            chu_root: 1,
            s1d_column: 0,
            ep_row: None,
            ep_col: None,
            ep_guard_offset: None,
            ep_guard_width: None,
            threshold_s1d: ThresholdRule::superimposed(),
            threshold_ep: ThresholdRule::embedded(),
            refit: Refit::default(),
            mrc: MrcConfig::default(),
            keep_records: false,
        }
    }
}

/// One cell of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub scheme: Scheme,
    pub equalizer: Equalizer,
    pub passes: usize,
    pub csi: CsiMode,
    pub alpha: f64,
}

impl SweepConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Channel noise variance per complex sample (equal in time and DD domains).
    pub fn noise_variance(&self) -> f64 {
        if self.noiseless {
            0.0
        } else {
            self.receiver_noise_variance()
        }
    }

    /// Noise variance the receiver designs for (threshold and regularizer).
    pub fn receiver_noise_variance(&self) -> f64 {
        if self.snr_db.is_finite() {
            self.energy_per_cell / 10f64.powf(self.snr_db / 10.0)
        } else {
            0.0
        }
    }

    pub fn total_energy(&self) -> f64 {
        self.energy_per_cell * self.frame.grid_len() as f64
    }

    pub fn constellation(&self) -> QamConstellation {
        QamConstellation::new(self.qam_order)
    }

    /// Every problem with the configuration; empty when it is usable.
    pub fn violations(&self) -> Vec<String> {
        let mut out: Vec<String> = validate_config(&self.frame)
            .into_iter()
            .map(|v| v.to_string())
            .collect();
        if self.schemes.is_empty() {
            out.push("scheme list is empty".into());
        }
        if self.equalizers.is_empty() {
            out.push("equalizer list is empty".into());
        }
        if self.alphas.is_empty() {
            out.push("alpha grid is empty".into());
        }
        for &a in &self.alphas {
            if !(a > 0.0 && a < 1.0) {
                out.push(format!("alpha {a} outside (0, 1)"));
            }
        }
        if self.trials == 0 {
            out.push("trials must be at least 1".into());
        }
        if self.n_iter == 0 {
            out.push("n_iter must be at least 1".into());
        }
        if !self.noiseless && !self.snr_db.is_finite() {
            out.push(format!("SNR {} dB is not finite", self.snr_db));
        }
        if !(self.energy_per_cell > 0.0 && self.energy_per_cell.is_finite()) {
            out.push(format!(
                "energy per cell {} must be positive",
                self.energy_per_cell
            ));
        }
        let cells = self.frame.channel_cells();
        if self.paths == 0 || self.paths > cells {
            out.push(format!("paths {} outside 1..={cells}", self.paths));
        }
        if self.mrc.max_iter == 0 {
            out.push("mrc.max_iter must be at least 1".into());
        }
        if out.is_empty() {
            // layout-level checks (pilot placement, Chu root)
            for &scheme in &self.schemes {
                let res =
                    EnergySplit::new(0.5, self.total_energy()).and_then(|s| self.layout(scheme, s));
                if let Err(e) = res {
                    out.push(format!("{scheme} layout: {e}"));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    pub fn layout(&self, scheme: Scheme, split: EnergySplit) -> Result<FrameLayout> {
        match scheme {
            Scheme::S1d => FrameLayout::s1d(&self.frame, split, self.chu_root, self.s1d_column),
            Scheme::Ep => FrameLayout::ep_with_guard(
                &self.frame,
                split,
                self.ep_row.unwrap_or(self.frame.ell_max),
                self.ep_col.unwrap_or(self.frame.n / 2),
                self.ep_guard_offset
                    .unwrap_or_else(|| default_guard_offset(&self.frame)),
                self.ep_guard_width.unwrap_or(2 * self.frame.k_max),
            ),
        }
    }

    pub fn threshold(&self, scheme: Scheme) -> ThresholdRule {
        match scheme {
            Scheme::S1d => self.threshold_s1d,
            Scheme::Ep => self.threshold_ep,
        }
    }

    /// Grid in output order: scheme, equalizer, passes, CSI, alpha.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut passes = vec![1];
        if self.iterative && self.n_iter > 1 {
            passes.push(self.n_iter);
        }
        let mut csis = vec![CsiMode::Estimated];
        if self.icsi {
            csis.push(CsiMode::Ideal);
        }
        let mut out = Vec::new();
        for &scheme in &self.schemes {
            for &equalizer in &self.equalizers {
                for &p in &passes {
                    for &csi in &csis {
                        if csi == CsiMode::Ideal && p > 1 {
                            continue;
                        }
                        for &alpha in &self.alphas {
                            out.push(GridPoint {
                                scheme,
                                equalizer,
                                passes: p,
                                csi,
                                alpha,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Seed of trial `index`.
    pub fn trial_seed(&self, index: usize) -> u64 {
        self.base_seed.wrapping_add(index as u64)
    }
}

/// Precomputed receiver state for one grid point.
#[derive(Debug, Clone)]
pub struct TrialContext {
    pub point: GridPoint,
    pub receiver: Receiver,
    zak: ZakTransform,
    noise: NoiseModel,
    paths: usize,
}

impl TrialContext {
    pub fn new(cfg: &SweepConfig, point: GridPoint) -> Result<Self> {
        let split = EnergySplit::new(point.alpha, cfg.total_energy())?;
        let layout = cfg.layout(point.scheme, split)?;
        let mut receiver = Receiver::new(
            layout,
            cfg.threshold(point.scheme),
            point.equalizer,
            cfg.receiver_noise_variance(),
            cfg.constellation(),
        );
        receiver.refit = cfg.refit;
        receiver.mrc = cfg.mrc;
        Ok(Self {
            point,
            receiver,
            zak: ZakTransform::for_config(&cfg.frame),
            noise: NoiseModel::new(cfg.noise_variance())?,
            paths: cfg.paths,
        })
    }

    /// Shares the sensing matrices of `self` with a different equalizer,
    /// pass count or CSI mode at the same scheme and alpha.
    fn with_point(&self, point: GridPoint) -> Self {
        let mut out = self.clone();
        out.point = point;
        out.receiver.equalizer = point.equalizer;
        out
    }

    pub fn run(&self, seed: u64) -> Result<TrialRecord> {
        self.run_traced(seed).map(|(r, _)| r)
    }

    /// Runs one frame and also returns a per-pass trace.
    pub fn run_traced(&self, seed: u64) -> Result<(TrialRecord, Vec<PassTrace>)> {
        let layout = &self.receiver.layout;
        let cfg = &layout.cfg;
        let q = &self.receiver.constellation;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(CHANNEL_STREAM);
        let ch = sample_channel(&mut rng, self.paths, cfg.ell_max, cfg.k_max)?;
        rng.set_stream(BITS_STREAM);
        rng.set_word_pos(0);
        let bits: Vec<bool> = (0..layout.data_count() * q.bits_per_symbol())
            .map(|_| rng.random())
            .collect();
        rng.set_stream(NOISE_STREAM);
        rng.set_word_pos(0);

        let x = layout.frame(&q.map(&bits)?)?;
        let s = add_cp(&self.zak.idzt(&x)?, cfg.cp_len)?;
        let papr = papr_db(&s.samples)?;
        let r = apply_channel_time(&s, &ch, &self.noise, &mut rng)?;
        let y = self.zak.dzt(&remove_cp(&r, cfg.cp_len)?)?;

        let csi = match self.point.csi {
            CsiMode::Estimated => Csi::Estimated,
            CsiMode::Ideal => Csi::Perfect(ChannelVector::from_realization(
                &ch,
                cfg.ell_max,
                cfg.k_max,
            )?),
        };
        let out = self.receiver.receive(&y, &csi, self.point.passes)?;

        let mut trace = Vec::with_capacity(out.passes.len());
        for p in &out.passes {
            let errors = bit_errors(&bits, &p.detection.bits);
            trace.push(PassTrace {
                nmse: nmse(&p.h_est, &ch)?,
                support: p.h_est.support().len(),
                bit_errors: errors,
                iterations: p.detection.iterations_used,
                converged: p.detection.converged,
            });
        }
        let last = trace.last().expect("at least one pass");
        let errors = last.bit_errors;
        let record = TrialRecord {
            seed,
            scheme: self.point.scheme,
            equalizer: self.point.equalizer,
            passes: self.point.passes,
            csi: self.point.csi,
            alpha: self.point.alpha,
            nmse: match self.point.csi {
                CsiMode::Estimated => last.nmse,
                CsiMode::Ideal => 0.0,
            },
            ber: errors as f64 / bits.len() as f64,
            bit_errors: errors,
            bits: bits.len(),
            papr_db: papr,
            se: spectral_efficiency(bits.len() - errors, cfg, self.point.scheme),
            iterations: last.iterations,
            converged: last.converged,
        };
        Ok((record, trace))
    }
}

/// Diagnostics of one receiver pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassTrace {
    pub nmse: f64,
    pub support: usize,
    pub bit_errors: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Runs a single trial; the configuration is validated first.
pub fn run_trial(cfg: &SweepConfig, point: GridPoint, seed: u64) -> Result<TrialRecord> {
    cfg.validate()?;
    TrialContext::new(cfg, point)?.run(seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub points: Vec<PointSummary>,
    /// Per-point trial records in trial order, when retained.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub records: Option<Vec<Vec<TrialRecord>>>,
}

impl SweepResult {
    pub fn find(
        &self,
        scheme: Scheme,
        equalizer: Equalizer,
        passes: usize,
        csi: CsiMode,
        alpha: f64,
    ) -> Option<&PointSummary> {
        self.points.iter().find(|p| {
            p.scheme == scheme
                && p.equalizer == equalizer
                && p.passes == passes
                && p.csi == csi
                && (p.alpha - alpha).abs() < 1e-12
        })
    }
}

/// Runs the sweep on the global rayon pool.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let grid = cfg.grid();
    let mut base: Vec<(Scheme, f64, Arc<TrialContext>)> = Vec::new();
    let mut contexts = Vec::with_capacity(grid.len());
    for &point in &grid {
        let shared = base
            .iter()
            .find(|(s, a, _)| *s == point.scheme && *a == point.alpha)
            .map(|(_, _, c)| c.clone());
        let ctx = match shared {
            Some(c) => c.with_point(point),
            None => {
                let c = TrialContext::new(cfg, point)?;
                base.push((point.scheme, point.alpha, Arc::new(c.clone())));
                c
            }
        };
        contexts.push(ctx);
    }

    let trials = cfg.trials;
    let jobs: Vec<(usize, usize)> = (0..contexts.len())
        .flat_map(|p| (0..trials).map(move |t| (p, t)))
        .collect();
    // collect keeps job order, so aggregation below is schedule independent
    let records: Vec<TrialRecord> = jobs
        .par_iter()
        .map(|&(p, t)| contexts[p].run(cfg.trial_seed(t)))
        .collect::<Result<_>>()?;

    let per_point: Vec<Vec<TrialRecord>> = records.chunks(trials).map(|c| c.to_vec()).collect();
    let points = per_point
        .iter()
        .map(|r| PointSummary::from_records(r))
        .collect::<Result<_>>()?;
    Ok(SweepResult {
        config: cfg.clone(),
        points,
        records: cfg.keep_records.then_some(per_point),
    })
}

/// Runs the sweep on a dedicated pool with `threads` workers.
pub fn run_sweep_with_threads(cfg: &SweepConfig, threads: usize) -> Result<SweepResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::param(format!("thread pool: {e}")))?;
    pool.install(|| run_sweep(cfg))
}

/// One CSV row per grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub scheme: Scheme,
    pub equalizer: Equalizer,
    pub passes: usize,
    pub csi: CsiMode,
    pub alpha: f64,
    pub trials: usize,
    pub nmse: f64,
    pub nmse_ci: f64,
    pub ber: f64,
    pub ber_ci: f64,
    pub papr_mean_db: f64,
    pub papr_p99_db: f64,
    pub se: f64,
    pub se_ci: f64,
}

impl From<&PointSummary> for CsvRow {
    fn from(p: &PointSummary) -> Self {
        Self {
            scheme: p.scheme,
            equalizer: p.equalizer,
            passes: p.passes,
            csi: p.csi,
            alpha: p.alpha,
            trials: p.trials,
            nmse: p.nmse.mean,
            nmse_ci: p.nmse.ci,
            ber: p.ber.mean,
            ber_ci: p.ber.ci,
            papr_mean_db: p.papr_mean_db,
            papr_p99_db: p.papr_p99_db,
            se: p.se.mean,
            se_ci: p.se.ci,
        }
    }
}

pub fn write_csv(result: &SweepResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in &result.points {
        w.serialize(CsvRow::from(p))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

#[derive(Serialize)]
struct Summary<'a> {
    base_seed: u64,
    seed_rule: &'static str,
    config: &'a SweepConfig,
    points: &'a [PointSummary],
}

pub fn write_summary(result: &SweepResult, path: &Path) -> Result<()> {
    let summary = Summary {
        base_seed: result.config.base_seed,
        seed_rule: "trial i uses seed base_seed + i; ChaCha8 streams 0 channel, 1 bits, 2 noise",
        config: &result.config,
        points: &result.points,
    };
    let text = serde_json::to_string_pretty(&summary).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    write_file(path, format!("{text}\n").as_bytes())
}

/// Per-trial records as CSV (only when records were retained).
pub fn write_records(result: &SweepResult, path: &Path) -> Result<bool> {
    let Some(records) = &result.records else {
        return Ok(false);
    };
    let mut w = csv::Writer::from_path(path)?;
    for r in records.iter().flatten() {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(true)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Files produced by [`export`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportPaths {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub records: Option<PathBuf>,
}

/// Writes `sweep.csv`, `summary.json` and, when present, `records.csv`
/// into `dir` (created if missing). Output depends only on the result.
pub fn export(result: &SweepResult, dir: &Path) -> Result<ExportPaths> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let csv = dir.join("sweep.csv");
    let summary = dir.join("summary.json");
    write_csv(result, &csv)?;
    write_summary(result, &summary)?;
    let rec_path = dir.join("records.csv");
    let records = write_records(result, &rec_path)?.then_some(rec_path);
    Ok(ExportPaths {
        csv,
        summary,
        records,
    })
}
