//! Sparse channel estimation over the delay-Doppler support grid.
//!
//! The channel is represented as a vector over every cell `(l, k)` with
//! `l in 0..=ell_max` and `k in -k_max+1..=k_max`. Each cell has an atom:
//! the pilot grid passed through a unit tap at that cell. Orthogonal matching
//! pursuit picks atoms until no remaining atom correlates with the residual
//! above a threshold.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::{build_h_matrix, dd_io_direct, ChannelRealization, Tap};
use crate::numerics::{dot_conj, norm_sqr, DdGrid, C64};
use crate::pilot::{FrameLayout, PilotPlacement};
use crate::zak::FrameConfig;
use crate::{Error, Result};

/// Position of cell `(l, k)` in the channel vector.
pub fn dd_index(l: usize, k: i64, k_max: usize) -> Result<usize> {
    let km = k_max as i64;
    if k_max == 0 || k < 1 - km || k > km {
        return Err(Error::param(format!(
            "Doppler {k} outside {}..={km}",
            1 - km
        )));
    }
    let width = 2 * km;
    let idx = if k >= 0 {
        l as i64 * width + k
    } else {
        (l as i64 + 1) * width + k
    };
    Ok(idx as usize)
}

/// Inverse of [`dd_index`].
pub fn dd_index_inv(i: usize, k_max: usize) -> (usize, i64) {
    let width = 2 * k_max;
    let l = i / width;
    let r = (i % width) as i64;
    let k = if r <= k_max as i64 {
        r
    } else {
        r - width as i64
    };
    (l, k)
}

/// Channel coefficients on the `(ell_max + 1) x 2 k_max` support grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector {
    pub ell_max: usize,
    pub k_max: usize,
    pub entries: Vec<C64>,
}

impl ChannelVector {
    pub fn zeros(ell_max: usize, k_max: usize) -> Self {
        Self {
            ell_max,
            k_max,
            entries: vec![C64::default(); (ell_max + 1) * 2 * k_max],
        }
    }

    /// Coincident taps add up.
    pub fn from_realization(ch: &ChannelRealization, ell_max: usize, k_max: usize) -> Result<Self> {
        let mut v = Self::zeros(ell_max, k_max);
        for tap in &ch.taps {
            if tap.delay > ell_max {
                return Err(Error::param(format!(
                    "tap delay {} beyond {ell_max}",
                    tap.delay
                )));
            }
            v.entries[dd_index(tap.delay, tap.doppler, k_max)?] += tap.gain;
        }
        Ok(v)
    }

    pub fn to_realization(&self) -> ChannelRealization {
        let taps = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, g)| g.norm_sqr() > 0.0)
            .map(|(i, &gain)| {
                let (delay, doppler) = dd_index_inv(i, self.k_max);
                Tap {
                    gain,
                    delay,
                    doppler,
                }
            })
            .collect();
        ChannelRealization { taps }
    }

    pub fn support(&self) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(i, g)| (g.norm_sqr() > 0.0).then_some(i))
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|g| g.norm_sqr() == 0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// DD cells (vec indices) a pilot can reach through the channel and that
/// the estimator looks at, in the order used for the sensing matrix rows.
///
/// S1D: rows `ell_max..M` of the `2 k_max` columns `k_p + k`,
/// `k in -k_max+1..=k_max`. EP: rows `l_p..=l_p + ell_max` of the same
/// column offsets around `k_p`.
pub fn observation_cells(layout: &FrameLayout) -> Vec<usize> {
    let cfg = &layout.cfg;
    let (m, n) = (cfg.m, cfg.n);
    let (rows, kp) = match layout.placement {
        PilotPlacement::Column { col } => (cfg.ell_max..m, col),
        PilotPlacement::Cell { row, col, .. } => (row..row + cfg.ell_max + 1, col),
    };
    let km = cfg.k_max as i64;
    let mut cells = Vec::with_capacity(rows.len() * 2 * cfg.k_max);
    for k in 1 - km..=km {
        let col = (kp as i64 + k).rem_euclid(n as i64) as usize;
        for l in rows.clone() {
            cells.push(l + col * m);
        }
    }
    cells
}

pub fn select_observation(y: &DdGrid, cells: &[usize]) -> Vec<C64> {
    let v = y.as_slice();
    cells.iter().map(|&i| v[i]).collect()
}

/// Columns are the atoms of every support cell, restricted to `cells`.
#[derive(Debug, Clone)]
pub struct SensingMatrix {
    pub ell_max: usize,
    pub k_max: usize,
    /// Observation cells, one per row.
    pub cells: Vec<usize>,
    columns: Vec<Vec<C64>>,
    norms: Vec<f64>,
}

fn unit_tap(i: usize, k_max: usize) -> ChannelRealization {
    let (delay, doppler) = dd_index_inv(i, k_max);
    ChannelRealization::single(C64::new(1.0, 0.0), delay, doppler)
}

impl SensingMatrix {
    /// Atoms of `grid` restricted to `cells`, or every cell when `None`.
    pub fn from_grid(grid: &DdGrid, cfg: &FrameConfig, cells: Option<&[usize]>) -> Self {
        let cells: Vec<usize> = match cells {
            Some(c) => c.to_vec(),
            None => (0..cfg.grid_len()).collect(),
        };
        let n_atoms = cfg.channel_cells();
        let columns: Vec<Vec<C64>> = (0..n_atoms)
            .map(|i| {
                let shifted = dd_io_direct(grid, &unit_tap(i, cfg.k_max));
                select_observation(&shifted, &cells)
            })
            .collect();
        let norms = columns.iter().map(|c| norm_sqr(c).sqrt()).collect();
        Self {
            ell_max: cfg.ell_max,
            k_max: cfg.k_max,
            cells,
            columns,
            norms,
        }
    }

    /// Pilot sensing matrix on the scheme's observation region.
    pub fn for_layout(layout: &FrameLayout) -> Self {
        let cells = observation_cells(layout);
        Self::from_grid(&layout.pilot_grid, &layout.cfg, Some(&cells))
    }

    /// Pilot sensing matrix over all `MN` rows.
    pub fn full_for_layout(layout: &FrameLayout) -> Self {
        Self::from_grid(&layout.pilot_grid, &layout.cfg, None)
    }

    pub fn rows(&self) -> usize {
        self.cells.len()
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, i: usize) -> &[C64] {
        &self.columns[i]
    }

    pub fn column_norm(&self, i: usize) -> f64 {
        self.norms[i]
    }

    /// `Omega h`, touching only the support of `h`.
    pub fn apply(&self, h: &ChannelVector) -> Vec<C64> {
        let mut out = vec![C64::default(); self.rows()];
        for (col, g) in self.columns.iter().zip(&h.entries) {
            if g.norm_sqr() == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(col) {
                *o += a * g;
            }
        }
        out
    }

    /// Largest normalized inner product between distinct columns.
    pub fn coherence(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.cols() {
            for j in i + 1..self.cols() {
                let d = self.norms[i] * self.norms[j];
                if d > 0.0 {
                    worst = worst.max(dot_conj(&self.columns[i], &self.columns[j]).norm() / d);
                }
            }
        }
        worst
    }
}

/// `Omega(grid) h` over all `MN` cells, building only the columns on the
/// support of `h`.
pub fn sensing_product(grid: &DdGrid, h: &ChannelVector) -> Vec<C64> {
    dd_io_direct(grid, &h.to_realization()).into_vec()
}

/// Additive term of the OMP stopping threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataTerm {
    None,
    /// Adds the average data symbol power as is.
    Power,
    /// Adds the square root of the average data symbol power.
    Amplitude,
}

/// `tau = noise_multiplier * sigma + data term`, compared against the
/// per-atom matched-filter magnitude `|<omega_i, r>| / ||omega_i||`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub noise_multiplier: f64,
    pub data_term: DataTerm,
}

impl ThresholdRule {
    /// `3 sigma`.
    pub fn embedded() -> Self {
        Self {
            noise_multiplier: 3.0,
            data_term: DataTerm::None,
        }
    }

    /// `3 sigma + P_d`, with `P_d` taken on the amplitude scale of the
    /// statistic (`sqrt` of the average data symbol power).
    pub fn superimposed() -> Self {
        Self {
            noise_multiplier: 3.0,
            data_term: DataTerm::Amplitude,
        }
    }

    pub fn value(&self, sigma: f64, data_power: f64) -> f64 {
        let extra = match self.data_term {
            DataTerm::None => 0.0,
            DataTerm::Power => data_power,
            DataTerm::Amplitude => data_power.sqrt(),
        };
        self.noise_multiplier * sigma + extra
    }
}

/// How gains on the selected support are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refit {
    /// Least squares over the whole support after every selection.
    #[default]
    LeastSquares,
    /// Per-atom matched filter; equal to least squares for orthogonal atoms.
    MatchedFilter,
}

#[derive(Debug, Clone)]
pub struct OmpResult {
    pub estimate: ChannelVector,
    /// Atoms in selection order.
    pub selected: Vec<usize>,
    /// Residual norm before the first and after every selection.
    pub residual_norms: Vec<f64>,
}

/// Orthogonal matching pursuit with a residual threshold stop.
///
/// At each step the unselected atom with the largest
/// `|<omega_i, r>| / ||omega_i||` is added unless that value is below
/// `threshold`; the gains are refit and the residual updated. At most
/// `max_iter` atoms are selected.
pub fn omp(
    y_obs: &[C64],
    omega: &SensingMatrix,
    threshold: f64,
    max_iter: usize,
    refit: Refit,
) -> Result<OmpResult> {
    if y_obs.len() != omega.rows() {
        return Err(Error::dim(omega.rows(), y_obs.len()));
    }
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(Error::param(format!(
            "OMP threshold {threshold} must be > 0"
        )));
    }
    let max_iter = max_iter.min(omega.cols());
    let mut residual = y_obs.to_vec();
    let mut selected: Vec<usize> = Vec::new();
    let mut gains: Vec<C64> = Vec::new();
    let mut taken = vec![false; omega.cols()];
    let mut residual_norms = vec![norm_sqr(&residual).sqrt()];

    while selected.len() < max_iter {
        let mut best = None;
        let mut best_stat = 0.0;
        for (i, (&nrm, &used)) in omega.norms.iter().zip(&taken).enumerate() {
            if used || nrm == 0.0 {
                continue;
            }
            let stat = dot_conj(&omega.columns[i], &residual).norm() / nrm;
            if stat > best_stat {
                best_stat = stat;
                best = Some(i);
            }
        }
        let Some(atom) = best else { break };
        if best_stat < threshold {
            break;
        }
        taken[atom] = true;
        selected.push(atom);

        gains = match refit {
            Refit::LeastSquares => least_squares(y_obs, omega, &selected),
            Refit::MatchedFilter => selected
                .iter()
                .map(|&i| dot_conj(&omega.columns[i], y_obs) / (omega.norms[i] * omega.norms[i]))
                .collect(),
        };
        residual.copy_from_slice(y_obs);
        for (&i, g) in selected.iter().zip(&gains) {
            for (r, a) in residual.iter_mut().zip(&omega.columns[i]) {
                *r -= a * g;
            }
        }
        residual_norms.push(norm_sqr(&residual).sqrt());
    }

    let mut estimate = ChannelVector::zeros(omega.ell_max, omega.k_max);
    for (&i, &g) in selected.iter().zip(&gains) {
        estimate.entries[i] = g;
    }
    Ok(OmpResult {
        estimate,
        selected,
        residual_norms,
    })
}

fn least_squares(y: &[C64], omega: &SensingMatrix, support: &[usize]) -> Vec<C64> {
    let s = support.len();
    let gram = DMatrix::from_fn(s, s, |a, b| {
        dot_conj(&omega.columns[support[a]], &omega.columns[support[b]])
    });
    let rhs = DVector::from_iterator(s, support.iter().map(|&i| dot_conj(&omega.columns[i], y)));
    match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs).iter().copied().collect(),
        None => gram
            .lu()
            .solve(&rhs)
            .map(|v| v.iter().copied().collect())
            .unwrap_or_else(|| vec![C64::default(); s]),
    }
}

/// `||H_est - H||_F^2 / ||H||_F^2`.
///
/// Distinct support cells give orthogonal DD operators of squared norm `MN`
/// each, so the ratio reduces to the coefficient-domain error.
pub fn nmse(estimate: &ChannelVector, truth: &ChannelRealization) -> Result<f64> {
    let h = ChannelVector::from_realization(truth, estimate.ell_max, estimate.k_max)?;
    let denom = norm_sqr(&h.entries);
    if denom == 0.0 {
        return Err(Error::Undefined("NMSE of an all-zero channel"));
    }
    let num: f64 = estimate
        .entries
        .iter()
        .zip(&h.entries)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok(num / denom)
}

/// Same ratio computed from dense `H` matrices.
pub fn nmse_dense(
    estimate: &ChannelVector,
    truth: &ChannelRealization,
    cfg: &FrameConfig,
) -> Result<f64> {
    let h = build_h_matrix(truth, cfg.m, cfg.n);
    let denom = h.norm_squared();
    if denom == 0.0 {
        return Err(Error::Undefined("NMSE of an all-zero channel"));
    }
    let h_est = build_h_matrix(&estimate.to_realization(), cfg.m, cfg.n);
    Ok((h_est - h).norm_squared() / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_channel;
    use crate::pilot::EnergySplit;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn default_cfg() -> FrameConfig {
        FrameConfig::new(32, 16, 8, 4)
    }

    #[test]
    fn index_mapping() {
        assert_eq!(dd_index(0, 0, 4).unwrap(), 0);
        assert_eq!(dd_index(8, 4, 4).unwrap(), 68);
        assert_eq!(dd_index(8, -3, 4).unwrap(), 69);
        assert!(dd_index(0, -4, 4).is_err());
        assert!(dd_index(0, 5, 4).is_err());
        let mut seen = [false; 72];
        for l in 0..=8 {
            for k in -3..=4 {
                let i = dd_index(l, k, 4).unwrap();
                assert!(!seen[i]);
                seen[i] = true;
                assert_eq!(dd_index_inv(i, 4), (l, k));
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn ep_atoms_are_single_cells() {
        let cfg = default_cfg();
        let layout = FrameLayout::ep_default(&cfg, EnergySplit::new(0.2, 512.0).unwrap()).unwrap();
        let omega = SensingMatrix::for_layout(&layout);
        assert_eq!((omega.rows(), omega.cols()), (72, 72));
        let mut rows_hit = [false; 72];
        for i in 0..72 {
            let nz: Vec<usize> = omega
                .column(i)
                .iter()
                .enumerate()
                .filter_map(|(r, z)| (z.norm() > 1e-12).then_some(r))
                .collect();
            assert_eq!(nz.len(), 1);
            assert!(!rows_hit[nz[0]]);
            rows_hit[nz[0]] = true;
        }
    }

    #[test]
    fn s1d_sensing_shape_and_coherence() {
        let cfg = default_cfg();
        let layout = FrameLayout::s1d(&cfg, EnergySplit::new(0.4, 512.0).unwrap(), 1, 0).unwrap();
        let omega = SensingMatrix::for_layout(&layout);
        assert_eq!((omega.rows(), omega.cols()), (192, 72));
        // exhaustive pairwise products
        let mut worst = 0.0f64;
        for i in 0..72 {
            for j in 0..72 {
                if i != j {
                    let ip = dot_conj(omega.column(i), omega.column(j)).norm();
                    worst = worst.max(ip / (omega.column_norm(i) * omega.column_norm(j)));
                }
            }
        }
        assert!(worst < 1e-9, "coherence {worst}");
        assert_abs_diff_eq!(omega.coherence(), worst, epsilon = 1e-15);
    }

    #[test]
    fn omp_noiseless_recovery() {
        let cfg = default_cfg();
        let layout = FrameLayout::s1d(&cfg, EnergySplit::new(0.5, 512.0).unwrap(), 1, 0).unwrap();
        let omega = SensingMatrix::for_layout(&layout);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let ch = sample_channel(&mut rng, 3, 8, 4).unwrap();
        let h = ChannelVector::from_realization(&ch, 8, 4).unwrap();
        let y = omega.apply(&h);
        let res = omp(&y, &omega, 1e-6, 72, Refit::LeastSquares).unwrap();
        let mut got = res.estimate.support();
        let mut want = h.support();
        got.sort();
        want.sort();
        assert_eq!(got, want);
        for (a, b) in res.estimate.entries.iter().zip(&h.entries) {
            assert!((a - b).norm() < 1e-8);
        }
        for w in res.residual_norms.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn omp_zero_and_small_noise() {
        let cfg = default_cfg();
        let layout = FrameLayout::ep_default(&cfg, EnergySplit::new(0.2, 512.0).unwrap()).unwrap();
        let omega = SensingMatrix::for_layout(&layout);
        let res = omp(
            &vec![C64::default(); 72],
            &omega,
            0.1,
            72,
            Refit::LeastSquares,
        )
        .unwrap();
        assert!(res.estimate.is_zero());

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sigma = 1e-3;
        let y: Vec<C64> = (0..72)
            .map(|_| crate::channel::complex_gaussian(&mut rng, sigma * sigma))
            .collect();
        let res = omp(&y, &omega, 3.0 * sigma + 0.5, 72, Refit::LeastSquares).unwrap();
        assert!(res.selected.is_empty());
    }

    #[test]
    fn refit_paths_agree_on_orthogonal_atoms() {
        let cfg = default_cfg();
        let layout = FrameLayout::s1d(&cfg, EnergySplit::new(0.3, 512.0).unwrap(), 1, 5).unwrap();
        let omega = SensingMatrix::for_layout(&layout);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ch = sample_channel(&mut rng, 5, 8, 4).unwrap();
        let mut y = omega.apply(&ChannelVector::from_realization(&ch, 8, 4).unwrap());
        for v in y.iter_mut() {
            *v += crate::channel::complex_gaussian(&mut rng, 0.01);
        }
        let a = omp(&y, &omega, 0.5, 72, Refit::LeastSquares).unwrap();
        let b = omp(&y, &omega, 0.5, 72, Refit::MatchedFilter).unwrap();
        assert_eq!(a.selected, b.selected);
        for (x, z) in a.estimate.entries.iter().zip(&b.estimate.entries) {
            assert!((x - z).norm() < 1e-10);
        }
    }

    #[test]
    fn nmse_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ch = sample_channel(&mut rng, 4, 8, 4).unwrap();
        let h = ChannelVector::from_realization(&ch, 8, 4).unwrap();
        assert_eq!(nmse(&h, &ch).unwrap(), 0.0);
        assert_abs_diff_eq!(
            nmse(&ChannelVector::zeros(8, 4), &ch).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert!(nmse(&h, &ChannelRealization::default()).is_err());
    }

    #[test]
    fn nmse_first_order_perturbation() {
        let cfg = FrameConfig::new(8, 6, 2, 2);
        let ch = ChannelRealization::single(C64::new(0.6, -0.3), 1, -1);
        let eps = 1e-3;
        let mut est = ChannelVector::from_realization(&ch, 2, 2).unwrap();
        let i = dd_index(1, -1, 2).unwrap();
        est.entries[i] *= 1.0 + eps;
        let dense = nmse_dense(&est, &ch, &cfg).unwrap();
        assert!((dense / (eps * eps) - 1.0).abs() < 1e-6, "{dense}");
        assert_abs_diff_eq!(nmse(&est, &ch).unwrap(), dense, epsilon = 1e-15);
    }

    #[test]
    fn nmse_routes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let cfg = FrameConfig::new(6, 7, 2, 3);
        for _ in 0..10 {
            let ch = sample_channel(&mut rng, 3, 2, 3).unwrap();
            let mut est = ChannelVector::from_realization(&ch, 2, 3).unwrap();
            for g in est.entries.iter_mut() {
                *g += C64::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
            }
            assert_abs_diff_eq!(
                nmse(&est, &ch).unwrap(),
                nmse_dense(&est, &ch, &cfg).unwrap(),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn threshold_rules() {
        assert_abs_diff_eq!(
            ThresholdRule::embedded().value(0.2, 5.0),
            0.6,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            ThresholdRule::superimposed().value(0.2, 0.25),
            1.1,
            epsilon = 1e-15
        );
        let power = ThresholdRule {
            noise_multiplier: 3.0,
            data_term: DataTerm::Power,
        };
        assert_abs_diff_eq!(power.value(0.2, 0.8), 1.4, epsilon = 1e-15);
    }
}
