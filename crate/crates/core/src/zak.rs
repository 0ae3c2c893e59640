//! Discrete Zak transform pair and the frame-level (reduced) cyclic prefix.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::numerics::{DdGrid, C64};
use crate::{Error, Result};

/// Frame numerology. All quantities are in samples/bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameConfig {
    /// Delay bins.
    pub m: usize,
    /// Doppler bins.
    pub n: usize,
    /// Frame-level cyclic prefix length.
    pub cp_len: usize,
    /// Delay spread bound.
    pub ell_max: usize,
    /// Doppler spread bound.
    pub k_max: usize,
}

impl FrameConfig {
    /// Config with the cyclic prefix set to the delay spread bound.
    pub fn new(m: usize, n: usize, ell_max: usize, k_max: usize) -> Self {
        Self {
            m,
            n,
            cp_len: ell_max,
            ell_max,
            k_max,
        }
    }

    pub fn grid_len(&self) -> usize {
        self.m * self.n
    }

    /// Number of DD cells the channel support can occupy.
    pub fn channel_cells(&self) -> usize {
        (self.ell_max + 1) * 2 * self.k_max
    }
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self::new(32, 16, 8, 4)
    }
}

/// Time-domain samples, optionally carrying a cyclic prefix of `cp_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    pub samples: Vec<C64>,
    pub cp_len: usize,
}

impl TimeSignal {
    pub fn new(samples: Vec<C64>) -> Self {
        Self { samples, cp_len: 0 }
    }

    pub fn has_cp(&self) -> bool {
        self.cp_len > 0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples after the prefix.
    pub fn body(&self) -> &[C64] {
        &self.samples[self.cp_len..]
    }
}

/// Planned IDZT/DZT for a fixed `M x N` grid.
///
/// The transforms run one length-`N` DFT per delay row with the symmetric
/// `1/sqrt(N)` normalization, so both directions are unitary.
#[derive(Clone)]
pub struct ZakTransform {
    m: usize,
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ZakTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ZakTransform")
            .field("m", &self.m)
            .field("n", &self.n)
            .finish()
    }
}

impl ZakTransform {
    pub fn new(m: usize, n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            m,
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn for_config(cfg: &FrameConfig) -> Self {
        Self::new(cfg.m, cfg.n)
    }

    /// `s[l + nM] = 1/sqrt(N) sum_k X[l, k] exp(j 2 pi n k / N)`.
    pub fn idzt(&self, x: &DdGrid) -> Result<TimeSignal> {
        if x.shape() != (self.m, self.n) {
            return Err(Error::dim(self.m * self.n, x.rows() * x.cols()));
        }
        let mut out = vec![C64::default(); self.m * self.n];
        let mut row = vec![C64::default(); self.n];
        let scale = 1.0 / (self.n as f64).sqrt();
        for l in 0..self.m {
            for (k, v) in row.iter_mut().enumerate() {
                *v = x[(l, k)];
            }
            self.inverse.process(&mut row);
            for (t, v) in row.iter().enumerate() {
                out[l + t * self.m] = v * scale;
            }
        }
        Ok(TimeSignal::new(out))
    }

    /// Inverse of [`ZakTransform::idzt`]; `r` must be CP-free.
    pub fn dzt(&self, r: &TimeSignal) -> Result<DdGrid> {
        self.dzt_samples(&r.samples)
    }

    pub fn dzt_samples(&self, r: &[C64]) -> Result<DdGrid> {
        if r.len() != self.m * self.n {
            return Err(Error::dim(self.m * self.n, r.len()));
        }
        let mut out = DdGrid::zeros(self.m, self.n);
        let mut row = vec![C64::default(); self.n];
        let scale = 1.0 / (self.n as f64).sqrt();
        for l in 0..self.m {
            for (t, v) in row.iter_mut().enumerate() {
                *v = r[l + t * self.m];
            }
            self.forward.process(&mut row);
            for (k, v) in row.iter().enumerate() {
                out[(l, k)] = v * scale;
            }
        }
        Ok(out)
    }

    /// Unitary length-`N` DFT applied in place (one delay row).
    pub(crate) fn row_forward(&self, row: &mut [C64]) {
        self.forward.process(row);
        let scale = 1.0 / (self.n as f64).sqrt();
        row.iter_mut().for_each(|v| *v *= scale);
    }

    pub(crate) fn row_inverse(&self, row: &mut [C64]) {
        self.inverse.process(row);
        let scale = 1.0 / (self.n as f64).sqrt();
        row.iter_mut().for_each(|v| *v *= scale);
    }
}

pub fn idzt(x: &DdGrid) -> TimeSignal {
    ZakTransform::new(x.rows(), x.cols())
        .idzt(x)
        .expect("shape matches by construction")
}

pub fn dzt(r: &TimeSignal, m: usize, n: usize) -> Result<DdGrid> {
    ZakTransform::new(m, n).dzt(r)
}

/// Prepends the last `cp_len` samples.
pub fn add_cp(s: &TimeSignal, cp_len: usize) -> Result<TimeSignal> {
    if cp_len > s.len() {
        return Err(Error::param(format!(
            "cyclic prefix {cp_len} longer than signal {}",
            s.len()
        )));
    }
    let mut samples = Vec::with_capacity(s.len() + cp_len);
    samples.extend_from_slice(&s.samples[s.len() - cp_len..]);
    samples.extend_from_slice(&s.samples);
    Ok(TimeSignal { samples, cp_len })
}

/// Drops the first `cp_len` samples.
pub fn remove_cp(r: &TimeSignal, cp_len: usize) -> Result<TimeSignal> {
    if r.len() < cp_len {
        return Err(Error::param(format!(
            "signal of {} samples cannot hold a {cp_len}-sample prefix",
            r.len()
        )));
    }
    Ok(TimeSignal::new(r.samples[cp_len..].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_grid(rng: &mut impl Rng, m: usize, n: usize) -> DdGrid {
        DdGrid::from_fn(m, n, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn zero_grid_gives_zero_signal() {
        let s = idzt(&DdGrid::zeros(4, 8));
        assert!(s.samples.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn two_bin_example() {
        let x = DdGrid::unvec(vec![c(1.0, 0.0), c(1.0, 0.0)], 1, 2).unwrap();
        let s = idzt(&x);
        assert_abs_diff_eq!(s.samples[0].re, 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(s.samples[1].norm(), 0.0, epsilon = 1e-15);
        let back = dzt(
            &TimeSignal::new(vec![c(2f64.sqrt(), 0.0), c(0.0, 0.0)]),
            1,
            2,
        )
        .unwrap();
        assert_abs_diff_eq!(back[(0, 0)].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(back[(0, 1)].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn idzt_matches_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (m, n) = (4, 4);
        let x = random_grid(&mut rng, m, n);
        let s = idzt(&x);
        for l in 0..m {
            for t in 0..n {
                let mut acc = C64::default();
                for k in 0..n {
                    let ph = 2.0 * std::f64::consts::PI * (t * k) as f64 / n as f64;
                    acc += x[(l, k)] * C64::from_polar(1.0, ph);
                }
                acc /= (n as f64).sqrt();
                assert_abs_diff_eq!((s.samples[l + t * m] - acc).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn dzt_inverts_idzt() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_grid(&mut rng, 8, 4);
        let y = dzt(&idzt(&x), 8, 4).unwrap();
        for (a, b) in x.as_slice().iter().zip(y.as_slice()) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn dzt_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r: Vec<C64> = (0..32)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let e_r: f64 = r.iter().map(|z| z.norm_sqr()).sum();
        let y = dzt(&TimeSignal::new(r), 4, 8).unwrap();
        assert_abs_diff_eq!(y.norm_sqr(), e_r, epsilon = 1e-12 * e_r);
    }

    #[test]
    fn dzt_length_mismatch() {
        assert!(dzt(&TimeSignal::new(vec![C64::default(); 7]), 2, 4).is_err());
    }

    #[test]
    fn cyclic_prefix() {
        let s = TimeSignal::new((1..=4).map(|v| c(v as f64, 0.0)).collect());
        let with = add_cp(&s, 2).unwrap();
        let re: Vec<f64> = with.samples.iter().map(|z| z.re).collect();
        assert_eq!(re, vec![3.0, 4.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(with.cp_len, 2);
        assert_eq!(remove_cp(&with, 2).unwrap(), s);
        assert_eq!(add_cp(&s, 0).unwrap().samples, s.samples);
        assert_eq!(remove_cp(&s, 0).unwrap(), s);
        assert!(add_cp(&s, 5).is_err());
        assert!(remove_cp(&s, 5).is_err());
    }

    #[test]
    fn remove_cp_keeps_suffix() {
        let r = TimeSignal::new((0..20).map(|v| c(v as f64, -(v as f64))).collect());
        let body = remove_cp(&r, 4).unwrap();
        assert_eq!(body.samples, r.samples[4..].to_vec());
    }
}
