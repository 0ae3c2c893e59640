//! Sparse doubly-dispersive channel with integer delay and Doppler taps.
//!
//! Three equivalent routes are provided: the time-domain direct sum on a
//! CP-extended signal ([`apply_channel_time`]), the dense matrices `G` and
//! `H` ([`build_g_matrix`], [`build_h_matrix`]) and the quasi-periodic DD
//! relation ([`dd_io_direct`], [`SparseDdChannel`]).

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::numerics::{DdGrid, C64};
use crate::zak::TimeSignal;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub gain: C64,
    pub delay: usize,
    pub doppler: i64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub taps: Vec<Tap>,
}

impl ChannelRealization {
    pub fn new(taps: Vec<Tap>) -> Self {
        Self { taps }
    }

    pub fn single(gain: C64, delay: usize, doppler: i64) -> Self {
        Self::new(vec![Tap {
            gain,
            delay,
            doppler,
        }])
    }

    pub fn identity() -> Self {
        Self::single(C64::new(1.0, 0.0), 0, 0)
    }

    pub fn paths(&self) -> usize {
        self.taps.len()
    }

    pub fn max_delay(&self) -> usize {
        self.taps.iter().map(|t| t.delay).max().unwrap_or(0)
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.gain.norm_sqr()).sum()
    }
}

/// White complex Gaussian noise with per-sample variance `variance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub variance: f64,
}

impl NoiseModel {
    pub fn new(variance: f64) -> Result<Self> {
        if !variance.is_finite() || variance < 0.0 {
            return Err(Error::param(format!(
                "noise variance {variance} must be >= 0"
            )));
        }
        Ok(Self { variance })
    }

    pub fn noiseless() -> Self {
        Self { variance: 0.0 }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> C64 {
        complex_gaussian(rng, self.variance)
    }
}

/// One draw of `CN(0, variance)`.
pub fn complex_gaussian(rng: &mut impl Rng, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * s, im * s)
}

/// `exp(j 2 pi num / den)` with the numerator reduced exactly first.
pub(crate) fn unit_phase(num: i64, den: i64) -> C64 {
    let r = num.rem_euclid(den);
    C64::from_polar(1.0, 2.0 * PI * r as f64 / den as f64)
}

/// Draws `paths` taps with distinct (delay, Doppler) cells.
///
/// Delays are uniform on `0..=ell_max`, Dopplers uniform on
/// `-k_max+1..=k_max` and gains are `CN(0, 1/paths)`.
pub fn sample_channel(
    rng: &mut impl Rng,
    paths: usize,
    ell_max: usize,
    k_max: usize,
) -> Result<ChannelRealization> {
    sample_channel_with(rng, paths, ell_max, k_max, true)
}

/// As [`sample_channel`]; with `distinct == false` taps are drawn
/// independently and may share a cell.
pub fn sample_channel_with(
    rng: &mut impl Rng,
    paths: usize,
    ell_max: usize,
    k_max: usize,
    distinct: bool,
) -> Result<ChannelRealization> {
    let dopplers = 2 * k_max;
    let cells = (ell_max + 1) * dopplers;
    if paths == 0 {
        return Ok(ChannelRealization::default());
    }
    if cells == 0 || (distinct && paths > cells) {
        return Err(Error::param(format!(
            "{paths} paths do not fit in {cells} delay-Doppler cells"
        )));
    }
    let cell_ids: Vec<usize> = if distinct {
        rand::seq::index::sample(rng, cells, paths).into_vec()
    } else {
        (0..paths).map(|_| rng.random_range(0..cells)).collect()
    };
    let variance = 1.0 / paths as f64;
    let taps = cell_ids
        .into_iter()
        .map(|id| Tap {
            delay: id / dopplers,
            doppler: (id % dopplers) as i64 - k_max as i64 + 1,
            gain: complex_gaussian(rng, variance),
        })
        .collect();
    Ok(ChannelRealization { taps })
}

/// Passes a CP-extended signal through the channel and adds noise.
///
/// Sample `t` of the body (CP samples have negative `t`) receives
/// `sum_i h_i exp(j 2 pi k_i (t - l_i) / MN) s[t - l_i]`. Samples before the
/// start of the frame are zero. After CP removal the body equals `G s + n`.
pub fn apply_channel_time(
    s: &TimeSignal,
    ch: &ChannelRealization,
    noise: &NoiseModel,
    rng: &mut impl Rng,
) -> Result<TimeSignal> {
    let cp = s.cp_len;
    if ch.max_delay() > cp {
        return Err(Error::param(format!(
            "cyclic prefix {cp} shorter than channel delay {}",
            ch.max_delay()
        )));
    }
    let body = (s.len() - cp) as i64;
    let mut out = vec![C64::default(); s.len()];
    for tap in &ch.taps {
        let l = tap.delay;
        for (idx, o) in out.iter_mut().enumerate().skip(l) {
            let t = idx as i64 - cp as i64;
            let ph = unit_phase(tap.doppler * (t - l as i64), body);
            *o += tap.gain * ph * s.samples[idx - l];
        }
    }
    if noise.variance > 0.0 {
        for o in out.iter_mut() {
            *o += noise.sample(rng);
        }
    }
    Ok(TimeSignal {
        samples: out,
        cp_len: cp,
    })
}

/// Dense time-domain channel matrix
/// `G = sum_i h_i exp(-j 2 pi k_i l_i / NM) Delta^{k_i} Pi^{l_i}`.
pub fn build_g_matrix(ch: &ChannelRealization, m: usize, n: usize) -> DMatrix<C64> {
    let len = m * n;
    let mut g = DMatrix::zeros(len, len);
    for tap in &ch.taps {
        let pre = unit_phase(-tap.doppler * tap.delay as i64, len as i64);
        for t in 0..len {
            let col = (t + len - tap.delay % len) % len;
            g[(t, col)] += tap.gain * pre * unit_phase(tap.doppler * t as i64, len as i64);
        }
    }
    g
}

/// `F_N (x) I_M` with the unitary DFT matrix.
pub fn dft_kron_identity(m: usize, n: usize) -> DMatrix<C64> {
    let len = m * n;
    let scale = 1.0 / (n as f64).sqrt();
    let mut k = DMatrix::zeros(len, len);
    for a in 0..n {
        for b in 0..n {
            let f = unit_phase(-((a * b) as i64), n as i64) * scale;
            for i in 0..m {
                k[(a * m + i, b * m + i)] = f;
            }
        }
    }
    k
}

/// Dense DD channel matrix `H = (F_N (x) I_M) G (F_N^H (x) I_M)`.
pub fn build_h_matrix(ch: &ChannelRealization, m: usize, n: usize) -> DMatrix<C64> {
    let k = dft_kron_identity(m, n);
    let g = build_g_matrix(ch, m, n);
    &k * g * k.adjoint()
}

/// Coefficient and source cell of one tap for DD output cell `(l, k)`.
#[inline]
fn tap_source(tap: &Tap, l: usize, k: usize, m: usize, n: usize) -> (usize, usize, C64) {
    let d = l as i64 - tap.delay as i64;
    let src_l = d.rem_euclid(m as i64) as usize;
    let wraps = d.div_euclid(m as i64);
    let kk = k as i64 - tap.doppler;
    let src_k = kk.rem_euclid(n as i64) as usize;
    let coeff =
        tap.gain * unit_phase(tap.doppler * d, (m * n) as i64) * unit_phase(kk * wraps, n as i64);
    (src_l, src_k, coeff)
}

/// Noiseless DD input-output relation evaluated cell by cell:
/// `Y[l, k] = sum_i h_i e^{j2pi k_i (l - l_i)/MN} X[(l-l_i)_M, (k-k_i)_N]
/// e^{j2pi (k - k_i) floor((l - l_i)/M) / N}`.
pub fn dd_io_direct(x: &DdGrid, ch: &ChannelRealization) -> DdGrid {
    let (m, n) = x.shape();
    let mut y = DdGrid::zeros(m, n);
    for k in 0..n {
        for l in 0..m {
            let mut acc = C64::default();
            for tap in &ch.taps {
                let (sl, sk, c) = tap_source(tap, l, k, m, n);
                acc += c * x[(sl, sk)];
            }
            y[(l, k)] = acc;
        }
    }
    y
}

/// Column-sparse DD channel matrix: every input cell feeds one output cell
/// per tap.
#[derive(Debug, Clone)]
pub struct SparseDdChannel {
    m: usize,
    n: usize,
    // entries[j * taps + i] = (output index, coefficient) of input j through tap i
    entries: Vec<(usize, C64)>,
    taps: usize,
}

impl SparseDdChannel {
    pub fn new(ch: &ChannelRealization, m: usize, n: usize) -> Self {
        let taps = ch.taps.len();
        let mut entries = vec![(0, C64::default()); m * n * taps];
        for k in 0..n {
            for l in 0..m {
                let out = l + k * m;
                for (i, tap) in ch.taps.iter().enumerate() {
                    let (sl, sk, c) = tap_source(tap, l, k, m, n);
                    entries[(sl + sk * m) * taps + i] = (out, c);
                }
            }
        }
        Self {
            m,
            n,
            entries,
            taps,
        }
    }

    pub fn len(&self) -> usize {
        self.m * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.taps == 0
    }

    /// Nonzeros of column `j` as `(row, value)`.
    pub fn column(&self, j: usize) -> &[(usize, C64)] {
        &self.entries[j * self.taps..(j + 1) * self.taps]
    }

    /// `y = H x`.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::default(); self.len()];
        for (j, xj) in x.iter().enumerate() {
            if *xj == C64::default() {
                continue;
            }
            for &(r, c) in self.column(j) {
                y[r] += c * xj;
            }
        }
        y
    }

    /// `x = H^H y`.
    pub fn apply_adjoint(&self, y: &[C64]) -> Vec<C64> {
        (0..self.len())
            .map(|j| self.column(j).iter().map(|&(r, c)| c.conj() * y[r]).sum())
            .collect()
    }
}
