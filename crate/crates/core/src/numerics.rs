//! Complex containers and QAM symbol mapping shared by the rest of the crate.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type C64 = Complex64;

/// An `M x N` delay-Doppler grid, indexed `[delay, doppler]`.
///
/// Storage is column-major so that [`DdGrid::vec`] is the plain column
/// stacking used throughout the crate: entry `[l, k]` lives at `l + k * M`.
#[derive(Debug, Clone, PartialEq)]
pub struct DdGrid {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl DdGrid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    /// Inverse of [`DdGrid::vec`].
    pub fn unvec(v: Vec<C64>, rows: usize, cols: usize) -> Result<Self> {
        if v.len() != rows * cols {
            return Err(Error::dim(rows * cols, v.len()));
        }
        Ok(Self {
            rows,
            cols,
            data: v,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut grid = Self::zeros(rows, cols);
        for k in 0..cols {
            for l in 0..rows {
                grid[(l, k)] = f(l, k);
            }
        }
        grid
    }

    /// Column stacking: `out[l + k * M] = self[l, k]`.
    pub fn vec(&self) -> Vec<C64> {
        self.data.clone()
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn add(&self, other: &DdGrid) -> Result<DdGrid> {
        if self.shape() != other.shape() {
            return Err(Error::dim(self.data.len(), other.data.len()));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(DdGrid { data, ..*self })
    }
}

impl Index<(usize, usize)> for DdGrid {
    type Output = C64;

    fn index(&self, (l, k): (usize, usize)) -> &C64 {
        debug_assert!(l < self.rows && k < self.cols);
        &self.data[l + k * self.rows]
    }
}

impl IndexMut<(usize, usize)> for DdGrid {
    fn index_mut(&mut self, (l, k): (usize, usize)) -> &mut C64 {
        debug_assert!(l < self.rows && k < self.cols);
        &mut self.data[l + k * self.rows]
    }
}

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Inner product `<a, b> = sum conj(a_i) b_i`.
pub fn dot_conj(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Supported constellation sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum QamOrder {
    Qam4,
    Qam16,
}

impl QamOrder {
    pub fn size(self) -> usize {
        match self {
            QamOrder::Qam4 => 4,
            QamOrder::Qam16 => 16,
        }
    }

    pub fn bits_per_symbol(self) -> usize {
        match self {
            QamOrder::Qam4 => 2,
            QamOrder::Qam16 => 4,
        }
    }
}

impl TryFrom<u32> for QamOrder {
    type Error = String;

    fn try_from(v: u32) -> std::result::Result<Self, String> {
        match v {
            4 => Ok(QamOrder::Qam4),
            16 => Ok(QamOrder::Qam16),
            other => Err(format!("unsupported QAM order {other} (expected 4 or 16)")),
        }
    }
}

impl From<QamOrder> for u32 {
    fn from(o: QamOrder) -> u32 {
        o.size() as u32
    }
}

/// Square QAM with a per-axis Gray code and unit average energy.
///
/// A label is read MSB first; the first half of the bits selects the
/// in-phase level and the second half the quadrature level. Per axis:
///
/// | 4-QAM bit | level |   | 16-QAM bits | level |
/// |-----------|-------|---|-------------|-------|
/// | 0         | +1    |   | 00          | +3    |
/// | 1         | -1    |   | 01          | +1    |
/// |           |       |   | 11          | -1    |
/// |           |       |   | 10          | -3    |
///
/// Levels are scaled by `1/sqrt(2)` (4-QAM) or `1/sqrt(10)` (16-QAM), so
/// label `00` of 4-QAM is `(1 + j)/sqrt(2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QamConstellation {
    order: QamOrder,
    points: Vec<C64>,
}

impl QamConstellation {
    pub fn new(order: QamOrder) -> Self {
        let (levels, scale): (&[f64], f64) = match order {
            QamOrder::Qam4 => (&[1.0, -1.0], 2f64.sqrt()),
            // indexed by the 2-bit axis label 00, 01, 10, 11
            QamOrder::Qam16 => (&[3.0, 1.0, -3.0, -1.0], 10f64.sqrt()),
        };
        let half = order.bits_per_symbol() / 2;
        let mask = (1 << half) - 1;
        let points = (0..order.size())
            .map(|label| {
                let i = levels[label >> half];
                let q = levels[label & mask];
                C64::new(i, q) / scale
            })
            .collect();
        Self { order, points }
    }

    pub fn qam4() -> Self {
        Self::new(QamOrder::Qam4)
    }

    pub fn qam16() -> Self {
        Self::new(QamOrder::Qam16)
    }

    pub fn order(&self) -> QamOrder {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.order.bits_per_symbol()
    }

    /// Points indexed by label.
    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn label_bits(&self, label: usize) -> impl Iterator<Item = bool> + '_ {
        let b = self.bits_per_symbol();
        (0..b).map(move |i| (label >> (b - 1 - i)) & 1 == 1)
    }

    /// Index of the nearest point; ties resolve to the lowest index.
    pub fn nearest(&self, z: C64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    pub fn map(&self, bits: &[bool]) -> Result<Vec<C64>> {
        let b = self.bits_per_symbol();
        if !bits.len().is_multiple_of(b) {
            return Err(Error::param(format!(
                "bit count {} is not a multiple of {b}",
                bits.len()
            )));
        }
        Ok(bits
            .chunks(b)
            .map(|chunk| {
                let label = chunk
                    .iter()
                    .fold(0usize, |acc, &bit| (acc << 1) | bit as usize);
                self.points[label]
            })
            .collect())
    }

    /// Hard-decision demapping to the nearest point.
    pub fn demap(&self, symbols: &[C64]) -> Vec<bool> {
        let mut bits = Vec::with_capacity(symbols.len() * self.bits_per_symbol());
        for &z in symbols {
            bits.extend(self.label_bits(self.nearest(z)));
        }
        bits
    }
}
