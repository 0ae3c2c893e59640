//! Pilot sequences and frame construction for the two pilot designs.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::numerics::{DdGrid, C64};
use crate::zak::FrameConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Chu sequence on one delay column, superimposed with data.
    S1d,
    /// Single pilot cell inside a guard rectangle.
    Ep,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::S1d => "s1d",
            Scheme::Ep => "ep",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "s1d" => Ok(Scheme::S1d),
            "ep" => Ok(Scheme::Ep),
            other => Err(format!("unknown scheme '{other}' (expected s1d or ep)")),
        }
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Chu polyphase sequence: constant amplitude, zero periodic autocorrelation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChuSequence {
    root: i64,
    values: Vec<C64>,
}

impl ChuSequence {
    /// `a[y] = exp(j pi W y^2 / K)` for even `K`, `exp(j pi W y (y+1) / K)`
    /// for odd `K`.
    pub fn new(len: usize, root: i64) -> Result<Self> {
        if len == 0 {
            return Err(Error::param("Chu sequence length must be positive"));
        }
        if gcd(root.unsigned_abs(), len as u64) != 1 {
            return Err(Error::param(format!(
                "Chu root {root} is not coprime with length {len}"
            )));
        }
        let k = len as i128;
        let w = root as i128;
        let values = (0..k)
            .map(|y| {
                let q = if len.is_multiple_of(2) {
                    y * y
                } else {
                    y * (y + 1)
                };
                // phase pi * (W q mod 2K) / K, reduced in integers
                let r = (w * q).rem_euclid(2 * k);
                C64::from_polar(1.0, PI * r as f64 / k as f64)
            })
            .collect();
        Ok(Self { root, values })
    }

    pub fn root(&self) -> i64 {
        self.root
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    /// `sum_y a[y] conj(a[(y + shift) mod K])`.
    pub fn periodic_autocorrelation(&self, shift: usize) -> C64 {
        let k = self.len();
        (0..k)
            .map(|y| self.values[y] * self.values[(y + shift) % k].conj())
            .sum()
    }
}

pub fn chu(len: usize, root: i64) -> Result<ChuSequence> {
    ChuSequence::new(len, root)
}

/// Prepends the last `ell_max` entries of the sequence, giving a pilot column
/// whose delay shifts up to `ell_max` look cyclic over the sequence length.
pub fn build_pilot_cp_vector(seq: &ChuSequence, ell_max: usize) -> Result<Vec<C64>> {
    let k = seq.len();
    if ell_max > k {
        return Err(Error::param(format!(
            "pilot prefix {ell_max} longer than sequence {k}"
        )));
    }
    let v = seq.values();
    Ok(v[k - ell_max..].iter().chain(v).copied().collect())
}

/// Pilot share `alpha` of a fixed per-frame energy budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySplit {
    pub alpha: f64,
    pub total_energy: f64,
}

impl EnergySplit {
    pub fn new(alpha: f64, total_energy: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::param(format!(
                "pilot fraction {alpha} outside (0, 1)"
            )));
        }
        if !total_energy.is_finite() || total_energy <= 0.0 {
            return Err(Error::param(format!(
                "total energy {total_energy} must be > 0"
            )));
        }
        Ok(Self {
            alpha,
            total_energy,
        })
    }

    pub fn pilot_energy(&self) -> f64 {
        self.alpha * self.total_energy
    }

    pub fn data_energy(&self) -> f64 {
        (1.0 - self.alpha) * self.total_energy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotPlacement {
    /// S1D pilot column.
    Column { col: usize },
    /// EP pilot cell; the guard spans rows `row - ell_max ..= row + ell_max`
    /// and `2 k_max` columns starting at `col + guard_offset` (mod N).
    Cell {
        row: usize,
        col: usize,
        guard_offset: i64,
    },
}

/// Where data and pilot live in the DD grid, and at what energy.
#[derive(Debug, Clone)]
pub struct FrameLayout {
    pub scheme: Scheme,
    pub cfg: FrameConfig,
    pub placement: PilotPlacement,
    /// Column-major mask of data-bearing cells.
    pub data_mask: Vec<bool>,
    /// Vec indices of the data cells, ascending.
    pub data_cells: Vec<usize>,
    pub pilot_grid: DdGrid,
    /// Energy of each data symbol.
    pub data_energy: f64,
    pub split: EnergySplit,
}

impl FrameLayout {
    /// S1D layout: data on rows `0..M-ell_max`, Chu pilot with prefix on
    /// `column`.
    pub fn s1d(cfg: &FrameConfig, split: EnergySplit, root: i64, column: usize) -> Result<Self> {
        check_config(cfg)?;
        let (m, n) = (cfg.m, cfg.n);
        if column >= n {
            return Err(Error::param(format!(
                "pilot column {column} outside 0..{n}"
            )));
        }
        let seq = ChuSequence::new(m - cfg.ell_max, root)?;
        let column_values = build_pilot_cp_vector(&seq, cfg.ell_max)?;
        let amp = (split.pilot_energy() / m as f64).sqrt();
        let mut pilot_grid = DdGrid::zeros(m, n);
        for (l, v) in column_values.iter().enumerate() {
            pilot_grid[(l, column)] = v * amp;
        }
        let data_mask: Vec<bool> = (0..m * n).map(|i| i % m < m - cfg.ell_max).collect();
        Ok(Self::assemble(
            Scheme::S1d,
            cfg,
            PilotPlacement::Column { col: column },
            data_mask,
            pilot_grid,
            split,
        ))
    }

    /// EP layout with the pilot at `(row, col)` and a guard `2 k_max`
    /// columns wide starting at `col + guard_offset`.
    pub fn ep(
        cfg: &FrameConfig,
        split: EnergySplit,
        row: usize,
        col: usize,
        guard_offset: i64,
    ) -> Result<Self> {
        Self::ep_with_guard(cfg, split, row, col, guard_offset, 2 * cfg.k_max)
    }

    /// As [`FrameLayout::ep`] with a guard of `guard_width` columns.
    pub fn ep_with_guard(
        cfg: &FrameConfig,
        split: EnergySplit,
        row: usize,
        col: usize,
        guard_offset: i64,
        guard_width: usize,
    ) -> Result<Self> {
        check_config(cfg)?;
        let (m, n, lm, km) = (cfg.m, cfg.n, cfg.ell_max, cfg.k_max);
        if col >= n {
            return Err(Error::param(format!("pilot column {col} outside 0..{n}")));
        }
        if row < lm || row + lm >= m - lm {
            return Err(Error::param(format!(
                "guard rows {}..={} fall outside data rows 0..{}",
                row as i64 - lm as i64,
                row + lm,
                m - lm
            )));
        }
        if guard_width < 2 * km || guard_width > n {
            return Err(Error::param(format!(
                "guard width {guard_width} outside {}..={n}",
                2 * km
            )));
        }
        let mut data_mask: Vec<bool> = (0..m * n).map(|i| i % m < m - lm).collect();
        for j in 0..guard_width as i64 {
            let gc = (col as i64 + guard_offset + j).rem_euclid(n as i64) as usize;
            for gl in row - lm..=row + lm {
                data_mask[gl + gc * m] = false;
            }
        }
        // the pilot cell itself is never data, even with an unusual offset
        data_mask[row + col * m] = false;
        let mut pilot_grid = DdGrid::zeros(m, n);
        pilot_grid[(row, col)] = C64::new(split.pilot_energy().sqrt(), 0.0);
        Ok(Self::assemble(
            Scheme::Ep,
            cfg,
            PilotPlacement::Cell {
                row,
                col,
                guard_offset,
            },
            data_mask,
            pilot_grid,
            split,
        ))
    }

    /// EP layout with the default placement `(ell_max, N/2)` and a guard
    /// aligned with the Doppler draw set `-k_max+1..=k_max`.
    pub fn ep_default(cfg: &FrameConfig, split: EnergySplit) -> Result<Self> {
        Self::ep(
            cfg,
            split,
            cfg.ell_max,
            cfg.n / 2,
            default_guard_offset(cfg),
        )
    }

    fn assemble(
        scheme: Scheme,
        cfg: &FrameConfig,
        placement: PilotPlacement,
        data_mask: Vec<bool>,
        pilot_grid: DdGrid,
        split: EnergySplit,
    ) -> Self {
        let data_cells: Vec<usize> = data_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &d)| d.then_some(i))
            .collect();
        let data_energy = if data_cells.is_empty() {
            0.0
        } else {
            split.data_energy() / data_cells.len() as f64
        };
        Self {
            scheme,
            cfg: *cfg,
            placement,
            data_mask,
            data_cells,
            pilot_grid,
            data_energy,
            split,
        }
    }

    pub fn data_count(&self) -> usize {
        self.data_cells.len()
    }

    /// `X_d`: unit-energy symbols scaled to the per-symbol data energy and
    /// written to the data cells in vec order.
    pub fn data_grid(&self, symbols: &[C64]) -> Result<DdGrid> {
        if symbols.len() != self.data_cells.len() {
            return Err(Error::dim(self.data_cells.len(), symbols.len()));
        }
        let scale = self.data_energy.sqrt();
        let mut grid = DdGrid::zeros(self.cfg.m, self.cfg.n);
        let buf = grid.as_mut_slice();
        for (&cell, s) in self.data_cells.iter().zip(symbols) {
            buf[cell] = s * scale;
        }
        Ok(grid)
    }

    /// Full frame `X = X_p + X_d`.
    pub fn frame(&self, symbols: &[C64]) -> Result<DdGrid> {
        self.data_grid(symbols)?.add(&self.pilot_grid)
    }

    /// Reads the data cells of a vectorized grid.
    pub fn extract_data(&self, v: &[C64]) -> Vec<C64> {
        self.data_cells.iter().map(|&i| v[i]).collect()
    }
}

/// Guard offset that makes the guard columns `k_p - k_max + 1 ..= k_p + k_max`.
pub fn default_guard_offset(cfg: &FrameConfig) -> i64 {
    1 - cfg.k_max as i64
}

pub fn build_s1d_frame(
    data_syms: &[C64],
    cfg: &FrameConfig,
    split: EnergySplit,
    root: i64,
    pilot_column: usize,
) -> Result<(DdGrid, FrameLayout)> {
    let layout = FrameLayout::s1d(cfg, split, root, pilot_column)?;
    Ok((layout.frame(data_syms)?, layout))
}

pub fn build_ep_frame(
    data_syms: &[C64],
    cfg: &FrameConfig,
    split: EnergySplit,
    pilot_location: (usize, usize),
) -> Result<(DdGrid, FrameLayout)> {
    let layout = FrameLayout::ep(
        cfg,
        split,
        pilot_location.0,
        pilot_location.1,
        default_guard_offset(cfg),
    )?;
    Ok((layout.frame(data_syms)?, layout))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigViolation {
    EmptyGrid { m: usize, n: usize },
    DelaySpread { ell_max: usize, m: usize },
    DopplerSpread { k_max: usize, n: usize },
    CyclicPrefix { cp_len: usize, ell_max: usize },
    PilotPrefix { seq_len: usize, ell_max: usize },
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ConfigViolation::EmptyGrid { m, n } => write!(f, "grid {m}x{n} is empty"),
            ConfigViolation::DelaySpread { ell_max, m } => {
                write!(f, "delay spread {ell_max} must be below M = {m}")
            }
            ConfigViolation::DopplerSpread { k_max, n } => {
                write!(f, "2 * k_max + 1 = {} exceeds N = {n}", 2 * k_max + 1)
            }
            ConfigViolation::CyclicPrefix { cp_len, ell_max } => {
                write!(
                    f,
                    "cyclic prefix {cp_len} shorter than delay spread {ell_max}"
                )
            }
            ConfigViolation::PilotPrefix { seq_len, ell_max } => write!(
                f,
                "pilot sequence length {seq_len} cannot hold a {ell_max}-entry prefix"
            ),
        }
    }
}

/// Checks the crystallization condition, the prefix length and room for the
/// pilot prefix. An empty list means the config is usable.
pub fn validate_config(cfg: &FrameConfig) -> Vec<ConfigViolation> {
    let mut out = Vec::new();
    if cfg.m == 0 || cfg.n == 0 {
        out.push(ConfigViolation::EmptyGrid { m: cfg.m, n: cfg.n });
    }
    if cfg.ell_max >= cfg.m {
        out.push(ConfigViolation::DelaySpread {
            ell_max: cfg.ell_max,
            m: cfg.m,
        });
    }
    if 2 * cfg.k_max + 1 > cfg.n {
        out.push(ConfigViolation::DopplerSpread {
            k_max: cfg.k_max,
            n: cfg.n,
        });
    }
    if cfg.cp_len < cfg.ell_max {
        out.push(ConfigViolation::CyclicPrefix {
            cp_len: cfg.cp_len,
            ell_max: cfg.ell_max,
        });
    }
    let seq_len = cfg.m.saturating_sub(cfg.ell_max);
    if seq_len < cfg.ell_max {
        out.push(ConfigViolation::PilotPrefix {
            seq_len,
            ell_max: cfg.ell_max,
        });
    }
    out
}

pub(crate) fn check_config(cfg: &FrameConfig) -> Result<()> {
    let v = validate_config(cfg);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(v.iter().map(ToString::to_string).collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::papr_db;
    use crate::zak::{add_cp, idzt};
    use approx::assert_abs_diff_eq;

    fn default_cfg() -> FrameConfig {
        FrameConfig::new(32, 16, 8, 4)
    }

    #[test]
    fn chu_even_and_odd() {
        let a = chu(2, 1).unwrap();
        assert_abs_diff_eq!(
            (a.values()[0] - C64::new(1.0, 0.0)).norm(),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            (a.values()[1] - C64::new(0.0, 1.0)).norm(),
            0.0,
            epsilon = 1e-15
        );

        let b = chu(3, 1).unwrap();
        let w = C64::from_polar(1.0, 2.0 * PI / 3.0);
        assert_abs_diff_eq!(
            (b.values()[0] - C64::new(1.0, 0.0)).norm(),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!((b.values()[1] - w).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            (b.values()[2] - C64::new(1.0, 0.0)).norm(),
            0.0,
            epsilon = 1e-15
        );
        assert!(b.periodic_autocorrelation(1).norm() < 1e-12);
    }

    #[test]
    fn chu_cazac_exhaustive() {
        let a = chu(24, 5).unwrap();
        for v in a.values() {
            assert_abs_diff_eq!(v.norm(), 1.0, epsilon = 1e-14);
        }
        for d in 1..24 {
            assert!(a.periodic_autocorrelation(d).norm() < 1e-9, "shift {d}");
        }
    }

    #[test]
    fn chu_rejects_shared_factor() {
        assert!(chu(24, 4).is_err());
        assert!(chu(0, 1).is_err());
        assert!(chu(7, -3).is_ok());
    }

    #[test]
    fn pilot_prefix() {
        let seq = chu(4, 1).unwrap();
        let v = seq.values();
        let out = build_pilot_cp_vector(&seq, 1).unwrap();
        assert_eq!(out, vec![v[3], v[0], v[1], v[2], v[3]]);
        assert_eq!(build_pilot_cp_vector(&seq, 0).unwrap(), v.to_vec());
        assert!(build_pilot_cp_vector(&seq, 5).is_err());

        let seq = chu(24, 1).unwrap();
        let out = build_pilot_cp_vector(&seq, 8).unwrap();
        assert_eq!(out.len(), 32);
        assert_eq!(&out[..8], &seq.values()[16..24]);
    }

    #[test]
    fn s1d_energy_split_and_counts() {
        let cfg = default_cfg();
        let split = EnergySplit::new(0.3, 512.0).unwrap();
        let layout = FrameLayout::s1d(&cfg, split, 1, 0).unwrap();
        assert_abs_diff_eq!(layout.pilot_grid.norm_sqr() / 512.0, 0.3, epsilon = 1e-12);
        assert_eq!(layout.data_count(), 384);
        let pilot_cells = layout
            .pilot_grid
            .as_slice()
            .iter()
            .filter(|z| z.norm() > 0.0)
            .count();
        assert_eq!(pilot_cells, 32);
        // ZP cells carrying neither data nor pilot
        let empty = (0..512)
            .filter(|&i| !layout.data_mask[i] && layout.pilot_grid.as_slice()[i].norm() == 0.0)
            .count();
        assert_eq!(empty, 8 * 15);

        let syms = vec![C64::new(0.5f64.sqrt(), 0.5f64.sqrt()); 384];
        let x = layout.frame(&syms).unwrap();
        let d = layout.data_grid(&syms).unwrap();
        assert_abs_diff_eq!(d.norm_sqr(), 0.7 * 512.0, epsilon = 1e-9);
        // pilot and data overlap, so the frame energy includes a cross term
        let cross = crate::numerics::dot_conj(layout.pilot_grid.as_slice(), d.as_slice()).re;
        assert_abs_diff_eq!(x.norm_sqr(), 512.0 + 2.0 * cross, epsilon = 1e-9);
        for l in 24..32 {
            for k in 1..16 {
                assert_eq!(x[(l, k)], C64::default());
            }
        }
    }

    #[test]
    fn s1d_pilot_only_is_constant_envelope() {
        let cfg = default_cfg();
        let split = EnergySplit::new(0.5, 512.0).unwrap();
        let layout = FrameLayout::s1d(&cfg, split, 1, 3).unwrap();
        let s = add_cp(&idzt(&layout.pilot_grid), cfg.cp_len).unwrap();
        assert_abs_diff_eq!(papr_db(&s.samples).unwrap(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn s1d_rejects_wrong_data_count() {
        let cfg = default_cfg();
        let split = EnergySplit::new(0.3, 512.0).unwrap();
        assert!(build_s1d_frame(&[C64::default(); 10], &cfg, split, 1, 0).is_err());
        assert!(EnergySplit::new(1.0, 512.0).is_err());
        assert!(EnergySplit::new(0.0, 512.0).is_err());
    }

    #[test]
    fn ep_counts_and_guard() {
        let cfg = default_cfg();
        let split = EnergySplit::new(0.9, 512.0).unwrap();
        let layout = FrameLayout::ep_default(&cfg, split).unwrap();
        // brute-force count of cells outside the ZP rows and the 17x8 rectangle
        let mut count = 0;
        for k in 0..16i64 {
            for l in 0..32i64 {
                let zp = l >= 24;
                let in_rows = (0..=16).contains(&l);
                let in_cols = (5..=12).contains(&k);
                if !zp && !(in_rows && in_cols) {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 248);
        assert_eq!(layout.data_count(), 248);
        assert_abs_diff_eq!(
            layout.pilot_grid[(8, 8)].norm_sqr(),
            0.9 * 512.0,
            epsilon = 1e-9
        );

        let syms = vec![C64::new(1.0, 0.0); 248];
        let x = layout.frame(&syms).unwrap();
        for (i, z) in x.as_slice().iter().enumerate() {
            if !layout.data_mask[i] && i != 8 + 8 * 32 {
                assert_eq!(*z, C64::default());
            }
        }
        assert_abs_diff_eq!(x.norm_sqr(), 512.0, epsilon = 1e-9);
    }

    #[test]
    fn ep_rectangle_must_fit() {
        let cfg = default_cfg();
        let split = EnergySplit::new(0.2, 512.0).unwrap();
        assert!(FrameLayout::ep(&cfg, split, 4, 8, -3).is_err());
        assert!(FrameLayout::ep(&cfg, split, 16, 8, -3).is_err());
        assert!(FrameLayout::ep(&cfg, split, 15, 8, -3).is_ok());
    }

    #[test]
    fn validate() {
        assert!(validate_config(&default_cfg()).is_empty());
        let bad = FrameConfig::new(8, 16, 8, 4);
        assert!(validate_config(&bad).contains(&ConfigViolation::DelaySpread { ell_max: 8, m: 8 }));
        let bad = FrameConfig::new(32, 8, 8, 4);
        assert!(validate_config(&bad).contains(&ConfigViolation::DopplerSpread { k_max: 4, n: 8 }));
        let mut bad = default_cfg();
        bad.cp_len = 3;
        assert_eq!(
            validate_config(&bad),
            vec![ConfigViolation::CyclicPrefix {
                cp_len: 3,
                ell_max: 8
            }]
        );
        let bad = FrameConfig::new(12, 16, 7, 4);
        assert!(matches!(
            validate_config(&bad)[..],
            [ConfigViolation::PilotPrefix { .. }]
        ));
    }
}
