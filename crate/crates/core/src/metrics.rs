//! Per-frame performance metrics and their Monte Carlo aggregation.

use serde::{Deserialize, Serialize};

use crate::equalizer::Equalizer;
use crate::numerics::C64;
use crate::pilot::Scheme;
use crate::zak::FrameConfig;
use crate::{Error, Result};

/// Peak-to-average power ratio in dB: `10 log10(max |f|^2 / mean |f|^2)`.
pub fn papr_db(f: &[C64]) -> Result<f64> {
    let mut peak = 0.0f64;
    let mut total = 0.0;
    for z in f {
        let p = z.norm_sqr();
        peak = peak.max(p);
        total += p;
    }
    if total == 0.0 {
        return Err(Error::Undefined("PAPR of an all-zero signal"));
    }
    let mean = total / f.len() as f64;
    // rounding can push a constant envelope a hair below 0 dB
    Ok((10.0 * (peak / mean).log10()).max(0.0))
}

/// Fraction of differing bits.
pub fn ber(tx: &[bool], rx: &[bool]) -> Result<f64> {
    if tx.len() != rx.len() {
        return Err(Error::dim(tx.len(), rx.len()));
    }
    if tx.is_empty() {
        return Ok(0.0);
    }
    Ok(bit_errors(tx, rx) as f64 / tx.len() as f64)
}

pub(crate) fn bit_errors(tx: &[bool], rx: &[bool]) -> usize {
    tx.iter().zip(rx).filter(|(a, b)| a != b).count()
}

/// Transmitted symbols per frame; S1D pays for its frame-level CP.
pub fn frame_length(cfg: &FrameConfig, scheme: Scheme) -> usize {
    match scheme {
        Scheme::S1d => cfg.grid_len() + cfg.cp_len,
        Scheme::Ep => cfg.grid_len(),
    }
}

/// Correctly detected bits per transmitted symbol.
pub fn spectral_efficiency(bits_correct: usize, cfg: &FrameConfig, scheme: Scheme) -> f64 {
    bits_correct as f64 / frame_length(cfg, scheme) as f64
}

/// Channel knowledge used for a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CsiMode {
    Estimated,
    Ideal,
}

impl CsiMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CsiMode::Estimated => "estimated",
            CsiMode::Ideal => "ideal",
        }
    }
}

impl std::fmt::Display for CsiMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of one simulated frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub scheme: Scheme,
    pub equalizer: Equalizer,
    pub passes: usize,
    pub csi: CsiMode,
    pub alpha: f64,
    pub nmse: f64,
    pub ber: f64,
    pub bit_errors: usize,
    pub bits: usize,
    pub papr_db: f64,
    pub se: f64,
    /// Equalizer iterations in the final pass.
    pub iterations: usize,
    pub converged: bool,
}

/// Sample mean and normal-approximation 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub ci: f64,
}

impl MeanCi {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self::default();
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return Self { mean, ci: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Self {
            mean,
            ci: 1.96 * (var / n as f64).sqrt(),
        }
    }
}

/// Nearest-rank percentile, `q` in [0, 1].
pub fn percentile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q.clamp(0.0, 1.0) * v.len() as f64).ceil() as usize).max(1);
    v[rank - 1]
}

/// Aggregates for one sweep grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub scheme: Scheme,
    pub equalizer: Equalizer,
    pub passes: usize,
    pub csi: CsiMode,
    pub alpha: f64,
    pub trials: usize,
    pub nmse: MeanCi,
    pub ber: MeanCi,
    /// Pooled bit error rate (total errors / total bits).
    pub ber_pooled: f64,
    pub bit_errors: usize,
    pub bits: usize,
    pub papr_mean_db: f64,
    pub papr_p99_db: f64,
    pub se: MeanCi,
    pub mean_iterations: f64,
    pub converged_fraction: f64,
}

impl PointSummary {
    /// Summarizes records of a single grid point. Every statistic is a
    /// function of the record multiset, so record order does not matter up
    /// to floating-point summation order.
    pub fn from_records(records: &[TrialRecord]) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::param("cannot summarize an empty record set"))?;
        let col = |f: fn(&TrialRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
        let papr = col(|r| r.papr_db);
        let bit_errors = records.iter().map(|r| r.bit_errors).sum::<usize>();
        let bits = records.iter().map(|r| r.bits).sum::<usize>();
        let n = records.len() as f64;
        Ok(Self {
            scheme: first.scheme,
            equalizer: first.equalizer,
            passes: first.passes,
            csi: first.csi,
            alpha: first.alpha,
            trials: records.len(),
            nmse: MeanCi::from_samples(&col(|r| r.nmse)),
            ber: MeanCi::from_samples(&col(|r| r.ber)),
            ber_pooled: if bits == 0 {
                0.0
            } else {
                bit_errors as f64 / bits as f64
            },
            bit_errors,
            bits,
            papr_mean_db: papr.iter().sum::<f64>() / n,
            papr_p99_db: percentile(&papr, 0.99),
            se: MeanCi::from_samples(&col(|r| r.se)),
            mean_iterations: records.iter().map(|r| r.iterations as f64).sum::<f64>() / n,
            converged_fraction: records.iter().filter(|r| r.converged).count() as f64 / n,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn papr_examples() {
        let flat: Vec<C64> = (0..16).map(|t| C64::from_polar(2.0, t as f64)).collect();
        assert_abs_diff_eq!(papr_db(&flat).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            papr_db(&[c(1.0, 0.0), c(0.0, 0.0)]).unwrap(),
            10.0 * 2f64.log10(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            papr_db(&[c(1.0, 0.0), c(0.0, 0.0)]).unwrap(),
            3.0103,
            epsilon = 1e-4
        );
        assert!(matches!(
            papr_db(&[C64::default(); 4]),
            Err(Error::Undefined(_))
        ));
        assert!(papr_db(&[]).is_err());
    }

    #[test]
    fn ber_examples() {
        let a: Vec<bool> = (0..1000).map(|i| i % 3 == 0).collect();
        assert_eq!(ber(&a, &a).unwrap(), 0.0);
        let inv: Vec<bool> = a.iter().map(|b| !b).collect();
        assert_eq!(ber(&a, &inv).unwrap(), 1.0);
        let mut one = a.clone();
        one[517] = !one[517];
        assert_abs_diff_eq!(ber(&a, &one).unwrap(), 0.001, epsilon = 1e-15);
        assert!(ber(&a, &a[..999]).is_err());
    }

    #[test]
    fn se_examples() {
        let cfg = FrameConfig::default();
        assert_abs_diff_eq!(
            spectral_efficiency(768, &cfg, Scheme::S1d),
            768.0 / 520.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            spectral_efficiency(768, &cfg, Scheme::S1d),
            1.477,
            epsilon = 1e-3
        );
        assert_eq!(spectral_efficiency(0, &cfg, Scheme::Ep), 0.0);
        assert_abs_diff_eq!(
            spectral_efficiency(496, &cfg, Scheme::Ep),
            0.969,
            epsilon = 1e-3
        );
    }

    #[test]
    fn mean_ci() {
        let m = MeanCi::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_abs_diff_eq!(m.mean, 2.5);
        // sample sd of 1..4 is sqrt(5/3)
        assert_abs_diff_eq!(m.ci, 1.96 * (5.0f64 / 3.0).sqrt() / 2.0, epsilon = 1e-12);
        assert_eq!(MeanCi::from_samples(&[7.0]), MeanCi { mean: 7.0, ci: 0.0 });
    }

    #[test]
    fn percentile_nearest_rank() {
        let xs: Vec<f64> = (1..=100).rev().map(f64::from).collect();
        assert_eq!(percentile(&xs, 0.99), 99.0);
        assert_eq!(percentile(&xs, 1.0), 100.0);
        assert_eq!(percentile(&xs, 0.0), 1.0);
        assert_eq!(percentile(&[3.0], 0.99), 3.0);
    }

    fn record(seed: u64, ber: f64, papr: f64) -> TrialRecord {
        TrialRecord {
            seed,
            scheme: Scheme::Ep,
            equalizer: Equalizer::Mrc,
            passes: 1,
            csi: CsiMode::Estimated,
            alpha: 0.2,
            nmse: 0.01 * seed as f64,
            ber,
            bit_errors: (ber * 100.0).round() as usize,
            bits: 100,
            papr_db: papr,
            se: 1.0 - ber,
            iterations: 3,
            converged: seed.is_multiple_of(2),
        }
    }

    #[test]
    fn summary_fields() {
        let recs = vec![record(0, 0.01, 6.0), record(1, 0.03, 8.0)];
        let s = PointSummary::from_records(&recs).unwrap();
        assert_eq!(s.trials, 2);
        assert_abs_diff_eq!(s.ber.mean, 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(s.ber_pooled, 4.0 / 200.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.papr_mean_db, 7.0);
        assert_eq!(s.papr_p99_db, 8.0);
        assert_eq!(s.converged_fraction, 0.5);
        assert!(PointSummary::from_records(&[]).is_err());
    }

    fn signal() -> impl Strategy<Value = Vec<C64>> {
        prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..64)
            .prop_map(|v| v.into_iter().map(|(a, b)| c(a, b)).collect())
            .prop_filter("nonzero", |v: &Vec<C64>| v.iter().any(|z| z.norm() > 1e-3))
    }

    proptest! {
        #[test]
        fn papr_scale_invariant(f in signal(), re in -5.0f64..5.0, im in -5.0f64..5.0) {
            let s = c(re, im);
            prop_assume!(s.norm() > 1e-3);
            let scaled: Vec<C64> = f.iter().map(|z| z * s).collect();
            let a = papr_db(&f).unwrap();
            let b = papr_db(&scaled).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn papr_bounds(f in signal()) {
            let p = papr_db(&f).unwrap();
            prop_assert!(p >= 0.0);
            prop_assert!(p <= 10.0 * (f.len() as f64).log10() + 1e-9);
        }

        #[test]
        fn papr_grows_with_peak(len in 4usize..40, extra in 1.01f64..4.0) {
            // unit-magnitude samples with one raised peak and a compensating
            // dip so total power is unchanged
            let mut f = vec![c(1.0, 0.0); len];
            let base = papr_db(&f).unwrap();
            let peak2 = extra;
            f[0] = c(peak2.sqrt(), 0.0);
            let spare = (len as f64 - peak2) / (len - 1) as f64;
            prop_assume!(spare > 0.0);
            for z in f.iter_mut().skip(1) {
                *z = c(spare.sqrt(), 0.0);
            }
            let raised = papr_db(&f).unwrap();
            prop_assert!(raised >= base);
            let mut higher = f.clone();
            let p2 = (peak2 + 0.5).min(len as f64 - 0.01);
            higher[0] = c(p2.sqrt(), 0.0);
            let spare2 = (len as f64 - p2) / (len - 1) as f64;
            for z in higher.iter_mut().skip(1) {
                *z = c(spare2.sqrt(), 0.0);
            }
            prop_assert!(papr_db(&higher).unwrap() >= raised - 1e-12);
        }

        #[test]
        fn se_bounded_by_error_free(correct_frac in 0.0f64..=1.0, qam16 in any::<bool>()) {
            let cfg = FrameConfig::default();
            let bps = if qam16 { 4 } else { 2 };
            for (scheme, cells) in [(Scheme::S1d, 384usize), (Scheme::Ep, 248)] {
                let max_bits = cells * bps;
                let correct = (correct_frac * max_bits as f64).floor() as usize;
                let se = spectral_efficiency(correct, &cfg, scheme);
                let bound = spectral_efficiency(max_bits, &cfg, scheme);
                prop_assert!(se <= bound + 1e-15);
                prop_assert_eq!(se == bound, correct == max_bits);
            }
        }

        #[test]
        fn summary_order_insensitive(bers in prop::collection::vec(0.0f64..0.5, 1..20), rot in 0usize..20) {
            let recs: Vec<TrialRecord> = bers.iter().enumerate()
                .map(|(i, &b)| record(i as u64, b, 5.0 + b)).collect();
            let mut shuffled = recs.clone();
            let k = rot % recs.len();
            shuffled.rotate_left(k);
            let a = PointSummary::from_records(&recs).unwrap();
            let b = PointSummary::from_records(&shuffled).unwrap();
            prop_assert!((a.ber.mean - b.ber.mean).abs() < 1e-12);
            prop_assert_eq!(a.bit_errors, b.bit_errors);
            prop_assert_eq!(a.papr_p99_db, b.papr_p99_db);
        }
    }
}
