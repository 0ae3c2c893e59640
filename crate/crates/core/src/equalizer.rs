//! Interference cancellation, symbol detection and the iterative receiver.

use serde::{Deserialize, Serialize};

use crate::channel::{unit_phase, SparseDdChannel};
use crate::estimator::{omp, sensing_product, ChannelVector, Refit, SensingMatrix, ThresholdRule};
use crate::numerics::{dot_conj, norm_sqr, DdGrid, QamConstellation, C64};
use crate::pilot::FrameLayout;
use crate::zak::ZakTransform;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Equalizer {
    Lmmse,
    Mrc,
}

impl Equalizer {
    pub fn as_str(self) -> &'static str {
        match self {
            Equalizer::Lmmse => "lmmse",
            Equalizer::Mrc => "mrc",
        }
    }
}

impl std::fmt::Display for Equalizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Equalizer {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "lmmse" => Ok(Equalizer::Lmmse),
            "mrc" => Ok(Equalizer::Mrc),
            other => Err(format!(
                "unknown equalizer '{other}' (expected lmmse or mrc)"
            )),
        }
    }
}

/// What the MRC detector feeds back for interference cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feedback {
    /// Nearest constellation point (decision feedback).
    #[default]
    Hard,
    /// Combiner output as is.
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MrcConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub feedback: Feedback,
}

impl Default for MrcConfig {
    fn default() -> Self {
        Self {
            max_iter: 15,
            tol: 1e-6,
            feedback: Feedback::Hard,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// Equalizer output on the data cells, at transmitted scale.
    pub soft: Vec<C64>,
    /// Constellation labels of the hard decisions.
    pub labels: Vec<usize>,
    pub bits: Vec<bool>,
    pub iterations_used: usize,
    pub converged: bool,
}

impl DetectionResult {
    fn from_soft(
        soft: Vec<C64>,
        layout: &FrameLayout,
        constellation: &QamConstellation,
        iterations_used: usize,
        converged: bool,
    ) -> Self {
        let scale = layout.data_energy.sqrt();
        let labels: Vec<usize> = soft
            .iter()
            .map(|z| constellation.nearest(if scale > 0.0 { z / scale } else { *z }))
            .collect();
        let bits = labels
            .iter()
            .flat_map(|&lab| constellation.label_bits(lab))
            .collect();
        Self {
            soft,
            labels,
            bits,
            iterations_used,
            converged,
        }
    }

    /// Decided unit-energy symbols.
    pub fn symbols(&self, constellation: &QamConstellation) -> Vec<C64> {
        self.labels
            .iter()
            .map(|&l| constellation.points()[l])
            .collect()
    }
}

/// `y_d' = y - Omega_p h_est` with the full-grid pilot sensing matrix.
pub fn cancel_pilot(
    y: &[C64],
    h_est: &ChannelVector,
    omega_full: &SensingMatrix,
) -> Result<Vec<C64>> {
    if y.len() != omega_full.rows() {
        return Err(Error::dim(omega_full.rows(), y.len()));
    }
    let p = omega_full.apply(h_est);
    Ok(y.iter().zip(&p).map(|(a, b)| a - b).collect())
}

/// `y_p' = y - Omega(x_d) h_est`, removing the data as seen through the
/// estimated channel.
pub fn cancel_data(y: &[C64], x_d: &DdGrid, h_est: &ChannelVector) -> Result<Vec<C64>> {
    if y.len() != x_d.rows() * x_d.cols() {
        return Err(Error::dim(x_d.rows() * x_d.cols(), y.len()));
    }
    if h_est.is_zero() {
        return Ok(y.to_vec());
    }
    let d = sensing_product(x_d, h_est);
    Ok(y.iter().zip(&d).map(|(a, b)| a - b).collect())
}

/// LMMSE detection of the data cells:
/// `x = (H_d^H H_d + sigma^2/E_d I)^-1 H_d^H y_d'`, where `H_d` holds the
/// columns of the estimated DD channel matrix on the data cells.
///
/// The system is solved matrix-free with conjugate gradients on the sparse
/// channel; `iterations_used` reports the CG steps.
pub fn lmmse_equalize(
    y_d: &[C64],
    h_est: &ChannelVector,
    noise_var: f64,
    layout: &FrameLayout,
    constellation: &QamConstellation,
) -> Result<DetectionResult> {
    let cfg = &layout.cfg;
    if y_d.len() != cfg.grid_len() {
        return Err(Error::dim(cfg.grid_len(), y_d.len()));
    }
    let op = SparseDdChannel::new(&h_est.to_realization(), cfg.m, cfg.n);
    let cells = &layout.data_cells;
    let reg = if layout.data_energy > 0.0 {
        noise_var / layout.data_energy
    } else {
        0.0
    };
    let scatter = |x: &[C64]| {
        let mut full = vec![C64::default(); cfg.grid_len()];
        for (&c, v) in cells.iter().zip(x) {
            full[c] = *v;
        }
        full
    };
    let normal = |x: &[C64]| -> Vec<C64> {
        let hx = op.apply(&scatter(x));
        let back = op.apply_adjoint(&hx);
        cells
            .iter()
            .zip(x)
            .map(|(&c, v)| back[c] + v * reg)
            .collect()
    };
    let rhs: Vec<C64> = {
        let back = op.apply_adjoint(y_d);
        cells.iter().map(|&c| back[c]).collect()
    };
    let (x, iters, converged) = conjugate_gradient(normal, &rhs, 1e-12, 20 * cells.len().max(1));
    Ok(DetectionResult::from_soft(
        x,
        layout,
        constellation,
        iters,
        converged,
    ))
}

/// CG for a Hermitian positive definite operator. Returns the solution, the
/// iteration count and whether the relative residual reached `rel_tol`.
fn conjugate_gradient(
    apply: impl Fn(&[C64]) -> Vec<C64>,
    b: &[C64],
    rel_tol: f64,
    max_iter: usize,
) -> (Vec<C64>, usize, bool) {
    let mut x = vec![C64::default(); b.len()];
    let b_norm = norm_sqr(b).sqrt();
    if b_norm == 0.0 {
        return (x, 0, true);
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs = norm_sqr(&r);
    for it in 1..=max_iter {
        let ap = apply(&p);
        let pap = dot_conj(&p, &ap).re;
        if pap <= 0.0 {
            return (x, it, false);
        }
        let a = rs / pap;
        for ((xi, ri), (pi, api)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&ap)) {
            *xi += pi * a;
            *ri -= api * a;
        }
        let rs_new = norm_sqr(&r);
        if rs_new.sqrt() <= rel_tol * b_norm {
            return (x, it, true);
        }
        let beta = rs_new / rs;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + *pi * beta;
        }
        rs = rs_new;
    }
    (x, max_iter, false)
}

/// Iterative maximal-ratio-combining detector in the delay-time domain.
///
/// The residual `y_d'` is taken to delay-time samples `r[l + nM]`. Delay
/// rows holding data are swept in order; for each row the `P` branches
/// `r[u + l_i]` are combined with weights `conj(h_i e^{j2pi k_i u/MN})`
/// after adding back the row's own contribution, and the result is divided
/// by `sum |h_i|^2 + sigma^2`. The row is then taken to the DD domain,
/// non-data cells are zeroed, data cells are decided (hard feedback) and the
/// residual is updated with the change. Sweeps stop when the update norm is
/// at most `tol` times the estimate norm, or after `max_iter` sweeps.
pub fn mrc_equalize(
    y_d: &[C64],
    h_est: &ChannelVector,
    noise_var: f64,
    layout: &FrameLayout,
    constellation: &QamConstellation,
    mrc: &MrcConfig,
) -> Result<DetectionResult> {
    let cfg = &layout.cfg;
    let (m, n) = (cfg.m, cfg.n);
    let len = m * n;
    if y_d.len() != len {
        return Err(Error::dim(len, y_d.len()));
    }
    let zak = ZakTransform::new(m, n);
    let mut residual = zak.idzt(&DdGrid::unvec(y_d.to_vec(), m, n)?)?.samples;

    let taps = h_est.to_realization().taps;
    let denom = taps.iter().map(|t| t.gain.norm_sqr()).sum::<f64>() + noise_var;
    let data_rows: Vec<usize> = (0..m)
        .filter(|&l| (0..n).any(|k| layout.data_mask[l + k * m]))
        .collect();

    // coeff[i * len + u]: gain from source sample u through tap i
    let mut coeff = vec![C64::default(); taps.len() * len];
    for (i, tap) in taps.iter().enumerate() {
        for &l in &data_rows {
            for t in 0..n {
                let u = l + t * m;
                coeff[i * len + u] = tap.gain * unit_phase(tap.doppler * u as i64, len as i64);
            }
        }
    }
    let target = |i: usize, u: usize| (u + taps[i].delay) % len;

    let scale = layout.data_energy.sqrt();
    let mut estimate = vec![C64::default(); len];
    let mut soft_dd = vec![C64::default(); len];
    let mut row = vec![C64::default(); n];
    let mut used = 0;
    let mut converged = taps.is_empty() || denom == 0.0;

    while !converged && used < mrc.max_iter {
        used += 1;
        let mut change = 0.0;
        for &l in &data_rows {
            for (t, v) in row.iter_mut().enumerate() {
                let u = l + t * m;
                let mut acc = C64::default();
                for i in 0..taps.len() {
                    let c = coeff[i * len + u];
                    acc += c.conj() * (residual[target(i, u)] + c * estimate[u]);
                }
                *v = acc / denom;
            }
            zak.row_forward(&mut row);
            for (k, v) in row.iter_mut().enumerate() {
                let cell = l + k * m;
                if !layout.data_mask[cell] {
                    soft_dd[cell] = C64::default();
                    *v = C64::default();
                    continue;
                }
                soft_dd[cell] = *v;
                if mrc.feedback == Feedback::Hard && scale > 0.0 {
                    *v = constellation.points()[constellation.nearest(*v / scale)] * scale;
                }
            }
            zak.row_inverse(&mut row);
            for (t, v) in row.iter().enumerate() {
                let u = l + t * m;
                let delta = v - estimate[u];
                if delta == C64::default() {
                    continue;
                }
                change += delta.norm_sqr();
                for i in 0..taps.len() {
                    residual[target(i, u)] -= coeff[i * len + u] * delta;
                }
                estimate[u] = *v;
            }
        }
        if change.sqrt() <= mrc.tol * norm_sqr(&estimate).sqrt() {
            converged = true;
        }
    }

    let soft = layout.extract_data(&soft_dd);
    Ok(DetectionResult::from_soft(
        soft,
        layout,
        constellation,
        used,
        converged,
    ))
}

pub fn equalize(
    equalizer: Equalizer,
    y_d: &[C64],
    h_est: &ChannelVector,
    noise_var: f64,
    layout: &FrameLayout,
    constellation: &QamConstellation,
    mrc: &MrcConfig,
) -> Result<DetectionResult> {
    match equalizer {
        Equalizer::Lmmse => lmmse_equalize(y_d, h_est, noise_var, layout, constellation),
        Equalizer::Mrc => mrc_equalize(y_d, h_est, noise_var, layout, constellation, mrc),
    }
}

/// Channel knowledge available to the receiver.
#[derive(Debug, Clone)]
pub enum Csi {
    Estimated,
    /// Known channel; estimation is skipped.
    Perfect(ChannelVector),
}

#[derive(Debug, Clone)]
pub struct PassOutput {
    pub h_est: ChannelVector,
    pub detection: DetectionResult,
}

#[derive(Debug, Clone)]
pub struct ReceiveOutput {
    pub h_est: ChannelVector,
    pub detection: DetectionResult,
    /// One entry per estimation pass, in order.
    pub passes: Vec<PassOutput>,
}

/// Receiver for one frame layout; sensing matrices are built once and
/// shared across frames.
#[derive(Debug, Clone)]
pub struct Receiver {
    pub layout: FrameLayout,
    pub sensing: SensingMatrix,
    pub sensing_full: SensingMatrix,
    pub threshold: ThresholdRule,
    pub refit: Refit,
    pub equalizer: Equalizer,
    pub mrc: MrcConfig,
    pub noise_var: f64,
    pub constellation: QamConstellation,
}

impl Receiver {
    pub fn new(
        layout: FrameLayout,
        threshold: ThresholdRule,
        equalizer: Equalizer,
        noise_var: f64,
        constellation: QamConstellation,
    ) -> Self {
        let sensing = SensingMatrix::for_layout(&layout);
        let sensing_full = SensingMatrix::full_for_layout(&layout);
        Self {
            layout,
            sensing,
            sensing_full,
            threshold,
            refit: Refit::default(),
            equalizer,
            mrc: MrcConfig::default(),
            noise_var,
            constellation,
        }
    }

    /// OMP stopping threshold for this layout and noise level.
    pub fn omp_threshold(&self) -> f64 {
        let tau = self
            .threshold
            .value(self.noise_var.sqrt(), self.layout.data_energy);
        tau.max(1e-9 * self.layout.split.pilot_energy().sqrt())
    }

    /// Channel estimate from a (possibly data-cancelled) DD vector.
    pub fn estimate(&self, y: &[C64]) -> Result<ChannelVector> {
        let obs: Vec<C64> = self.sensing.cells.iter().map(|&i| y[i]).collect();
        let res = omp(
            &obs,
            &self.sensing,
            self.omp_threshold(),
            self.sensing.cols(),
            self.refit,
        )?;
        Ok(res.estimate)
    }

    pub fn detect(&self, y: &[C64], h_est: &ChannelVector) -> Result<DetectionResult> {
        let y_d = cancel_pilot(y, h_est, &self.sensing_full)?;
        equalize(
            self.equalizer,
            &y_d,
            h_est,
            self.noise_var,
            &self.layout,
            &self.constellation,
            &self.mrc,
        )
    }

    /// Alternates estimation and detection for `passes` rounds. Pass 1
    /// estimates from `y`; later passes estimate from `y` with the decided
    /// data removed through the previous channel estimate.
    pub fn receive(&self, y: &DdGrid, csi: &Csi, passes: usize) -> Result<ReceiveOutput> {
        if passes == 0 {
            return Err(Error::param("at least one receiver pass is required"));
        }
        let cfg = &self.layout.cfg;
        if y.shape() != (cfg.m, cfg.n) {
            return Err(Error::dim(cfg.grid_len(), y.rows() * y.cols()));
        }
        let y = y.as_slice();
        let mut out: Vec<PassOutput> = Vec::with_capacity(passes);
        for _ in 0..passes {
            let h_est = match (csi, out.last()) {
                (Csi::Perfect(h), _) => h.clone(),
                (Csi::Estimated, None) => self.estimate(y)?,
                (Csi::Estimated, Some(prev)) => {
                    let x_d = self
                        .layout
                        .data_grid(&prev.detection.symbols(&self.constellation))?;
                    let y_p = cancel_data(y, &x_d, &prev.h_est)?;
                    self.estimate(&y_p)?
                }
            };
            let detection = self.detect(y, &h_est)?;
            out.push(PassOutput { h_est, detection });
        }
        let last = out.last().expect("passes >= 1").clone();
        Ok(ReceiveOutput {
            h_est: last.h_est,
            detection: last.detection,
            passes: out,
        })
    }
}

/// One call of the iterative estimation/equalization loop.
pub fn iterative_receive(receiver: &Receiver, y: &DdGrid, passes: usize) -> Result<ReceiveOutput> {
    receiver.receive(y, &Csi::Estimated, passes)
}
