//! Receiver saturation conditions for the full-duplex node.
//!
//! Four nested tests guard the per-antenna LNAs and the per-RF-chain ADCs
//! against self-interference:
//!
//! * `C1`: exact per-element power, given the digital precoder;
//! * `C2`: largest singular value of the full precoded SI image;
//! * `C3`: largest singular value of the analog-only SI image;
//! * `C4`: sum of column-wise SI image energies (no SVD at all).
//!
//! Each later test is sufficient for the earlier one (`C4 ⇒ C3 ⇒ C2 ⇒ C1`,
//! the `C3 ⇒ C2` step for any digital precoder with `||F_BB[u]||_F^2 <= N_s`).
//! The LNA forms take no combiner; the ADC forms are the same kernels with a
//! `W_RF^H` prefix. All kernels work in linear units; dB conversion happens in
//! [`EtaConstants::derive`] only.

use serde::{Deserialize, Serialize};

use crate::allowlist::OpCounter;
use crate::channel::FreqChannel;
use crate::error::{invalid, mismatch, Result};
use crate::linalg::{db_to_linear, sigma_max_sq, vec_norm_sq, CMat};

/// `6.021 B + 1.763` dB.
pub fn adc_dynamic_range_db(bits: u32) -> f64 {
    6.021 * bits as f64 + 1.763
}

/// Largest ADC input power for a `bits`-bit converter above `noise_floor_dbm`,
/// backed off by `papr_margin_db`.
pub fn adc_max_dbm(bits: u32, noise_floor_dbm: f64, papr_margin_db: f64) -> f64 {
    noise_floor_dbm + adc_dynamic_range_db(bits) - papr_margin_db
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationThresholds {
    pub p_lna_max_dbm: f64,
    pub p_adc_max_dbm: f64,
    pub adc_bits: Option<u32>,
    pub noise_floor_dbm: f64,
    pub papr_margin_db: f64,
}

impl SaturationThresholds {
    /// Thresholds with the ADC cap derived from its resolution.
    pub fn from_adc_bits(p_lna_max_dbm: f64, adc_bits: u32, noise_floor_dbm: f64, papr_margin_db: f64) -> Self {
        SaturationThresholds {
            p_lna_max_dbm,
            p_adc_max_dbm: adc_max_dbm(adc_bits, noise_floor_dbm, papr_margin_db),
            adc_bits: Some(adc_bits),
            noise_floor_dbm,
            papr_margin_db,
        }
    }

    /// Thresholds with both caps given directly.
    pub fn explicit(p_lna_max_dbm: f64, p_adc_max_dbm: f64) -> Self {
        SaturationThresholds {
            p_lna_max_dbm,
            p_adc_max_dbm,
            adc_bits: None,
            noise_floor_dbm: f64::NAN,
            papr_margin_db: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_lna_max_dbm.is_nan() || self.p_adc_max_dbm.is_nan() {
            return Err(invalid("thresholds", "power caps must not be NaN"));
        }
        if !(self.papr_margin_db >= 0.0) {
            return Err(invalid("papr_margin_db", "must be >= 0"));
        }
        if let Some(b) = self.adc_bits {
            let expect = adc_max_dbm(b, self.noise_floor_dbm, self.papr_margin_db);
            if (expect - self.p_adc_max_dbm).abs() > 0.005 {
                return Err(invalid(
                    "p_adc_max_dbm",
                    format!("{} dBm disagrees with {} bits ({expect:.3} dBm)", self.p_adc_max_dbm, b),
                ));
            }
        }
        Ok(())
    }
}

/// Normalized SI power budgets `eta = U P_max / (P_tx G_ii^2)` in linear units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaConstants {
    pub eta_lna: f64,
    pub eta_adc: f64,
}

impl EtaConstants {
    pub fn derive(
        thresholds: &SaturationThresholds,
        num_subcarriers: usize,
        p_tx_dbm: f64,
        g_ii_sq_db: f64,
    ) -> Result<EtaConstants> {
        thresholds.validate()?;
        let p_tx = db_to_linear(p_tx_dbm);
        let g_sq = db_to_linear(g_ii_sq_db);
        if !(p_tx > 0.0) || !p_tx.is_finite() {
            return Err(invalid("p_tx_dbm", format!("linear transmit power {p_tx} is not positive and finite")));
        }
        if !(g_sq > 0.0) || !g_sq.is_finite() {
            return Err(invalid("g_ii_sq_db", format!("linear SI gain {g_sq} is not positive and finite")));
        }
        let scale = num_subcarriers as f64 / (p_tx * g_sq);
        Ok(EtaConstants {
            eta_lna: scale * db_to_linear(thresholds.p_lna_max_dbm),
            eta_adc: scale * db_to_linear(thresholds.p_adc_max_dbm),
        })
    }

    /// Budgets that nothing can violate.
    pub fn unbounded() -> EtaConstants {
        EtaConstants {
            eta_lna: f64::INFINITY,
            eta_adc: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConditionVariant {
    /// Per-element power with the digital precoder.
    C1Exact,
    /// Largest singular value including the digital precoder.
    C2SvdWithBb,
    /// Largest singular value of the analog-only image.
    C3SvdRfOnly,
    /// Column-norm bound, SVD-free.
    C4Colnorm,
}

impl ConditionVariant {
    pub fn label(&self) -> &'static str {
        match self {
            ConditionVariant::C1Exact => "C1_EXACT",
            ConditionVariant::C2SvdWithBb => "C2_SVD_WITH_BB",
            ConditionVariant::C3SvdRfOnly => "C3_SVD_RF_ONLY",
            ConditionVariant::C4Colnorm => "C4_COLNORM",
        }
    }
}

/// Per-element outcome of the exact test.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementCheck {
    pub pass: bool,
    pub lhs: Vec<f64>,
    pub threshold: f64,
}

impl ElementCheck {
    /// `threshold - lhs` per element.
    pub fn margins(&self) -> Vec<f64> {
        self.lhs.iter().map(|l| self.threshold - l).collect()
    }

    pub fn worst_lhs(&self) -> f64 {
        self.lhs.iter().cloned().fold(0.0, f64::max)
    }
}

/// Outcome of a scalar test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarCheck {
    pub pass: bool,
    pub lhs: f64,
    pub threshold: f64,
}

impl ScalarCheck {
    fn new(lhs: f64, threshold: f64) -> Self {
        ScalarCheck {
            pass: lhs <= threshold,
            lhs,
            threshold,
        }
    }

    pub fn margin(&self) -> f64 {
        self.threshold - self.lhs
    }
}

fn check_dims(si: &FreqChannel, f_rf: &CMat, w_rf: Option<&CMat>) -> Result<()> {
    let (nr, nt) = si.shape();
    if f_rf.nrows() != nt {
        return Err(mismatch(format!("F_RF has {} rows, SI channel has {} columns", f_rf.nrows(), nt)));
    }
    if let Some(w) = w_rf {
        if w.nrows() != nr {
            return Err(mismatch(format!("W_RF has {} rows, SI channel has {} rows", w.nrows(), nr)));
        }
    }
    Ok(())
}

fn check_bb(f_rf: &CMat, f_bb: &[CMat], u: usize) -> Result<()> {
    if f_bb.len() != u {
        return Err(mismatch(format!("{} digital precoders for {} subcarriers", f_bb.len(), u)));
    }
    if f_bb.iter().any(|b| b.nrows() != f_rf.ncols()) {
        return Err(mismatch("F_BB rows must equal the number of RF chains"));
    }
    Ok(())
}

/// `W^H H` or `H`.
fn image(h: &CMat, w_rf: Option<&CMat>) -> CMat {
    match w_rf {
        Some(w) => w.adjoint() * h,
        None => h.clone(),
    }
}

/// Exact per-LNA (no `w_rf`) or per-ADC (`w_rf` given) test: the diagonal of
/// `sum_u A[u] A[u]^H` with `A[u] = [W^H] H[u] F_RF F_BB[u]` against `N_s eta`.
pub fn check_c1(
    si: &FreqChannel,
    f_rf: &CMat,
    f_bb: &[CMat],
    w_rf: Option<&CMat>,
    eta: f64,
    n_s: usize,
    counter: &mut OpCounter,
) -> Result<ElementCheck> {
    check_dims(si, f_rf, w_rf)?;
    check_bb(f_rf, f_bb, si.num_subcarriers())?;
    let rows = w_rf.map_or(si.shape().0, |w| w.ncols());
    let mut lhs = vec![0.0; rows];
    for (h, b) in si.per_subcarrier.iter().zip(f_bb) {
        let a = image(h, w_rf) * (f_rf * b);
        counter.matvec_count += b.ncols() as u64;
        for (r, acc) in lhs.iter_mut().enumerate() {
            *acc += vec_norm_sq(a.row(r).iter().cloned());
        }
    }
    let threshold = n_s as f64 * eta;
    Ok(ElementCheck {
        pass: lhs.iter().all(|&l| l <= threshold),
        lhs,
        threshold,
    })
}

/// `sum_u sigma_max^2([W^H] H[u] F_RF F_BB[u]) <= N_s eta`.
pub fn check_c2(
    si: &FreqChannel,
    f_rf: &CMat,
    f_bb: &[CMat],
    w_rf: Option<&CMat>,
    eta: f64,
    n_s: usize,
    counter: &mut OpCounter,
) -> Result<ScalarCheck> {
    check_dims(si, f_rf, w_rf)?;
    check_bb(f_rf, f_bb, si.num_subcarriers())?;
    let mut lhs = 0.0;
    for (h, b) in si.per_subcarrier.iter().zip(f_bb) {
        lhs += sigma_max_sq(&(image(h, w_rf) * (f_rf * b)));
        counter.svd_count += 1;
    }
    Ok(ScalarCheck::new(lhs, n_s as f64 * eta))
}

fn c3_lhs(si: &FreqChannel, f_rf: &CMat, w_rf: Option<&CMat>, counter: &mut OpCounter) -> f64 {
    let mut lhs = 0.0;
    for h in &si.per_subcarrier {
        lhs += sigma_max_sq(&(image(h, w_rf) * f_rf));
        counter.svd_count += 1;
        counter.matvec_count += f_rf.ncols() as u64;
    }
    lhs
}

fn c4_lhs(si: &FreqChannel, f_rf: &CMat, w_rf: Option<&CMat>, counter: &mut OpCounter) -> f64 {
    let mut lhs = 0.0;
    for col in f_rf.column_iter() {
        for h in &si.per_subcarrier {
            let y = image(h, w_rf) * col;
            lhs += vec_norm_sq(y.iter().cloned());
            counter.matvec_count += 1;
            counter.colnorm_count += 1;
        }
    }
    lhs
}

/// `sum_u sigma_max^2([W^H] H[u] F_RF) <= eta`.
pub fn check_c3(
    si: &FreqChannel,
    f_rf: &CMat,
    w_rf: Option<&CMat>,
    eta: f64,
    counter: &mut OpCounter,
) -> Result<ScalarCheck> {
    check_dims(si, f_rf, w_rf)?;
    Ok(ScalarCheck::new(c3_lhs(si, f_rf, w_rf, counter), eta))
}

/// `sum_l sum_u ||[W^H] H[u] f_l||^2 <= eta`, using matrix-vector products only.
pub fn check_c4(
    si: &FreqChannel,
    f_rf: &CMat,
    w_rf: Option<&CMat>,
    eta: f64,
    counter: &mut OpCounter,
) -> Result<ScalarCheck> {
    check_dims(si, f_rf, w_rf)?;
    Ok(ScalarCheck::new(c4_lhs(si, f_rf, w_rf, counter), eta))
}

/// Left-hand sides of the `C3` and `C4` tests for the same beamformer.
/// `c4 >= c3` always holds; equality when `F_RF` has one column.
pub fn theorem1_gap(si: &FreqChannel, f_rf: &CMat, w_rf: Option<&CMat>) -> Result<(f64, f64)> {
    check_dims(si, f_rf, w_rf)?;
    let mut scratch = OpCounter::default();
    Ok((c3_lhs(si, f_rf, w_rf, &mut scratch), c4_lhs(si, f_rf, w_rf, &mut scratch)))
}

/// Exact LNA and ADC status of a complete transmit beamformer.
#[derive(Debug, Clone, PartialEq)]
pub struct SaturationStatus {
    pub lna: ElementCheck,
    pub adc: Option<ElementCheck>,
}

impl SaturationStatus {
    pub fn evaluate(
        si: &FreqChannel,
        f_rf: &CMat,
        f_bb: &[CMat],
        w_rf: Option<&CMat>,
        eta: &EtaConstants,
        n_s: usize,
        counter: &mut OpCounter,
    ) -> Result<Self> {
        let lna = check_c1(si, f_rf, f_bb, None, eta.eta_lna, n_s, counter)?;
        let adc = match w_rf {
            Some(w) => Some(check_c1(si, f_rf, f_bb, Some(w), eta.eta_adc, n_s, counter)?),
            None => None,
        };
        Ok(SaturationStatus { lna, adc })
    }

    pub fn saturated(&self) -> bool {
        !self.lna.pass || self.adc.as_ref().is_some_and(|a| !a.pass)
    }
}
