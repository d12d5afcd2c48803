//! Beam sweeping, RF beam selection over feasible sets, digital
//! eigenbeamforming and the digital SIC model.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::allowlist::{BeamCombo, FeasibleSet, OpCounter};
use crate::channel::{taps_to_subcarriers, FreqChannel, TapChannel};
use crate::codebook::Codebook;
use crate::error::{invalid, mismatch, Error, Result};
use crate::linalg::{all_finite, fro_sq, CMat};
use crate::saturation::{check_c1, EtaConstants};

/// Beam-sweep results: `rss[(r, t)] = sum_u |w_r^H H[u] f_t|^2`.
///
/// Rows follow `rx_ids`, columns follow `tx_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementTable {
    pub rss: DMatrix<f64>,
    pub rx_ids: Vec<u32>,
    pub tx_ids: Vec<u32>,
}

impl MeasurementTable {
    pub fn measurements(&self) -> u64 {
        (self.rx_ids.len() * self.tx_ids.len()) as u64
    }

    /// Keeps the transmit columns whose ids are listed, in the listed order.
    pub fn restrict_tx(&self, ids: &[u32]) -> Result<MeasurementTable> {
        let cols = ids
            .iter()
            .map(|id| {
                self.tx_ids
                    .iter()
                    .position(|x| x == id)
                    .ok_or_else(|| invalid("beam_ids", format!("beam {id} was not swept")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MeasurementTable {
            rss: self.rss.select_columns(cols.iter()),
            rx_ids: self.rx_ids.clone(),
            tx_ids: ids.to_vec(),
        })
    }

    /// Swaps the roles of the two sides.
    pub fn transpose(&self) -> MeasurementTable {
        MeasurementTable {
            rss: self.rss.transpose(),
            rx_ids: self.tx_ids.clone(),
            tx_ids: self.rx_ids.clone(),
        }
    }

    pub fn scaled(&self, t: f64) -> MeasurementTable {
        MeasurementTable {
            rss: &self.rss * t,
            ..self.clone()
        }
    }
}

/// Exhaustive sweep of every (rx beam, tx beam) pair of `chan`.
pub fn beam_sweep(tx_beams: &Codebook, rx_beams: &Codebook, chan: &FreqChannel) -> Result<MeasurementTable> {
    let (nr, nt) = chan.shape();
    if tx_beams.num_elements() != nt || rx_beams.num_elements() != nr {
        return Err(mismatch(format!(
            "channel is {nr}x{nt}, beams have {} (rx) and {} (tx) entries",
            rx_beams.num_elements(),
            tx_beams.num_elements()
        )));
    }
    let f = tx_beams.matrix();
    let wh = rx_beams.matrix().adjoint();
    let mut rss = DMatrix::<f64>::zeros(rx_beams.len(), tx_beams.len());
    for h in &chan.per_subcarrier {
        let y = &wh * (h * &f);
        rss.zip_apply(&y, |acc, z| *acc += z.norm_sqr());
    }
    Ok(MeasurementTable {
        rss,
        rx_ids: rx_beams.ids().to_vec(),
        tx_ids: tx_beams.ids().to_vec(),
    })
}

/// Same table as [`beam_sweep`] on the `num_subcarriers`-point DFT of
/// `taps`, computed by beamforming each tap first.
pub fn beam_sweep_taps(tx_beams: &Codebook, rx_beams: &Codebook, taps: &TapChannel, num_subcarriers: usize) -> Result<MeasurementTable> {
    let eff = effective_channel_taps(taps, num_subcarriers, &tx_beams.matrix(), &rx_beams.matrix())?;
    let mut rss = DMatrix::<f64>::zeros(rx_beams.len(), tx_beams.len());
    for y in &eff.per_subcarrier {
        rss.zip_apply(y, |acc, z| *acc += z.norm_sqr());
    }
    Ok(MeasurementTable {
        rss,
        rx_ids: rx_beams.ids().to_vec(),
        tx_ids: tx_beams.ids().to_vec(),
    })
}

/// Chosen RF beams of one link.
#[derive(Debug, Clone, PartialEq)]
pub struct RfSelection {
    /// Beams on the side restricted by the feasible set (table columns).
    pub constrained: BeamCombo,
    /// Beams on the free side (table rows).
    pub free: BeamCombo,
    pub score: f64,
}

/// Best assignment of the columns `cols` to distinct rows of `cand`.
struct AssignSearch<'a> {
    table: &'a DMatrix<f64>,
    cols: &'a [usize],
    cand: &'a [Vec<usize>],
    slots: usize,
    used: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
}

impl AssignSearch<'_> {
    fn run(&mut self, k: usize, acc: f64) {
        if self.used.len() == self.slots || k == self.cols.len() {
            if self.used.len() < self.slots.min(self.cols.len()) {
                return;
            }
            let mut rows = self.used.clone();
            rows.sort_unstable();
            let better = match &self.best {
                None => true,
                Some((s, r)) => acc > *s || (acc == *s && rows < *r),
            };
            if better {
                self.best = Some((acc, rows));
            }
            return;
        }
        let c = self.cols[k];
        for &r in &self.cand[c] {
            if !self.used.contains(&r) {
                self.used.push(r);
                self.run(k + 1, acc + self.table[(r, c)]);
                self.used.pop();
            }
        }
        // leave this column unmatched when there are fewer rows than columns
        if self.cols.len() - k > self.slots - self.used.len() {
            self.run(k + 1, acc);
        }
    }
}

/// Picks the combo of `fs` (over the table's columns) and `l_free` rows that
/// maximize the summed RSS of a best one-to-one pairing between them.
///
/// Each column only considers its `min(L, l_free)` strongest rows, which
/// contain an optimal pairing. Ties go to the lexicographically smallest
/// combo, then to the smallest row ids; free beams left unpaired are filled
/// with the smallest unused ids.
pub fn select_rf(fs: &FeasibleSet, table: &MeasurementTable, l_free: usize) -> Result<RfSelection> {
    if fs.is_empty() {
        return Err(Error::Infeasible);
    }
    let n_rows = table.rx_ids.len();
    if l_free == 0 || l_free > n_rows {
        return Err(invalid("num_chains", format!("{l_free} free-side beams for {n_rows} swept beams")));
    }
    let width = fs.num_chains.min(l_free);
    let cand: Vec<Vec<usize>> = (0..table.tx_ids.len())
        .map(|c| {
            let mut rows: Vec<usize> = (0..n_rows).collect();
            rows.sort_by(|&a, &b| table.rss[(b, c)].total_cmp(&table.rss[(a, c)]).then(a.cmp(&b)));
            rows.truncate(width);
            rows
        })
        .collect();
    let col_of = |id: u32| {
        table
            .tx_ids
            .iter()
            .position(|&x| x == id)
            .ok_or_else(|| invalid("beam_ids", format!("beam {id} missing from the measurement table")))
    };
    let mut best: Option<(f64, &BeamCombo, Vec<usize>)> = None;
    for combo in &fs.combos {
        let cols = combo.ids().iter().map(|&id| col_of(id)).collect::<Result<Vec<_>>>()?;
        let mut search = AssignSearch {
            table: &table.rss,
            cols: &cols,
            cand: &cand,
            slots: l_free,
            used: Vec::with_capacity(width),
            best: None,
        };
        search.run(0, 0.0);
        let (score, rows) = search.best.expect("candidate lists are non-empty");
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, combo, rows));
        }
    }
    let (score, combo, mut rows) = best.expect("feasible set is non-empty");
    for r in 0..n_rows {
        if rows.len() == l_free {
            break;
        }
        if !rows.contains(&r) {
            rows.push(r);
        }
    }
    let free = BeamCombo::new(rows.iter().map(|&r| table.rx_ids[r]).collect())?;
    Ok(RfSelection {
        constrained: combo.clone(),
        free,
        score,
    })
}

/// `W_RF^H H[u] F_RF` on every subcarrier.
pub fn effective_channel(chan: &FreqChannel, f_rf: &CMat, w_rf: &CMat) -> Result<FreqChannel> {
    let (nr, nt) = chan.shape();
    if f_rf.nrows() != nt || w_rf.nrows() != nr {
        return Err(mismatch(format!(
            "channel is {nr}x{nt}, F_RF has {} rows, W_RF has {} rows",
            f_rf.nrows(),
            w_rf.nrows()
        )));
    }
    let wh = w_rf.adjoint();
    FreqChannel::new(chan.per_subcarrier.iter().map(|h| &wh * h * f_rf).collect())
}

/// [`effective_channel`] of the subcarrier-domain version of `taps`.
pub fn effective_channel_taps(taps: &TapChannel, num_subcarriers: usize, f_rf: &CMat, w_rf: &CMat) -> Result<FreqChannel> {
    let (nr, nt) = taps.shape();
    if f_rf.nrows() != nt || w_rf.nrows() != nr {
        return Err(mismatch(format!(
            "channel is {nr}x{nt}, F_RF has {} rows, W_RF has {} rows",
            f_rf.nrows(),
            w_rf.nrows()
        )));
    }
    let wh = w_rf.adjoint();
    let mapped = TapChannel {
        taps: taps.taps.iter().map(|h| &wh * h * f_rf).collect(),
        sample_interval_s: taps.sample_interval_s,
    };
    taps_to_subcarriers(&mapped, num_subcarriers)
}

/// Rotates the column so its largest-magnitude entry (first on ties) is real
/// and positive; returns the applied unit factor.
fn fix_phase(col: &mut nalgebra::DVectorViewMut<'_, Complex64>) -> Complex64 {
    let mut best = 0;
    for i in 1..col.len() {
        if col[i].norm() > col[best].norm() {
            best = i;
        }
    }
    let z = col[best];
    if z.norm() == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let rot = z.conj() / z.norm();
    for x in col.iter_mut() {
        *x *= rot;
    }
    rot
}

/// Digital precoders and combiners per subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalBeamformers {
    pub f_bb: Vec<CMat>,
    pub w_bb: Vec<CMat>,
}

/// Eigenbeamforming: leading `n_s` right/left singular vectors of each
/// effective channel, with `||F_BB[u]||_F^2 = n_s`.
pub fn eigen_bb(eff: &FreqChannel, n_s: usize) -> Result<DigitalBeamformers> {
    let (lr, lt) = eff.shape();
    if n_s == 0 || n_s > lr.min(lt) {
        return Err(invalid("n_s", format!("{n_s} streams for a {lr}x{lt} effective channel")));
    }
    let mut f_bb = Vec::with_capacity(eff.num_subcarriers());
    let mut w_bb = Vec::with_capacity(eff.num_subcarriers());
    for h in &eff.per_subcarrier {
        if !all_finite(h) {
            return Err(Error::NonFinite("effective channel"));
        }
        let svd = h.clone().svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => return Err(Error::NonFinite("effective channel SVD")),
        };
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
        let v = v_t.adjoint();
        let mut f = v.select_columns(order[..n_s].iter());
        let mut w = u.select_columns(order[..n_s].iter());
        for k in 0..n_s {
            let rot = fix_phase(&mut f.column_mut(k));
            for x in w.column_mut(k).iter_mut() {
                *x *= rot;
            }
        }
        let norm = fro_sq(&f).sqrt();
        if norm > 0.0 {
            f *= Complex64::new((n_s as f64).sqrt() / norm, 0.0);
        }
        f_bb.push(f);
        w_bb.push(w);
    }
    Ok(DigitalBeamformers { f_bb, w_bb })
}

/// How the receiver's digital SIC treats residual self-interference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SicModel {
    /// Perfect cancellation unless the receive chain saturated.
    Conditional,
    /// Perfect cancellation regardless of saturation.
    Ideal,
}

/// Residual SI power per subcarrier after digital SIC.
pub fn digital_sic(si_power_per_u: &[f64], saturated: bool, model: SicModel) -> Vec<f64> {
    match (model, saturated) {
        (SicModel::Conditional, true) => si_power_per_u.to_vec(),
        _ => vec![0.0; si_power_per_u.len()],
    }
}

/// Largest `beta` in `(0, 1]` such that scaling the transmit power by `beta`
/// meets the exact per-LNA test and, when `w_rf` is given, the per-ADC test.
pub fn power_reduction_baseline(
    si: &FreqChannel,
    f_rf: &CMat,
    f_bb: &[CMat],
    w_rf: Option<&CMat>,
    eta: &EtaConstants,
    n_s: usize,
    counter: &mut OpCounter,
) -> Result<f64> {
    let mut checks = vec![check_c1(si, f_rf, f_bb, None, eta.eta_lna, n_s, counter)?];
    if let Some(w) = w_rf {
        checks.push(check_c1(si, f_rf, f_bb, Some(w), eta.eta_adc, n_s, counter)?);
    }
    let mut beta: f64 = 1.0;
    for chk in &checks {
        let worst = chk.worst_lhs();
        if worst > chk.threshold {
            // the 1e-12 back-off keeps `lhs <= eta / beta` from losing a rounding tie
            beta = beta.min(chk.threshold / worst * (1.0 - 1e-12));
        }
    }
    Ok(beta)
}

/// Complete hybrid transceiver of one link.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridBeamformer {
    pub tx_combo: BeamCombo,
    pub rx_combo: BeamCombo,
    pub f_rf: CMat,
    pub w_rf: CMat,
    pub f_bb: Vec<CMat>,
    pub w_bb: Vec<CMat>,
}

impl HybridBeamformer {
    /// Builds the RF stage from the chosen beams and the digital stage by
    /// eigenbeamforming over the resulting effective channel.
    pub fn design(
        chan: &FreqChannel,
        tx_codebook: &Codebook,
        rx_codebook: &Codebook,
        tx_combo: BeamCombo,
        rx_combo: BeamCombo,
        n_s: usize,
    ) -> Result<Self> {
        let f_rf = tx_codebook.columns_for(tx_combo.ids())?;
        let w_rf = rx_codebook.columns_for(rx_combo.ids())?;
        let eff = effective_channel(chan, &f_rf, &w_rf)?;
        let bb = eigen_bb(&eff, n_s)?;
        Ok(HybridBeamformer {
            tx_combo,
            rx_combo,
            f_rf,
            w_rf,
            f_bb: bb.f_bb,
            w_bb: bb.w_bb,
        })
    }
}
