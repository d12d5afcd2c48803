//! Monte Carlo evaluation of the three-node full-duplex relay.
//!
//! Node `i` is full duplex: it transmits to node `j` while receiving from
//! node `k` on the same band, and its own transmission leaks into its
//! receive array as self-interference. Each trial draws the two desired
//! links and (for a stochastic source) the SI channel, then runs every
//! requested method on the same draws.
//!
//! With the default `TX_ONLY` mode the receive link `k -> i` is chosen first
//! from an unconstrained sweep, fixing node `i`'s combiner `W_RF`; the
//! transmit feasible set then guards both the LNAs and the ADCs behind that
//! combiner. With `TX_THEN_RX` the transmit set guards the LNAs only and the
//! receive beams are restrained afterwards for the ADCs.
//!
//! The SNR grid is swept by the noise variance at fixed transmit power, so
//! every saturation decision is shared by all SNR points of a trial.

use std::io::Write;
use std::path::PathBuf;

use nalgebra::Cholesky;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allowlist::{
    all_combinations, extract_allowlist, BeamCombo, FeasibleSet, LinkMode, OpCounter, SiProjection,
};
use crate::beamform::{
    beam_sweep_taps, digital_sic, effective_channel_taps, eigen_bb, power_reduction_baseline, select_rf,
    DigitalBeamformers, MeasurementTable, RfSelection, SicModel,
};
use crate::channel::{
    gen_farfield_taps, gen_si_taps, read_path_list, taps_to_subcarriers, FreqChannel, Path, SiChannelSpec, TapChannel,
};
use crate::codebook::{gen_dft_codebook, Codebook};
use crate::config::{ScenarioConfig, SiSource};
use crate::error::{invalid, Error, Result};
use crate::linalg::{db_to_linear, fro_sq, CMat};
use crate::saturation::{ConditionVariant, EtaConstants, SaturationStatus, SaturationThresholds};
use crate::stochastic::{gen_desired_paths, gen_si_far_paths};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ProposedC3,
    ProposedC4,
    ProposedC4Pruned,
    PowerReduction,
    IdealFd,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::ProposedC3,
        Method::ProposedC4,
        Method::ProposedC4Pruned,
        Method::PowerReduction,
        Method::IdealFd,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Method::ProposedC3 => "PROPOSED_C3",
            Method::ProposedC4 => "PROPOSED_C4",
            Method::ProposedC4Pruned => "PROPOSED_C4_PRUNED",
            Method::PowerReduction => "POWER_REDUCTION",
            Method::IdealFd => "IDEAL_FD",
        }
    }

    /// Accepts both the kebab-case config name and the report label.
    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s) || m.label().replace('_', "-").eq_ignore_ascii_case(s))
    }

    pub fn condition(&self) -> Option<(ConditionVariant, bool)> {
        match self {
            Method::ProposedC3 => Some((ConditionVariant::C3SvdRfOnly, false)),
            Method::ProposedC4 => Some((ConditionVariant::C4Colnorm, false)),
            Method::ProposedC4Pruned => Some((ConditionVariant::C4Colnorm, true)),
            _ => None,
        }
    }
}

/// `log2 det(I + a G)` for a Hermitian positive semidefinite `G`.
fn log2_det_i_plus(g: &CMat, a: f64) -> f64 {
    let n = g.nrows();
    let m = CMat::identity(n, n) + g * Complex64::new(a, 0.0);
    match Cholesky::new(m) {
        Some(ch) => {
            let l = ch.l_dirty();
            (0..n).map(|k| 2.0 * l[(k, k)].re.ln()).sum::<f64>() / std::f64::consts::LN_2
        }
        None => 0.0,
    }
}

/// `M[u] M[u]^H` with `M[u] = W_BB[u]^H H[u] F_BB[u]`.
fn stream_grams(eff: &FreqChannel, bb: &DigitalBeamformers) -> Vec<CMat> {
    eff.per_subcarrier
        .iter()
        .zip(bb.f_bb.iter().zip(&bb.w_bb))
        .map(|(h, (f, w))| {
            let m = w.adjoint() * h * f;
            &m * m.adjoint()
        })
        .collect()
}

fn se_from_grams(grams: &[CMat], snr_linear: f64, n_s: usize, residual_si: &[f64]) -> f64 {
    let total: f64 = grams
        .iter()
        .zip(residual_si)
        .map(|(g, r)| log2_det_i_plus(g, snr_linear / (n_s as f64 * (1.0 + r))))
        .sum();
    total / grams.len() as f64
}

/// `(1/U) sum_u log2 det(I + snr / (N_s (1 + r[u])) M[u] M[u]^H)`, where
/// `r[u]` is the residual SI power per stream relative to the noise.
pub fn spectral_efficiency(
    eff: &FreqChannel,
    f_bb: &[CMat],
    w_bb: &[CMat],
    snr_linear: f64,
    n_s: usize,
    residual_si: &[f64],
) -> Result<f64> {
    let u = eff.num_subcarriers();
    if f_bb.len() != u || w_bb.len() != u || residual_si.len() != u {
        return Err(crate::error::mismatch("one digital beamformer and residual per subcarrier"));
    }
    if !(snr_linear >= 0.0) || !snr_linear.is_finite() {
        return Err(Error::NonFinite("snr"));
    }
    if residual_si.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
        return Err(Error::NonFinite("residual SI"));
    }
    let bb = DigitalBeamformers {
        f_bb: f_bb.to_vec(),
        w_bb: w_bb.to_vec(),
    };
    Ok(se_from_grams(&stream_grams(eff, &bb), snr_linear, n_s, residual_si))
}

/// Outcome of one method on one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    /// Per SNR point, link `i -> j`.
    pub se_tx: Vec<f64>,
    /// Per SNR point, link `k -> i`.
    pub se_rx: Vec<f64>,
    /// Transmit allowlist; the full codebook for unconstrained methods.
    pub allowlist: Vec<u32>,
    pub tx_combo: Vec<u32>,
    pub rx_combo: Vec<u32>,
    pub meas_tx: u64,
    pub meas_total: u64,
    pub ops: OpCounter,
    pub beta: f64,
    /// The final beamformer violates the exact per-element test.
    pub saturated: bool,
    /// No feasible combination: power reduction was applied instead.
    pub fallback: bool,
}

/// One `(method, snr)` cell of the report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub method: String,
    pub snr_db: f64,
    pub se_tx: f64,
    pub se_rx: f64,
    pub se_sum: f64,
    pub allowlist_size_mean: f64,
    pub meas_tx: f64,
    pub meas_total: f64,
    pub svd_count: f64,
    pub colnorm_count: f64,
    pub combo_tests: f64,
    pub beta_mean: f64,
    pub saturated_frac: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub method: Method,
    pub snr_db: Vec<f64>,
    pub rows: Vec<EvalRow>,
    pub trials: Vec<TrialRecord>,
    pub fallback_trials: usize,
}

impl EvalResult {
    fn from_trials(method: Method, snr_db: &[f64], trials: Vec<TrialRecord>) -> EvalResult {
        let n = trials.len() as f64;
        let mean = |f: &dyn Fn(&TrialRecord) -> f64| trials.iter().map(f).sum::<f64>() / n;
        let allowlist_size_mean = mean(&|t| t.allowlist.len() as f64);
        let meas_tx = mean(&|t| t.meas_tx as f64);
        let meas_total = mean(&|t| t.meas_total as f64);
        let svd = mean(&|t| t.ops.svd_count as f64);
        let colnorm = mean(&|t| t.ops.colnorm_count as f64);
        let tests = mean(&|t| t.ops.combo_tests as f64);
        let beta = mean(&|t| t.beta);
        let sat = mean(&|t| if t.saturated { 1.0 } else { 0.0 });
        let rows = snr_db
            .iter()
            .enumerate()
            .map(|(k, &snr)| {
                let se_tx = mean(&|t| t.se_tx[k]);
                let se_rx = mean(&|t| t.se_rx[k]);
                EvalRow {
                    method: method.label().to_string(),
                    snr_db: snr,
                    se_tx,
                    se_rx,
                    se_sum: se_tx + se_rx,
                    allowlist_size_mean,
                    meas_tx,
                    meas_total,
                    svd_count: svd,
                    colnorm_count: colnorm,
                    combo_tests: tests,
                    beta_mean: beta,
                    saturated_frac: sat,
                }
            })
            .collect();
        let fallback_trials = trials.iter().filter(|t| t.fallback).count();
        EvalResult {
            method,
            snr_db: snr_db.to_vec(),
            rows,
            trials,
            fallback_trials,
        }
    }

    /// Half-duplex reference: the ideal rows with every SE halved.
    pub fn hd_reference_rows(&self) -> Vec<EvalRow> {
        self.rows
            .iter()
            .map(|r| EvalRow {
                method: "HD_REFERENCE".into(),
                se_tx: r.se_tx / 2.0,
                se_rx: r.se_rx / 2.0,
                se_sum: r.se_sum / 2.0,
                ..r.clone()
            })
            .collect()
    }

    /// Every proposed trial fell back to power reduction.
    pub fn infeasible_everywhere(&self) -> bool {
        self.method.condition().is_some() && self.fallback_trials == self.trials.len()
    }

    /// Violations of the per-run invariants.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for w in self.rows.windows(2) {
            if w[1].se_sum < w[0].se_sum {
                out.push(format!("{}: sum SE drops from {} dB to {} dB", self.method.label(), w[0].snr_db, w[1].snr_db));
            }
        }
        for r in &self.rows {
            if r.se_tx < 0.0 || r.se_rx < 0.0 || !r.se_sum.is_finite() {
                out.push(format!("{}: invalid SE at {} dB", self.method.label(), r.snr_db));
            }
        }
        out
    }
}

/// Channels and sweeps of one trial that do not depend on the thresholds.
struct TrialContext {
    trial: usize,
    si: FreqChannel,
    si_lna: SiProjection,
    /// LNA images plus ADC images behind node `i`'s unconstrained combiner.
    si_tx_only: SiProjection,
    taps_ij: TapChannel,
    taps_ki: TapChannel,
    table_ij: MeasurementTable,
    table_ki: MeasurementTable,
    /// Unconstrained selections: columns are the transmit side.
    ideal_ij: RfSelection,
    ideal_ki: RfSelection,
}

/// Per-run constants shared by all trials.
pub struct Scenario {
    pub cfg: ScenarioConfig,
    pub codebook: Codebook,
    all_tx: FeasibleSet,
    fixed_si_paths: Option<Vec<Path>>,
}

impl Scenario {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let codebook = gen_dft_codebook(&cfg.geometry());
        let all_tx = all_combinations(&codebook, cfg.link.l_t, LinkMode::TxOnly)?;
        let fixed_si_paths = match cfg.si.source() {
            SiSource::Stochastic => None,
            SiSource::PathList(p) => Some(read_path_list(&p)?),
        };
        Ok(Scenario {
            cfg,
            codebook,
            all_tx,
            fixed_si_paths,
        })
    }

    fn rng(&self, trial: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.run.seed);
        rng.set_stream(trial as u64);
        rng
    }

    /// SI tap channel of `trial` (the same for every trial with a path-list source).
    pub fn si_taps(&self, trial: usize) -> Result<TapChannel> {
        let mut rng = self.rng(trial);
        self.si_taps_with(&mut rng)
    }

    fn si_taps_with(&self, rng: &mut ChaCha8Rng) -> Result<TapChannel> {
        let cfg = &self.cfg;
        let g = cfg.geometry();
        let n = g.num_elements();
        let paths = match &self.fixed_si_paths {
            Some(p) => p.clone(),
            None => gen_si_far_paths(rng, &cfg.si.path_model(), n, n, cfg.sample_interval_s(), cfg.link.num_taps)?,
        };
        let desc = SiChannelSpec {
            rician_kappa: cfg.si.kappa,
            tx_rx_separation_m: cfg.si.separation_m,
            nf_normalization: cfg.si.nf_normalization(),
            carrier_wavelength_m: cfg.wavelength_m(),
            far_field_paths: paths,
        };
        Ok(gen_si_taps(&desc, &g, &g, cfg.sample_interval_s(), cfg.link.num_taps)?.0)
    }

    fn desired_taps(&self, rng: &mut ChaCha8Rng) -> Result<TapChannel> {
        let cfg = &self.cfg;
        let g = cfg.geometry();
        let n = g.num_elements();
        let paths = gen_desired_paths(rng, &cfg.desired, n, n, cfg.sample_interval_s(), cfg.link.num_taps)?;
        Ok(gen_farfield_taps(&paths, &g, &g, cfg.sample_interval_s(), cfg.link.num_taps)?.0)
    }

    pub fn eta(&self, thresholds: &SaturationThresholds) -> Result<EtaConstants> {
        EtaConstants::derive(thresholds, self.cfg.link.num_subcarriers, self.cfg.power.p_tx_dbm, self.cfg.power.g_si_sq_db)
    }

    fn context(&self, trial: usize) -> Result<TrialContext> {
        let cfg = &self.cfg;
        let u = cfg.link.num_subcarriers;
        let mut rng = self.rng(trial);
        let si_taps = self.si_taps_with(&mut rng)?;
        let taps_ij = self.desired_taps(&mut rng)?;
        let taps_ki = self.desired_taps(&mut rng)?;
        let cb = &self.codebook;
        let table_ij = beam_sweep_taps(cb, cb, &taps_ij, u)?;
        let table_ki = beam_sweep_taps(cb, cb, &taps_ki, u)?;
        let all_k = &self.all_tx;
        let ideal_ij = select_rf(&self.all_tx, &table_ij, cfg.link.l_r)?;
        let ideal_ki = select_rf(all_k, &table_ki, cfg.link.l_r)?;
        let si = taps_to_subcarriers(&si_taps, u)?;
        let si_lna = SiProjection::transmit_taps(cb, &si_taps, u, &EtaConstants::unbounded(), None)?;
        let w_i = cb.columns_for(ideal_ki.free.ids())?;
        let si_tx_only = si_lna.with_combiner(&w_i, f64::INFINITY)?;
        Ok(TrialContext {
            trial,
            si,
            si_lna,
            si_tx_only,
            taps_ij,
            taps_ki,
            table_ij,
            table_ki,
            ideal_ij,
            ideal_ki,
        })
    }

    fn snr_linear(&self) -> Vec<f64> {
        self.cfg.run.snr_db.iter().map(|&s| db_to_linear(s)).collect()
    }

    /// Designs both links and evaluates the SE over the SNR grid.
    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        ctx: &TrialContext,
        tx_i: &BeamCombo,
        rx_j: &BeamCombo,
        tx_k: &BeamCombo,
        rx_i: &BeamCombo,
        eta: &EtaConstants,
        beta: f64,
        sic: SicModel,
        ops: &mut OpCounter,
    ) -> Result<(Vec<f64>, Vec<f64>, bool)> {
        let cfg = &self.cfg;
        let (u, n_s) = (cfg.link.num_subcarriers, cfg.link.n_s);
        let cb = &self.codebook;
        let f_i = cb.columns_for(tx_i.ids())?;
        let w_j = cb.columns_for(rx_j.ids())?;
        let f_k = cb.columns_for(tx_k.ids())?;
        let w_i = cb.columns_for(rx_i.ids())?;
        let eff_ij = effective_channel_taps(&ctx.taps_ij, u, &f_i, &w_j)?;
        let eff_ki = effective_channel_taps(&ctx.taps_ki, u, &f_k, &w_i)?;
        let bb_ij = eigen_bb(&eff_ij, n_s)?;
        let bb_ki = eigen_bb(&eff_ki, n_s)?;
        // transmitting at beta P_tx is the same test against eta / beta
        let eff_eta = EtaConstants {
            eta_lna: eta.eta_lna / beta,
            eta_adc: eta.eta_adc / beta,
        };
        let status = SaturationStatus::evaluate(&ctx.si, &f_i, &bb_ij.f_bb, Some(&w_i), &eff_eta, n_s, ops)?;
        let saturated = status.saturated();
        let grams_ij = stream_grams(&eff_ij, &bb_ij);
        let grams_ki = stream_grams(&eff_ki, &bb_ki);
        // uncancelled SI per stream at node i, before scaling by the SNR
        let si_unit: Vec<f64> = if saturated && sic == SicModel::Conditional {
            let ratio = db_to_linear(cfg.power.g_si_sq_db - cfg.power.g_desired_sq_db) * beta;
            ctx.si
                .per_subcarrier
                .iter()
                .zip(bb_ij.f_bb.iter().zip(&bb_ki.w_bb))
                .map(|(h, (f, w))| ratio * fro_sq(&(w.adjoint() * w_i.adjoint() * h * &f_i * f)) / n_s as f64)
                .collect()
        } else {
            vec![0.0; u]
        };
        let mut se_tx = Vec::new();
        let mut se_rx = Vec::new();
        for snr in self.snr_linear() {
            let si_power: Vec<f64> = si_unit.iter().map(|x| x * snr).collect();
            let residual = digital_sic(&si_power, saturated, sic);
            se_tx.push(se_from_grams(&grams_ij, snr * beta, n_s, &vec![0.0; u]));
            se_rx.push(se_from_grams(&grams_ki, snr, n_s, &residual));
        }
        Ok((se_tx, se_rx, saturated))
    }

    fn full_meas(&self) -> u64 {
        let c = self.codebook.len() as u64;
        c * c
    }

    fn run_unconstrained(&self, ctx: &TrialContext, eta: &EtaConstants, method: Method, mut ops: OpCounter, fallback: bool) -> Result<TrialRecord> {
        let (tx_i, rx_j) = (&ctx.ideal_ij.constrained, &ctx.ideal_ij.free);
        let (tx_k, rx_i) = (&ctx.ideal_ki.constrained, &ctx.ideal_ki.free);
        let (beta, sic) = if method == Method::IdealFd {
            (1.0, SicModel::Ideal)
        } else {
            let cfg = &self.cfg;
            let cb = &self.codebook;
            let f_i = cb.columns_for(tx_i.ids())?;
            let w_j = cb.columns_for(rx_j.ids())?;
            let w_i = cb.columns_for(rx_i.ids())?;
            let eff = effective_channel_taps(&ctx.taps_ij, cfg.link.num_subcarriers, &f_i, &w_j)?;
            let bb = eigen_bb(&eff, cfg.link.n_s)?;
            let beta = power_reduction_baseline(&ctx.si, &f_i, &bb.f_bb, Some(&w_i), eta, cfg.link.n_s, &mut ops)?;
            (beta, SicModel::Conditional)
        };
        let (se_tx, se_rx, saturated) = self.finish(ctx, tx_i, rx_j, tx_k, rx_i, eta, beta, sic, &mut ops)?;
        Ok(TrialRecord {
            trial: ctx.trial,
            se_tx,
            se_rx,
            allowlist: if fallback { Vec::new() } else { self.codebook.ids().to_vec() },
            tx_combo: tx_i.ids().to_vec(),
            rx_combo: rx_i.ids().to_vec(),
            meas_tx: self.full_meas(),
            meas_total: 2 * self.full_meas(),
            ops,
            beta,
            saturated,
            fallback,
        })
    }

    fn run_proposed(&self, ctx: &TrialContext, eta: &EtaConstants, variant: ConditionVariant, pruned: bool) -> Result<TrialRecord> {
        let cfg = &self.cfg;
        let c = self.codebook.len() as u64;
        let mut ops = OpCounter::default();
        let build = |proj: &SiProjection, l: usize, link: LinkMode, ops: &mut OpCounter| {
            if pruned {
                proj.build_pruned(l, link, ops)
            } else {
                proj.build(l, variant, link, ops)
            }
        };
        let fallback = |ops: OpCounter| self.run_unconstrained(ctx, eta, Method::PowerReduction, ops, true);
        match cfg.link.link_mode {
            LinkMode::TxOnly => {
                let fs = build(&ctx.si_tx_only.with_eta(eta), cfg.link.l_t, LinkMode::TxOnly, &mut ops)?;
                if fs.is_empty() {
                    return fallback(ops);
                }
                let al = extract_allowlist(&fs, &self.codebook);
                let table = ctx.table_ij.restrict_tx(&al.beam_ids)?;
                let sel = select_rf(&fs, &table, cfg.link.l_r)?;
                let (tx_k, rx_i) = (&ctx.ideal_ki.constrained, &ctx.ideal_ki.free);
                let (se_tx, se_rx, saturated) =
                    self.finish(ctx, &sel.constrained, &sel.free, tx_k, rx_i, eta, 1.0, SicModel::Conditional, &mut ops)?;
                let meas_tx = table.measurements();
                Ok(TrialRecord {
                    trial: ctx.trial,
                    se_tx,
                    se_rx,
                    allowlist: al.beam_ids,
                    tx_combo: sel.constrained.ids().to_vec(),
                    rx_combo: rx_i.ids().to_vec(),
                    meas_tx,
                    meas_total: meas_tx + c * c,
                    ops,
                    beta: 1.0,
                    saturated,
                    fallback: false,
                })
            }
            LinkMode::TxThenRx => {
                let fs = build(&ctx.si_lna.with_eta(eta), cfg.link.l_t, LinkMode::TxOnly, &mut ops)?;
                if fs.is_empty() {
                    return fallback(ops);
                }
                let al = extract_allowlist(&fs, &self.codebook);
                let table = ctx.table_ij.restrict_tx(&al.beam_ids)?;
                let sel = select_rf(&fs, &table, cfg.link.l_r)?;
                let f_i = self.codebook.columns_for(sel.constrained.ids())?;
                let rx_proj = SiProjection::receive(&f_i, &self.codebook, &ctx.si, eta.eta_adc)?;
                let fs_rx = build(&rx_proj, cfg.link.l_r, LinkMode::TxThenRx, &mut ops)?;
                if fs_rx.is_empty() {
                    return fallback(ops);
                }
                let al_rx = extract_allowlist(&fs_rx, &self.codebook);
                let rx_table = ctx.table_ki.transpose().restrict_tx(&al_rx.beam_ids)?;
                let sel_rx = select_rf(&fs_rx, &rx_table, cfg.link.l_t)?;
                let (se_tx, se_rx, saturated) = self.finish(
                    ctx,
                    &sel.constrained,
                    &sel.free,
                    &sel_rx.free,
                    &sel_rx.constrained,
                    eta,
                    1.0,
                    SicModel::Conditional,
                    &mut ops,
                )?;
                let meas_tx = table.measurements();
                Ok(TrialRecord {
                    trial: ctx.trial,
                    se_tx,
                    se_rx,
                    allowlist: al.beam_ids,
                    tx_combo: sel.constrained.ids().to_vec(),
                    rx_combo: sel_rx.constrained.ids().to_vec(),
                    meas_tx,
                    meas_total: meas_tx + rx_table.measurements(),
                    ops,
                    beta: 1.0,
                    saturated,
                    fallback: false,
                })
            }
        }
    }

    fn run_method(&self, ctx: &TrialContext, eta: &EtaConstants, method: Method) -> Result<TrialRecord> {
        match method.condition() {
            Some((variant, pruned)) => self.run_proposed(ctx, eta, variant, pruned),
            None => self.run_unconstrained(ctx, eta, method, OpCounter::default(), false),
        }
    }

    /// Runs every `(method, thresholds)` cell on every trial. Output is
    /// indexed `[cell][trial]`, identical for serial and parallel execution.
    fn run_cells(&self, cells: &[(Method, EtaConstants)]) -> Result<Vec<Vec<TrialRecord>>> {
        let per_trial: Vec<Vec<TrialRecord>> = (0..self.cfg.run.trials)
            .into_par_iter()
            .map(|trial| {
                let ctx = self.context(trial)?;
                cells.iter().map(|(m, eta)| self.run_method(&ctx, eta, *m)).collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut by_cell: Vec<Vec<TrialRecord>> = vec![Vec::with_capacity(per_trial.len()); cells.len()];
        for records in per_trial {
            for (k, r) in records.into_iter().enumerate() {
                by_cell[k].push(r);
            }
        }
        Ok(by_cell)
    }

    /// Monte Carlo run of each method at the configured thresholds.
    pub fn run_methods(&self, methods: &[Method]) -> Result<Vec<EvalResult>> {
        let eta = self.eta(&self.cfg.thresholds())?;
        let cells: Vec<(Method, EtaConstants)> = methods.iter().map(|&m| (m, eta)).collect();
        let by_cell = self.run_cells(&cells)?;
        Ok(methods
            .iter()
            .zip(by_cell)
            .map(|(&m, trials)| EvalResult::from_trials(m, &self.cfg.run.snr_db, trials))
            .collect())
    }

    /// Cross-product sweep over LNA caps and ADC resolutions.
    pub fn sweep_rx_components(&self, lna_grid_dbm: &[f64], adc_bits_grid: &[u32], methods: &[Method]) -> Result<Vec<SweepCell>> {
        if lna_grid_dbm.is_empty() || adc_bits_grid.is_empty() || methods.is_empty() {
            return Err(invalid("sweep", "grids and method list must not be empty"));
        }
        let base = &self.cfg.thresholds;
        let mut keys = Vec::new();
        let mut cells = Vec::new();
        for &lna in lna_grid_dbm {
            for &bits in adc_bits_grid {
                let thr = SaturationThresholds::from_adc_bits(lna, bits, base.noise_floor_dbm, base.papr_margin_db);
                let eta = self.eta(&thr)?;
                for &m in methods {
                    keys.push((lna, bits, thr.p_adc_max_dbm, m));
                    cells.push((m, eta));
                }
            }
        }
        let by_cell = self.run_cells(&cells)?;
        Ok(keys
            .into_iter()
            .zip(by_cell)
            .map(|((lna, bits, p_adc, m), trials)| SweepCell {
                p_lna_dbm: lna,
                adc_bits: bits,
                p_adc_max_dbm: p_adc,
                result: EvalResult::from_trials(m, &self.cfg.run.snr_db, trials),
            })
            .collect())
    }
}

/// Convenience wrapper: one scenario, one method.
pub fn run_scenario(cfg: &ScenarioConfig, method: Method) -> Result<EvalResult> {
    let sc = Scenario::new(cfg.clone())?;
    Ok(sc.run_methods(&[method])?.remove(0))
}

pub fn sweep_rx_components(cfg: &ScenarioConfig, lna_grid_dbm: &[f64], adc_bits_grid: &[u32], method: Method) -> Result<Vec<SweepCell>> {
    Scenario::new(cfg.clone())?.sweep_rx_components(lna_grid_dbm, adc_bits_grid, &[method])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub p_lna_dbm: f64,
    pub adc_bits: u32,
    pub p_adc_max_dbm: f64,
    pub result: EvalResult,
}

pub const RESULTS_HEADER: [&str; 13] = [
    "method",
    "snr_db",
    "se_tx",
    "se_rx",
    "se_sum",
    "allowlist_size_mean",
    "meas_tx",
    "meas_total",
    "svd_count",
    "colnorm_count",
    "combo_tests",
    "beta_mean",
    "saturated_frac",
];

fn row_fields(r: &EvalRow) -> Vec<String> {
    vec![
        r.method.clone(),
        r.snr_db.to_string(),
        r.se_tx.to_string(),
        r.se_rx.to_string(),
        r.se_sum.to_string(),
        r.allowlist_size_mean.to_string(),
        r.meas_tx.to_string(),
        r.meas_total.to_string(),
        r.svd_count.to_string(),
        r.colnorm_count.to_string(),
        r.combo_tests.to_string(),
        r.beta_mean.to_string(),
        r.saturated_frac.to_string(),
    ]
}

/// One row per `(method, snr)`; an `HD_REFERENCE` block follows the ideal
/// rows when requested.
pub fn write_results_csv<W: Write>(w: W, results: &[EvalResult], hd_reference: bool) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(RESULTS_HEADER)?;
    for res in results {
        for r in &res.rows {
            wtr.write_record(row_fields(r))?;
        }
        if hd_reference && res.method == Method::IdealFd {
            for r in res.hd_reference_rows() {
                wtr.write_record(row_fields(&r))?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

/// One row per `(p_lna_dbm, adc_bits, method, snr)`.
pub fn write_sweep_csv<W: Write>(w: W, cells: &[SweepCell]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["p_lna_dbm", "adc_bits", "p_adc_max_dbm"];
    header.extend(RESULTS_HEADER);
    wtr.write_record(&header)?;
    for cell in cells {
        for r in &cell.result.rows {
            let mut rec = vec![cell.p_lna_dbm.to_string(), cell.adc_bits.to_string(), format!("{:.3}", cell.p_adc_max_dbm)];
            rec.extend(row_fields(r));
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Path of the results file inside an output directory.
pub fn results_path(out: &std::path::Path) -> PathBuf {
    out.join("results.csv")
}
