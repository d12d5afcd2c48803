//! Feasible beam-combination sets and the allowlists they induce.
//!
//! A feasible set holds every `L`-subset of a codebook whose analog beamformer
//! passes the selected saturation test (`C3` or `C4`) for the current SI
//! channel; the allowlist is the union of the beams appearing in it.
//!
//! Both tests are driven from a [`SiProjection`]: the SI image `[W^H] H[u] c`
//! of every candidate beam `c` on every subcarrier, computed once. `C4` then
//! reduces to a scalar cost per beam, so a combination is tested by adding
//! `L` numbers; `C3` needs one largest-singular-value evaluation per
//! combination and subcarrier.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::sync::Arc;

use itertools::Itertools;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{taps_to_subcarriers, FreqChannel, TapChannel};
use crate::codebook::Codebook;
use crate::error::{invalid, mismatch, Error, Result};
use crate::linalg::{hermitian_max_eig, max_eig_2x2, CMat};
use crate::saturation::{check_c3, check_c4, ConditionVariant, EtaConstants};

/// Counts of the semantic operations performed while building feasible sets.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounter {
    /// Largest-singular-value evaluations.
    pub svd_count: u64,
    /// Column-norm evaluations.
    pub colnorm_count: u64,
    pub matvec_count: u64,
    /// Full beam combinations tested.
    pub combo_tests: u64,
}

impl OpCounter {
    pub fn merge(&mut self, other: &OpCounter) {
        self.svd_count += other.svd_count;
        self.colnorm_count += other.colnorm_count;
        self.matvec_count += other.matvec_count;
        self.combo_tests += other.combo_tests;
    }
}

/// Strictly increasing tuple of beam ids.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BeamCombo(Vec<u32>);

impl BeamCombo {
    pub fn new(mut ids: Vec<u32>) -> Result<Self> {
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("combo", "beam ids must be distinct"));
        }
        Ok(BeamCombo(ids))
    }

    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::fmt::Display for BeamCombo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0.iter().join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LinkMode {
    /// Both saturation tests restrict the transmit beams only.
    TxOnly,
    /// LNA test on the transmit beams, then the ADC test on the receive beams.
    TxThenRx,
}

impl LinkMode {
    pub fn label(&self) -> &'static str {
        match self {
            LinkMode::TxOnly => "TX_ONLY",
            LinkMode::TxThenRx => "TX_THEN_RX",
        }
    }
}

/// Saturation-safe beam combinations, sorted lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSet {
    pub combos: Vec<BeamCombo>,
    pub variant: ConditionVariant,
    pub link: LinkMode,
    pub num_chains: usize,
    /// Budget of the LNA test, when it was applied.
    pub eta_lna: Option<f64>,
    /// Budget of the ADC test, when it was applied.
    pub eta_adc: Option<f64>,
    pub codebook_hash: String,
}

impl FeasibleSet {
    pub fn len(&self) -> usize {
        self.combos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.combos.is_empty()
    }

    /// Re-runs the direct saturation checks on every transmit-side combo.
    pub fn recheck(&self, codebook: &Codebook, si: &FreqChannel, w_rf: Option<&CMat>) -> Result<bool> {
        let mut scratch = OpCounter::default();
        for combo in &self.combos {
            let f_rf = codebook.columns_for(combo.ids())?;
            let mut tests = Vec::new();
            if let Some(eta) = self.eta_lna {
                tests.push((None, eta));
            }
            if let (Some(eta), Some(w)) = (self.eta_adc, w_rf) {
                tests.push((Some(w), eta));
            }
            for (w, eta) in tests {
                let chk = match self.variant {
                    ConditionVariant::C3SvdRfOnly => check_c3(si, &f_rf, w, eta, &mut scratch)?,
                    ConditionVariant::C4Colnorm => check_c4(si, &f_rf, w, eta, &mut scratch)?,
                    other => return Err(invalid("variant", format!("{} has no analog-only form", other.label()))),
                };
                if !chk.pass {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// Reduced codebook: the distinct beams of a feasible set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allowlist {
    pub beam_ids: Vec<u32>,
    pub codebook_size: usize,
    pub codebook_hash: String,
}

impl Allowlist {
    pub fn len(&self) -> usize {
        self.beam_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beam_ids.is_empty()
    }

    pub fn contains(&self, id: u32) -> bool {
        self.beam_ids.binary_search(&id).is_ok()
    }
}

pub fn extract_allowlist(fs: &FeasibleSet, codebook: &Codebook) -> Allowlist {
    let ids: BTreeSet<u32> = fs.combos.iter().flat_map(|c| c.ids().iter().cloned()).collect();
    Allowlist {
        beam_ids: ids.into_iter().collect(),
        codebook_size: codebook.len(),
        codebook_hash: codebook.hash(),
    }
}

/// SI images of every candidate beam for one test form.
///
/// `vecs[u]` holds one column per candidate beam; `norms[u][c]` is that
/// column's squared norm and `costs[c]` its sum over subcarriers.
#[derive(Debug, Clone)]
struct FormImages {
    vecs: Arc<Vec<CMat>>,
    norms: Arc<Vec<Vec<f64>>>,
    costs: Arc<Vec<f64>>,
    eta: f64,
}

impl FormImages {
    fn new(vecs: Vec<CMat>, eta: f64) -> Self {
        let c = vecs.first().map_or(0, |v| v.ncols());
        let norms: Vec<Vec<f64>> = vecs
            .iter()
            .map(|v| v.column_iter().map(|col| col.norm_squared()).collect())
            .collect();
        let mut costs = vec![0.0; c];
        for per_u in &norms {
            for (acc, n) in costs.iter_mut().zip(per_u) {
                *acc += n;
            }
        }
        FormImages {
            vecs: Arc::new(vecs),
            norms: Arc::new(norms),
            costs: Arc::new(costs),
            eta,
        }
    }

    fn num_subcarriers(&self) -> usize {
        self.vecs.len()
    }

    /// Column-norm test: sum of per-beam costs in index order.
    fn c4_lhs(&self, idx: &[usize]) -> f64 {
        idx.iter().fold(0.0, |acc, &i| acc + self.costs[i])
    }

    /// Largest-singular-value test, one evaluation per subcarrier.
    fn c3_lhs(&self, idx: &[usize], counter: &mut OpCounter) -> f64 {
        let mut lhs = 0.0;
        for (u, v) in self.vecs.iter().enumerate() {
            let s = match idx.len() {
                1 => self.norms[u][idx[0]],
                2 => {
                    let b: Complex64 = v.column(idx[0]).dotc(&v.column(idx[1]));
                    max_eig_2x2(self.norms[u][idx[0]], self.norms[u][idx[1]], b)
                }
                l => {
                    let gram = CMat::from_fn(l, l, |r, c| v.column(idx[r]).dotc(&v.column(idx[c])));
                    hermitian_max_eig(&gram)
                }
            };
            lhs += s.max(0.0);
            counter.svd_count += 1;
        }
        lhs
    }
}

/// Precomputed SI images of a whole codebook, reusable across runs that only
/// differ in their budgets or test variant. Clones share the images.
#[derive(Debug, Clone)]
pub struct SiProjection {
    lna: Option<FormImages>,
    adc: Option<FormImages>,
    ids: Vec<u32>,
    codebook_hash: String,
    /// Work spent building the projection; charged to every run using it.
    build_ops: OpCounter,
}

impl SiProjection {
    /// Transmit-side images `H[u] c` (LNA) and `W^H H[u] c` (ADC, when
    /// `w_rf` is given) for every beam `c` of `codebook`.
    pub fn transmit(codebook: &Codebook, si: &FreqChannel, eta: &EtaConstants, w_rf: Option<&CMat>) -> Result<Self> {
        Self::check_transmit(codebook, si.shape(), w_rf)?;
        let cb = codebook.matrix();
        let images = si.per_subcarrier.iter().map(|h| h * &cb).collect();
        Ok(Self::from_images(codebook, images, eta, w_rf))
    }

    /// Same images as [`SiProjection::transmit`], computed per delay tap and
    /// then taken to the subcarrier domain.
    pub fn transmit_taps(
        codebook: &Codebook,
        si: &TapChannel,
        num_subcarriers: usize,
        eta: &EtaConstants,
        w_rf: Option<&CMat>,
    ) -> Result<Self> {
        Self::check_transmit(codebook, si.shape(), w_rf)?;
        let cb = codebook.matrix();
        let mapped = TapChannel {
            taps: si.taps.iter().map(|h| h * &cb).collect(),
            sample_interval_s: si.sample_interval_s,
        };
        let images = taps_to_subcarriers(&mapped, num_subcarriers)?.per_subcarrier;
        Ok(Self::from_images(codebook, images, eta, w_rf))
    }

    fn check_transmit(codebook: &Codebook, (nr, nt): (usize, usize), w_rf: Option<&CMat>) -> Result<()> {
        if codebook.is_empty() {
            return Err(invalid("codebook", "codebook is empty"));
        }
        if codebook.num_elements() != nt {
            return Err(mismatch(format!("codebook beams have {} entries, SI channel has {} columns", codebook.num_elements(), nt)));
        }
        if let Some(w) = w_rf {
            if w.nrows() != nr {
                return Err(mismatch(format!("W_RF has {} rows, SI channel has {} rows", w.nrows(), nr)));
            }
        }
        Ok(())
    }

    fn from_images(codebook: &Codebook, images: Vec<CMat>, eta: &EtaConstants, w_rf: Option<&CMat>) -> Self {
        let u = images.len() as u64;
        let c = codebook.len() as u64;
        let mut build_ops = OpCounter {
            matvec_count: u * c,
            ..OpCounter::default()
        };
        let adc = w_rf.map(|w| {
            let wh = w.adjoint();
            build_ops.matvec_count += u * w.ncols() as u64;
            FormImages::new(images.iter().map(|img| &wh * img).collect(), eta.eta_adc)
        });
        SiProjection {
            lna: Some(FormImages::new(images, eta.eta_lna)),
            adc,
            ids: codebook.ids().to_vec(),
            codebook_hash: codebook.hash(),
            build_ops,
        }
    }

    /// Adds (or replaces) the ADC form for combiner `w_rf`, reusing the LNA images.
    pub fn with_combiner(&self, w_rf: &CMat, eta_adc: f64) -> Result<SiProjection> {
        let lna = self
            .lna
            .as_ref()
            .ok_or_else(|| invalid("w_rf", "receive-side projections take no combiner"))?;
        if w_rf.nrows() != lna.vecs[0].nrows() {
            return Err(mismatch(format!("W_RF has {} rows, SI channel has {} rows", w_rf.nrows(), lna.vecs[0].nrows())));
        }
        let wh = w_rf.adjoint();
        let mut out = self.clone();
        out.build_ops.matvec_count = (lna.num_subcarriers() * (self.num_beams() + w_rf.ncols())) as u64;
        out.adc = Some(FormImages::new(lna.vecs.iter().map(|img| &wh * img).collect(), eta_adc));
        Ok(out)
    }

    /// Drops the ADC form.
    pub fn lna_only(&self) -> SiProjection {
        let mut out = self.clone();
        if out.lna.is_some() {
            out.adc = None;
            out.build_ops.matvec_count = self.lna.as_ref().map_or(0, |f| (f.num_subcarriers() * self.num_beams()) as u64);
        }
        out
    }

    /// Receive-side images for a fixed analog precoder: row `r` of
    /// `W_cb^H H[u] F_RF`, stored transposed so each rx beam owns a column.
    pub fn receive(f_rf: &CMat, codebook_rx: &Codebook, si: &FreqChannel, eta_adc: f64) -> Result<Self> {
        if codebook_rx.is_empty() {
            return Err(invalid("codebook", "codebook is empty"));
        }
        let (nr, nt) = si.shape();
        if f_rf.nrows() != nt {
            return Err(mismatch(format!("F_RF has {} rows, SI channel has {} columns", f_rf.nrows(), nt)));
        }
        if codebook_rx.num_elements() != nr {
            return Err(mismatch(format!("rx beams have {} entries, SI channel has {} rows", codebook_rx.num_elements(), nr)));
        }
        let cb_h = codebook_rx.matrix().adjoint();
        let vecs: Vec<CMat> = si
            .per_subcarrier
            .iter()
            .map(|h| (&cb_h * (h * f_rf)).transpose())
            .collect();
        let build_ops = OpCounter {
            matvec_count: (si.num_subcarriers() * f_rf.ncols()) as u64,
            ..OpCounter::default()
        };
        Ok(SiProjection {
            lna: None,
            adc: Some(FormImages::new(vecs, eta_adc)),
            ids: codebook_rx.ids().to_vec(),
            codebook_hash: codebook_rx.hash(),
            build_ops,
        })
    }

    pub fn num_beams(&self) -> usize {
        self.ids.len()
    }

    /// Same images with new budgets.
    pub fn with_eta(&self, eta: &EtaConstants) -> SiProjection {
        let mut out = self.clone();
        if let Some(f) = out.lna.as_mut() {
            f.eta = eta.eta_lna;
        }
        if let Some(f) = out.adc.as_mut() {
            f.eta = eta.eta_adc;
        }
        out
    }

    /// Per-beam `C4` costs of the LNA form (or of the ADC form on the receive side).
    pub fn beam_costs(&self) -> &[f64] {
        &self.forms()[0].costs[..]
    }

    fn forms(&self) -> Vec<&FormImages> {
        self.lna.iter().chain(self.adc.iter()).collect()
    }

    fn feasible_set(&self, combos: Vec<Vec<usize>>, variant: ConditionVariant, link: LinkMode, l: usize) -> FeasibleSet {
        let mut combos: Vec<BeamCombo> = combos
            .into_iter()
            .map(|idx| {
                let mut ids: Vec<u32> = idx.iter().map(|&i| self.ids[i]).collect();
                ids.sort_unstable();
                BeamCombo(ids)
            })
            .collect();
        combos.sort();
        FeasibleSet {
            combos,
            variant,
            link,
            num_chains: l,
            eta_lna: self.lna.as_ref().map(|f| f.eta),
            eta_adc: self.adc.as_ref().map(|f| f.eta),
            codebook_hash: self.codebook_hash.clone(),
        }
    }

    fn check_request(&self, l: usize, variant: ConditionVariant) -> Result<()> {
        if !matches!(variant, ConditionVariant::C3SvdRfOnly | ConditionVariant::C4Colnorm) {
            return Err(invalid("variant", format!("{} cannot build a feasible set", variant.label())));
        }
        if l == 0 {
            return Err(invalid("num_chains", "must be >= 1"));
        }
        if l > self.num_beams() {
            return Err(invalid(
                "num_chains",
                format!("{} RF chains exceed the {} codebook beams", l, self.num_beams()),
            ));
        }
        Ok(())
    }

    /// Exhaustive enumeration of all `C(C, L)` combinations.
    pub fn build(&self, l: usize, variant: ConditionVariant, link: LinkMode, counter: &mut OpCounter) -> Result<FeasibleSet> {
        self.check_request(l, variant)?;
        counter.merge(&self.build_ops);
        let forms = self.forms();
        if variant == ConditionVariant::C4Colnorm {
            for f in &forms {
                counter.colnorm_count += (f.num_subcarriers() * self.num_beams()) as u64;
            }
        }
        let mut keep = Vec::new();
        for idx in (0..self.num_beams()).combinations(l) {
            counter.combo_tests += 1;
            let mut pass = true;
            for f in &forms {
                let lhs = match variant {
                    ConditionVariant::C4Colnorm => f.c4_lhs(&idx),
                    _ => f.c3_lhs(&idx, counter),
                };
                pass &= lhs <= f.eta;
            }
            if pass {
                keep.push(idx);
            }
        }
        Ok(self.feasible_set(keep, variant, link, l))
    }

    /// `C4` enumeration over beams sorted by ascending cost of the first form,
    /// skipping every suffix whose cheapest completion already exceeds the
    /// budget. Other forms are tested on the surviving combinations.
    pub fn build_pruned(&self, l: usize, link: LinkMode, counter: &mut OpCounter) -> Result<FeasibleSet> {
        self.check_request(l, ConditionVariant::C4Colnorm)?;
        counter.merge(&self.build_ops);
        let forms = self.forms();
        for f in &forms {
            counter.colnorm_count += (f.num_subcarriers() * self.num_beams()) as u64;
        }
        let key = forms[0];
        let mut order: Vec<usize> = (0..self.num_beams()).collect();
        order.sort_by(|&a, &b| key.costs[a].total_cmp(&key.costs[b]).then(a.cmp(&b)));
        let sorted: Vec<f64> = order.iter().map(|&i| key.costs[i]).collect();
        let mut prefix = vec![0.0; sorted.len() + 1];
        for (i, c) in sorted.iter().enumerate() {
            prefix[i + 1] = prefix[i] + c;
        }
        let mut search = PrunedSearch {
            forms: &forms,
            order: &order,
            sorted: &sorted,
            prefix: &prefix,
            bound: key.eta + PRUNE_SLACK * key.eta.abs(),
            l,
            chosen: Vec::with_capacity(l),
            keep: Vec::new(),
            counter,
        };
        search.descend(0, 0.0);
        let keep = search.keep;
        Ok(self.feasible_set(keep, ConditionVariant::C4Colnorm, link, l))
    }
}

/// Relative slack on pruning bounds so that partial sums accumulated in
/// sorted order never discard a combination the index-order sum accepts.
const PRUNE_SLACK: f64 = 1e-12;

struct PrunedSearch<'a> {
    forms: &'a [&'a FormImages],
    order: &'a [usize],
    sorted: &'a [f64],
    prefix: &'a [f64],
    bound: f64,
    l: usize,
    chosen: Vec<usize>,
    keep: Vec<Vec<usize>>,
    counter: &'a mut OpCounter,
}

impl PrunedSearch<'_> {
    fn descend(&mut self, start: usize, partial: f64) {
        let c = self.sorted.len();
        let remaining = self.l - self.chosen.len();
        for pos in start..=c - remaining {
            // cheapest completion starting at `pos` is the next `remaining` sorted costs
            let lower = partial + (self.prefix[pos + remaining] - self.prefix[pos]);
            if lower > self.bound && remaining > 1 {
                break;
            }
            self.chosen.push(pos);
            if remaining == 1 {
                self.counter.combo_tests += 1;
                let mut idx: Vec<usize> = self.chosen.iter().map(|&p| self.order[p]).collect();
                idx.sort_unstable();
                let pass = self.forms.iter().all(|f| f.c4_lhs(&idx) <= f.eta);
                self.chosen.pop();
                if pass {
                    self.keep.push(idx);
                } else if lower > self.bound {
                    break;
                }
            } else {
                self.descend(pos + 1, partial + self.sorted[pos]);
                self.chosen.pop();
            }
        }
    }
}

/// All `C(C, L)` combinations of a codebook, with no test applied.
pub fn all_combinations(codebook: &Codebook, l: usize, link: LinkMode) -> Result<FeasibleSet> {
    if l == 0 || l > codebook.len() {
        return Err(invalid("num_chains", format!("{} chains for {} beams", l, codebook.len())));
    }
    let combos = codebook
        .ids()
        .iter()
        .cloned()
        .sorted()
        .combinations(l)
        .map(BeamCombo)
        .collect();
    Ok(FeasibleSet {
        combos,
        variant: ConditionVariant::C1Exact,
        link,
        num_chains: l,
        eta_lna: None,
        eta_adc: None,
        codebook_hash: codebook.hash(),
    })
}

/// Transmit-side feasible set under `variant`. The LNA test is always
/// applied; the ADC test is added when a receive combiner `w_rf` is given.
pub fn build_feasible_set(
    codebook: &Codebook,
    si: &FreqChannel,
    num_chains: usize,
    eta: &EtaConstants,
    variant: ConditionVariant,
    w_rf: Option<&CMat>,
    counter: &mut OpCounter,
) -> Result<FeasibleSet> {
    let link = LinkMode::TxOnly;
    SiProjection::transmit(codebook, si, eta, w_rf)?.build(num_chains, variant, link, counter)
}

/// Same set as [`build_feasible_set`] with `C4`, found with fewer combination tests.
pub fn build_feasible_set_pruned(
    codebook: &Codebook,
    si: &FreqChannel,
    num_chains: usize,
    eta: &EtaConstants,
    variant: ConditionVariant,
    w_rf: Option<&CMat>,
    counter: &mut OpCounter,
) -> Result<FeasibleSet> {
    if variant != ConditionVariant::C4Colnorm {
        return Err(invalid("variant", format!("pruning needs C4_COLNORM, got {}", variant.label())));
    }
    SiProjection::transmit(codebook, si, eta, w_rf)?.build_pruned(num_chains, LinkMode::TxOnly, counter)
}

/// Receive-side feasible set: combiners of `num_chains` rx beams whose ADC
/// test passes for the already chosen precoder `f_rf`.
pub fn restrain_rx_link(
    f_rf: &CMat,
    codebook_rx: &Codebook,
    si: &FreqChannel,
    num_chains: usize,
    eta_adc: f64,
    variant: ConditionVariant,
    counter: &mut OpCounter,
) -> Result<FeasibleSet> {
    SiProjection::receive(f_rf, codebook_rx, si, eta_adc)?.build(num_chains, variant, LinkMode::TxThenRx, counter)
}

/// Beam-sweep measurement counts with and without an allowlist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MeasurementCount {
    /// `C_r^(j) |allowlist|`.
    pub tx_link: u64,
    /// `C_r^(j) C_t^(i)`.
    pub tx_link_baseline: u64,
    /// `C_r^(i) C_t^(k)`.
    pub rx_link: u64,
    pub total: u64,
    /// The allowlist was empty.
    pub degenerate: bool,
}

pub fn measurement_count(allowlist_size: usize, codebook_tx_size: usize, rx_codebook_size: usize, rx_link_tx_size: usize, rx_link_rx_size: usize) -> MeasurementCount {
    let tx_link = (rx_codebook_size * allowlist_size) as u64;
    let rx_link = (rx_link_rx_size * rx_link_tx_size) as u64;
    MeasurementCount {
        tx_link,
        tx_link_baseline: (rx_codebook_size * codebook_tx_size) as u64,
        rx_link,
        total: tx_link + rx_link,
        degenerate: allowlist_size == 0,
    }
}

fn fmt_eta(eta: Option<f64>) -> String {
    eta.map_or_else(|| "none".to_string(), |e| format!("{e:e}"))
}

/// Writes the line-oriented dump: `#`-prefixed header, then one combo per line.
pub fn write_feasible_dump<W: Write>(mut w: W, fs: &FeasibleSet, allowlist: &Allowlist) -> Result<()> {
    writeln!(w, "# variant={}", fs.variant.label())?;
    writeln!(w, "# link={}", fs.link.label())?;
    writeln!(w, "# num_chains={}", fs.num_chains)?;
    writeln!(w, "# eta_lna={}", fmt_eta(fs.eta_lna))?;
    writeln!(w, "# eta_adc={}", fmt_eta(fs.eta_adc))?;
    writeln!(w, "# codebook_sha256={}", fs.codebook_hash)?;
    writeln!(w, "# combos={}", fs.len())?;
    writeln!(w, "# allowlist={}", allowlist.beam_ids.iter().join(","))?;
    for c in &fs.combos {
        writeln!(w, "{c}")?;
    }
    Ok(())
}

/// Parsed dump: header key/values and the combos.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleDump {
    pub header: Vec<(String, String)>,
    pub combos: Vec<BeamCombo>,
}

impl FeasibleDump {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub fn read_feasible_dump<R: BufRead>(r: R) -> Result<FeasibleDump> {
    let mut header = Vec::new();
    let mut combos = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('#') {
            if let Some((k, v)) = h.trim().split_once('=') {
                header.push((k.to_string(), v.to_string()));
            }
            continue;
        }
        let ids = line
            .split(',')
            .map(|s| s.trim().parse::<u32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                path: "feasible dump".into(),
                line: n as u64 + 1,
                msg: e.to_string(),
            })?;
        combos.push(BeamCombo::new(ids)?);
    }
    Ok(FeasibleDump { header, combos })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ArrayGeometry;
    use crate::codebook::gen_dft_codebook;
    use crate::saturation::theorem1_gap;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut impl Rng, m: usize, n: usize) -> CMat {
        CMat::from_fn(m, n, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    fn instance(seed: u64, nh: usize, u: usize) -> (Codebook, FreqChannel, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = ArrayGeometry::new(nh, 1, 0.5).unwrap();
        let cb = gen_dft_codebook(&g);
        let si = FreqChannel::new((0..u).map(|_| rand_mat(&mut rng, nh, nh)).collect()).unwrap();
        (cb, si, rng)
    }

    fn eta(lna: f64, adc: f64) -> EtaConstants {
        EtaConstants { eta_lna: lna, eta_adc: adc }
    }

    /// Direct column-norm evaluation per combination.
    fn brute_force_c4(cb: &Codebook, si: &FreqChannel, l: usize, eta_lna: f64) -> Vec<BeamCombo> {
        let mut out = Vec::new();
        for ids in cb.ids().iter().cloned().combinations(l) {
            let mut lhs = 0.0;
            for &id in &ids {
                let f = cb.beam_by_id(id).unwrap();
                for h in &si.per_subcarrier {
                    lhs += (h * f).norm_squared();
                }
            }
            if lhs <= eta_lna {
                out.push(BeamCombo::new(ids).unwrap());
            }
        }
        out
    }

    #[test]
    fn tap_domain_projection_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = ArrayGeometry::new(6, 1, 0.5).unwrap();
        let cb = gen_dft_codebook(&g);
        let taps = TapChannel {
            taps: (0..2).map(|_| rand_mat(&mut rng, 6, 6)).collect(),
            sample_interval_s: 1e-9,
        };
        let si = taps_to_subcarriers(&taps, 4).unwrap();
        let w = cb.columns_for(&[2, 3]).unwrap();
        let e = EtaConstants::unbounded();
        let a = SiProjection::transmit(&cb, &si, &e, Some(&w)).unwrap();
        let b = SiProjection::transmit_taps(&cb, &taps, 4, &e, Some(&w)).unwrap();
        let c = SiProjection::transmit(&cb, &si, &e, None).unwrap().with_combiner(&w, f64::INFINITY).unwrap();
        for (x, y) in a.beam_costs().iter().zip(b.beam_costs()) {
            assert!((x - y).abs() < 1e-10 * x.max(1.0));
        }
        assert_eq!(a.build_ops, c.build_ops);
        assert_eq!(a.lna_only().build_ops.matvec_count, 4 * 6);
        let ac: Vec<f64> = a.adc.as_ref().unwrap().costs.to_vec();
        let cc: Vec<f64> = c.adc.as_ref().unwrap().costs.to_vec();
        assert_eq!(ac, cc);
    }

    #[test]
    fn vacuous_budget_keeps_everything() {
        let (cb, si, _) = instance(1, 6, 3);
        for variant in [ConditionVariant::C3SvdRfOnly, ConditionVariant::C4Colnorm] {
            let fs = build_feasible_set(&cb, &si, 2, &EtaConstants::unbounded(), variant, None, &mut OpCounter::default()).unwrap();
            assert_eq!(fs.len(), 15);
        }
        let mut ops = OpCounter::default();
        let fs = build_feasible_set_pruned(&cb, &si, 2, &EtaConstants::unbounded(), ConditionVariant::C4Colnorm, None, &mut ops).unwrap();
        assert_eq!(fs.len(), 15);
        assert_eq!(ops.combo_tests, 15);
        let al = extract_allowlist(&fs, &cb);
        assert_eq!(al.beam_ids, cb.ids());
    }

    #[test]
    fn tiny_budget_keeps_nothing() {
        let (cb, si, _) = instance(2, 6, 3);
        for variant in [ConditionVariant::C3SvdRfOnly, ConditionVariant::C4Colnorm] {
            let fs = build_feasible_set(&cb, &si, 2, &eta(1e-300, 1e-300), variant, None, &mut OpCounter::default()).unwrap();
            assert!(fs.is_empty());
            assert!(extract_allowlist(&fs, &cb).is_empty());
        }
    }

    #[test]
    fn c4_matches_brute_force_and_nests_in_c3() {
        let (cb, si, mut rng) = instance(3, 6, 4);
        for _ in 0..20 {
            let costs = SiProjection::transmit(&cb, &si, &EtaConstants::unbounded(), None).unwrap().beam_costs().to_vec();
            let mut sorted = costs.clone();
            sorted.sort_by(f64::total_cmp);
            let budget = (sorted[0] + sorted[5]) * rng.random_range(0.6..1.4);
            let e = eta(budget, f64::INFINITY);
            let c4 = build_feasible_set(&cb, &si, 2, &e, ConditionVariant::C4Colnorm, None, &mut OpCounter::default()).unwrap();
            let c3 = build_feasible_set(&cb, &si, 2, &e, ConditionVariant::C3SvdRfOnly, None, &mut OpCounter::default()).unwrap();
            assert_eq!(c4.combos, brute_force_c4(&cb, &si, 2, budget));
            assert!(c4.combos.iter().all(|c| c3.combos.contains(c)));
            assert!(c4.recheck(&cb, &si, None).unwrap());
            assert!(c3.recheck(&cb, &si, None).unwrap());
        }
    }

    #[test]
    fn pruned_equals_unpruned() {
        for seed in 0..30 {
            let (cb, si, mut rng) = instance(100 + seed, 8, 3);
            let l = rng.random_range(1..=3);
            let costs = SiProjection::transmit(&cb, &si, &EtaConstants::unbounded(), None).unwrap().beam_costs().to_vec();
            let total: f64 = costs.iter().sum();
            let e = eta(total * l as f64 / 8.0 * rng.random_range(0.3..1.5), f64::INFINITY);
            let mut a = OpCounter::default();
            let mut b = OpCounter::default();
            let full = build_feasible_set(&cb, &si, l, &e, ConditionVariant::C4Colnorm, None, &mut a).unwrap();
            let pruned = build_feasible_set_pruned(&cb, &si, l, &e, ConditionVariant::C4Colnorm, None, &mut b).unwrap();
            assert_eq!(full, pruned);
            assert!(b.combo_tests <= a.combo_tests);
            let total_combos = (0..8).combinations(l).count();
            if full.len() < total_combos && l > 1 {
                assert!(b.combo_tests < a.combo_tests, "seed {seed}");
            }
        }
    }

    #[test]
    fn pruned_with_adc_form_matches() {
        for seed in 0..10 {
            let (cb, si, mut rng) = instance(200 + seed, 8, 2);
            let w = cb.columns_for(&[1, 4]).unwrap();
            let proj = SiProjection::transmit(&cb, &si, &EtaConstants::unbounded(), Some(&w)).unwrap();
            let mean = proj.beam_costs().iter().sum::<f64>() / 8.0;
            let e = eta(2.0 * mean * rng.random_range(0.5..1.5), 2.0 * mean / 8.0 * rng.random_range(0.5..1.5));
            let full = build_feasible_set(&cb, &si, 2, &e, ConditionVariant::C4Colnorm, Some(&w), &mut OpCounter::default()).unwrap();
            let pruned = build_feasible_set_pruned(&cb, &si, 2, &e, ConditionVariant::C4Colnorm, Some(&w), &mut OpCounter::default()).unwrap();
            assert_eq!(full, pruned);
            assert!(full.recheck(&cb, &si, Some(&w)).unwrap());
        }
    }

    #[test]
    fn all_beams_over_budget_means_no_tests() {
        let (cb, si, _) = instance(4, 6, 2);
        let proj = SiProjection::transmit(&cb, &si, &EtaConstants::unbounded(), None).unwrap();
        let min = proj.beam_costs().iter().cloned().fold(f64::INFINITY, f64::min);
        let mut ops = OpCounter::default();
        let fs = build_feasible_set_pruned(&cb, &si, 2, &eta(min * 0.99, 1.0), ConditionVariant::C4Colnorm, None, &mut ops).unwrap();
        assert!(fs.is_empty());
        assert_eq!(ops.combo_tests, 0);
    }

    #[test]
    fn pruned_rejects_c3_and_bad_sizes() {
        let (cb, si, _) = instance(5, 4, 2);
        let e = EtaConstants::unbounded();
        let mut ops = OpCounter::default();
        assert!(build_feasible_set_pruned(&cb, &si, 2, &e, ConditionVariant::C3SvdRfOnly, None, &mut ops).is_err());
        assert!(build_feasible_set(&cb, &si, 5, &e, ConditionVariant::C4Colnorm, None, &mut ops).is_err());
        assert!(build_feasible_set(&cb, &si, 2, &e, ConditionVariant::C2SvdWithBb, None, &mut ops).is_err());
        let empty = Codebook::new(vec![], vec![]).unwrap();
        assert!(build_feasible_set(&empty, &si, 1, &e, ConditionVariant::C4Colnorm, None, &mut ops).is_err());
    }

    #[test]
    fn counter_laws() {
        let (cb, si, _) = instance(6, 8, 5);
        let e = eta(10.0, 10.0);
        let mut c3 = OpCounter::default();
        build_feasible_set(&cb, &si, 2, &e, ConditionVariant::C3SvdRfOnly, None, &mut c3).unwrap();
        assert_eq!(c3.svd_count, 5 * 28);
        assert_eq!(c3.colnorm_count, 0);
        assert_eq!(c3.combo_tests, 28);
        let mut c4 = OpCounter::default();
        build_feasible_set(&cb, &si, 2, &e, ConditionVariant::C4Colnorm, None, &mut c4).unwrap();
        assert_eq!(c4.colnorm_count, 5 * 8);
        assert_eq!(c4.svd_count, 0);
        assert_eq!(c4.combo_tests, 28);
    }

    #[test]
    fn monotone_in_budget() {
        let (cb, si, _) = instance(7, 6, 3);
        let mut prev: Option<FeasibleSet> = None;
        for budget in [1.0, 5.0, 10.0, 20.0, 40.0, 80.0] {
            let fs = build_feasible_set(&cb, &si, 2, &eta(budget, 1.0), ConditionVariant::C3SvdRfOnly, None, &mut OpCounter::default()).unwrap();
            if let Some(p) = prev {
                assert!(p.combos.iter().all(|c| fs.combos.contains(c)));
            }
            prev = Some(fs);
        }
    }

    #[test]
    fn allowlist_of_the_toy_feasible_set() {
        let g = ArrayGeometry::new(5, 1, 0.5).unwrap();
        let cb = gen_dft_codebook(&g);
        let fs = FeasibleSet {
            combos: vec![BeamCombo::new(vec![2, 3, 4]).unwrap(), BeamCombo::new(vec![3, 4, 5]).unwrap()],
            variant: ConditionVariant::C4Colnorm,
            link: LinkMode::TxOnly,
            num_chains: 3,
            eta_lna: Some(1.0),
            eta_adc: None,
            codebook_hash: cb.hash(),
        };
        assert_eq!(extract_allowlist(&fs, &cb).beam_ids, vec![2, 3, 4, 5]);
        let mut buf = Vec::new();
        write_feasible_dump(&mut buf, &fs, &extract_allowlist(&fs, &cb)).unwrap();
        let dump = read_feasible_dump(buf.as_slice()).unwrap();
        assert_eq!(dump.combos, fs.combos);
        assert_eq!(dump.get("allowlist"), Some("2,3,4,5"));
        assert_eq!(dump.get("variant"), Some("C4_COLNORM"));
        assert_eq!(dump.get("eta_adc"), Some("none"));
    }

    /// Direct ADC column-norm test per rx combination.
    fn brute_force_rx(f_rf: &CMat, cb: &Codebook, si: &FreqChannel, l: usize, eta_adc: f64) -> Vec<BeamCombo> {
        let mut out = Vec::new();
        for ids in cb.ids().iter().cloned().combinations(l) {
            let w = cb.columns_for(&ids).unwrap();
            let mut lhs = 0.0;
            for col in f_rf.column_iter() {
                for h in &si.per_subcarrier {
                    lhs += (w.adjoint() * h * col).norm_squared();
                }
            }
            if lhs <= eta_adc {
                out.push(BeamCombo::new(ids).unwrap());
            }
        }
        out
    }

    #[test]
    fn rx_restraint() {
        let (cb, si, mut rng) = instance(8, 6, 3);
        let f_rf = cb.columns_for(&[2, 5]).unwrap();
        let all = restrain_rx_link(&f_rf, &cb, &si, 2, f64::INFINITY, ConditionVariant::C4Colnorm, &mut OpCounter::default()).unwrap();
        assert_eq!(all.len(), 15);
        let zero = FreqChannel::zeros(6, 6, 3);
        let all = restrain_rx_link(&f_rf, &cb, &zero, 2, 0.0, ConditionVariant::C3SvdRfOnly, &mut OpCounter::default()).unwrap();
        assert_eq!(all.len(), 15);
        for _ in 0..10 {
            let (c3_lhs, _) = theorem1_gap(&si, &f_rf, Some(&cb.columns_for(&[1, 2]).unwrap())).unwrap();
            let budget = c3_lhs * rng.random_range(0.5..2.0);
            let got = restrain_rx_link(&f_rf, &cb, &si, 2, budget, ConditionVariant::C4Colnorm, &mut OpCounter::default()).unwrap();
            assert_eq!(got.combos, brute_force_rx(&f_rf, &cb, &si, 2, budget));
            let c3 = restrain_rx_link(&f_rf, &cb, &si, 2, budget, ConditionVariant::C3SvdRfOnly, &mut OpCounter::default()).unwrap();
            assert!(got.combos.iter().all(|c| c3.combos.contains(c)));
            for combo in &c3.combos {
                let w = cb.columns_for(combo.ids()).unwrap();
                let (c3_direct, _) = theorem1_gap(&si, &f_rf, Some(&w)).unwrap();
                assert!(c3_direct <= budget * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn measurement_counts() {
        assert_eq!(measurement_count(64, 64, 64, 64, 64).tx_link, 4096);
        assert_eq!(measurement_count(64, 64, 64, 64, 64).total, 8192);
        let m = measurement_count(0, 64, 64, 64, 64);
        assert_eq!(m.tx_link, 0);
        assert!(m.degenerate);
        assert_eq!(measurement_count(40, 64, 64, 64, 64).tx_link, 2560);
        assert_eq!(measurement_count(40, 64, 64, 64, 64).tx_link_baseline, 4096);
    }

    #[test]
    fn combos_are_canonical() {
        assert_eq!(BeamCombo::new(vec![5, 2, 3]).unwrap().ids(), &[2, 3, 5]);
        assert!(BeamCombo::new(vec![1, 1]).is_err());
        assert_eq!(BeamCombo::new(vec![3, 1]).unwrap().to_string(), "1,3");
    }
}
