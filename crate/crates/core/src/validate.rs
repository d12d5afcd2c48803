//! Seeded property suite behind `fdbeam validate`.

use itertools::Itertools;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::allowlist::{LinkMode, OpCounter, SiProjection};
use crate::beamform::eigen_bb;
use crate::channel::{ArrayGeometry, FreqChannel};
use crate::codebook::{gen_dft_codebook, Codebook};
use crate::linalg::{fro_sq, sigma_max_sq, CMat};
use crate::saturation::{check_c1, check_c2, check_c3, check_c4, theorem1_gap, ConditionVariant, EtaConstants};

/// Relative slack absorbing rounding when one test's pass implies another's.
const SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: &'static str,
    pub instances: usize,
    pub violations: usize,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn rand_c(rng: &mut impl Rng) -> Complex64 {
    Complex64::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0)
}

pub fn rand_mat(rng: &mut impl Rng, m: usize, n: usize) -> CMat {
    CMat::from_fn(m, n, |_, _| rand_c(rng))
}

/// Unit-norm constant-modulus columns, as an analog beamformer would have.
pub fn rand_analog(rng: &mut impl Rng, n: usize, l: usize) -> CMat {
    let s = 1.0 / (n as f64).sqrt();
    CMat::from_fn(n, l, |_, _| Complex64::from_polar(s, rng.random_range(0.0..std::f64::consts::TAU)))
}

pub fn rand_channel(rng: &mut impl Rng, nr: usize, nt: usize, u: usize) -> FreqChannel {
    FreqChannel::new((0..u).map(|_| rand_mat(rng, nr, nt)).collect()).expect("u >= 1")
}

/// Random digital precoders with `||F_BB[u]||_F^2 <= n_s`.
pub fn rand_precoders(rng: &mut impl Rng, l: usize, n_s: usize, u: usize) -> Vec<CMat> {
    (0..u)
        .map(|_| {
            let f = rand_mat(rng, l, n_s);
            let target = n_s as f64 * rng.random_range(0.05..=1.0);
            &f * Complex64::new((target / fro_sq(&f)).sqrt(), 0.0)
        })
        .collect()
}

/// `C4` never undercuts `C3`, and a `C4` pass is a `C3` pass.
pub fn check_theorem_chain(seed: u64, instances: usize) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    for _ in 0..instances {
        let (nt, nr) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let l = rng.random_range(1..=3);
        let u = rng.random_range(1..=8);
        let si = rand_channel(&mut rng, nr, nt, u);
        let f = rand_analog(&mut rng, nt, l);
        let lw = rng.random_range(1..=3);
        let w = rng.random_bool(0.5).then(|| rand_analog(&mut rng, nr, lw));
        let (c3, c4) = theorem1_gap(&si, &f, w.as_ref()).expect("consistent dims");
        let eta = c3 * rng.random_range(0.5..2.0);
        let mut ops = OpCounter::default();
        let p3 = check_c3(&si, &f, w.as_ref(), eta, &mut ops).expect("dims").pass;
        let p4 = check_c4(&si, &f, w.as_ref(), eta, &mut ops).expect("dims").pass;
        if c4 < c3 - 1e-12 * c3.max(1.0) || (p4 && !p3) {
            violations += 1;
        }
    }
    CheckReport {
        name: "theorem_chain",
        instances,
        violations,
    }
}

/// `C3 ⇒ C2 ⇒ C1` for both forms and every power-feasible digital precoder.
pub fn check_sufficiency_ladder(seed: u64, instances: usize, precoders: usize) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    for _ in 0..instances {
        let (nt, nr) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let l = rng.random_range(1..=3);
        let n_s = rng.random_range(1..=l);
        let u = rng.random_range(1..=6);
        let si = rand_channel(&mut rng, nr, nt, u);
        let f = rand_analog(&mut rng, nt, l);
        let lw = rng.random_range(1..=3);
        let w = rand_analog(&mut rng, nr, lw);
        for form in [None, Some(&w)] {
            let (c3, _) = theorem1_gap(&si, &f, form).expect("dims");
            let eta = c3 * rng.random_range(0.8..1.6);
            let mut ops = OpCounter::default();
            let p3 = check_c3(&si, &f, form, eta, &mut ops).expect("dims").pass;
            for _ in 0..precoders {
                let bb = rand_precoders(&mut rng, l, n_s, u);
                let c2 = check_c2(&si, &f, &bb, form, eta, n_s, &mut ops).expect("dims");
                let c1 = check_c1(&si, &f, &bb, form, eta, n_s, &mut ops).expect("dims");
                let c1_ok = c1.lhs.iter().all(|&x| x <= c1.threshold * (1.0 + SLACK));
                if (p3 && c2.lhs > c2.threshold * (1.0 + SLACK)) || (c2.pass && !c1_ok) {
                    violations += 1;
                }
            }
        }
    }
    CheckReport {
        name: "sufficiency_ladder",
        instances: instances * precoders * 2,
        violations,
    }
}

/// `sigma_max^2(A) <= sum_n ||A[:, n]||^2`.
pub fn check_column_bound(seed: u64, instances: usize) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    for _ in 0..instances {
        let (m, n) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let a = rand_mat(&mut rng, m, n);
        if sigma_max_sq(&a) > fro_sq(&a) + 1e-12 * fro_sq(&a).max(1.0) {
            violations += 1;
        }
    }
    CheckReport {
        name: "column_bound",
        instances,
        violations,
    }
}

fn ula_codebook(n: usize) -> Codebook {
    gen_dft_codebook(&ArrayGeometry::new(n, 1, 0.5).expect("n >= 1"))
}

/// Pruned and unpruned `C4` agree; the pruned search never tests more.
pub fn check_pruning(seed: u64, instances: usize) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cb = ula_codebook(16);
    let mut violations = 0;
    for _ in 0..instances {
        let u = rng.random_range(1..=4);
        let si = rand_channel(&mut rng, 16, 16, u);
        let proj = SiProjection::transmit(&cb, &si, &EtaConstants::unbounded(), None).expect("dims");
        let mean = proj.beam_costs().iter().sum::<f64>() / 16.0;
        let eta = EtaConstants {
            eta_lna: 2.0 * mean * rng.random_range(0.6..1.3),
            eta_adc: f64::INFINITY,
        };
        let proj = proj.with_eta(&eta);
        let (mut a, mut b) = (OpCounter::default(), OpCounter::default());
        let full = proj.build(2, ConditionVariant::C4Colnorm, LinkMode::TxOnly, &mut a).expect("valid");
        let pruned = proj.build_pruned(2, LinkMode::TxOnly, &mut b).expect("valid");
        let strict = full.len() < 120 && b.combo_tests >= a.combo_tests;
        if full != pruned || b.combo_tests > a.combo_tests || strict {
            violations += 1;
        }
    }
    CheckReport {
        name: "pruning_equivalence",
        instances,
        violations,
    }
}

/// `feasible(C4) ⊆ feasible(C3)`, both growing with the budget.
pub fn check_subset_and_monotone(seed: u64, instances: usize) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cb = ula_codebook(8);
    let mut violations = 0;
    for _ in 0..instances {
        let u = rng.random_range(1..=3);
        let si = rand_channel(&mut rng, 8, 8, u);
        let base = SiProjection::transmit(&cb, &si, &EtaConstants::unbounded(), None).expect("dims");
        let mean = base.beam_costs().iter().sum::<f64>() / 8.0;
        let budgets = [0.5, 1.0, 2.0, 3.0].map(|k| k * mean * rng.random_range(0.8..1.2));
        let mut prev: Option<(Vec<_>, Vec<_>)> = None;
        for b in budgets.iter().sorted_by(|x, y| x.total_cmp(y)) {
            let proj = base.with_eta(&EtaConstants {
                eta_lna: *b,
                eta_adc: f64::INFINITY,
            });
            let mut ops = OpCounter::default();
            let c3 = proj.build(2, ConditionVariant::C3SvdRfOnly, LinkMode::TxOnly, &mut ops).expect("valid").combos;
            let c4 = proj.build(2, ConditionVariant::C4Colnorm, LinkMode::TxOnly, &mut ops).expect("valid").combos;
            if !c4.iter().all(|c| c3.contains(c)) {
                violations += 1;
            }
            if let Some((p3, p4)) = &prev {
                if !p3.iter().all(|c| c3.contains(c)) || !p4.iter().all(|c| c4.contains(c)) {
                    violations += 1;
                }
            }
            prev = Some((c3, c4));
        }
    }
    CheckReport {
        name: "subset_and_monotone",
        instances,
        violations,
    }
}

/// Eigenbeamformers meet the power constraint with equality.
pub fn check_eigen_power(seed: u64, instances: usize) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    for _ in 0..instances {
        let (lr, lt) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let n_s = rng.random_range(1..=lr.min(lt));
        let eff = rand_channel(&mut rng, lr, lt, 2);
        let bb = eigen_bb(&eff, n_s).expect("finite");
        if bb.f_bb.iter().any(|f| (fro_sq(f) - n_s as f64).abs() > 1e-10) {
            violations += 1;
        }
    }
    CheckReport {
        name: "eigen_power",
        instances,
        violations,
    }
}

/// Every check of the suite, derived from one seed.
pub fn run_suite(seed: u64) -> Vec<CheckReport> {
    vec![
        check_theorem_chain(seed, 1000),
        check_sufficiency_ladder(seed.wrapping_add(1), 500, 20),
        check_column_bound(seed.wrapping_add(2), 1000),
        check_pruning(seed.wrapping_add(3), 100),
        check_subset_and_monotone(seed.wrapping_add(4), 50),
        check_eigen_power(seed.wrapping_add(5), 200),
    ]
}
