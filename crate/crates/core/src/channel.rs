//! Tap-domain and subcarrier-domain MIMO channels.
//!
//! Desired links use a far-field clustered ray model: every path contributes a
//! rank-one term `gain * a_rx(aoa) * a_tx(aod)^H` to one delay tap. The
//! self-interference link mixes a spherical-wave near-field term with a
//! far-field term through a Rician factor. Tap channels are turned into
//! per-subcarrier matrices with a `U`-point DFT.
//!
//! Array convention: the array lies in the x-z plane with its normal along
//! +y. Element `(h, v)` (horizontal index `h`, vertical index `v`) sits at
//! `(h d, 0, v d)` and is stored at flat index `h * n_vertical + v`. Angles
//! are spherical with the elevation measured from the array normal and the
//! azimuth measured in the array plane from the horizontal axis, so the unit
//! direction is `(sin el cos az, cos el, sin el sin az)`. The phase reference
//! is element `(0, 0)`.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path as FsPath;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};
use crate::linalg::{cis, CMat, CVec, ZERO};

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub gain: Complex64,
    pub delay_s: f64,
    pub aoa_el: f64,
    pub aoa_az: f64,
    pub aod_el: f64,
    pub aod_az: f64,
}

impl Path {
    fn validate(&self) -> Result<()> {
        if !(self.delay_s >= 0.0) || !self.delay_s.is_finite() {
            return Err(invalid("delay_s", format!("must be finite and >= 0, got {}", self.delay_s)));
        }
        let angles = [self.aoa_el, self.aoa_az, self.aod_el, self.aod_az];
        if angles.iter().any(|a| !a.is_finite()) || !self.gain.re.is_finite() || !self.gain.im.is_finite() {
            return Err(Error::NonFinite("path gain or angle"));
        }
        Ok(())
    }
}

/// Uniform planar array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub n_horizontal: usize,
    pub n_vertical: usize,
    pub spacing_wavelengths: f64,
}

impl ArrayGeometry {
    pub fn new(n_horizontal: usize, n_vertical: usize, spacing_wavelengths: f64) -> Result<Self> {
        let g = ArrayGeometry {
            n_horizontal,
            n_vertical,
            spacing_wavelengths,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_horizontal == 0 || self.n_vertical == 0 {
            return Err(invalid("array", "element counts must be positive"));
        }
        if !(self.spacing_wavelengths > 0.0) || !self.spacing_wavelengths.is_finite() {
            return Err(invalid("spacing_wavelengths", "must be finite and > 0"));
        }
        Ok(())
    }

    pub fn num_elements(&self) -> usize {
        self.n_horizontal * self.n_vertical
    }

    /// Element positions in meters, offset by `origin`.
    pub fn positions(&self, wavelength_m: f64, origin: [f64; 3]) -> Vec<[f64; 3]> {
        let d = self.spacing_wavelengths * wavelength_m;
        let mut out = Vec::with_capacity(self.num_elements());
        for h in 0..self.n_horizontal {
            for v in 0..self.n_vertical {
                out.push([origin[0] + h as f64 * d, origin[1], origin[2] + v as f64 * d]);
            }
        }
        out
    }
}

/// Unit-norm far-field array response toward `(elevation, azimuth)`.
pub fn upa_array_response(geometry: &ArrayGeometry, elevation: f64, azimuth: f64) -> CVec {
    let n = geometry.num_elements();
    let d = geometry.spacing_wavelengths;
    let (sin_el, _) = elevation.sin_cos();
    let (sin_az, cos_az) = azimuth.sin_cos();
    let kx = 2.0 * PI * d * sin_el * cos_az;
    let kz = 2.0 * PI * d * sin_el * sin_az;
    let scale = 1.0 / (n as f64).sqrt();
    CVec::from_fn(n, |p, _| {
        let h = (p / geometry.n_vertical) as f64;
        let v = (p % geometry.n_vertical) as f64;
        cis(kx * h + kz * v) * scale
    })
}

/// Delay-tap channel; `taps[0]` is tap `d = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TapChannel {
    pub taps: Vec<CMat>,
    pub sample_interval_s: f64,
}

impl TapChannel {
    pub fn num_taps(&self) -> usize {
        self.taps.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.taps[0].shape()
    }
}

/// Per-subcarrier channel; `per_subcarrier[0]` is subcarrier `u = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqChannel {
    pub per_subcarrier: Vec<CMat>,
}

impl FreqChannel {
    pub fn new(per_subcarrier: Vec<CMat>) -> Result<Self> {
        let first = per_subcarrier
            .first()
            .ok_or_else(|| invalid("num_subcarriers", "must be >= 1"))?
            .shape();
        if per_subcarrier.iter().any(|m| m.shape() != first) {
            return Err(mismatch("subcarrier matrices differ in shape"));
        }
        Ok(FreqChannel { per_subcarrier })
    }

    pub fn num_subcarriers(&self) -> usize {
        self.per_subcarrier.len()
    }

    /// `(rows, cols)` of every subcarrier matrix.
    pub fn shape(&self) -> (usize, usize) {
        self.per_subcarrier[0].shape()
    }

    pub fn scaled(&self, t: f64) -> FreqChannel {
        FreqChannel {
            per_subcarrier: self.per_subcarrier.iter().map(|m| m * Complex64::new(t, 0.0)).collect(),
        }
    }

    pub fn zeros(rows: usize, cols: usize, u: usize) -> FreqChannel {
        FreqChannel {
            per_subcarrier: vec![CMat::zeros(rows, cols); u],
        }
    }
}

/// Self-interference channel description.
#[derive(Debug, Clone, PartialEq)]
pub struct SiChannelSpec {
    pub rician_kappa: f64,
    pub tx_rx_separation_m: f64,
    pub nf_normalization: NearFieldNorm,
    pub carrier_wavelength_m: f64,
    pub far_field_paths: Vec<Path>,
}

/// How the near-field constant `rho` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NearFieldNorm {
    /// Choose `rho` so that `||H_NF||_F^2 = N_t N_r`.
    Frobenius,
    Fixed(f64),
}

/// Far-field taps from a path list.
///
/// Each path lands on tap `clamp(round(delay / T_s), 1, D)`; paths rounding
/// beyond tap `D` are dropped and counted in the second return value.
pub fn gen_farfield_taps(
    paths: &[Path],
    geometry_tx: &ArrayGeometry,
    geometry_rx: &ArrayGeometry,
    sample_interval_s: f64,
    num_taps: usize,
) -> Result<(TapChannel, usize)> {
    if !(sample_interval_s > 0.0) || !sample_interval_s.is_finite() {
        return Err(invalid("sample_interval_s", "must be finite and > 0"));
    }
    if num_taps == 0 {
        return Err(invalid("num_taps", "must be >= 1"));
    }
    if paths.is_empty() {
        return Err(invalid("paths", "path list is empty"));
    }
    let (nr, nt) = (geometry_rx.num_elements(), geometry_tx.num_elements());
    let mut taps = vec![CMat::zeros(nr, nt); num_taps];
    let mut dropped = 0;
    for path in paths {
        path.validate()?;
        let idx = (path.delay_s / sample_interval_s).round().max(1.0);
        if idx > num_taps as f64 {
            dropped += 1;
            continue;
        }
        let a_r = upa_array_response(geometry_rx, path.aoa_el, path.aoa_az);
        let a_t = upa_array_response(geometry_tx, path.aod_el, path.aod_az);
        let tap = &mut taps[idx as usize - 1];
        for c in 0..nt {
            let w = path.gain * a_t[c].conj();
            for r in 0..nr {
                tap[(r, c)] += a_r[r] * w;
            }
        }
    }
    Ok((
        TapChannel {
            taps,
            sample_interval_s,
        },
        dropped,
    ))
}

/// Spherical-wave channel between two co-planar arrays stacked vertically.
///
/// The transmit array sits at the origin and the receive array is shifted by
/// `separation_m` along the vertical axis. Entry `(r, t)` is
/// `rho / dist * exp(-j 2 pi dist / wavelength)`.
pub fn gen_nearfield_si(
    geometry_tx: &ArrayGeometry,
    geometry_rx: &ArrayGeometry,
    separation_m: f64,
    wavelength_m: f64,
    normalization: NearFieldNorm,
) -> Result<CMat> {
    if !separation_m.is_finite() || separation_m < 0.0 {
        return Err(invalid("separation_m", "must be finite and >= 0"));
    }
    if !(wavelength_m > 0.0) || !wavelength_m.is_finite() {
        return Err(invalid("wavelength_m", "must be finite and > 0"));
    }
    let tx = geometry_tx.positions(wavelength_m, [0.0; 3]);
    let rx = geometry_rx.positions(wavelength_m, [0.0, 0.0, separation_m]);
    let mut dist = vec![0.0; rx.len() * tx.len()];
    for (r, pr) in rx.iter().enumerate() {
        for (t, pt) in tx.iter().enumerate() {
            let d = ((pr[0] - pt[0]).powi(2) + (pr[1] - pt[1]).powi(2) + (pr[2] - pt[2]).powi(2)).sqrt();
            if d == 0.0 {
                return Err(Error::CoincidentElements { tx: t, rx: r });
            }
            dist[r * tx.len() + t] = d;
        }
    }
    let rho = match normalization {
        NearFieldNorm::Fixed(rho) => rho,
        NearFieldNorm::Frobenius => {
            let inv_sq: f64 = dist.iter().map(|d| 1.0 / (d * d)).sum();
            ((rx.len() * tx.len()) as f64 / inv_sq).sqrt()
        }
    };
    Ok(CMat::from_fn(rx.len(), tx.len(), |r, t| {
        let d = dist[r * tx.len() + t];
        cis(-2.0 * PI * d / wavelength_m) * (rho / d)
    }))
}

/// Rician mix of a delay-free near-field term and far-field taps.
pub fn combine_rician(near: &CMat, far: &TapChannel, kappa: f64) -> Result<TapChannel> {
    if !(kappa >= 0.0) {
        return Err(invalid("kappa", format!("must be >= 0, got {kappa}")));
    }
    if far.taps.is_empty() {
        return Err(invalid("num_taps", "must be >= 1"));
    }
    if near.shape() != far.shape() {
        return Err(mismatch(format!(
            "near-field {:?} vs far-field {:?}",
            near.shape(),
            far.shape()
        )));
    }
    let (w_near, w_far) = if kappa.is_infinite() {
        (1.0, 0.0)
    } else {
        ((kappa / (kappa + 1.0)).sqrt(), (1.0 / (kappa + 1.0)).sqrt())
    };
    let mut taps: Vec<CMat> = far.taps.iter().map(|t| t * Complex64::new(w_far, 0.0)).collect();
    taps[0] += near * Complex64::new(w_near, 0.0);
    Ok(TapChannel {
        taps,
        sample_interval_s: far.sample_interval_s,
    })
}

/// `H[u] = sum_{d=1..D} H_d e^{-j 2 pi u d / U}` for `u = 1..U`.
pub fn taps_to_subcarriers(taps: &TapChannel, num_subcarriers: usize) -> Result<FreqChannel> {
    if num_subcarriers < 1 {
        return Err(invalid("num_subcarriers", "must be >= 1"));
    }
    if taps.taps.is_empty() {
        return Err(invalid("num_taps", "must be >= 1"));
    }
    if num_subcarriers < taps.num_taps() {
        return Err(invalid(
            "num_subcarriers",
            format!("{} is smaller than the tap count {}", num_subcarriers, taps.num_taps()),
        ));
    }
    let (nr, nt) = taps.shape();
    let active: Vec<(usize, &CMat)> = taps
        .taps
        .iter()
        .enumerate()
        .filter(|(_, t)| t.iter().any(|z| *z != ZERO))
        .map(|(i, t)| (i + 1, t))
        .collect();
    let u_f = num_subcarriers as f64;
    let per_subcarrier = (1..=num_subcarriers)
        .map(|u| {
            let mut h = CMat::zeros(nr, nt);
            for &(d, tap) in &active {
                // reduce u*d mod U before scaling to keep the phase exact
                let k = (u * d) % num_subcarriers;
                let w = cis(-2.0 * PI * k as f64 / u_f);
                h.zip_apply(tap, |acc, x| *acc += x * w);
            }
            h
        })
        .collect();
    Ok(FreqChannel { per_subcarrier })
}

/// Builds the self-interference tap channel described by `desc`.
pub fn gen_si_taps(
    desc: &SiChannelSpec,
    geometry_tx: &ArrayGeometry,
    geometry_rx: &ArrayGeometry,
    sample_interval_s: f64,
    num_taps: usize,
) -> Result<(TapChannel, usize)> {
    let near = gen_nearfield_si(
        geometry_tx,
        geometry_rx,
        desc.tx_rx_separation_m,
        desc.carrier_wavelength_m,
        desc.nf_normalization,
    )?;
    let (far, dropped) = gen_farfield_taps(&desc.far_field_paths, geometry_tx, geometry_rx, sample_interval_s, num_taps)?;
    Ok((combine_rician(&near, &far, desc.rician_kappa)?, dropped))
}

#[derive(Debug, Serialize, Deserialize)]
struct PathRecord {
    gain_re: f64,
    gain_im: f64,
    delay_s: f64,
    aoa_el_rad: f64,
    aoa_az_rad: f64,
    aod_el_rad: f64,
    aod_az_rad: f64,
}

/// Parses a path-list CSV (header row required, `#` comment lines skipped).
pub fn parse_path_list<R: Read>(reader: R, origin: &FsPath) -> Result<Vec<Path>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(reader);
    let mut paths = Vec::new();
    for rec in rdr.deserialize::<PathRecord>() {
        let rec = rec.map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let path = Path {
            gain: Complex64::new(rec.gain_re, rec.gain_im),
            delay_s: rec.delay_s,
            aoa_el: rec.aoa_el_rad,
            aoa_az: rec.aoa_az_rad,
            aod_el: rec.aod_el_rad,
            aod_az: rec.aod_az_rad,
        };
        path.validate()?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn read_path_list(path: &FsPath) -> Result<Vec<Path>> {
    let file = std::fs::File::open(path)?;
    parse_path_list(file, path)
}

pub fn write_path_list<W: Write>(writer: W, paths: &[Path]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for p in paths {
        wtr.serialize(PathRecord {
            gain_re: p.gain.re,
            gain_im: p.gain.im,
            delay_s: p.delay_s,
            aoa_el_rad: p.aoa_el,
            aoa_az_rad: p.aoa_az,
            aod_el_rad: p.aod_el,
            aod_az_rad: p.aod_az,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{fro_sq, sigma_max_sq, vec_norm_sq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn upa(nh: usize, nv: usize) -> ArrayGeometry {
        ArrayGeometry::new(nh, nv, 0.5).unwrap()
    }

    fn random_path(rng: &mut impl Rng, ts: f64, d: usize) -> Path {
        Path {
            gain: Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5),
            delay_s: rng.random::<f64>() * ts * d as f64,
            aoa_el: rng.random::<f64>() * PI - PI / 2.0,
            aoa_az: rng.random::<f64>() * 2.0 * PI,
            aod_el: rng.random::<f64>() * PI - PI / 2.0,
            aod_az: rng.random::<f64>() * 2.0 * PI,
        }
    }

    #[test]
    fn broadside_response_is_flat() {
        let g = upa(4, 3);
        let a = upa_array_response(&g, 0.0, 1.3);
        let expect = 1.0 / 12f64.sqrt();
        for z in a.iter() {
            assert!((z - Complex64::new(expect, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn response_has_unit_norm() {
        let g = upa(16, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let a = upa_array_response(&g, rng.random::<f64>() * 7.0 - 3.5, rng.random::<f64>() * 20.0 - 10.0);
            assert!((vec_norm_sq(a.iter().cloned()) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_element_half_wave_endfire() {
        // sin(el) cos(az) = 1 gives a phase step of pi between the elements
        let g = upa(2, 1);
        let a = upa_array_response(&g, PI / 2.0, 0.0);
        let s = 1.0 / 2f64.sqrt();
        assert!((a[0] - Complex64::new(s, 0.0)).norm() < 1e-12);
        assert!((a[1] - Complex64::new(-s, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn single_path_gives_unit_rank_one_tap() {
        let g = upa(4, 2);
        let p = Path {
            gain: Complex64::new(1.0, 0.0),
            delay_s: 0.0,
            aoa_el: 0.3,
            aoa_az: 1.0,
            aod_el: -0.4,
            aod_az: 2.0,
        };
        let (tc, dropped) = gen_farfield_taps(&[p], &g, &g, 1e-9, 4).unwrap();
        assert_eq!(dropped, 0);
        let nonzero: Vec<_> = tc.taps.iter().filter(|t| fro_sq(t) > 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert!((fro_sq(&tc.taps[0]) - 1.0).abs() < 1e-12);
        assert!((sigma_max_sq(&tc.taps[0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn opposite_paths_cancel() {
        let g = upa(3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_path(&mut rng, 1e-9, 3);
        let q = Path { gain: -p.gain, ..p };
        let (tc, _) = gen_farfield_taps(&[p, q], &g, &g, 1e-9, 3).unwrap();
        assert!(tc.taps.iter().all(|t| t.iter().all(|z| *z == ZERO)));
    }

    #[test]
    fn farfield_matches_per_path_accumulation() {
        let gt = upa(3, 2);
        let gr = upa(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ts = 2e-9;
        let d = 4;
        let paths: Vec<Path> = (0..3).map(|_| random_path(&mut rng, ts, d)).collect();
        let (tc, dropped) = gen_farfield_taps(&paths, &gt, &gr, ts, d).unwrap();
        assert_eq!(dropped, 0);
        // oracle: explicit steering-vector formula, entry by entry
        let mut oracle = vec![vec![vec![ZERO; 6]; 4]; d];
        for p in &paths {
            let tap = ((p.delay_s / ts).round() as usize).clamp(1, d) - 1;
            for r in 0..4 {
                for t in 0..6 {
                    let phase = |g: &ArrayGeometry, idx: usize, el: f64, az: f64| {
                        let h = (idx / g.n_vertical) as f64;
                        let v = (idx % g.n_vertical) as f64;
                        PI * (h * el.sin() * az.cos() + v * el.sin() * az.sin())
                    };
                    let ar = cis(phase(&gr, r, p.aoa_el, p.aoa_az)) / 2.0;
                    let at = cis(phase(&gt, t, p.aod_el, p.aod_az)) / 6f64.sqrt();
                    oracle[tap][r][t] += p.gain * ar * at.conj();
                }
            }
        }
        for (k, tap) in tc.taps.iter().enumerate() {
            for r in 0..4 {
                for t in 0..6 {
                    assert!((tap[(r, t)] - oracle[k][r][t]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn farfield_is_linear_in_paths() {
        let g = upa(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<Path> = (0..3).map(|_| random_path(&mut rng, 1e-9, 5)).collect();
        let b: Vec<Path> = (0..2).map(|_| random_path(&mut rng, 1e-9, 5)).collect();
        let all: Vec<Path> = a.iter().chain(b.iter()).cloned().collect();
        let (ta, _) = gen_farfield_taps(&a, &g, &g, 1e-9, 5).unwrap();
        let (tb, _) = gen_farfield_taps(&b, &g, &g, 1e-9, 5).unwrap();
        let (tab, _) = gen_farfield_taps(&all, &g, &g, 1e-9, 5).unwrap();
        for d in 0..5 {
            let diff = &tab.taps[d] - (&ta.taps[d] + &tb.taps[d]);
            assert!(fro_sq(&diff) < 1e-24);
        }
    }

    #[test]
    fn late_paths_are_dropped_and_counted() {
        let g = upa(2, 1);
        let mut p = random_path(&mut ChaCha8Rng::seed_from_u64(5), 1e-9, 1);
        p.delay_s = 10e-9;
        let (tc, dropped) = gen_farfield_taps(&[p], &g, &g, 1e-9, 4).unwrap();
        assert_eq!(dropped, 1);
        assert!(tc.taps.iter().all(|t| fro_sq(t) == 0.0));
    }

    #[test]
    fn farfield_rejects_bad_sampling() {
        let g = upa(2, 1);
        let p = random_path(&mut ChaCha8Rng::seed_from_u64(6), 1e-9, 1);
        assert!(gen_farfield_taps(&[p], &g, &g, 0.0, 4).is_err());
        assert!(gen_farfield_taps(&[p], &g, &g, -1.0, 4).is_err());
        assert!(gen_farfield_taps(&[], &g, &g, 1e-9, 4).is_err());
    }

    #[test]
    fn nearfield_single_element() {
        let g = upa(1, 1);
        let lambda = 0.0107;
        let r = 0.1;
        let h = gen_nearfield_si(&g, &g, r, lambda, NearFieldNorm::Fixed(r)).unwrap();
        let expect = cis(-2.0 * PI * r / lambda);
        assert!((h[(0, 0)] - expect).norm() < 1e-12);
        assert!((h[(0, 0)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nearfield_frobenius_normalization() {
        let g = upa(16, 4);
        let h = gen_nearfield_si(&g, &g, 0.1, 0.0107, NearFieldNorm::Frobenius).unwrap();
        let target = 64.0 * 64.0;
        assert!((fro_sq(&h) - target).abs() / target < 1e-9);
    }

    #[test]
    fn nearfield_two_by_two_hand_values() {
        // two elements along x at spacing 0.5 lambda, rx shifted up by s
        let g = ArrayGeometry::new(2, 1, 0.5).unwrap();
        let lambda = 0.01;
        let s = 0.03;
        let rho = 0.7;
        let h = gen_nearfield_si(&g, &g, s, lambda, NearFieldNorm::Fixed(rho)).unwrap();
        let dx = 0.005;
        let straight = s;
        let diag = (s * s + dx * dx).sqrt();
        let entry = |d: f64| cis(-2.0 * PI * d / lambda) * (rho / d);
        assert!((h[(0, 0)] - entry(straight)).norm() < 1e-12);
        assert!((h[(1, 1)] - entry(straight)).norm() < 1e-12);
        assert!((h[(0, 1)] - entry(diag)).norm() < 1e-12);
        assert!((h[(1, 0)] - entry(diag)).norm() < 1e-12);
    }

    #[test]
    fn nearfield_rejects_coincident_elements() {
        let g = upa(2, 2);
        assert!(matches!(
            gen_nearfield_si(&g, &g, 0.0, 0.01, NearFieldNorm::Frobenius),
            Err(Error::CoincidentElements { .. })
        ));
    }

    fn random_taps(rng: &mut impl Rng, nr: usize, nt: usize, d: usize) -> TapChannel {
        TapChannel {
            taps: (0..d)
                .map(|_| CMat::from_fn(nr, nt, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)))
                .collect(),
            sample_interval_s: 1e-9,
        }
    }

    #[test]
    fn rician_kappa_zero_is_far_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let far = random_taps(&mut rng, 3, 2, 3);
        let near = random_taps(&mut rng, 3, 2, 1).taps.remove(0);
        let out = combine_rician(&near, &far, 0.0).unwrap();
        assert_eq!(out.taps, far.taps);
    }

    #[test]
    fn rician_large_kappa_is_near_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut far = random_taps(&mut rng, 3, 2, 2);
        for t in far.taps.iter_mut() {
            t.fill(ZERO);
        }
        let near = random_taps(&mut rng, 3, 2, 1).taps.remove(0);
        let out = combine_rician(&near, &far, 1e12).unwrap();
        assert!(fro_sq(&(&out.taps[0] - &near)) / fro_sq(&near) < 1e-12);
        assert!(fro_sq(&out.taps[1]) == 0.0);
    }

    #[test]
    fn rician_kappa_one_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let far = random_taps(&mut rng, 2, 2, 3);
        let near = random_taps(&mut rng, 2, 2, 1).taps.remove(0);
        let out = combine_rician(&near, &far, 1.0).unwrap();
        let s = 1.0 / 2f64.sqrt();
        for d in 0..3 {
            for r in 0..2 {
                for c in 0..2 {
                    let mut expect = far.taps[d][(r, c)] * s;
                    if d == 0 {
                        expect += near[(r, c)] * s;
                    }
                    assert!((out.taps[d][(r, c)] - expect).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn rician_rejects_negative_kappa_and_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let far = random_taps(&mut rng, 2, 2, 1);
        let near = random_taps(&mut rng, 2, 2, 1).taps.remove(0);
        assert!(combine_rician(&near, &far, -0.1).is_err());
        let wrong = CMat::zeros(3, 2);
        assert!(matches!(combine_rician(&wrong, &far, 1.0), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn single_tap_has_flat_magnitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let taps = random_taps(&mut rng, 2, 3, 1);
        let f = taps_to_subcarriers(&taps, 16).unwrap();
        for u in 1..16 {
            for (a, b) in f.per_subcarrier[u].iter().zip(f.per_subcarrier[0].iter()) {
                assert!((a.norm() - b.norm()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_taps_give_zero_subcarriers() {
        let taps = TapChannel {
            taps: vec![CMat::zeros(2, 2); 3],
            sample_interval_s: 1e-9,
        };
        let f = taps_to_subcarriers(&taps, 8).unwrap();
        assert!(f.per_subcarrier.iter().all(|m| fro_sq(m) == 0.0));
    }

    #[test]
    fn dft_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let taps = random_taps(&mut rng, 3, 2, 3);
        let f = taps_to_subcarriers(&taps, 8).unwrap();
        for u in 1..=8 {
            for r in 0..3 {
                for c in 0..2 {
                    let mut acc = ZERO;
                    for d in 1..=3 {
                        let ang = -2.0 * PI * (u * d) as f64 / 8.0;
                        acc += taps.taps[d - 1][(r, c)] * Complex64::new(ang.cos(), ang.sin());
                    }
                    assert!((f.per_subcarrier[u - 1][(r, c)] - acc).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn dft_rejects_bad_sizes() {
        let taps = TapChannel {
            taps: vec![CMat::zeros(1, 1); 4],
            sample_interval_s: 1e-9,
        };
        assert!(taps_to_subcarriers(&taps, 0).is_err());
        assert!(taps_to_subcarriers(&taps, 3).is_err());
    }

    #[test]
    fn path_list_parses_with_comments() {
        let text = "# ray tracer export\n\
                    gain_re,gain_im,delay_s,aoa_el_rad,aoa_az_rad,aod_el_rad,aod_az_rad\n\
                    # los\n\
                    1.0, 0.5, 0.0, 0.1, 0.2, 0.3, 0.4\n\
                    -0.25,0,3e-9,1,2,3,4\n";
        let paths = parse_path_list(text.as_bytes(), FsPath::new("mem")).unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[0].gain, Complex64::new(1.0, 0.5));
        assert_eq!(paths[1].delay_s, 3e-9);
        assert_eq!(paths[1].aod_az, 4.0);
        let mut buf = Vec::new();
        write_path_list(&mut buf, &paths).unwrap();
        let again = parse_path_list(buf.as_slice(), FsPath::new("mem")).unwrap();
        assert_eq!(again, paths);
    }

    #[test]
    fn path_list_reports_bad_rows() {
        let text = "gain_re,gain_im,delay_s,aoa_el_rad,aoa_az_rad,aod_el_rad,aod_az_rad\n1,0,0,0,0,0\n";
        let err = parse_path_list(text.as_bytes(), FsPath::new("paths.csv")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let neg = "gain_re,gain_im,delay_s,aoa_el_rad,aoa_az_rad,aod_el_rad,aod_az_rad\n1,0,-1,0,0,0,0\n";
        assert!(parse_path_list(neg.as_bytes(), FsPath::new("p")).is_err());
    }
}
