//! Finite-resolution analog beam codebooks.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::channel::{upa_array_response, ArrayGeometry};
use crate::error::{invalid, mismatch, Result};
use crate::linalg::{cis, hstack, kron_vec, CMat, CVec};

/// Ordered set of unit-norm analog beams with stable integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    beams: Vec<CVec>,
    ids: Vec<u32>,
}

impl Codebook {
    pub fn new(beams: Vec<CVec>, ids: Vec<u32>) -> Result<Self> {
        if beams.len() != ids.len() {
            return Err(mismatch("beam and id lists differ in length"));
        }
        if let Some(b) = beams.first() {
            if beams.iter().any(|x| x.len() != b.len()) {
                return Err(mismatch("beams differ in length"));
            }
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != ids.len() {
            return Err(invalid("beam_ids", "ids must be unique"));
        }
        for b in &beams {
            let n: f64 = b.iter().map(|z| z.norm_sqr()).sum();
            if (n - 1.0).abs() > 1e-9 {
                return Err(invalid("beams", format!("beam norm^2 {n} is not 1")));
            }
        }
        Ok(Codebook { beams, ids })
    }

    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.beams.first().map_or(0, |b| b.len())
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn beams(&self) -> &[CVec] {
        &self.beams
    }

    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }

    pub fn beam_by_id(&self, id: u32) -> Option<&CVec> {
        self.index_of(id).map(|i| &self.beams[i])
    }

    /// All beams as the columns of an `N x C` matrix.
    pub fn matrix(&self) -> CMat {
        hstack(&self.beams.iter().collect::<Vec<_>>())
    }

    /// Analog beamformer whose columns are the beams with the given ids.
    pub fn columns_for(&self, ids: &[u32]) -> Result<CMat> {
        let lookup: HashMap<u32, usize> = self.ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let cols = ids
            .iter()
            .map(|id| {
                lookup
                    .get(id)
                    .map(|&i| &self.beams[i])
                    .ok_or_else(|| invalid("beam_ids", format!("beam {id} not in codebook")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(hstack(&cols))
    }

    /// Sub-codebook keeping the parent labels.
    pub fn subset(&self, ids: &[u32]) -> Result<Codebook> {
        let mut beams = Vec::with_capacity(ids.len());
        for &id in ids {
            let b = self
                .beam_by_id(id)
                .ok_or_else(|| invalid("beam_ids", format!("beam {id} not in codebook")))?;
            beams.push(b.clone());
        }
        Ok(Codebook {
            beams,
            ids: ids.to_vec(),
        })
    }

    /// SHA-256 over the labels and the little-endian beam coefficients.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (id, b) in self.ids.iter().zip(&self.beams) {
            h.update(id.to_le_bytes());
            for z in b.iter() {
                h.update(z.re.to_le_bytes());
                h.update(z.im.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn dft_set(n: usize) -> Vec<CVec> {
    let scale = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|k| CVec::from_fn(n, |i, _| cis(-2.0 * PI * (i * k) as f64 / n as f64) * scale))
        .collect()
}

/// DFT codebook for a planar array: Kronecker products of the per-axis DFT
/// columns. Beam `(k_h, k_v)` gets id `k_h * n_vertical + k_v + 1`.
pub fn gen_dft_codebook(geometry: &ArrayGeometry) -> Codebook {
    let hs = dft_set(geometry.n_horizontal);
    let vs = dft_set(geometry.n_vertical);
    let mut beams = Vec::with_capacity(geometry.num_elements());
    for bh in &hs {
        for bv in &vs {
            beams.push(kron_vec(bh, bv));
        }
    }
    let ids = (1..=beams.len() as u32).collect();
    Codebook { beams, ids }
}

/// Linear power gain of one beam over an angular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayFactorCurve {
    pub grid: Vec<(f64, f64)>,
    pub gain: Vec<f64>,
}

/// Azimuth cut at a fixed elevation, sampled every `step_deg` over a full turn.
pub fn azimuth_cut(elevation: f64, step_deg: f64) -> Vec<(f64, f64)> {
    let n = (360.0 / step_deg).round() as usize;
    (0..n)
        .map(|k| (elevation, (-180.0 + k as f64 * step_deg).to_radians()))
        .collect()
}

/// `gain = N |a(el, az)^H beam|^2`, so a matched beam peaks at `N`.
pub fn array_factor(beam: &CVec, geometry: &ArrayGeometry, grid: &[(f64, f64)]) -> Result<ArrayFactorCurve> {
    let n = geometry.num_elements();
    if beam.len() != n {
        return Err(mismatch(format!("beam length {} vs {} elements", beam.len(), n)));
    }
    let gain = grid
        .iter()
        .map(|&(el, az)| {
            let a = upa_array_response(geometry, el, az);
            let ip: Complex64 = a.iter().zip(beam.iter()).map(|(x, y)| x.conj() * y).sum();
            ip.norm_sqr() * n as f64
        })
        .collect();
    Ok(ArrayFactorCurve {
        grid: grid.to_vec(),
        gain,
    })
}

/// Writes `beam_id,elevation_rad,azimuth_rad,gain_linear` rows for every beam.
pub fn write_array_factor_csv<W: Write>(
    writer: W,
    codebook: &Codebook,
    geometry: &ArrayGeometry,
    grid: &[(f64, f64)],
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["beam_id", "elevation_rad", "azimuth_rad", "gain_linear"])?;
    for (id, beam) in codebook.ids().iter().zip(codebook.beams()) {
        let curve = array_factor(beam, geometry, grid)?;
        for (&(el, az), g) in curve.grid.iter().zip(&curve.gain) {
            wtr.write_record([id.to_string(), el.to_string(), az.to_string(), g.to_string()])?;
        }
    }
    wtr.flush()?;
    Ok(())
}
