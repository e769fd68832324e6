//! Forward model: the Zak-domain response `z(t, f)` of an operator to the probe.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{IdentError, Result};
use crate::gabor::{CoefficientVector, MeasurementMatrix};
use crate::linalg::CMatrix;
use crate::model::{vectorize, ModelParams, SpreadingFunction};
use crate::rng::complex_gaussian;

/// Sampled measurement `z(t, f)` on the fundamental cell.
///
/// `values` has `L` rows (entry `p` of `z`) and `Nt Nf` columns (grid points,
/// row-major in `(i, j)`); entry `(p, g(i, j))` is
/// `z_p(t_i, f_j) exp(-j 2 pi p T f_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZakField {
    params: ModelParams,
    values: CMatrix,
}

impl ZakField {
    pub fn new(params: ModelParams, values: CMatrix) -> Result<Self> {
        if values.shape() != (params.l(), params.grid_len()) {
            return Err(IdentError::Structure(format!(
                "Zak field of shape {:?}, expected ({}, {})",
                values.shape(),
                params.l(),
                params.grid_len()
            )));
        }
        Ok(Self { params, values })
    }

    pub fn zeros(params: ModelParams) -> Self {
        Self {
            values: CMatrix::zeros(params.l(), params.grid_len()),
            params,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn values(&self) -> &CMatrix {
        &self.values
    }

    /// Weighted energy `sum_{p,i,j} |z|^2 / (L Nt Nf)`.
    pub fn energy(&self) -> f64 {
        self.values.norm_squared() * self.params.weight()
    }

    /// Weighted norm; `sqrt(TL)` times this is the norm of the time-domain response.
    pub fn norm(&self) -> f64 {
        self.energy().sqrt()
    }

    /// Norm of the time-domain response `H x`, via unitarity of the Zak transform.
    pub fn response_norm(&self) -> f64 {
        self.params.tl().sqrt() * self.norm()
    }

    pub fn difference(&self, other: &ZakField) -> Result<ZakField> {
        if self.params != other.params {
            return Err(IdentError::Structure("Zak fields on different grids".into()));
        }
        Ok(ZakField {
            params: self.params,
            values: &self.values - &other.values,
        })
    }
}

/// `z(t_i, f_j) = A_c s(t_i, f_j)` at every grid point.
pub fn simulate_response(sf: &SpreadingFunction, m: &MeasurementMatrix) -> Result<ZakField> {
    if sf.params() != m.params() {
        return Err(IdentError::Structure(
            "spreading function and measurement matrix use different parameters".into(),
        ));
    }
    let s = vectorize(sf);
    Ok(ZakField {
        params: *sf.params(),
        values: m.matrix() * s.values(),
    })
}

/// Direct evaluation of the Zak-domain double sum
///
/// `z_p(t, f) = sum_{k,m} (c_{k-p} / TL) s_H(t + kT, f + m/TL) exp(j 2 pi (t + pT)(f + m/TL))`
///
/// followed by the `exp(-j 2 pi p T f)` demodulation, without assembling
/// `A_c` or the stacked vector. Serves as an independent check of both.
pub fn simulate_response_reference(
    sf: &SpreadingFunction,
    c: &CoefficientVector,
    params: &ModelParams,
) -> Result<ZakField> {
    if sf.params() != params {
        return Err(IdentError::Structure(
            "spreading function and probe use different parameters".into(),
        ));
    }
    let l = params.l();
    if c.len() != l {
        return Err(IdentError::Structure(format!(
            "{} probe coefficients for L={l}",
            c.len()
        )));
    }
    let tl = params.tl();
    let t_cell = params.t();
    let mut values = CMatrix::zeros(l, params.grid_len());
    for i in 0..params.nt() {
        let t = (i as f64 + 0.5) * t_cell / params.nt() as f64;
        for j in 0..params.nf() {
            let f = (j as f64 + 0.5) / (tl * params.nf() as f64);
            let g = i * params.nf() + j;
            for p in 0..l {
                let tp = t + p as f64 * t_cell;
                let mut acc = Complex64::new(0.0, 0.0);
                for (cell, samples) in sf.support().iter().zip(sf.cell_arrays()) {
                    let nu = f + cell.m as f64 / tl;
                    let weight = c.get(cell.k as i64 - p as i64) / tl;
                    acc += weight * samples[(i, j)] * Complex64::from_polar(1.0, 2.0 * PI * tp * nu);
                }
                values[(p, g)] = acc * Complex64::from_polar(1.0, -2.0 * PI * p as f64 * t_cell * f);
            }
        }
    }
    Ok(ZakField {
        params: *params,
        values,
    })
}

/// Adds circular complex white Gaussian noise at the requested SNR.
///
/// The noise variance is chosen so that the expected weighted noise energy is
/// the weighted signal energy divided by `10^(snr_db / 10)`. An infinite SNR
/// returns the field unchanged.
pub fn add_noise<R: Rng + ?Sized>(zf: &ZakField, snr_db: f64, rng: &mut R) -> Result<ZakField> {
    if snr_db == f64::INFINITY {
        return Ok(zf.clone());
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(IdentError::InvalidParams(format!("invalid SNR {snr_db} dB")));
    }
    let energy = zf.energy();
    if energy == 0.0 {
        return Err(IdentError::Precondition(
            "cannot set a finite SNR on a zero field".into(),
        ));
    }
    let entries = zf.values.len() as f64;
    // E[sum |n|^2] w = entries * sigma^2 * w must equal energy / snr.
    let sigma2 = energy / (10f64.powf(snr_db / 10.0) * entries * zf.params.weight());
    let sigma = sigma2.sqrt();
    let values = zf.values.map(|z| z + complex_gaussian(rng) * sigma);
    Ok(ZakField {
        params: zf.params,
        values,
    })
}
