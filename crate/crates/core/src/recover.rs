//! Support recovery and reconstruction of the spreading function.
//!
//! All methods start from the correlation matrix
//! `Z = sum_{i,j} z(t_i, f_j) z^H(t_i, f_j) w = A_Gamma S_Gamma A_Gamma^H`.
//! Its factor `Q` (with `Z = Q Q^H`) turns blind support recovery into a
//! finite multiple-measurement-vector problem `Q = A_Gamma G`, solved either
//! exhaustively ([`mmv_exhaustive`]) or greedily ([`somp`]). [`music_support`]
//! instead reads the support off the columns of `A_c` that are orthogonal to
//! the noise subspace of `Z`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{IdentError, Result};
use crate::gabor::{stability_bounds, submatrix, MeasurementMatrix};
use crate::linalg::{column_space_basis, hermitian_eigen, hermitian_part, projection_residual, CMatrix};
use crate::model::{hs_norm, SpreadingFunction, SupportSet};
use crate::simulate::ZakField;
use crate::subsets::{check_budget, par_min_over_subsets};
use crate::{EPS_FIT, EPS_MUSIC, EPS_RANK, EPS_SPARK, SUBSET_BUDGET};

/// Decision thresholds used by the recovery algorithms.
///
/// The defaults suit noiseless data; noisy experiments need a larger `rank`
/// (and usually `fit`) chosen by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Relative eigenvalue threshold for the rank of `Z`.
    pub rank: f64,
    /// Normalized noise-subspace score below which a column is in-support.
    pub music: f64,
    /// Relative projection residual accepted as a fit.
    pub fit: f64,
    /// Relative spreading-function error accepted as a correct reconstruction.
    pub reconstruction: f64,
    /// Largest number of subsets one exhaustive search level may visit.
    pub budget: u128,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            rank: EPS_RANK,
            music: EPS_MUSIC,
            fit: EPS_FIT,
            reconstruction: 1e-9,
            budget: SUBSET_BUDGET,
        }
    }
}

/// `Z` with its eigendecomposition.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    pub matrix: CMatrix,
    pub rank_estimate: usize,
    /// Eigenvalues, descending.
    pub eig_values: Vec<f64>,
    /// Eigenvectors as columns, aligned with `eig_values`.
    pub eig_vectors: CMatrix,
}

impl CorrelationMatrix {
    /// Eigenvectors spanning the signal subspace `U_z`.
    pub fn signal_subspace(&self) -> CMatrix {
        self.eig_vectors.columns(0, self.rank_estimate).into_owned()
    }

    /// Eigenvectors spanning the noise subspace `U_n`.
    pub fn noise_subspace(&self) -> CMatrix {
        let n = self.eig_vectors.ncols();
        self.eig_vectors
            .columns(self.rank_estimate, n - self.rank_estimate)
            .into_owned()
    }
}

pub fn correlation(zf: &ZakField) -> CorrelationMatrix {
    correlation_with(zf, EPS_RANK)
}

/// [`correlation`] with an explicit relative eigenvalue threshold.
pub fn correlation_with(zf: &ZakField, rank_threshold: f64) -> CorrelationMatrix {
    let z = zf.values();
    let raw = (z * z.adjoint()) * Complex64::new(zf.params().weight(), 0.0);
    let matrix = hermitian_part(&raw);
    let (eig_values, eig_vectors) = hermitian_eigen(&matrix);
    let max = eig_values.first().copied().unwrap_or(0.0);
    let rank_estimate = if max > 0.0 {
        eig_values.iter().filter(|&&v| v > rank_threshold * max).count()
    } else {
        0
    };
    CorrelationMatrix {
        matrix,
        rank_estimate,
        eig_values,
        eig_vectors,
    }
}

/// `Q = U_z Lambda_z^{1/2}` over the leading `rank_estimate` eigenpairs.
pub fn factor_q(c: &CorrelationMatrix) -> CMatrix {
    let r = c.rank_estimate;
    let mut q = c.eig_vectors.columns(0, r).into_owned();
    for (n, mut col) in q.column_iter_mut().enumerate() {
        col *= Complex64::new(c.eig_values[n].max(0.0).sqrt(), 0.0);
    }
    q
}

fn relative_fit(m: &MeasurementMatrix, cols: &[usize], q: &CMatrix, q_norm: f64) -> f64 {
    let sub = m.matrix().select_columns(cols.iter());
    let basis = column_space_basis(&sub, EPS_SPARK);
    projection_residual(&basis, q) / q_norm
}

pub fn mmv_exhaustive(q: &CMatrix, m: &MeasurementMatrix, kmax: usize) -> Result<SupportSet> {
    mmv_exhaustive_with(q, m, kmax, &Thresholds::default())
}

/// Smallest support whose columns span `Q` up to relative residual `fit`.
///
/// Sizes are tried in increasing order; within a size the candidate with the
/// smallest residual wins, then the lexicographically smallest index set.
pub fn mmv_exhaustive_with(q: &CMatrix, m: &MeasurementMatrix, kmax: usize, th: &Thresholds) -> Result<SupportSet> {
    let l = m.params().l();
    if q.nrows() != l {
        return Err(IdentError::Structure(format!("Q has {} rows, expected {l}", q.nrows())));
    }
    if kmax > l {
        return Err(IdentError::Precondition(format!("kmax={kmax} exceeds L={l}")));
    }
    let q_norm = q.norm();
    if q_norm == 0.0 {
        return Ok(SupportSet::empty(l));
    }
    for k in 1..=kmax {
        check_budget(l * l, k, th.budget)?;
    }
    let mut best_residual = 1.0;
    for k in 1..=kmax {
        let best = par_min_over_subsets(
            l * l,
            k,
            |cols| Some((relative_fit(m, cols, q, q_norm), cols.to_vec())),
            |a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)),
        );
        if let Some((res, cols)) = best {
            if res <= th.fit {
                return SupportSet::from_indices(l, &cols);
            }
            best_residual = f64::min(best_residual, res);
        }
    }
    Err(IdentError::Infeasible { kmax, best_residual })
}

pub fn somp(q: &CMatrix, m: &MeasurementMatrix, kmax: usize) -> Result<SupportSet> {
    somp_with(q, m, kmax, &Thresholds::default())
}

/// Simultaneous orthogonal matching pursuit on `Q = A_c G`.
///
/// Greedy and without exactness guarantee. When the selected columns leave a
/// relative residual above `th.fit`, the result is reported as
/// [`IdentError::Infeasible`] rather than returned as a support.
pub fn somp_with(q: &CMatrix, m: &MeasurementMatrix, kmax: usize, th: &Thresholds) -> Result<SupportSet> {
    let l = m.params().l();
    if q.nrows() != l {
        return Err(IdentError::Structure(format!("Q has {} rows, expected {l}", q.nrows())));
    }
    let a = m.matrix();
    let q_norm = q.norm();
    let mut selected: Vec<usize> = Vec::new();
    if q_norm == 0.0 {
        return Ok(SupportSet::empty(l));
    }
    let col_norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let mut residual = q.clone();
    while selected.len() < kmax.min(l * l) && residual.norm() > th.fit * q_norm {
        let mut best: Option<(f64, usize)> = None;
        for j in (0..l * l).filter(|j| !selected.contains(j)) {
            let score = (a.column(j).adjoint() * &residual).norm() / col_norms[j];
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, j));
            }
        }
        let Some((_, j)) = best else { break };
        selected.push(j);
        let basis = column_space_basis(&a.select_columns(selected.iter()), EPS_SPARK);
        residual = q - &basis * (basis.adjoint() * q);
    }
    let rel = residual.norm() / q_norm;
    if rel > th.fit {
        return Err(IdentError::Infeasible {
            kmax,
            best_residual: rel,
        });
    }
    selected.sort_unstable();
    SupportSet::from_indices(l, &selected)
}

/// `||U_n^H a_{k,m}|| / ||a_{k,m}||` for every column of `A_c`, in stacked order.
pub fn music_scores(c: &CorrelationMatrix, m: &MeasurementMatrix) -> Result<Vec<f64>> {
    let l = m.params().l();
    if c.matrix.nrows() != l {
        return Err(IdentError::Structure("correlation matrix and A_c disagree on L".into()));
    }
    if c.rank_estimate >= l {
        return Err(IdentError::NoNoiseSubspace(c.rank_estimate));
    }
    let un = c.noise_subspace();
    let proj = un.adjoint() * m.matrix();
    Ok((0..l * l)
        .map(|j| proj.column(j).norm() / m.matrix().column(j).norm())
        .collect())
}

pub fn music_support(c: &CorrelationMatrix, m: &MeasurementMatrix) -> Result<SupportSet> {
    music_support_with(c, m, &Thresholds::default())
}

/// Columns of `A_c` annihilated by `U_n^H`, decided by thresholding the
/// normalized scores at `th.music`.
pub fn music_support_with(c: &CorrelationMatrix, m: &MeasurementMatrix, th: &Thresholds) -> Result<SupportSet> {
    let scores = music_scores(c, m)?;
    let hits: Vec<usize> = (0..scores.len()).filter(|&j| scores[j] <= th.music).collect();
    SupportSet::from_indices(m.params().l(), &hits)
}

/// Reconstructed spreading function and the relative fit residual.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub sf: SpreadingFunction,
    /// `||z - A_Gamma s_Gamma|| / ||z||` (zero for a zero field).
    pub residual: f64,
}

/// Least-squares solution of `z = A_Gamma s_Gamma` at every grid point.
pub fn reconstruct(zf: &ZakField, support: &SupportSet, m: &MeasurementMatrix) -> Result<Reconstruction> {
    let p = *zf.params();
    if &p != m.params() {
        return Err(IdentError::Structure(
            "Zak field and measurement matrix use different parameters".into(),
        ));
    }
    let l = p.l();
    if support.len() > l {
        return Err(IdentError::RankDeficient(format!(
            "{} unknowns per grid point but only {l} equations",
            support.len()
        )));
    }
    let z = zf.values();
    let z_norm = z.norm();
    if support.is_empty() {
        return Ok(Reconstruction {
            sf: SpreadingFunction::zero(p, support.clone())?,
            residual: if z_norm > 0.0 { 1.0 } else { 0.0 },
        });
    }
    let a = submatrix(m, support)?;
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= EPS_SPARK * smax {
        return Err(IdentError::RankDeficient(format!(
            "A_Gamma for {:?} has condition {:.3e}",
            support.pairs(),
            smax / smin
        )));
    }
    let s_hat = svd
        .solve(z, EPS_SPARK * smax)
        .map_err(|e| IdentError::RankDeficient(e.to_string()))?;
    let residual = if z_norm > 0.0 {
        (z - &a * &s_hat).norm() / z_norm
    } else {
        0.0
    };
    let cells = support
        .iter()
        .enumerate()
        .map(|(row, cell)| {
            DMatrix::from_fn(p.nt(), p.nf(), |i, j| {
                s_hat[(row, p.grid_index(i, j))] * p.cell_phase(cell.m, i, j).conj()
            })
        })
        .collect();
    Ok(Reconstruction {
        sf: SpreadingFunction::new(p, support.clone(), cells)?,
        residual,
    })
}

/// Best Hermitian `S` with `Z ~ A_Gamma S A_Gamma^H` and the relative misfit.
pub fn fit_correlation(c: &CorrelationMatrix, m: &MeasurementMatrix, support: &SupportSet) -> Result<(CMatrix, f64)> {
    let a = submatrix(m, support)?;
    let pinv = a
        .clone()
        .pseudo_inverse(EPS_SPARK * a.norm())
        .map_err(|e| IdentError::RankDeficient(e.to_string()))?;
    let s = &pinv * &c.matrix * pinv.adjoint();
    let z_norm = c.matrix.norm();
    let misfit = (&c.matrix - &a * &s * a.adjoint()).norm();
    Ok((s, if z_norm > 0.0 { misfit / z_norm } else { misfit }))
}

/// Support recovery strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "MMV_EXHAUSTIVE")]
    MmvExhaustive,
    #[serde(rename = "SOMP")]
    Somp,
    #[serde(rename = "MUSIC")]
    Music,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::MmvExhaustive => "MMV_EXHAUSTIVE",
            Method::Somp => "SOMP",
            Method::Music => "MUSIC",
        })
    }
}

impl FromStr for Method {
    type Err = IdentError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mmv" | "mmv_exhaustive" | "mmv-exhaustive" => Ok(Method::MmvExhaustive),
            "somp" => Ok(Method::Somp),
            "music" => Ok(Method::Music),
            other => Err(IdentError::Format(format!("unknown recovery method {other:?}"))),
        }
    }
}

/// Result of identifying an operator from one measurement.
#[derive(Debug, Clone, Serialize)]
pub struct RecoveryReport {
    #[serde(rename = "support", serialize_with = "crate::io::serialize_support")]
    pub support_estimate: SupportSet,
    #[serde(skip)]
    pub reconstruction: SpreadingFunction,
    pub residual: f64,
    /// Stability constants of the recovered support; NaN for an empty support.
    pub alpha: f64,
    pub beta: f64,
    pub method: Method,
    /// Filled in when a ground truth is supplied.
    pub support_exact: Option<bool>,
    pub reconstruction_ok: Option<bool>,
    pub reconstruction_rel_err: Option<f64>,
    pub elapsed_ms: f64,
}

/// Support recovery with `method`, reconstruction on the recovered support,
/// and comparison against `truth` when given.
///
/// `kmax` bounds the support size for the MMV searches and is ignored by
/// MUSIC.
pub fn identify(
    zf: &ZakField,
    m: &MeasurementMatrix,
    method: Method,
    kmax: usize,
    th: &Thresholds,
    truth: Option<&SpreadingFunction>,
) -> Result<RecoveryReport> {
    let start = Instant::now();
    let corr = correlation_with(zf, th.rank);
    let support = match method {
        Method::MmvExhaustive => mmv_exhaustive_with(&factor_q(&corr), m, kmax, th)?,
        Method::Somp => somp_with(&factor_q(&corr), m, kmax, th)?,
        Method::Music => music_support_with(&corr, m, th)?,
    };
    let rec = reconstruct(zf, &support, m)?;
    let bounds = if support.is_empty() {
        None
    } else {
        Some(stability_bounds(m, &support)?)
    };
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    let (support_exact, reconstruction_rel_err) = match truth {
        Some(t) => {
            let err = hs_norm(&rec.sf.difference(t)?);
            let norm = hs_norm(t);
            let rel = if norm > 0.0 { err / norm } else { err };
            (Some(support == *t.support()), Some(rel))
        }
        None => (None, None),
    };
    Ok(RecoveryReport {
        support_estimate: support,
        reconstruction: rec.sf,
        residual: rec.residual,
        alpha: bounds.map_or(f64::NAN, |b| b.alpha),
        beta: bounds.map_or(f64::NAN, |b| b.beta),
        method,
        support_exact,
        reconstruction_ok: reconstruction_rel_err.map(|e| e <= th.reconstruction),
        reconstruction_rel_err,
        elapsed_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gabor::draw_coefficients;
    use crate::model::{random_spreading, ModelParams};
    use crate::rng::substream;
    use crate::simulate::simulate_response;

    fn matrix(l: usize, seed: u64) -> MeasurementMatrix {
        let p = ModelParams::new(l, 1.0, 4, 4).unwrap();
        draw_coefficients(&p, &mut substream(seed, u64::MAX), 10).unwrap()
    }

    fn instance(m: &MeasurementMatrix, cols: &[usize], seed: u64) -> (SpreadingFunction, ZakField) {
        let l = m.params().l();
        let s = SupportSet::from_indices(l, cols).unwrap();
        let sf = random_spreading(m.params(), &s, &mut substream(seed, 0)).unwrap().sf;
        let z = simulate_response(&sf, m).unwrap();
        (sf, z)
    }

    #[test]
    fn zero_field_correlation() {
        let m = matrix(4, 1);
        let c = correlation(&ZakField::zeros(*m.params()));
        assert_eq!(c.rank_estimate, 0);
        assert_eq!(c.matrix.norm(), 0.0);
        assert_eq!(factor_q(&c).ncols(), 0);
        let q = factor_q(&c);
        assert!(mmv_exhaustive(&q, &m, 2).unwrap().is_empty());
        assert!(somp(&q, &m, 2).unwrap().is_empty());
        assert!(music_support(&c, &m).unwrap().is_empty());
    }

    #[test]
    fn single_cell_rank_one() {
        let m = matrix(4, 2);
        let (sf, z) = instance(&m, &[9], 3);
        let c = correlation(&z);
        assert_eq!(c.rank_estimate, 1);
        let q = factor_q(&c);
        assert_eq!(mmv_exhaustive(&q, &m, 2).unwrap(), *sf.support());
        assert_eq!(somp(&q, &m, 2).unwrap(), *sf.support());
        assert_eq!(music_support(&c, &m).unwrap(), *sf.support());
    }

    #[test]
    fn somp_reports_unexplained_residual() {
        let m = matrix(4, 2);
        let (_, z) = instance(&m, &[1, 6, 13], 5);
        let q = factor_q(&correlation(&z));
        assert!(matches!(somp(&q, &m, 1), Err(IdentError::Infeasible { kmax: 1, .. })));
    }

    #[test]
    fn correlation_is_hermitian_psd_and_factors() {
        let m = matrix(5, 3);
        let (_, z) = instance(&m, &[2, 11, 17], 4);
        let c = correlation(&z);
        assert_eq!(c.rank_estimate, 3);
        let zn = c.matrix.norm();
        assert!((&c.matrix - c.matrix.adjoint()).norm() <= 1e-12 * zn);
        assert!(c.eig_values.iter().all(|&v| v >= -1e-12 * c.eig_values[0]));
        let q = factor_q(&c);
        assert!((&q * q.adjoint() - &c.matrix).norm() <= 1e-10 * zn);
        let g = q.adjoint() * &q;
        for r in 0..g.nrows() {
            for s in 0..g.ncols() {
                if r != s {
                    assert!(g[(r, s)].norm() <= 1e-12 * zn);
                }
            }
        }
    }

    #[test]
    fn mmv_rejects_large_kmax_and_reports_infeasible() {
        let m = matrix(4, 4);
        let (_, z) = instance(&m, &[1, 6, 11], 5);
        let q = factor_q(&correlation(&z));
        assert!(matches!(mmv_exhaustive(&q, &m, 5), Err(IdentError::Precondition(_))));
        assert!(matches!(
            mmv_exhaustive(&q, &m, 1),
            Err(IdentError::Infeasible { kmax: 1, .. })
        ));
        let th = Thresholds {
            budget: 10,
            ..Thresholds::default()
        };
        assert!(matches!(
            mmv_exhaustive_with(&q, &m, 2, &th),
            Err(IdentError::Budget { .. })
        ));
    }

    #[test]
    fn music_needs_noise_subspace() {
        let m = matrix(4, 5);
        let (_, z) = instance(&m, &[0, 5, 10, 15], 6);
        let c = correlation(&z);
        assert_eq!(c.rank_estimate, 4);
        assert!(matches!(music_support(&c, &m), Err(IdentError::NoNoiseSubspace(4))));
    }

    #[test]
    fn reconstruct_round_trip_and_errors() {
        let m = matrix(6, 6);
        let (sf, z) = instance(&m, &[3, 14, 29], 7);
        let rec = reconstruct(&z, sf.support(), &m).unwrap();
        assert!(rec.residual <= 1e-10);
        assert!(hs_norm(&rec.sf.difference(&sf).unwrap()) <= 1e-9 * hs_norm(&sf));

        let zero = reconstruct(&ZakField::zeros(*m.params()), sf.support(), &m).unwrap();
        assert_eq!(hs_norm(&zero.sf), 0.0);

        let wrong = SupportSet::from_indices(6, &[0, 7, 20]).unwrap();
        assert!(reconstruct(&z, &wrong, &m).unwrap().residual > 1e-3);

        let too_big = SupportSet::from_indices(6, &[0, 1, 2, 3, 4, 5, 6]).unwrap();
        assert!(matches!(
            reconstruct(&z, &too_big, &m),
            Err(IdentError::RankDeficient(_))
        ));
    }

    #[test]
    fn fit_correlation_on_true_support() {
        let m = matrix(6, 7);
        let (sf, z) = instance(&m, &[4, 13, 33], 8);
        let c = correlation(&z);
        let found = mmv_exhaustive(&factor_q(&c), &m, 3).unwrap();
        assert_eq!(found, *sf.support());
        let (_, misfit) = fit_correlation(&c, &m, &found).unwrap();
        assert!(misfit <= 1e-9);
    }

    #[test]
    fn identify_reports_truth_flags() {
        let m = matrix(6, 8);
        let (sf, z) = instance(&m, &[1, 8, 30], 9);
        let r = identify(&z, &m, Method::Music, 3, &Thresholds::default(), Some(&sf)).unwrap();
        assert_eq!(r.support_exact, Some(true));
        assert_eq!(r.reconstruction_ok, Some(true));
        let b = stability_bounds(&m, &r.support_estimate).unwrap();
        assert_eq!((r.alpha, r.beta), (b.alpha, b.beta));
    }

    #[test]
    fn method_parsing() {
        assert_eq!("MMV_EXHAUSTIVE".parse::<Method>().unwrap(), Method::MmvExhaustive);
        assert_eq!("music".parse::<Method>().unwrap(), Method::Music);
        assert!("lasso".parse::<Method>().is_err());
    }
}
