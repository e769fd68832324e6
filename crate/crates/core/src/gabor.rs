//! The measurement matrix `A_c` induced by the weighted Dirac-train probe.
//!
//! `A_c = [A_{c,0} | ... | A_{c,L-1}]` with `A_{c,k} = (1/TL) C_{c,k} F^H`,
//! where `C_{c,k} = diag(c_k, c_{k-1}, ..., c_{k+1})` and the DFT matrix is
//! `[F]_{p,m} = exp(-j 2 pi p m / L)`. Column `kL + m` therefore has entries
//! `(1/TL) c_{(k-p) mod L} exp(+j 2 pi p m / L)`, `p = 0..L`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::{IdentError, Result};
use crate::linalg::{extreme_singular_values, sigma_min_lower_bound, CMatrix};
use crate::model::{ModelParams, SupportSet};
use crate::rng::{complex_gaussian, substream};
use crate::subsets::{binomial, check_budget, par_min_over_subsets, random_subset};
use crate::{EPS_SPARK, SUBSET_BUDGET};

/// One period `c_0..c_{L-1}` of the probe weights, indexed cyclically.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector(Vec<Complex64>);

impl CoefficientVector {
    pub fn new(c: Vec<Complex64>) -> Result<Self> {
        if c.is_empty() {
            return Err(IdentError::InvalidParams("empty coefficient vector".into()));
        }
        if c.iter().any(|x| !(x.re.is_finite() && x.im.is_finite())) {
            return Err(IdentError::InvalidParams("non-finite probe coefficient".into()));
        }
        if c.iter().all(|x| x.norm() == 0.0) {
            return Err(IdentError::InvalidParams("all probe coefficients are zero".into()));
        }
        Ok(Self(c))
    }

    /// Builds from real weights.
    pub fn from_real(c: &[f64]) -> Result<Self> {
        Self::new(c.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    /// `c_{k mod L}` for any integer `k`.
    pub fn get(&self, k: i64) -> Complex64 {
        self.0[k.rem_euclid(self.0.len() as i64) as usize]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    /// Euclidean norm of one period.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, a: Complex64) -> Result<Self> {
        Self::new(self.0.iter().map(|x| x * a).collect())
    }
}

/// `A_c` together with the data it was built from.
#[derive(Debug, Clone)]
pub struct MeasurementMatrix {
    matrix: CMatrix,
    coeffs: CoefficientVector,
    params: ModelParams,
    sigma_max: f64,
    spark_certified: bool,
}

impl MeasurementMatrix {
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn coefficients(&self) -> &CoefficientVector {
        &self.coeffs
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Largest singular value of the full `L x L^2` matrix.
    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    pub fn is_spark_certified(&self) -> bool {
        self.spark_certified
    }

    /// Marks the matrix certified if `report` is a passing spark check of it.
    pub fn with_spark_report(mut self, report: &SparkReport) -> Self {
        self.spark_certified = report.ok;
        self
    }

    /// Column `a_{k,m}` as an owned vector.
    pub fn column(&self, index: usize) -> crate::linalg::CVector {
        self.matrix.column(index).into_owned()
    }
}

fn column_entry(c: &CoefficientVector, l: usize, tl: f64, k: usize, m: usize, p: usize) -> Complex64 {
    let phase = 2.0 * PI * ((p * m) % l) as f64 / l as f64;
    c.get(k as i64 - p as i64) * Complex64::from_polar(1.0 / tl, phase)
}

/// Assembles `A_c` column by column from the closed-form entries.
pub fn build_matrix(c: &CoefficientVector, params: &ModelParams) -> Result<MeasurementMatrix> {
    let l = params.l();
    if c.len() != l {
        return Err(IdentError::Structure(format!(
            "{} probe coefficients for L={l}",
            c.len()
        )));
    }
    let tl = params.tl();
    let matrix = CMatrix::from_fn(l, l * l, |p, col| column_entry(c, l, tl, col / l, col % l, p));
    let (_, sigma_max) = extreme_singular_values(&matrix);
    Ok(MeasurementMatrix {
        matrix,
        coeffs: c.clone(),
        params: *params,
        sigma_max,
        spark_certified: false,
    })
}

/// Builds `A_c` and certifies full spark, failing if the check does not pass.
pub fn build_certified_matrix(
    c: &CoefficientVector,
    params: &ModelParams,
    mode: SparkMode,
) -> Result<MeasurementMatrix> {
    let m = build_matrix(c, params)?;
    let report = spark_check(&m, mode)?;
    if !report.ok {
        return Err(IdentError::Precondition(format!(
            "coefficients fail the spark check; dependent columns {:?}",
            report.witness.map(|w| w.pairs()).unwrap_or_default()
        )));
    }
    Ok(m.with_spark_report(&report))
}

/// Columns of `A_c` belonging to `support`, in stacked order.
pub fn submatrix(m: &MeasurementMatrix, support: &SupportSet) -> Result<CMatrix> {
    if support.l() != m.params.l() {
        return Err(IdentError::Structure(format!(
            "support for L={} used with a matrix for L={}",
            support.l(),
            m.params.l()
        )));
    }
    Ok(m.matrix.select_columns(support.indices().iter()))
}

/// How [`spark_check`] covers the `L`-column submatrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SparkMode {
    /// Every `L`-subset; fails with a budget error if `C(L^2, L) > budget`.
    Exhaustive { budget: u128 },
    /// `trials` uniformly random `L`-subsets drawn from `seed`.
    Randomized { trials: usize, seed: u64 },
}

impl SparkMode {
    pub const RANDOMIZED_TRIALS: usize = 100_000;

    pub fn exhaustive() -> Self {
        SparkMode::Exhaustive { budget: SUBSET_BUDGET }
    }

    /// Exhaustive up to `L = 6`, randomized spot checks beyond.
    pub fn auto(l: usize, seed: u64) -> Self {
        if l <= 6 {
            Self::exhaustive()
        } else {
            SparkMode::Randomized {
                trials: Self::RANDOMIZED_TRIALS,
                seed,
            }
        }
    }
}

/// Outcome of a spark check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparkReport {
    pub ok: bool,
    /// Lexicographically smallest failing column set among those checked.
    #[serde(serialize_with = "crate::io::serialize_opt_support")]
    pub witness: Option<SupportSet>,
    pub checked: u128,
    pub exhaustive: bool,
}

/// Verifies that every checked `L`-column submatrix of `A_c` has
/// `sigma_min > EPS_SPARK * sigma_max(A_c)`.
pub fn spark_check(m: &MeasurementMatrix, mode: SparkMode) -> Result<SparkReport> {
    let l = m.params.l();
    let n = l * l;
    let threshold = EPS_SPARK * m.sigma_max;
    let fails = |cols: &[usize]| -> bool {
        let sub = m.matrix.select_columns(cols.iter());
        if sigma_min_lower_bound(&sub) > threshold {
            return false;
        }
        extreme_singular_values(&sub).0 <= threshold
    };
    let (witness, checked, exhaustive) = match mode {
        SparkMode::Exhaustive { budget } => {
            let checked = check_budget(n, l, budget)?;
            let w = par_min_over_subsets(n, l, |cols| fails(cols).then(|| cols.to_vec()), |a, b| a.cmp(b));
            (w, checked, true)
        }
        SparkMode::Randomized { trials, seed } => {
            let mut rng = substream(seed, 0);
            let w = (0..trials)
                .map(|_| random_subset(&mut rng, n, l))
                .filter(|cols| fails(cols))
                .min();
            (w, trials as u128, false)
        }
    };
    let witness = witness.map(|w| SupportSet::from_indices(l, &w)).transpose()?;
    Ok(SparkReport {
        ok: witness.is_none(),
        witness,
        checked,
        exhaustive,
    })
}

/// Draws i.i.d. standard complex Gaussian coefficient vectors until one
/// passes the spark check, and returns its certified matrix.
pub fn draw_coefficients<R: Rng + ?Sized>(
    params: &ModelParams,
    rng: &mut R,
    max_attempts: usize,
) -> Result<MeasurementMatrix> {
    if max_attempts == 0 {
        return Err(IdentError::InvalidParams("max_attempts must be at least 1".into()));
    }
    let l = params.l();
    for _ in 0..max_attempts {
        let c = CoefficientVector::new((0..l).map(|_| complex_gaussian(rng)).collect())?;
        let m = build_matrix(&c, params)?;
        let mode = SparkMode::auto(l, rng.random());
        let report = spark_check(&m, mode)?;
        if report.ok {
            return Ok(m.with_spark_report(&report));
        }
    }
    Err(IdentError::Generation(max_attempts))
}

/// Stability constants of the known-support problem on `Gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityBounds {
    /// `sqrt(TL) sigma_min(A_Gamma)`; zero when `|Gamma| > L`.
    pub alpha: f64,
    /// `sqrt(TL) sigma_max(A_Gamma)`.
    pub beta: f64,
}

impl StabilityBounds {
    /// `beta / alpha`, infinite when `alpha = 0`.
    pub fn ratio(&self) -> f64 {
        if self.alpha > 0.0 {
            self.beta / self.alpha
        } else {
            f64::INFINITY
        }
    }
}

pub fn stability_bounds(m: &MeasurementMatrix, support: &SupportSet) -> Result<StabilityBounds> {
    if support.is_empty() {
        return Err(IdentError::Precondition("stability bounds of an empty support".into()));
    }
    let sub = submatrix(m, support)?;
    Ok(bounds_of_submatrix(&sub, m.params.tl()))
}

pub(crate) fn bounds_of_submatrix(sub: &CMatrix, tl: f64) -> StabilityBounds {
    let scale = tl.sqrt();
    if sub.ncols() == 1 {
        let n = sub.norm() * scale;
        return StabilityBounds { alpha: n, beta: n };
    }
    let (min, max) = extreme_singular_values(sub);
    StabilityBounds {
        alpha: scale * min,
        beta: scale * max,
    }
}

/// Number of `L`-subsets an exhaustive spark check visits.
pub fn spark_subset_count(l: usize) -> u128 {
    binomial(l * l, l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::singular_values;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn params(l: usize, t: f64) -> ModelParams {
        ModelParams::new(l, t, 2, 2).unwrap()
    }

    fn assert_close(a: &CMatrix, b: &CMatrix, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        assert!((a - b).norm() <= tol, "{a} vs {b}");
    }

    #[test]
    fn l2_all_ones_blocks() {
        let m = build_matrix(&CoefficientVector::from_real(&[1.0, 1.0]).unwrap(), &params(2, 0.5)).unwrap();
        let block = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)]);
        assert_close(&m.matrix().columns(0, 2).into_owned(), &block, 1e-15);
        assert_close(&m.matrix().columns(2, 2).into_owned(), &block, 1e-15);
    }

    #[test]
    fn l2_one_two_columns() {
        let m = build_matrix(&CoefficientVector::from_real(&[1.0, 2.0]).unwrap(), &params(2, 0.5)).unwrap();
        let expect = CMatrix::from_row_slice(
            2,
            4,
            &[
                c(1.0, 0.0),
                c(1.0, 0.0),
                c(2.0, 0.0),
                c(2.0, 0.0),
                c(2.0, 0.0),
                c(-2.0, 0.0),
                c(1.0, 0.0),
                c(-1.0, 0.0),
            ],
        );
        assert_close(m.matrix(), &expect, 1e-15);
    }

    /// Block form `(1/TL) diag(c_k, c_{k-1}, ..., c_{k+1}) F^H` with an explicit DFT matrix.
    #[test]
    fn matches_block_definition() {
        let l = 5;
        let p = params(l, 0.3);
        let mut rng = substream(4, 0);
        let cv = CoefficientVector::new((0..l).map(|_| complex_gaussian(&mut rng)).collect()).unwrap();
        let m = build_matrix(&cv, &p).unwrap();
        let f = CMatrix::from_fn(l, l, |r, s| {
            Complex64::from_polar(1.0, -2.0 * PI * (r * s) as f64 / l as f64)
        });
        for k in 0..l {
            let diag = CMatrix::from_fn(l, l, |r, s| {
                if r == s {
                    cv.get(k as i64 - r as i64)
                } else {
                    c(0.0, 0.0)
                }
            });
            let block = diag * f.adjoint() / c(p.tl(), 0.0);
            assert_close(&m.matrix().columns(k * l, l).into_owned(), &block, 1e-14);
        }
    }

    #[test]
    fn column_norms_equal() {
        let l = 6;
        let p = params(l, 0.7);
        let mut rng = substream(9, 0);
        let cv = CoefficientVector::new((0..l).map(|_| complex_gaussian(&mut rng)).collect()).unwrap();
        let m = build_matrix(&cv, &p).unwrap();
        let expect = cv.norm() / p.tl();
        for j in 0..l * l {
            assert!((m.matrix().column(j).norm() - expect).abs() < 1e-13 * expect);
        }
        // Full rank L for any nonzero c.
        let s = singular_values(m.matrix());
        assert!(s[l - 1] > 1e-10 * s[0]);
    }

    #[test]
    fn submatrix_selection() {
        let p = params(3, 1.0);
        let m = build_matrix(&CoefficientVector::from_real(&[1.0, -0.5, 2.0]).unwrap(), &p).unwrap();
        assert_close(&submatrix(&m, &SupportSet::full(3)).unwrap(), m.matrix(), 0.0);
        let first = submatrix(&m, &SupportSet::from_pairs(3, &[(0, 0)]).unwrap()).unwrap();
        assert_close(&first, &m.matrix().columns(0, 1).into_owned(), 0.0);
        assert!(submatrix(&m, &SupportSet::full(2)).is_err());
    }

    #[test]
    fn spark_witness_for_duplicate_columns() {
        let m = build_matrix(&CoefficientVector::from_real(&[1.0, 1.0]).unwrap(), &params(2, 0.5)).unwrap();
        let r = spark_check(&m, SparkMode::exhaustive()).unwrap();
        assert!(!r.ok);
        assert_eq!(r.witness.unwrap().pairs(), vec![(0, 0), (1, 0)]);
        assert_eq!(r.checked, 6);
    }

    #[test]
    fn spark_ok_for_one_two() {
        let m = build_matrix(&CoefficientVector::from_real(&[1.0, 2.0]).unwrap(), &params(2, 0.5)).unwrap();
        let r = spark_check(&m, SparkMode::exhaustive()).unwrap();
        assert!(r.ok && r.witness.is_none());
    }

    #[test]
    fn spark_budget_error() {
        let m = build_matrix(
            &CoefficientVector::from_real(&[1.0, 2.0, 3.0, 4.0]).unwrap(),
            &params(4, 1.0),
        )
        .unwrap();
        let err = spark_check(&m, SparkMode::Exhaustive { budget: 100 });
        assert!(matches!(err, Err(IdentError::Budget { needed: 1820, .. })));
    }

    #[test]
    fn draw_is_deterministic_and_certified() {
        let p = params(4, 1.0);
        let a = draw_coefficients(&p, &mut substream(21, 0), 5).unwrap();
        let b = draw_coefficients(&p, &mut substream(21, 0), 5).unwrap();
        assert_eq!(a.coefficients(), b.coefficients());
        assert!(a.is_spark_certified());
        assert!(spark_check(&a, SparkMode::exhaustive()).unwrap().ok);
    }

    #[test]
    fn draw_l3_all_square_submatrices_invertible() {
        let p = params(3, 1.0);
        let m = draw_coefficients(&p, &mut substream(2, 0), 5).unwrap();
        let worst = par_min_over_subsets(
            9,
            3,
            |cols| Some(extreme_singular_values(&m.matrix().select_columns(cols.iter())).0),
            |a, b| a.total_cmp(b),
        )
        .unwrap();
        assert!(worst > 0.0);
    }

    #[test]
    fn randomized_mode_finds_duplicates() {
        let m = build_matrix(&CoefficientVector::from_real(&[1.0, 1.0]).unwrap(), &params(2, 0.5)).unwrap();
        let r = spark_check(&m, SparkMode::Randomized { trials: 200, seed: 1 }).unwrap();
        assert!(!r.ok);
        assert!(!r.exhaustive);
    }

    #[test]
    fn single_column_bounds() {
        let p = params(4, 0.25);
        let cv = CoefficientVector::from_real(&[1.0, -2.0, 0.5, 3.0]).unwrap();
        let m = build_matrix(&cv, &p).unwrap();
        let b = stability_bounds(&m, &SupportSet::from_pairs(4, &[(0, 0)]).unwrap()).unwrap();
        let expect = cv.norm() / p.tl().sqrt();
        assert!((b.alpha - expect).abs() < 1e-14 * expect);
        assert_eq!(b.alpha, b.beta);
        assert_eq!(b.ratio(), 1.0);
    }

    #[test]
    fn oversized_support_has_zero_alpha() {
        let p = params(3, 1.0);
        let m = build_matrix(&CoefficientVector::from_real(&[1.0, 2.0, 4.0]).unwrap(), &p).unwrap();
        let b = stability_bounds(&m, &SupportSet::from_indices(3, &[0, 1, 4, 8]).unwrap()).unwrap();
        assert_eq!(b.alpha, 0.0);
        assert!(b.beta > 0.0);
        assert!(stability_bounds(&m, &SupportSet::empty(3)).is_err());
    }
}
