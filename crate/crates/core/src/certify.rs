//! Desk-scale identifiability certificates.
//!
//! Operators with at most `kmax` active cells (area `Delta = kmax / L`) are
//! stably identifiable iff every difference of two of them, which lives on at
//! most `2 kmax` cells, has a positive lower stability constant. Because
//! adding columns can only lower `sigma_min`, it suffices to sweep supports of
//! size exactly `min(2 kmax, L)`; beyond `L` columns `A_Gamma` always has a
//! kernel and identifiability fails.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{IdentError, Result};
use crate::gabor::{bounds_of_submatrix, submatrix, MeasurementMatrix, StabilityBounds};
use crate::linalg::min_right_singular_vector;
use crate::model::{devectorize_with_tol, CellVectorField, SpreadingFunction, SupportSet};
use crate::rng::substream;
use crate::subsets::{binomial, par_reduce_over_subsets, random_subset};
use crate::{EPS_SPARK, SUBSET_BUDGET};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "STABLY_IDENTIFIABLE")]
    StablyIdentifiable,
    #[serde(rename = "NOT_IDENTIFIABLE")]
    NotIdentifiable,
}

/// Worst-case stability constants over all supports of a given size.
#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    #[serde(rename = "L")]
    pub l: usize,
    pub kmax: usize,
    /// Target area `kmax / L`, written as a fraction.
    pub delta: String,
    pub verdict: Verdict,
    /// Smallest `alpha_Gamma` over the swept supports.
    pub worst_alpha: f64,
    /// Largest `beta_Gamma` over the swept supports.
    pub worst_beta: f64,
    /// Support attaining `worst_alpha` (lexicographically first on ties).
    #[serde(serialize_with = "crate::io::serialize_support")]
    pub worst_support: SupportSet,
    pub support_size: usize,
    pub checked_count: u128,
    /// True when the sweep was sampled rather than exhaustive.
    pub sampled: bool,
}

/// Enumeration limits for [`certify_with`] and [`condition_profile_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    pub budget: u128,
    /// Random supports drawn per size when the budget is exceeded.
    pub sample_trials: usize,
    pub seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            budget: SUBSET_BUDGET,
            sample_trials: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
struct Sweep {
    alpha: f64,
    alpha_set: Vec<usize>,
    beta: f64,
    ratio: f64,
    ratio_set: Vec<usize>,
}

impl Sweep {
    fn single(cols: &[usize], b: StabilityBounds) -> Self {
        Sweep {
            alpha: b.alpha,
            alpha_set: cols.to_vec(),
            beta: b.beta,
            ratio: b.ratio(),
            ratio_set: cols.to_vec(),
        }
    }

    fn merge(a: Sweep, b: Sweep) -> Sweep {
        let (alpha, alpha_set) = match a.alpha.total_cmp(&b.alpha).then_with(|| a.alpha_set.cmp(&b.alpha_set)) {
            std::cmp::Ordering::Greater => (b.alpha, b.alpha_set),
            _ => (a.alpha, a.alpha_set),
        };
        let (ratio, ratio_set) = match b.ratio.total_cmp(&a.ratio).then_with(|| a.ratio_set.cmp(&b.ratio_set)) {
            std::cmp::Ordering::Greater => (b.ratio, b.ratio_set),
            _ => (a.ratio, a.ratio_set),
        };
        Sweep {
            alpha,
            alpha_set,
            beta: a.beta.max(b.beta),
            ratio,
            ratio_set,
        }
    }
}

/// Sweeps all (or, past the budget, randomly sampled) supports of size `k`.
fn sweep(m: &MeasurementMatrix, k: usize, opts: &CertifyOptions) -> (Sweep, u128, bool) {
    let l = m.params().l();
    let n = l * l;
    let tl = m.params().tl();
    let eval = |cols: &[usize]| {
        let sub = m.matrix().select_columns(cols.iter());
        Some(Sweep::single(cols, bounds_of_submatrix(&sub, tl)))
    };
    let total = binomial(n, k);
    if total <= opts.budget {
        let s = par_reduce_over_subsets(n, k, eval, Sweep::merge).expect("k <= n");
        (s, total, false)
    } else {
        let mut rng = substream(opts.seed, k as u64);
        let s = (0..opts.sample_trials.max(1))
            .map(|_| eval(&random_subset(&mut rng, n, k)).unwrap())
            .reduce(Sweep::merge)
            .unwrap();
        (s, opts.sample_trials.max(1) as u128, true)
    }
}

pub fn certify(m: &MeasurementMatrix, kmax: usize) -> Result<Certificate> {
    certify_with(m, kmax, &CertifyOptions::default())
}

/// Certifies (or refutes) stable identifiability of all operators with at
/// most `kmax` active cells under the probe behind `m`.
pub fn certify_with(m: &MeasurementMatrix, kmax: usize, opts: &CertifyOptions) -> Result<Certificate> {
    let l = m.params().l();
    if kmax == 0 || kmax > l * l {
        return Err(IdentError::Precondition(format!(
            "kmax must lie in 1..={}, got {kmax}",
            l * l
        )));
    }
    let delta = format!("{kmax}/{l}");
    let tl = m.params().tl();
    if 2 * kmax > l {
        // Two disjoint supports of kmax cells give L+1 or more columns in C^L.
        let witness: Vec<usize> = (0..=l).collect();
        let sub = m.matrix().select_columns(witness.iter());
        let b = bounds_of_submatrix(&sub, tl);
        return Ok(Certificate {
            l,
            kmax,
            delta,
            verdict: Verdict::NotIdentifiable,
            worst_alpha: 0.0,
            worst_beta: b.beta,
            worst_support: SupportSet::from_indices(l, &witness)?,
            support_size: l + 1,
            checked_count: 1,
            sampled: false,
        });
    }
    let size = 2 * kmax;
    let (s, checked, sampled) = sweep(m, size, opts);
    let floor = EPS_SPARK * tl.sqrt() * m.sigma_max();
    Ok(Certificate {
        l,
        kmax,
        delta,
        verdict: if s.alpha > floor {
            Verdict::StablyIdentifiable
        } else {
            Verdict::NotIdentifiable
        },
        worst_alpha: s.alpha,
        worst_beta: s.beta,
        worst_support: SupportSet::from_indices(l, &s.alpha_set)?,
        support_size: size,
        checked_count: checked,
        sampled,
    })
}

/// Builds two operators with disjoint supports `g1`, `g2` that produce the
/// same response to the probe.
///
/// With `v` a unit kernel vector of `A_{g1 u g2}`, the first operator's
/// phased cell functions equal `sqrt(L) v` on `g1` and the second's equal
/// `-sqrt(L) v` on `g2`, constant over the cell; their difference then has
/// unit norm while its response vanishes at every grid point.
pub fn counterexample(
    m: &MeasurementMatrix,
    g1: &SupportSet,
    g2: &SupportSet,
) -> Result<(SpreadingFunction, SpreadingFunction)> {
    let p = *m.params();
    let l = p.l();
    if !g1.is_disjoint(g2) {
        return Err(IdentError::Precondition(
            "supports of a counterexample must be disjoint".into(),
        ));
    }
    let union = g1.union(g2);
    if union.is_empty() {
        return Err(IdentError::Precondition("empty supports".into()));
    }
    let a = submatrix(m, &union)?;
    let (v, smin) = min_right_singular_vector(&a);
    if union.len() <= l && smin > EPS_SPARK * m.sigma_max() {
        return Err(IdentError::Precondition(format!(
            "A_Gamma on {} cells has full column rank (sigma_min {smin:.3e}); no counterexample exists",
            union.len()
        )));
    }
    let scale = (l as f64).sqrt();
    let build = |part: &SupportSet, sign: f64| -> Result<SpreadingFunction> {
        let mut values = crate::linalg::CMatrix::zeros(p.num_cells(), p.grid_len());
        for cell in part.iter() {
            let coord = v[union.position(cell).expect("cell in union")] * Complex64::new(sign * scale, 0.0);
            values.row_mut(cell.index(l)).fill(coord);
        }
        devectorize_with_tol(&CellVectorField::new(p, values)?, part, 1e-12)
    };
    Ok((build(g1, 1.0)?, build(g2, -1.0)?))
}

/// One row of the condition profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub k: usize,
    /// Largest `beta_Gamma / alpha_Gamma` over `|Gamma| = k`; infinite when some `alpha_Gamma = 0`.
    pub worst_ratio: f64,
    #[serde(serialize_with = "crate::io::serialize_support")]
    pub argmax_support: SupportSet,
    pub sampled: bool,
}

pub fn condition_profile(m: &MeasurementMatrix, kmax: usize) -> Result<Vec<ProfileRow>> {
    condition_profile_with(m, kmax, &CertifyOptions::default())
}

/// Worst noise sensitivity `beta / alpha` for each support size up to `2 kmax`.
pub fn condition_profile_with(m: &MeasurementMatrix, kmax: usize, opts: &CertifyOptions) -> Result<Vec<ProfileRow>> {
    let l = m.params().l();
    if kmax == 0 {
        return Err(IdentError::Precondition("kmax must be at least 1".into()));
    }
    let top = (2 * kmax).min(l * l);
    let floor = EPS_SPARK * m.params().tl().sqrt() * m.sigma_max();
    (1..=top)
        .map(|k| {
            if k > l {
                let first: Vec<usize> = (0..k).collect();
                return Ok(ProfileRow {
                    k,
                    worst_ratio: f64::INFINITY,
                    argmax_support: SupportSet::from_indices(l, &first)?,
                    sampled: false,
                });
            }
            let (s, _, sampled) = sweep(m, k, opts);
            let worst_ratio = if s.alpha <= floor { f64::INFINITY } else { s.ratio };
            let set = if s.alpha <= floor { s.alpha_set } else { s.ratio_set };
            Ok(ProfileRow {
                k,
                worst_ratio,
                argmax_support: SupportSet::from_indices(l, &set)?,
                sampled,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gabor::{build_matrix, draw_coefficients, CoefficientVector};
    use crate::model::{hs_norm, ModelParams};
    use crate::simulate::simulate_response;

    fn certified(l: usize, seed: u64) -> MeasurementMatrix {
        let p = ModelParams::new(l, 1.0, 2, 2).unwrap();
        draw_coefficients(&p, &mut substream(seed, u64::MAX), 10).unwrap()
    }

    #[test]
    fn half_area_is_identifiable() {
        let m = certified(4, 1);
        let c = certify(&m, 2).unwrap();
        assert_eq!(c.verdict, Verdict::StablyIdentifiable);
        assert_eq!(c.checked_count, 1820);
        assert!(c.worst_alpha > 0.0 && c.worst_alpha <= c.worst_beta);
        assert!(!c.sampled);
    }

    #[test]
    fn beyond_half_is_not_identifiable() {
        let m = certified(4, 2);
        let c = certify(&m, 3).unwrap();
        assert_eq!(c.verdict, Verdict::NotIdentifiable);
        assert_eq!(c.worst_alpha, 0.0);
        assert_eq!(c.worst_support.len(), 5);
    }

    #[test]
    fn duplicate_columns_not_identifiable() {
        let p = ModelParams::new(2, 0.5, 1, 1).unwrap();
        let m = build_matrix(&CoefficientVector::from_real(&[1.0, 1.0]).unwrap(), &p).unwrap();
        let c = certify(&m, 1).unwrap();
        assert_eq!(c.verdict, Verdict::NotIdentifiable);
        assert_eq!(c.worst_support.pairs(), vec![(0, 0), (1, 0)]);
    }

    #[test]
    fn verdict_invariant_under_scaling() {
        let m = certified(4, 3);
        let scaled = build_matrix(&m.coefficients().scaled(Complex64::new(0.0, 1e-6)).unwrap(), m.params()).unwrap();
        assert_eq!(certify(&m, 2).unwrap().verdict, certify(&scaled, 2).unwrap().verdict);
    }

    #[test]
    fn sampled_when_budget_exceeded() {
        let m = certified(4, 4);
        let opts = CertifyOptions {
            budget: 100,
            sample_trials: 500,
            seed: 3,
        };
        let c = certify_with(&m, 2, &opts).unwrap();
        assert!(c.sampled);
        assert_eq!(c.checked_count, 500);
    }

    #[test]
    fn counterexample_l4() {
        let m = certified(4, 5);
        let g1 = SupportSet::from_indices(4, &[0, 5, 10]).unwrap();
        let g2 = SupportSet::from_indices(4, &[3, 6, 13]).unwrap();
        let (h1, h2) = counterexample(&m, &g1, &g2).unwrap();
        let diff = hs_norm(&h1.difference(&h2).unwrap());
        assert!((diff - 1.0).abs() <= 1e-12);
        let z = simulate_response(&h1, &m)
            .unwrap()
            .difference(&simulate_response(&h2, &m).unwrap())
            .unwrap();
        assert!(z.response_norm() <= 1e-10);
    }

    #[test]
    fn counterexample_preconditions() {
        let m = certified(4, 6);
        let g1 = SupportSet::from_indices(4, &[0, 1]).unwrap();
        let g2 = SupportSet::from_indices(4, &[1, 2]).unwrap();
        assert!(matches!(counterexample(&m, &g1, &g2), Err(IdentError::Precondition(_))));
        let g2 = SupportSet::from_indices(4, &[7, 9]).unwrap();
        assert!(matches!(counterexample(&m, &g1, &g2), Err(IdentError::Precondition(_))));
    }

    #[test]
    fn profile_shape() {
        let m = certified(3, 7);
        let rows = condition_profile(&m, 2).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].worst_ratio, 1.0);
        for w in rows.windows(2) {
            assert!(w[1].worst_ratio >= w[0].worst_ratio);
        }
        assert_eq!(rows[3].worst_ratio, f64::INFINITY);
    }
}
