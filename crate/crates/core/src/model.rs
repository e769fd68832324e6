//! Delay-Doppler grid, spreading functions and their stacked cell vectors.
//!
//! The `(tau, nu)` plane is tiled by `L x L` cells of size `T x 1/(TL)`; cell
//! `(k, m)` covers `[kT, (k+1)T) x [m/(TL), (m+1)/(TL))`. Each cell is sampled
//! on an `Nt x Nf` grid at the cell-centred offsets
//! `t_i = (i + 1/2) T / Nt` and `f_j = (j + 1/2) / (TL Nf)`.
//!
//! Every integral over the fundamental cell is replaced by the Riemann sum
//! with weight `1 / (L Nt Nf)` per sample (cell area over samples per cell),
//! so the discrete norms used in all modules agree exactly.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{IdentError, Result};
use crate::linalg::{hermitian_eigen, CMatrix};
use crate::rng::complex_gaussian;
use crate::EPS_RANK;

/// Discretization of the delay-Doppler plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    l: usize,
    t: f64,
    nt: usize,
    nf: usize,
}

impl ModelParams {
    pub fn new(l: usize, t: f64, nt: usize, nf: usize) -> Result<Self> {
        if l < 2 {
            return Err(IdentError::InvalidParams(format!("L must be at least 2, got {l}")));
        }
        if !(t.is_finite() && t > 0.0) {
            return Err(IdentError::InvalidParams(format!("T must be positive, got {t}")));
        }
        if nt == 0 || nf == 0 {
            return Err(IdentError::InvalidParams(format!(
                "samples per cell must be positive, got Nt={nt} Nf={nf}"
            )));
        }
        Ok(Self { l, t, nt, nf })
    }

    /// Grid side: number of delay and Doppler cells per axis.
    pub fn l(&self) -> usize {
        self.l
    }

    /// Delay cell width in seconds.
    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn nf(&self) -> usize {
        self.nf
    }

    /// `T L`, the probing period; also the maximal delay.
    pub fn tl(&self) -> f64 {
        self.t * self.l as f64
    }

    pub fn tau_max(&self) -> f64 {
        self.tl()
    }

    pub fn nu_max(&self) -> f64 {
        1.0 / self.t
    }

    /// Doppler cell height `1 / (TL)`.
    pub fn doppler_step(&self) -> f64 {
        1.0 / self.tl()
    }

    pub fn cell_area(&self) -> f64 {
        1.0 / self.l as f64
    }

    /// Number of cells `L^2`.
    pub fn num_cells(&self) -> usize {
        self.l * self.l
    }

    /// Number of sample points per cell, `Nt Nf`.
    pub fn grid_len(&self) -> usize {
        self.nt * self.nf
    }

    /// Riemann weight of one sample, `1 / (L Nt Nf)`.
    pub fn weight(&self) -> f64 {
        1.0 / (self.l * self.nt * self.nf) as f64
    }

    pub fn t_offset(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.t / self.nt as f64
    }

    pub fn f_offset(&self, j: usize) -> f64 {
        (j as f64 + 0.5) / (self.tl() * self.nf as f64)
    }

    /// Flat grid index of sample `(i, j)`; row-major in `(i, j)`.
    pub fn grid_index(&self, i: usize, j: usize) -> usize {
        i * self.nf + j
    }

    /// Unit-modulus phase `exp(j 2 pi (f_j + m/(TL)) t_i)` linking the
    /// spreading function samples of cell `(k, m)` to `s_{k,m}(t_i, f_j)`.
    pub fn cell_phase(&self, m: usize, i: usize, j: usize) -> Complex64 {
        let nu = self.f_offset(j) + m as f64 / self.tl();
        Complex64::from_polar(1.0, 2.0 * PI * nu * self.t_offset(i))
    }
}

/// Index pair `(k, m)` of a delay-Doppler cell: delay index `k`, Doppler index `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub k: usize,
    pub m: usize,
}

impl Cell {
    pub fn new(k: usize, m: usize) -> Self {
        Self { k, m }
    }

    /// Position in the stacked cell order `s_{0,0}, s_{0,1}, ..., s_{L-1,L-1}`.
    pub fn index(&self, l: usize) -> usize {
        self.k * l + self.m
    }

    pub fn from_index(idx: usize, l: usize) -> Self {
        Self { k: idx / l, m: idx % l }
    }
}

/// A set of active cells, kept sorted in stacked order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SupportSet {
    l: usize,
    cells: Vec<Cell>,
}

impl SupportSet {
    /// Builds a support set; rejects out-of-range and duplicate cells.
    pub fn new(l: usize, cells: impl IntoIterator<Item = Cell>) -> Result<Self> {
        let mut cells: Vec<Cell> = cells.into_iter().collect();
        if let Some(bad) = cells.iter().find(|c| c.k >= l || c.m >= l) {
            return Err(IdentError::Structure(format!(
                "cell ({}, {}) outside the {l}x{l} grid",
                bad.k, bad.m
            )));
        }
        cells.sort_unstable();
        if let Some(w) = cells.windows(2).find(|w| w[0] == w[1]) {
            return Err(IdentError::Structure(format!(
                "duplicate cell ({}, {})",
                w[0].k, w[0].m
            )));
        }
        Ok(Self { l, cells })
    }

    pub fn from_indices(l: usize, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= l * l) {
            return Err(IdentError::Structure(format!(
                "column index {bad} outside 0..{}",
                l * l
            )));
        }
        Self::new(l, indices.iter().map(|&i| Cell::from_index(i, l)))
    }

    pub fn from_pairs(l: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        Self::new(l, pairs.iter().map(|&(k, m)| Cell::new(k, m)))
    }

    pub fn empty(l: usize) -> Self {
        Self { l, cells: Vec::new() }
    }

    /// All `L^2` cells.
    pub fn full(l: usize) -> Self {
        Self {
            l,
            cells: (0..l * l).map(|i| Cell::from_index(i, l)).collect(),
        }
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn iter(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter()
    }

    /// Column indices into `A_c`, ascending.
    pub fn indices(&self) -> Vec<usize> {
        self.cells.iter().map(|c| c.index(self.l)).collect()
    }

    pub fn contains(&self, cell: &Cell) -> bool {
        self.cells.binary_search(cell).is_ok()
    }

    pub fn position(&self, cell: &Cell) -> Option<usize> {
        self.cells.binary_search(cell).ok()
    }

    /// Area `|Gamma| / L` of the union of active cells.
    pub fn area(&self) -> f64 {
        self.cells.len() as f64 / self.l as f64
    }

    pub fn is_disjoint(&self, other: &SupportSet) -> bool {
        self.cells.iter().all(|c| !other.contains(c))
    }

    pub fn union(&self, other: &SupportSet) -> SupportSet {
        let mut cells = self.cells.clone();
        cells.extend(other.cells.iter().copied());
        cells.sort_unstable();
        cells.dedup();
        SupportSet { l: self.l, cells }
    }

    /// `(k, m)` pairs in stacked order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.cells.iter().map(|c| (c.k, c.m)).collect()
    }
}

/// Samples of a spreading function on its active cells.
///
/// Cell `(k, m)` stores an `Nt x Nf` array whose entry `(i, j)` is
/// `s_H(t_i + kT, f_j + m/(TL))`. Inactive cells are identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadingFunction {
    params: ModelParams,
    support: SupportSet,
    cells: Vec<CMatrix>,
}

impl SpreadingFunction {
    /// `cells[n]` holds the samples of `support.cells()[n]`.
    pub fn new(params: ModelParams, support: SupportSet, cells: Vec<CMatrix>) -> Result<Self> {
        if support.l() != params.l() {
            return Err(IdentError::Structure(format!(
                "support built for L={} but params have L={}",
                support.l(),
                params.l()
            )));
        }
        if cells.len() != support.len() {
            return Err(IdentError::Structure(format!(
                "{} cell arrays for {} active cells",
                cells.len(),
                support.len()
            )));
        }
        if let Some(bad) = cells.iter().find(|a| a.shape() != (params.nt(), params.nf())) {
            return Err(IdentError::Structure(format!(
                "cell array of shape {:?}, expected ({}, {})",
                bad.shape(),
                params.nt(),
                params.nf()
            )));
        }
        Ok(Self { params, support, cells })
    }

    pub fn zero(params: ModelParams, support: SupportSet) -> Result<Self> {
        let cells = vec![CMatrix::zeros(params.nt(), params.nf()); support.len()];
        Self::new(params, support, cells)
    }

    /// Same sample value on every grid point of every active cell.
    pub fn constant(params: ModelParams, support: SupportSet, value: Complex64) -> Result<Self> {
        let cells = vec![CMatrix::from_element(params.nt(), params.nf(), value); support.len()];
        Self::new(params, support, cells)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn support(&self) -> &SupportSet {
        &self.support
    }

    /// Cell arrays aligned with `support().cells()`.
    pub fn cell_arrays(&self) -> &[CMatrix] {
        &self.cells
    }

    pub fn cell(&self, cell: &Cell) -> Option<&CMatrix> {
        self.support.position(cell).map(|n| &self.cells[n])
    }

    /// `a * self + b * other` on the union of both supports.
    pub fn linear_combination(
        &self,
        a: Complex64,
        other: &SpreadingFunction,
        b: Complex64,
    ) -> Result<SpreadingFunction> {
        if self.params != other.params {
            return Err(IdentError::Structure("spreading functions on different grids".into()));
        }
        let support = self.support.union(&other.support);
        let zero = CMatrix::zeros(self.params.nt(), self.params.nf());
        let cells = support
            .iter()
            .map(|c| {
                let x = self.cell(c).unwrap_or(&zero);
                let y = other.cell(c).unwrap_or(&zero);
                x * a + y * b
            })
            .collect();
        SpreadingFunction::new(self.params, support, cells)
    }

    /// `self - other`.
    pub fn difference(&self, other: &SpreadingFunction) -> Result<SpreadingFunction> {
        self.linear_combination(Complex64::new(1.0, 0.0), other, Complex64::new(-1.0, 0.0))
    }
}

/// The stacked vector `s(t, f)` sampled on the cell grid.
///
/// `values` has `L^2` rows (stacked cell order) and `Nt Nf` columns (grid
/// points, row-major in `(i, j)`). Entry `(kL + m, g(i, j))` is
/// `s_H(t_i + kT, f_j + m/(TL)) exp(j 2 pi (f_j + m/(TL)) t_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellVectorField {
    params: ModelParams,
    values: CMatrix,
}

impl CellVectorField {
    pub fn new(params: ModelParams, values: CMatrix) -> Result<Self> {
        if values.shape() != (params.num_cells(), params.grid_len()) {
            return Err(IdentError::Structure(format!(
                "cell vector field of shape {:?}, expected ({}, {})",
                values.shape(),
                params.num_cells(),
                params.grid_len()
            )));
        }
        Ok(Self { params, values })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn values(&self) -> &CMatrix {
        &self.values
    }

    /// Rows of the active cells only: `s_Gamma` at every grid point.
    pub fn restrict(&self, support: &SupportSet) -> CMatrix {
        self.values.select_rows(support.indices().iter())
    }

    /// Weighted energy `sum |s|^2 / (L Nt Nf)`.
    pub fn energy(&self) -> f64 {
        self.values.norm_squared() * self.params.weight()
    }
}

/// Stacks the cell samples into `s(t, f)`, applying the `s_{k,m}` phase.
pub fn vectorize(sf: &SpreadingFunction) -> CellVectorField {
    let p = sf.params;
    let mut values = CMatrix::zeros(p.num_cells(), p.grid_len());
    for (cell, samples) in sf.support.iter().zip(&sf.cells) {
        let row = cell.index(p.l());
        for i in 0..p.nt() {
            for j in 0..p.nf() {
                values[(row, p.grid_index(i, j))] = samples[(i, j)] * p.cell_phase(cell.m, i, j);
            }
        }
    }
    CellVectorField { params: p, values }
}

/// Relative energy outside the support tolerated by [`devectorize`].
pub const DEVECTORIZE_TOL: f64 = 1e-9;

/// Inverse of [`vectorize`]: strips the `s_{k,m}` phases of the active rows.
pub fn devectorize(v: &CellVectorField, support: &SupportSet) -> Result<SpreadingFunction> {
    devectorize_with_tol(v, support, DEVECTORIZE_TOL)
}

/// [`devectorize`] with an explicit tolerance on the fraction of energy that
/// may sit outside `support`.
pub fn devectorize_with_tol(v: &CellVectorField, support: &SupportSet, tol: f64) -> Result<SpreadingFunction> {
    let p = v.params;
    if support.l() != p.l() {
        return Err(IdentError::Structure("support and field disagree on L".into()));
    }
    let total = v.values.norm_squared();
    let inside: f64 = support
        .iter()
        .map(|c| v.values.row(c.index(p.l())).norm_squared())
        .sum();
    let outside = (total - inside).max(0.0);
    if outside > tol * total {
        return Err(IdentError::Inconsistent(format!(
            "{:.3e} of the field energy lies outside the declared support",
            outside / total
        )));
    }
    let cells = support
        .iter()
        .map(|cell| {
            let row = cell.index(p.l());
            DMatrix::from_fn(p.nt(), p.nf(), |i, j| {
                v.values[(row, p.grid_index(i, j))] * p.cell_phase(cell.m, i, j).conj()
            })
        })
        .collect();
    SpreadingFunction::new(p, support.clone(), cells)
}

/// Riemann-sum inner product `<s1, s2>` with weight `1 / (L Nt Nf)`.
pub fn hs_inner(sf1: &SpreadingFunction, sf2: &SpreadingFunction) -> Result<Complex64> {
    if sf1.params != sf2.params {
        return Err(IdentError::Structure(
            "inner product of spreading functions on different grids".into(),
        ));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (cell, a) in sf1.support.iter().zip(&sf1.cells) {
        if let Some(b) = sf2.cell(cell) {
            acc += a.zip_fold(b, Complex64::new(0.0, 0.0), |s, x, y| s + x * y.conj());
        }
    }
    Ok(acc * sf1.params.weight())
}

pub fn hs_norm(sf: &SpreadingFunction) -> f64 {
    let sum: f64 = sf.cells.iter().map(|a| a.norm_squared()).sum();
    (sum * sf.params.weight()).sqrt()
}

/// A generated test instance.
#[derive(Debug, Clone)]
pub struct RandomSpreading {
    pub sf: SpreadingFunction,
    /// Set when `Nt Nf < |Gamma|`: the Gram matrix of the cell functions is
    /// then necessarily singular and MUSIC cannot succeed.
    pub gram_deficient: bool,
}

/// I.i.d. standard complex Gaussian samples on every active cell.
pub fn random_spreading<R: Rng + ?Sized>(
    params: &ModelParams,
    support: &SupportSet,
    rng: &mut R,
) -> Result<RandomSpreading> {
    let cells = support
        .iter()
        .map(|_| DMatrix::from_fn(params.nt(), params.nf(), |_, _| complex_gaussian(rng)))
        .collect();
    Ok(RandomSpreading {
        sf: SpreadingFunction::new(*params, support.clone(), cells)?,
        gram_deficient: params.grid_len() < support.len(),
    })
}

/// Gram matrix `S_Gamma` of the active cell functions and its rank verdict.
#[derive(Debug, Clone)]
pub struct GramRank {
    pub gram: CMatrix,
    /// Eigenvalues of `S_Gamma`, descending.
    pub eig_values: Vec<f64>,
    pub full_rank: bool,
}

/// `S_Gamma = sum_{i,j} s_Gamma s_Gamma^H w` and whether it is nonsingular.
///
/// `S_Gamma` is nonsingular exactly when the phased cell functions
/// `s_{k,m}, (k,m) in Gamma` are linearly independent on the sample grid.
pub fn gram_rank(sf: &SpreadingFunction) -> Result<GramRank> {
    gram_rank_of_field(&vectorize(sf), sf.support())
}

/// [`gram_rank`] computed directly from a stacked field.
pub fn gram_rank_of_field(field: &CellVectorField, support: &SupportSet) -> Result<GramRank> {
    if support.is_empty() {
        return Err(IdentError::Precondition("Gram matrix of an empty support".into()));
    }
    let s = field.restrict(support);
    let gram = (&s * s.adjoint()) * Complex64::new(field.params.weight(), 0.0);
    let gram = crate::linalg::hermitian_part(&gram);
    let (eig_values, _) = hermitian_eigen(&gram);
    let max = eig_values[0];
    let min = *eig_values.last().unwrap();
    let full_rank = support.len() <= field.params.grid_len() && max > 0.0 && min > EPS_RANK * max;
    Ok(GramRank {
        gram,
        eig_values,
        full_rank,
    })
}
