//! File formats: JSON documents for spreading functions, coefficients and
//! supports; the binary `ZAKF` container for Zak fields; CSV dumps.
//!
//! `ZAKF` layout (little endian): magic `b"ZAKF"`, `u32 L`, `u32 Nt`,
//! `u32 Nf`, `f64 T`, then `L Nt Nf` complex doubles as `(re, im)` pairs in
//! `(p, i, j)` row-major order.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};

use crate::certify::ProfileRow;
use crate::error::{IdentError, Result};
use crate::gabor::{CoefficientVector, MeasurementMatrix};
use crate::linalg::CMatrix;
use crate::model::{Cell, ModelParams, SpreadingFunction, SupportSet};
use crate::simulate::ZakField;

pub const ZAKF_MAGIC: &[u8; 4] = b"ZAKF";

/// Serializes a support as a sorted list of `[k, m]` pairs.
pub fn serialize_support<S: Serializer>(s: &SupportSet, ser: S) -> std::result::Result<S::Ok, S::Error> {
    let mut seq = ser.serialize_seq(Some(s.len()))?;
    for c in s.iter() {
        seq.serialize_element(&[c.k, c.m])?;
    }
    seq.end()
}

pub fn serialize_opt_support<S: Serializer>(s: &Option<SupportSet>, ser: S) -> std::result::Result<S::Ok, S::Error> {
    match s {
        Some(s) => serialize_support(s, ser),
        None => ser.serialize_none(),
    }
}

pub fn support_to_json(s: &SupportSet) -> serde_json::Value {
    serde_json::Value::from(s.pairs().iter().map(|&(k, m)| vec![k, m]).collect::<Vec<_>>())
}

/// Parses `[[k, m], ...]`.
pub fn parse_support(l: usize, text: &str) -> Result<SupportSet> {
    let pairs: Vec<(usize, usize)> = serde_json::from_str(text)?;
    SupportSet::from_pairs(l, &pairs)
}

/// Parses `[[[k, m], ...], ...]`, a list of supports.
pub fn parse_support_list(l: usize, text: &str) -> Result<Vec<SupportSet>> {
    let lists: Vec<Vec<(usize, usize)>> = serde_json::from_str(text)?;
    lists.iter().map(|p| SupportSet::from_pairs(l, p)).collect()
}

#[derive(Serialize, Deserialize)]
struct CellDoc {
    k: usize,
    m: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct SpreadingDoc {
    #[serde(rename = "L")]
    l: usize,
    #[serde(rename = "T")]
    t: f64,
    #[serde(rename = "Nt")]
    nt: usize,
    #[serde(rename = "Nf")]
    nf: usize,
    cells: Vec<CellDoc>,
}

fn split_rows(a: &CMatrix) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let re = (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)].re).collect())
        .collect();
    let im = (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)].im).collect())
        .collect();
    (re, im)
}

pub fn spreading_to_json(sf: &SpreadingFunction) -> Result<String> {
    let p = sf.params();
    let cells = sf
        .support()
        .iter()
        .zip(sf.cell_arrays())
        .map(|(c, a)| {
            let (re, im) = split_rows(a);
            CellDoc { k: c.k, m: c.m, re, im }
        })
        .collect();
    let doc = SpreadingDoc {
        l: p.l(),
        t: p.t(),
        nt: p.nt(),
        nf: p.nf(),
        cells,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn spreading_from_json(text: &str) -> Result<SpreadingFunction> {
    let doc: SpreadingDoc = serde_json::from_str(text)?;
    let params = ModelParams::new(doc.l, doc.t, doc.nt, doc.nf)?;
    let mut cells: Vec<(Cell, CMatrix)> = Vec::with_capacity(doc.cells.len());
    for c in doc.cells {
        let shape_ok =
            c.re.len() == doc.nt && c.im.len() == doc.nt && c.re.iter().chain(&c.im).all(|row| row.len() == doc.nf);
        if !shape_ok {
            return Err(IdentError::Structure(format!(
                "cell ({}, {}) is not {}x{}",
                c.k, c.m, doc.nt, doc.nf
            )));
        }
        let a = DMatrix::from_fn(doc.nt, doc.nf, |i, j| Complex64::new(c.re[i][j], c.im[i][j]));
        cells.push((Cell::new(c.k, c.m), a));
    }
    cells.sort_by_key(|(c, _)| *c);
    let support = SupportSet::new(doc.l, cells.iter().map(|(c, _)| *c))?;
    SpreadingFunction::new(params, support, cells.into_iter().map(|(_, a)| a).collect())
}

#[derive(Serialize, Deserialize)]
struct CoefficientDoc {
    #[serde(rename = "L")]
    l: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

pub fn coefficients_to_json(c: &CoefficientVector) -> Result<String> {
    let doc = CoefficientDoc {
        l: c.len(),
        re: c.as_slice().iter().map(|x| x.re).collect(),
        im: c.as_slice().iter().map(|x| x.im).collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn coefficients_from_json(text: &str) -> Result<CoefficientVector> {
    let doc: CoefficientDoc = serde_json::from_str(text)?;
    if doc.re.len() != doc.l || doc.im.len() != doc.l {
        return Err(IdentError::Structure(format!(
            "coefficient file declares L={} but has {} real and {} imaginary parts",
            doc.l,
            doc.re.len(),
            doc.im.len()
        )));
    }
    CoefficientVector::new(
        doc.re
            .iter()
            .zip(&doc.im)
            .map(|(&r, &i)| Complex64::new(r, i))
            .collect(),
    )
}

pub fn write_zak<W: Write>(zf: &ZakField, mut w: W) -> Result<()> {
    let p = zf.params();
    w.write_all(ZAKF_MAGIC)?;
    for n in [p.l(), p.nt(), p.nf()] {
        let n = u32::try_from(n).map_err(|_| IdentError::Format(format!("dimension {n} exceeds u32")))?;
        w.write_all(&n.to_le_bytes())?;
    }
    w.write_all(&p.t().to_le_bytes())?;
    let v = zf.values();
    let mut buf = Vec::with_capacity(v.len() * 16);
    for row in 0..v.nrows() {
        for g in 0..v.ncols() {
            buf.extend_from_slice(&v[(row, g)].re.to_le_bytes());
            buf.extend_from_slice(&v[(row, g)].im.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_zak<R: Read>(mut r: R) -> Result<ZakField> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != ZAKF_MAGIC {
        return Err(IdentError::Format("missing ZAKF magic".into()));
    }
    let mut u = [0u8; 4];
    let mut dims = [0usize; 3];
    for d in &mut dims {
        r.read_exact(&mut u)?;
        *d = u32::from_le_bytes(u) as usize;
    }
    let mut f = [0u8; 8];
    r.read_exact(&mut f)?;
    let params = ModelParams::new(dims[0], f64::from_le_bytes(f), dims[1], dims[2])?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let expected = params.l() * params.grid_len() * 16;
    if payload.len() != expected {
        return Err(IdentError::Format(format!(
            "ZAKF payload has {} bytes, expected {expected}",
            payload.len()
        )));
    }
    let word = |n: usize| f64::from_le_bytes(payload[8 * n..8 * n + 8].try_into().unwrap());
    let g = params.grid_len();
    let values = CMatrix::from_fn(params.l(), g, |p, c| {
        let n = 2 * (p * g + c);
        Complex64::new(word(n), word(n + 1))
    });
    ZakField::new(params, values)
}

#[derive(Serialize, Deserialize)]
struct ZakDoc {
    #[serde(rename = "L")]
    l: usize,
    #[serde(rename = "T")]
    t: f64,
    #[serde(rename = "Nt")]
    nt: usize,
    #[serde(rename = "Nf")]
    nf: usize,
    /// Indexed `[p][i][j]`.
    re: Vec<Vec<Vec<f64>>>,
    im: Vec<Vec<Vec<f64>>>,
}

/// Debugging mirror of the `ZAKF` container.
pub fn zak_to_json(zf: &ZakField) -> Result<String> {
    let p = zf.params();
    let v = zf.values();
    let part = |f: fn(&Complex64) -> f64| -> Vec<Vec<Vec<f64>>> {
        (0..p.l())
            .map(|row| {
                (0..p.nt())
                    .map(|i| (0..p.nf()).map(|j| f(&v[(row, p.grid_index(i, j))])).collect())
                    .collect()
            })
            .collect()
    };
    let doc = ZakDoc {
        l: p.l(),
        t: p.t(),
        nt: p.nt(),
        nf: p.nf(),
        re: part(|z| z.re),
        im: part(|z| z.im),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn zak_from_json(text: &str) -> Result<ZakField> {
    let doc: ZakDoc = serde_json::from_str(text)?;
    let p = ModelParams::new(doc.l, doc.t, doc.nt, doc.nf)?;
    let ok = |a: &Vec<Vec<Vec<f64>>>| {
        a.len() == p.l()
            && a.iter()
                .all(|r| r.len() == p.nt() && r.iter().all(|c| c.len() == p.nf()))
    };
    if !ok(&doc.re) || !ok(&doc.im) {
        return Err(IdentError::Structure("Zak JSON arrays do not match L x Nt x Nf".into()));
    }
    let values = CMatrix::from_fn(p.l(), p.grid_len(), |row, g| {
        let (i, j) = (g / p.nf(), g % p.nf());
        Complex64::new(doc.re[row][i][j], doc.im[row][i][j])
    });
    ZakField::new(p, values)
}

/// `A_c` as CSV, one matrix row per line, real and imaginary parts interleaved.
pub fn matrix_to_csv(m: &MeasurementMatrix) -> String {
    let a = m.matrix();
    let mut out = String::new();
    for row in 0..a.nrows() {
        let fields: Vec<String> = (0..a.ncols())
            .flat_map(|c| [a[(row, c)].re.to_string(), a[(row, c)].im.to_string()])
            .collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Condition profile as CSV with header `k,worst_ratio,argmax_support`.
pub fn profile_to_csv(rows: &[ProfileRow]) -> String {
    let mut out = String::from("k,worst_ratio,argmax_support\n");
    for r in rows {
        let set = support_to_json(&r.argmax_support).to_string();
        out.push_str(&format!("{},{},\"{}\"\n", r.k, r.worst_ratio, set));
    }
    out
}

/// Loads `A_c` parameters and coefficients into a matrix (uncertified).
pub fn matrix_from_coefficients(text: &str, params: &ModelParams) -> Result<MeasurementMatrix> {
    crate::gabor::build_matrix(&coefficients_from_json(text)?, params)
}
