//! File formats: matrices as header-less CSV or `{"rows","cols","data"}` JSON
//! (row-major), plants, regions, and CSV tables for plotting.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ellipsoid::EllipsoidRegion;
use crate::error::{Error, Result};
use crate::experiments::{PerturbationStudy, SpatialSystem, SweepRow};
use crate::lti::{FeedbackGain, StateSpaceSystem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    /// Row-major entries.
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixJson {
    fn from(m: &DMatrix<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().iter().copied().collect(),
        }
    }
}

impl TryFrom<MatrixJson> for DMatrix<f64> {
    type Error = Error;
    fn try_from(j: MatrixJson) -> Result<Self> {
        if j.data.len() != j.rows * j.cols {
            return Err(Error::Parse(format!(
                "matrix declares {}x{} but holds {} entries",
                j.rows,
                j.cols,
                j.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(j.rows, j.cols, &j.data))
    }
}

/// Accepted on input: the object form or a list of rows.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum MatrixIn {
    Object(MatrixJson),
    Rows(Vec<Vec<f64>>),
}

impl MatrixIn {
    fn into_matrix(self) -> Result<DMatrix<f64>> {
        match self {
            MatrixIn::Object(j) => j.try_into(),
            MatrixIn::Rows(rows) => rows_to_matrix(rows),
        }
    }
}

fn rows_to_matrix(rows: Vec<Vec<f64>>) -> Result<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Parse("ragged matrix rows".into()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

pub fn parse_matrix_json(text: &str) -> Result<DMatrix<f64>> {
    serde_json::from_str::<MatrixIn>(text)?.into_matrix()
}

pub fn matrix_to_json(m: &DMatrix<f64>) -> String {
    to_json(&MatrixJson::from(m))
}

pub fn parse_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("`{s}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    rows_to_matrix(rows)
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|x| x.to_string()))
            .expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("ascii output")
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Reads a matrix, choosing the format from the extension (`.csv` or JSON).
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)?;
    if is_csv(path) {
        parse_matrix_csv(&text)
    } else {
        parse_matrix_json(&text)
    }
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let text = if is_csv(path) { matrix_to_csv(m) } else { matrix_to_json(m) };
    write_text(path, &text)
}

pub fn read_gain(path: &Path) -> Result<FeedbackGain<f64>> {
    FeedbackGain::new(read_matrix(path)?)
}

pub fn write_gain(path: &Path, f: &FeedbackGain<f64>) -> Result<()> {
    write_matrix(path, &f.0)
}

#[derive(Debug, Clone, Serialize)]
#[allow(non_snake_case)]
struct SystemOut {
    A: MatrixJson,
    B: MatrixJson,
    Bv: MatrixJson,
    C: MatrixJson,
    Dgu: MatrixJson,
    Dgv: MatrixJson,
}

#[derive(Debug, Clone, Deserialize)]
#[allow(non_snake_case)]
struct SystemIn {
    A: MatrixIn,
    B: MatrixIn,
    Bv: MatrixIn,
    C: MatrixIn,
    Dgu: MatrixIn,
    Dgv: MatrixIn,
}

pub fn system_to_json(sys: &StateSpaceSystem<f64>) -> String {
    to_json(&SystemOut {
        A: sys.a().into(),
        B: sys.b().into(),
        Bv: sys.bv().into(),
        C: sys.c().into(),
        Dgu: sys.dgu().into(),
        Dgv: sys.dgv().into(),
    })
}

pub fn parse_system_json(text: &str) -> Result<StateSpaceSystem<f64>> {
    let s: SystemIn = serde_json::from_str(text)?;
    StateSpaceSystem::new(
        s.A.into_matrix()?,
        s.B.into_matrix()?,
        s.Bv.into_matrix()?,
        s.C.into_matrix()?,
        s.Dgu.into_matrix()?,
        s.Dgv.into_matrix()?,
    )
}

pub fn read_system(path: &Path) -> Result<StateSpaceSystem<f64>> {
    parse_system_json(&fs::read_to_string(path)?)
}

pub fn write_system(path: &Path, sys: &StateSpaceSystem<f64>) -> Result<()> {
    write_text(path, &system_to_json(sys))
}

#[derive(Debug, Clone, Serialize)]
#[allow(non_snake_case)]
struct RegionOut {
    gamma: f64,
    F_o: MatrixJson,
    Z: MatrixJson,
    R: MatrixJson,
}

#[derive(Debug, Clone, Deserialize)]
#[allow(non_snake_case)]
struct RegionIn {
    gamma: f64,
    F_o: MatrixIn,
    Z: MatrixIn,
    R: MatrixIn,
}

pub fn region_to_json(region: &EllipsoidRegion<f64>) -> String {
    to_json(&RegionOut {
        gamma: region.gamma(),
        F_o: region.f_o().into(),
        Z: region.z().into(),
        R: region.r().into(),
    })
}

pub fn parse_region_json(text: &str) -> Result<EllipsoidRegion<f64>> {
    let r: RegionIn = serde_json::from_str(text)?;
    EllipsoidRegion::new(r.F_o.into_matrix()?, r.Z.into_matrix()?, r.R.into_matrix()?, r.gamma)
}

pub fn read_region(path: &Path) -> Result<EllipsoidRegion<f64>> {
    parse_region_json(&fs::read_to_string(path)?)
}

pub fn write_region(path: &Path, region: &EllipsoidRegion<f64>) -> Result<()> {
    write_text(path, &region_to_json(region))
}

/// Pretty JSON with a trailing newline; non-finite numbers become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for r in rows {
        w.write_record(&r).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("ascii output")
}

/// Plot table with columns `theta,method,seed,sigma_d,sigma_p,hinf`; failed
/// cells carry `nan`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    table(
        &["theta", "method", "seed", "sigma_d", "sigma_p", "hinf"],
        rows.iter().map(|r| {
            vec![
                r.theta.to_string(),
                r.method.to_string(),
                r.seed.to_string(),
                r.sigma_d().to_string(),
                r.sigma_p().to_string(),
                r.hinf().to_string(),
            ]
        }),
    )
}

/// Empirical CDF of one perturbation study, labelled like the sweep table.
pub fn perturbation_csv(study: &PerturbationStudy, theta: f64, method: &str, seed: u64) -> String {
    table(
        &["theta", "method", "seed", "sigma_p", "cdf"],
        study.empirical_cdf().into_iter().map(|(x, p)| {
            vec![theta.to_string(), method.to_string(), seed.to_string(), x.to_string(), p.to_string()]
        }),
    )
}

/// Edge list `source,target` of the plant coupling graph.
pub fn plant_edges_csv(sys: &SpatialSystem) -> String {
    table(
        &["source", "target"],
        sys.edges().into_iter().map(|(i, j)| vec![i.to_string(), j.to_string()]),
    )
}

/// Edge list of a gain's support: input `i` reads state `j`.
pub fn gain_edges_csv(f: &FeedbackGain<f64>) -> String {
    let mut rows = Vec::new();
    for i in 0..f.0.nrows() {
        for j in 0..f.0.ncols() {
            if f.0[(i, j)] != 0.0 {
                rows.push(vec![i.to_string(), j.to_string(), f.0[(i, j)].to_string()]);
            }
        }
    }
    table(&["input", "state", "value"], rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trips() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -2.5, 3.0, 0.1, 1e-300, -0.0]);
        assert_eq!(parse_matrix_csv(&matrix_to_csv(&m)).unwrap(), m);
        assert_eq!(parse_matrix_json(&matrix_to_json(&m)).unwrap(), m);
        let j: MatrixJson = (&m).into();
        assert_eq!(j.data[..3], [1.0, -2.5, 3.0]);
        assert_eq!(parse_matrix_json("[[1, 2], [3, 4]]").unwrap(), DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert!(parse_matrix_json(r#"{"rows":2,"cols":2,"data":[1,2,3]}"#).is_err());
        assert!(parse_matrix_csv("1,2\n3\n").is_err());
        assert_eq!(parse_matrix_csv(" 1, 2\n\n3 ,4\n").unwrap().shape(), (2, 2));
    }

    #[test]
    fn system_and_region_round_trip() {
        let sys = crate::experiments::gen_dense_gaussian(&crate::experiments::DenseGaussianConfig { n: 3, m: 2, seed: 1 }).unwrap();
        assert_eq!(parse_system_json(&system_to_json(&sys)).unwrap(), sys);
        let v: serde_json::Value = serde_json::from_str(&system_to_json(&sys)).unwrap();
        for k in ["A", "B", "Bv", "C", "Dgu", "Dgv"] {
            assert!(v.get(k).is_some());
        }
        let region = EllipsoidRegion::new(
            DMatrix::from_row_slice(1, 2, &[0.5, -1.0]),
            DMatrix::identity(2, 2) * 2.0,
            DMatrix::identity(1, 1),
            1.5,
        )
        .unwrap();
        let back = parse_region_json(&region_to_json(&region)).unwrap();
        assert_eq!(back.f_o(), region.f_o());
        assert_eq!(back.z(), region.z());
        assert_eq!(back.r(), region.r());
        assert_eq!(back.gamma(), 1.5);
    }

    #[test]
    fn non_finite_values_serialize_as_null() {
        assert_eq!(to_json(&f64::INFINITY), "null\n");
    }
}
