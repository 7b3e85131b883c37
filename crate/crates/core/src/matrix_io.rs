//! Matrix Market ingestion and solver output files.
//!
//! Only the `general` symmetry class with `real` or `integer` fields is
//! supported. Indices are 1-based on disk and 0-based in memory.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{LyapError, Result};
use crate::matrix::{MatrixHandle, Storage, StableSystem};
use crate::solver::{FactoredIterate, SolveReport, Sign, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Coordinate,
    Array,
}

fn parse_err(line: usize, message: impl Into<String>) -> LyapError {
    LyapError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_header(line: &str) -> Result<Layout> {
    let tokens: Vec<String> = line.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(1, format!("bad header `{line}`")));
    }
    let layout = match tokens[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return Err(parse_err(1, format!("unsupported format `{other}`"))),
    };
    if !matches!(tokens[3].as_str(), "real" | "integer" | "double") {
        return Err(parse_err(1, format!("unsupported field `{}`", tokens[3])));
    }
    if tokens[4] != "general" {
        return Err(parse_err(1, format!("unsupported symmetry `{}`", tokens[4])));
    }
    Ok(layout)
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| parse_err(line, format!("invalid {what}")))
}

/// Parses a Matrix Market stream. Coordinate files become sparse handles
/// with duplicates summed; array files become dense handles.
pub fn parse_matrix_market(reader: impl BufRead) -> Result<MatrixHandle> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let header = header.map_err(|e| parse_err(1, e.to_string()))?;
    let layout = parse_header(&header)?;

    let mut data = lines.filter_map(|(no, l)| match l {
        Ok(s) => {
            let t = s.trim().to_string();
            (!t.is_empty() && !t.starts_with('%')).then_some(Ok((no, t)))
        }
        Err(e) => Some(Err(parse_err(no, e.to_string()))),
    });

    let (size_no, size_line) = data.next().ok_or_else(|| parse_err(2, "missing size line"))??;
    let mut size = size_line.split_whitespace();
    let rows: usize = parse_num(size.next(), size_no, "row count")?;
    let cols: usize = parse_num(size.next(), size_no, "column count")?;
    if rows == 0 || cols == 0 {
        return Err(parse_err(size_no, "dimensions must be positive"));
    }

    match layout {
        Layout::Coordinate => {
            let nnz: usize = parse_num(size.next(), size_no, "entry count")?;
            let mut entries = Vec::with_capacity(nnz);
            for _ in 0..nnz {
                let (no, line) = data
                    .next()
                    .ok_or_else(|| parse_err(size_no, format!("expected {nnz} entries, found {}", entries.len())))??;
                let mut tok = line.split_whitespace();
                let i: usize = parse_num(tok.next(), no, "row index")?;
                let j: usize = parse_num(tok.next(), no, "column index")?;
                let v: f64 = parse_num(tok.next(), no, "value")?;
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(parse_err(no, format!("index ({i}, {j}) outside {rows}x{cols}")));
                }
                entries.push((i - 1, j - 1, v));
            }
            if let Some(extra) = data.next() {
                let (no, _) = extra?;
                return Err(parse_err(no, format!("more than the declared {nnz} entries")));
            }
            MatrixHandle::from_triplets(rows, cols, entries)
        }
        Layout::Array => {
            let total = rows * cols;
            let mut values = Vec::with_capacity(total);
            for item in data.by_ref() {
                let (no, line) = item?;
                for tok in line.split_whitespace() {
                    values.push(parse_num::<f64>(Some(tok), no, "value")?);
                }
                if values.len() >= total {
                    break;
                }
            }
            if values.len() != total {
                return Err(parse_err(size_no, format!("expected {total} values, found {}", values.len())));
            }
            if data.next().is_some() {
                return Err(parse_err(size_no, format!("more than the declared {total} values")));
            }
            Ok(MatrixHandle::from_dense(Mat::from_fn(rows, cols, |i, j| values[i + j * rows])))
        }
    }
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<MatrixHandle> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| LyapError::io(path, e))?;
    parse_matrix_market(BufReader::new(file))
}

/// Writes `m` in array layout, one value per line, column-major.
///
/// Values use the shortest representation that parses back to the same `f64`.
pub fn write_dense_array(out: &mut impl Write, m: MatRef<'_, f64>) -> std::io::Result<()> {
    writeln!(out, "%%MatrixMarket matrix array real general")?;
    writeln!(out, "{} {}", m.nrows(), m.ncols())?;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            writeln!(out, "{:e}", m[(i, j)])?;
        }
    }
    Ok(())
}

pub fn write_matrix_market(path: impl AsRef<Path>, m: &MatrixHandle) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| LyapError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let res = match m.storage() {
        Storage::DenseColumnMajor(d) => write_dense_array(&mut out, d.as_ref()),
        Storage::SparseCoordinate(_) => {
            let trip = m.triplets();
            (|| {
                writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
                writeln!(out, "{} {} {}", m.rows(), m.cols(), trip.len())?;
                for (i, j, v) in &trip {
                    writeln!(out, "{} {} {:e}", i + 1, j + 1, v)?;
                }
                Ok(())
            })()
        }
    };
    res.and_then(|_| out.flush()).map_err(|e| LyapError::io(path, e))
}

pub fn read_system(path_a: impl AsRef<Path>, path_b: impl AsRef<Path>) -> Result<StableSystem> {
    let a = read_matrix_market(path_a)?;
    let b = read_matrix_market(path_b)?;
    StableSystem::new(a, b)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TermEntry {
    pub u: String,
    pub w: String,
    pub sign: i8,
    pub width: usize,
}

/// Index file stored next to the factor matrices.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FactorIndex {
    pub n: usize,
    pub blocks: Vec<TermEntry>,
    pub hom: Option<TermEntry>,
    pub frontier: Option<TermEntry>,
}

pub const FACTOR_INDEX_FILE: &str = "index.json";

fn sign_to_int(s: Sign) -> i8 {
    match s {
        Sign::Plus => 1,
        Sign::Minus => -1,
    }
}

fn write_term(dir: &Path, stem: &str, t: &Term) -> Result<TermEntry> {
    let u = format!("{stem}_u.mtx");
    let w = format!("{stem}_w.mtx");
    for (name, m) in [(&u, &t.u), (&w, &t.w)] {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| LyapError::io(&path, e))?;
        let mut out = BufWriter::new(file);
        write_dense_array(&mut out, m.as_ref())
            .and_then(|_| out.flush())
            .map_err(|e| LyapError::io(&path, e))?;
    }
    Ok(TermEntry {
        u,
        w,
        sign: sign_to_int(t.sign),
        width: t.width(),
    })
}

fn read_term(dir: &Path, entry: &TermEntry) -> Result<Term> {
    let load = |name: &str| -> Result<Mat<f64>> {
        let m = read_matrix_market(dir.join(name))?;
        m.as_dense()
            .map(|r| r.to_owned())
            .ok_or_else(|| LyapError::InvalidIterate(format!("{name} is not a dense array")))
    };
    let sign = Sign::from_value(entry.sign as f64)
        .ok_or_else(|| LyapError::InvalidIterate(format!("sign must be +1 or -1, got {}", entry.sign)))?;
    let term = Term::new(load(&entry.u)?, load(&entry.w)?, sign)?;
    if term.width() != entry.width {
        return Err(LyapError::InvalidIterate(format!(
            "{} has width {}, index says {}",
            entry.u,
            term.width(),
            entry.width
        )));
    }
    Ok(term)
}

/// Persists an iterate as a directory of dense Matrix Market files plus `index.json`.
///
/// The files are written to a sibling temporary directory first and renamed
/// into place, so a failed write never leaves a partial directory at `dir`.
pub fn write_factors(iterate: &FactoredIterate, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    if !iterate.is_finite() {
        return Err(LyapError::InvalidIterate("iterate has non-finite entries".into()));
    }
    let staging = staging_dir(dir);
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| LyapError::io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| LyapError::io(&staging, e))?;
    let written = (|| -> Result<()> {
        let blocks = iterate
            .blocks()
            .iter()
            .enumerate()
            .map(|(i, t)| write_term(&staging, &format!("block_{i:04}"), t))
            .collect::<Result<Vec<_>>>()?;
        let hom = iterate.hom().map(|t| write_term(&staging, "hom", t)).transpose()?;
        let frontier = iterate.frontier().map(|t| write_term(&staging, "frontier", t)).transpose()?;
        let index = FactorIndex {
            n: iterate.n(),
            blocks,
            hom,
            frontier,
        };
        let path = staging.join(FACTOR_INDEX_FILE);
        let json = serde_json::to_string_pretty(&index)?;
        fs::write(&path, json).map_err(|e| LyapError::io(&path, e))
    })();
    if let Err(e) = written {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| LyapError::io(dir, e))?;
    }
    fs::rename(&staging, dir).map_err(|e| LyapError::io(dir, e))
}

fn staging_dir(dir: &Path) -> PathBuf {
    let mut name = dir.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".partial");
    dir.with_file_name(name)
}

pub fn read_factors(dir: impl AsRef<Path>) -> Result<FactoredIterate> {
    let dir = dir.as_ref();
    let path = dir.join(FACTOR_INDEX_FILE);
    let text = fs::read_to_string(&path).map_err(|e| LyapError::io(&path, e))?;
    let index: FactorIndex = serde_json::from_str(&text)?;
    let blocks = index
        .blocks
        .iter()
        .map(|e| read_term(dir, e))
        .collect::<Result<Vec<_>>>()?;
    let hom = index.hom.as_ref().map(|e| read_term(dir, e)).transpose()?;
    let frontier = index.frontier.as_ref().map(|e| read_term(dir, e)).transpose()?;
    FactoredIterate::from_parts(index.n, blocks, hom, frontier)
}

pub fn write_report(report: &SolveReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(report)?;
    fs::write(path, json).map_err(|e| LyapError::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<SolveReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| LyapError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
