//! File formats.
//!
//! Cubes and 4-way tensors use a small self-describing binary layout: a text
//! header of `key=value` lines closed by `end_header`, then little-endian
//! floats. Cube payloads are band-sequential with `n1` fastest inside each
//! band; tensor payloads follow [`Tensor4`] element order. Matrices are
//! headered CSV with shortest round-trip float formatting. Maps are rendered
//! as binary PPM images.
//!
//! ```text
//! HSCUBE1
//! n1=50
//! n2=50
//! bands=50
//! dtype=f32
//! order=band-sequential
//! endianness=little
//! end_header
//! ```
//!
//! # ENVI-style band-sequential files
//!
//! A BSQ raster with `interleave = bsq`, `byte order = 0` and `data type` 4
//! (f32) or 5 (f64) already has the cube payload layout when `n1` is taken as
//! the ENVI `samples` and `n2` as `lines`: each band is stored with samples
//! fastest. Converting is then a matter of prepending a header:
//!
//! ```text
//! printf 'HSCUBE1\nn1=%d\nn2=%d\nbands=%d\ndtype=f32\norder=band-sequential\nendianness=little\nend_header\n' \
//!     "$samples" "$lines" "$bands" | cat - scene.img > scene.hscube
//! ```
//!
//! `header offset` bytes must be stripped from the raster first, big-endian
//! files (`byte order = 1`) need their words swapped, and integer data types
//! must be converted to floats. Images read this way appear transposed
//! (`n1` runs along a line), which does not affect unmixing.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, FormatError, Result};
use crate::extraction::PurePixelSets;
use crate::model::{AbundanceMatrix, EndmemberMatrix, ImageCube};
use crate::tensor::Tensor4;

pub const CUBE_MAGIC: &str = "HSCUBE1";
pub const TENSOR_MAGIC: &str = "HSTEN1";
const END_HEADER: &str = "end_header";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dtype {
    #[default]
    F32,
    F64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }
}

impl FromStr for Dtype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Dtype::F32),
            "f64" => Ok(Dtype::F64),
            other => Err(Error::arg(format!("unknown dtype `{other}` (expected f32 or f64)"))),
        }
    }
}

fn format_err(path: &Path, kind: FormatError) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        kind,
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn push_values(out: &mut Vec<u8>, values: impl Iterator<Item = f64>, dtype: Dtype) {
    for v in values {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
}

fn decode_values(payload: &[u8], dtype: Dtype) -> Vec<f64> {
    match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    }
}

/// Parsed header lines in file order, and the offset of the payload.
struct Header {
    entries: Vec<(String, String, usize)>,
    payload_offset: usize,
}

impl Header {
    fn parse(bytes: &[u8], magic: &'static str, path: &Path) -> Result<Header> {
        let first_end = bytes.iter().position(|&b| b == b'\n').unwrap_or(bytes.len());
        let first = String::from_utf8_lossy(&bytes[..first_end]);
        if first != magic {
            let found: String = first.chars().take(32).collect();
            return Err(format_err(path, FormatError::BadMagic { expected: magic, found }));
        }
        let mut offset = first_end + 1;
        let mut entries = Vec::new();
        loop {
            if offset >= bytes.len() {
                return Err(format_err(
                    path,
                    FormatError::Header {
                        offset: bytes.len(),
                        message: format!("missing `{END_HEADER}` line"),
                    },
                ));
            }
            let end = bytes[offset..]
                .iter()
                .position(|&b| b == b'\n')
                .map(|p| offset + p)
                .ok_or_else(|| {
                    format_err(
                        path,
                        FormatError::Header {
                            offset,
                            message: "unterminated header line".into(),
                        },
                    )
                })?;
            let line = std::str::from_utf8(&bytes[offset..end]).map_err(|_| {
                format_err(
                    path,
                    FormatError::Header {
                        offset,
                        message: "header line is not UTF-8".into(),
                    },
                )
            })?;
            if line == END_HEADER {
                return Ok(Header {
                    entries,
                    payload_offset: end + 1,
                });
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                format_err(
                    path,
                    FormatError::Header {
                        offset,
                        message: format!("expected key=value, found `{line}`"),
                    },
                )
            })?;
            if entries.iter().any(|(k, _, _)| k == key) {
                return Err(format_err(
                    path,
                    FormatError::Header {
                        offset,
                        message: format!("duplicate key `{key}`"),
                    },
                ));
            }
            entries.push((key.trim().to_string(), value.trim().to_string(), offset));
            offset = end + 1;
        }
    }

    fn check_keys(&self, allowed: &[&str], path: &Path) -> Result<()> {
        for (k, _, off) in &self.entries {
            if !allowed.contains(&k.as_str()) {
                return Err(format_err(
                    path,
                    FormatError::Header {
                        offset: *off,
                        message: format!("unknown key `{k}`"),
                    },
                ));
            }
        }
        Ok(())
    }

    fn get(&self, key: &str, path: &Path) -> Result<(&str, usize)> {
        self.entries
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, off)| (v.as_str(), *off))
            .ok_or_else(|| {
                format_err(
                    path,
                    FormatError::Header {
                        offset: self.payload_offset,
                        message: format!("missing key `{key}`"),
                    },
                )
            })
    }

    fn dim(&self, key: &str, path: &Path) -> Result<usize> {
        let (v, off) = self.get(key, path)?;
        parse_dim(v, off, key, path)
    }

    fn expect(&self, key: &str, want: &str, path: &Path) -> Result<()> {
        let (v, off) = self.get(key, path)?;
        if v != want {
            return Err(format_err(
                path,
                FormatError::Header {
                    offset: off,
                    message: format!("unsupported {key} `{v}` (expected `{want}`)"),
                },
            ));
        }
        Ok(())
    }

    fn dtype(&self, path: &Path) -> Result<Dtype> {
        let (v, off) = self.get("dtype", path)?;
        v.parse().map_err(|_| {
            format_err(
                path,
                FormatError::Header {
                    offset: off,
                    message: format!("unsupported dtype `{v}`"),
                },
            )
        })
    }

    fn payload<'a>(&self, bytes: &'a [u8], values: usize, dtype: Dtype, path: &Path) -> Result<&'a [u8]> {
        let expected = values
            .checked_mul(dtype.size())
            .ok_or_else(|| format_err(path, FormatError::DimMismatch("declared dimensions overflow".into())))?;
        let found = bytes.len() - self.payload_offset;
        if found < expected {
            return Err(format_err(
                path,
                FormatError::Truncated {
                    offset: self.payload_offset,
                    expected,
                    found,
                },
            ));
        }
        if found > expected {
            return Err(format_err(
                path,
                FormatError::Trailing {
                    offset: self.payload_offset + expected,
                    extra: found - expected,
                },
            ));
        }
        Ok(&bytes[self.payload_offset..])
    }
}

fn parse_dim(v: &str, offset: usize, key: &str, path: &Path) -> Result<usize> {
    match v.parse::<usize>() {
        Ok(d) if d > 0 => Ok(d),
        _ => Err(format_err(
            path,
            FormatError::Header {
                offset,
                message: format!("`{key}` must be a positive integer, found `{v}`"),
            },
        )),
    }
}

pub fn encode_cube(cube: &ImageCube, dtype: Dtype) -> Vec<u8> {
    let header = format!(
        "{CUBE_MAGIC}\nn1={}\nn2={}\nbands={}\ndtype={}\norder=band-sequential\nendianness=little\n{END_HEADER}\n",
        cube.rows(),
        cube.cols(),
        cube.bands(),
        dtype.as_str()
    );
    let mut out = header.into_bytes();
    out.reserve(cube.matrix().len() * dtype.size());
    // Band-sequential: the transpose stores each band contiguously.
    push_values(&mut out, cube.matrix().transpose().iter().copied(), dtype);
    out
}

/// Decodes a cube; `path` only labels errors.
pub fn decode_cube(bytes: &[u8], path: &Path) -> Result<ImageCube> {
    let h = Header::parse(bytes, CUBE_MAGIC, path)?;
    h.check_keys(&["n1", "n2", "bands", "dtype", "order", "endianness"], path)?;
    let (n1, n2, bands) = (h.dim("n1", path)?, h.dim("n2", path)?, h.dim("bands", path)?);
    let dtype = h.dtype(path)?;
    h.expect("order", "band-sequential", path)?;
    h.expect("endianness", "little", path)?;
    let count = n1
        .checked_mul(n2)
        .and_then(|n| n.checked_mul(bands))
        .ok_or_else(|| format_err(path, FormatError::DimMismatch("declared dimensions overflow".into())))?;
    let values = decode_values(h.payload(bytes, count, dtype, path)?, dtype);
    let data = DMatrix::from_row_slice(bands, n1 * n2, &values);
    ImageCube::new(n1, n2, data)
}

pub fn write_cube(path: impl AsRef<Path>, cube: &ImageCube, dtype: Dtype) -> Result<()> {
    write_bytes(path.as_ref(), &encode_cube(cube, dtype))
}

pub fn read_cube(path: impl AsRef<Path>) -> Result<ImageCube> {
    let path = path.as_ref();
    decode_cube(&read_bytes(path)?, path)
}

pub fn encode_tensor(t: &Tensor4, dtype: Dtype) -> Vec<u8> {
    let [a, b, c, d] = t.dims();
    let mut out = format!(
        "{TENSOR_MAGIC}\ndims={a},{b},{c},{d}\ndtype={}\nendianness=little\n{END_HEADER}\n",
        dtype.as_str()
    )
    .into_bytes();
    push_values(&mut out, t.data().iter().copied(), dtype);
    out
}

pub fn decode_tensor(bytes: &[u8], path: &Path) -> Result<Tensor4> {
    let h = Header::parse(bytes, TENSOR_MAGIC, path)?;
    h.check_keys(&["dims", "dtype", "endianness"], path)?;
    let (v, off) = h.get("dims", path)?;
    let parts: Vec<&str> = v.split(',').collect();
    if parts.len() != 4 {
        return Err(format_err(
            path,
            FormatError::Header {
                offset: off,
                message: format!("`dims` needs four entries, found `{v}`"),
            },
        ));
    }
    let mut dims = [0; 4];
    for (d, p) in dims.iter_mut().zip(&parts) {
        *d = parse_dim(p.trim(), off, "dims", path)?;
    }
    let dtype = h.dtype(path)?;
    h.expect("endianness", "little", path)?;
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| format_err(path, FormatError::DimMismatch("declared dimensions overflow".into())))?;
    let values = decode_values(h.payload(bytes, count, dtype, path)?, dtype);
    Tensor4::new(dims, values)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor4, dtype: Dtype) -> Result<()> {
    write_bytes(path.as_ref(), &encode_tensor(t, dtype))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor4> {
    let path = path.as_ref();
    decode_tensor(&read_bytes(path)?, path)
}

/// Reads a tensor and checks it has the given dimensions.
pub fn read_tensor_with_dims(path: impl AsRef<Path>, dims: [usize; 4]) -> Result<Tensor4> {
    let path = path.as_ref();
    let t = read_tensor(path)?;
    if t.dims() != dims {
        return Err(format_err(
            path,
            FormatError::DimMismatch(format!("tensor is {:?}, expected {:?}", t.dims(), dims)),
        ));
    }
    Ok(t)
}

/// A headered numeric CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub values: DMatrix<f64>,
}

/// Formats a numeric table; floats use the shortest representation that parses back exactly.
pub fn format_csv(header: &[String], values: &DMatrix<f64>) -> Result<String> {
    if header.len() != values.ncols() {
        return Err(Error::shape(format!(
            "{} header names for {} columns",
            header.len(),
            values.ncols()
        )));
    }
    if let Some(bad) = header.iter().find(|h| h.contains([',', '\n', '\r'])) {
        return Err(Error::arg(format!("column name `{bad}` contains a separator")));
    }
    let mut s = header.join(",");
    s.push('\n');
    for row in values.row_iter() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            write!(s, "{v}").unwrap();
        }
        s.push('\n');
    }
    Ok(s)
}

/// Parses a headered numeric CSV. Rows and columns in errors are 1-based,
/// with the header as row 1.
pub fn parse_csv(text: &str, path: &Path) -> Result<CsvTable> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines
        .next()
        .ok_or_else(|| format_err(path, FormatError::DimMismatch("empty CSV file".into())))?;
    let header: Vec<String> = head.split(',').map(|h| h.trim().to_string()).collect();
    let width = header.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, line) in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != width {
            return Err(format_err(
                path,
                FormatError::DimMismatch(format!(
                    "row {} has {} cells, header has {width}",
                    i + 1,
                    cells.len()
                )),
            ));
        }
        for (j, c) in cells.iter().enumerate() {
            let v: f64 = c.trim().parse().map_err(|_| {
                format_err(
                    path,
                    FormatError::Parse {
                        row: i + 1,
                        column: j + 1,
                        cell: c.to_string(),
                    },
                )
            })?;
            values.push(v);
        }
        rows += 1;
    }
    Ok(CsvTable {
        header,
        values: DMatrix::from_row_slice(rows, width, &values),
    })
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<CsvTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_bytes(path, text.as_bytes())
}

fn endmember_names(m: &EndmemberMatrix) -> Vec<String> {
    m.names
        .clone()
        .unwrap_or_else(|| (0..m.count()).map(|k| format!("em{k}")).collect())
}

/// Endmember spectra as CSV, one row per band, with a leading `wavelength`
/// column when wavelengths are known.
pub fn format_endmembers(m: &EndmemberMatrix) -> Result<String> {
    let mut header = endmember_names(m);
    match &m.wavelengths {
        Some(w) => {
            header.insert(0, "wavelength".into());
            let values = DMatrix::from_fn(m.bands(), m.count() + 1, |l, j| {
                if j == 0 {
                    w[l]
                } else {
                    m.matrix()[(l, j - 1)]
                }
            });
            format_csv(&header, &values)
        }
        None => format_csv(&header, m.matrix()),
    }
}

/// Inverse of [`format_endmembers`]. A first column whose name starts with
/// `wavelength` is taken as band positions.
pub fn parse_endmembers(text: &str, path: &Path) -> Result<EndmemberMatrix> {
    let table = parse_csv(text, path)?;
    let has_wl = table.header.first().is_some_and(|h| h.starts_with("wavelength"));
    let first = has_wl as usize;
    if table.values.ncols() <= first || table.values.nrows() == 0 {
        return Err(format_err(path, FormatError::DimMismatch("no endmember columns".into())));
    }
    let values = table.values.columns(first, table.values.ncols() - first).into_owned();
    let mut m = EndmemberMatrix::new(values).map_err(|e| match e {
        Error::InvalidArgument(msg) => format_err(path, FormatError::DimMismatch(msg)),
        other => other,
    })?;
    m.names = Some(table.header[first..].to_vec());
    if has_wl {
        m.wavelengths = Some(table.values.column(0).iter().copied().collect());
    }
    Ok(m)
}

pub fn write_endmembers(path: impl AsRef<Path>, m: &EndmemberMatrix) -> Result<()> {
    write_text(path.as_ref(), &format_endmembers(m)?)
}

pub fn read_endmembers(path: impl AsRef<Path>) -> Result<EndmemberMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_endmembers(&text, path)
}

const BUNDLED_LIBRARY: &str = include_str!("../data/endmember_library.csv");

/// The bundled five-material library (vegetation, soil, roof, water, concrete),
/// 224 bands over 0.4–2.5 µm. Resample with [`EndmemberMatrix::resample`].
pub fn bundled_library() -> EndmemberMatrix {
    parse_endmembers(BUNDLED_LIBRARY, Path::new("<bundled library>")).expect("bundled library parses")
}

/// Abundances as CSV: one row per pixel in linear order, columns `n1,n2`
/// followed by one column per endmember.
pub fn format_abundances(a: &AbundanceMatrix, names: Option<&[String]>) -> Result<String> {
    let r = a.endmembers();
    let (n1, _) = a.image_dims();
    let mut header = vec!["n1".to_string(), "n2".to_string()];
    match names {
        Some(ns) if ns.len() == r => header.extend(ns.iter().cloned()),
        Some(ns) => return Err(Error::shape(format!("{} names for {r} endmembers", ns.len()))),
        None => header.extend((0..r).map(|k| format!("em{k}"))),
    }
    let values = DMatrix::from_fn(a.pixels(), r + 2, |n, j| match j {
        0 => (n % n1) as f64,
        1 => (n / n1) as f64,
        _ => a.matrix()[(j - 2, n)],
    });
    format_csv(&header, &values)
}

/// Inverse of [`format_abundances`]; rows may come in any order but every
/// pixel must appear exactly once. Simplex constraints are not checked.
pub fn parse_abundances(text: &str, path: &Path) -> Result<AbundanceMatrix> {
    let table = parse_csv(text, path)?;
    let dim_err = |m: String| format_err(path, FormatError::DimMismatch(m));
    if table.header.len() < 3 || table.header[0] != "n1" || table.header[1] != "n2" {
        return Err(dim_err("abundance CSV needs columns n1,n2 and at least one endmember".into()));
    }
    let v = &table.values;
    let coord = |x: f64| -> Option<usize> { (x >= 0.0 && x.fract() == 0.0 && x < 1e9).then_some(x as usize) };
    let mut coords = Vec::with_capacity(v.nrows());
    for i in 0..v.nrows() {
        match (coord(v[(i, 0)]), coord(v[(i, 1)])) {
            (Some(a), Some(b)) => coords.push((a, b)),
            _ => return Err(dim_err(format!("row {} has invalid pixel coordinates", i + 2))),
        }
    }
    let n1 = coords.iter().map(|c| c.0).max().map_or(0, |m| m + 1);
    let n2 = coords.iter().map(|c| c.1).max().map_or(0, |m| m + 1);
    if n1 * n2 != v.nrows() || n1 * n2 == 0 {
        return Err(dim_err(format!("{} rows do not tile a {n1}x{n2} image", v.nrows())));
    }
    let r = v.ncols() - 2;
    let mut out = DMatrix::zeros(r, n1 * n2);
    let mut seen = vec![false; n1 * n2];
    for (i, &(a, b)) in coords.iter().enumerate() {
        let n = a + n1 * b;
        if seen[n] {
            return Err(dim_err(format!("pixel ({a}, {b}) appears twice")));
        }
        seen[n] = true;
        for k in 0..r {
            out[(k, n)] = v[(i, k + 2)];
        }
    }
    AbundanceMatrix::unchecked(out, n1, n2)
}

pub fn write_abundances(path: impl AsRef<Path>, a: &AbundanceMatrix, names: Option<&[String]>) -> Result<()> {
    write_text(path.as_ref(), &format_abundances(a, names)?)
}

pub fn read_abundances(path: impl AsRef<Path>) -> Result<AbundanceMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_abundances(&text, path)
}

/// Abundances as an `N1 × N2 × 1 × R` tensor.
pub fn abundances_to_tensor(a: &AbundanceMatrix) -> Tensor4 {
    let (n1, n2) = a.image_dims();
    Tensor4::from_fn([n1, n2, 1, a.endmembers()], |[i, j, _, k]| a.matrix()[(k, i + n1 * j)])
}

pub fn abundances_from_tensor(t: &Tensor4) -> Result<AbundanceMatrix> {
    let [n1, n2, one, r] = t.dims();
    if one != 1 {
        return Err(Error::shape(format!("abundance tensor must have a singleton third mode, got {:?}", t.dims())));
    }
    AbundanceMatrix::unchecked(DMatrix::from_fn(r, n1 * n2, |k, n| t.get([n % n1, n / n1, 0, k])), n1, n2)
}

/// Pure pixel sets as CSV rows `endmember,n1,n2`.
pub fn format_pure_pixels(sets: &PurePixelSets) -> String {
    let mut s = String::from("endmember,n1,n2\n");
    for (k, set) in sets.sets.iter().enumerate() {
        for (a, b) in set {
            writeln!(s, "{k},{a},{b}").unwrap();
        }
    }
    s
}

/// Inverse of [`format_pure_pixels`] for `endmembers` sets.
pub fn parse_pure_pixels(text: &str, endmembers: usize, path: &Path) -> Result<PurePixelSets> {
    let table = parse_csv(text, path)?;
    if table.header != ["endmember", "n1", "n2"] {
        return Err(format_err(
            path,
            FormatError::DimMismatch("pure pixel CSV needs columns endmember,n1,n2".into()),
        ));
    }
    let mut sets = vec![Vec::new(); endmembers];
    for (i, row) in table.values.row_iter().enumerate() {
        let ok = row.iter().all(|&x| x >= 0.0 && x.fract() == 0.0);
        let k = row[0] as usize;
        if !ok || k >= endmembers {
            return Err(format_err(
                path,
                FormatError::DimMismatch(format!("row {} is not a valid pure pixel entry", i + 2)),
            ));
        }
        sets[k].push((row[1] as usize, row[2] as usize));
    }
    Ok(PurePixelSets::from_sets(sets))
}

pub fn write_pure_pixels(path: impl AsRef<Path>, sets: &PurePixelSets) -> Result<()> {
    write_text(path.as_ref(), &format_pure_pixels(sets))
}

pub fn read_pure_pixels(path: impl AsRef<Path>, endmembers: usize) -> Result<PurePixelSets> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pure_pixels(&text, endmembers, path)
}

/// Blue-green-red map for `v` in `[0, 1]` (values outside are clamped).
pub fn colormap(v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    let c = |x: f64| (255.0 * x).round() as u8;
    [c(v), c(1.0 - (2.0 * v - 1.0).abs()), c(1.0 - v)]
}

/// Binary PPM of an `N1 × N2` field: `N1` rows of `N2` pixels.
pub fn heatmap_ppm(field: &DMatrix<f64>) -> Result<Vec<u8>> {
    if let Some(bad) = field.iter().position(|v| !v.is_finite()) {
        return Err(Error::arg(format!(
            "cannot render non-finite value at ({}, {})",
            bad % field.nrows(),
            bad / field.nrows()
        )));
    }
    let mut out = format!("P6\n{} {}\n255\n", field.ncols(), field.nrows()).into_bytes();
    for i in 0..field.nrows() {
        for j in 0..field.ncols() {
            out.extend_from_slice(&colormap(field[(i, j)]));
        }
    }
    Ok(out)
}

pub fn write_heatmap(path: impl AsRef<Path>, field: &DMatrix<f64>) -> Result<()> {
    write_bytes(path.as_ref(), &heatmap_ppm(field)?)
}

/// Scaling factors of endmember `k` averaged over bands, as an `N1 × N2` map.
pub fn psi_band_mean(psi: &Tensor4, k: usize) -> DMatrix<f64> {
    let [n1, n2, l, _] = psi.dims();
    DMatrix::from_fn(n1, n2, |i, j| (0..l).map(|b| psi.get([i, j, b, k])).sum::<f64>() / l as f64)
}

/// Writes `abundance_<k>.ppm` for every endmember into `dir`.
pub fn render_abundances(dir: impl AsRef<Path>, a: &AbundanceMatrix) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    (0..a.endmembers())
        .map(|k| {
            let p = dir.join(format!("abundance_{k}.ppm"));
            write_heatmap(&p, &a.map(k))?;
            Ok(p)
        })
        .collect()
}

/// Writes `psi_mean_<k>.ppm` for every endmember into `dir`, each band-mean
/// map scaled by its own maximum.
pub fn render_psi(dir: impl AsRef<Path>, psi: &Tensor4) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    (0..psi.dims()[3])
        .map(|k| {
            let mut m = psi_band_mean(psi, k);
            let max = m.max();
            if max > 0.0 {
                m /= max;
            }
            let p = dir.join(format!("psi_mean_{k}.ppm"));
            write_heatmap(&p, &m)?;
            Ok(p)
        })
        .collect()
}
