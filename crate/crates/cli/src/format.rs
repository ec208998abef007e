//! On-disk formats: T3B tensors and TCNN model checkpoints.
//!
//! T3B: `"T3B1"`, then channels, height, width as u32 LE, a u8 dtype tag
//! (0 = f64, 1 = i32), then the elements little-endian in channel-major order.
//!
//! TCNN: `"TCNN"`, a u32 LE version, then five T3B tensors:
//! an i32 shape descriptor `[in_c, in_h, in_w, stride_v, stride_h, classes]`,
//! conv weights `(out·in, kH, kW)`, conv bias `(1, 1, out)`,
//! dense weights `(1, classes, features)` and dense bias `(1, 1, classes)`.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;
use weavelab_core::adversary::TinyCnn;
use weavelab_core::{ConvGeometry, FilterBank, Matrix, Tensor3};

pub const T3B_MAGIC: &[u8; 4] = b"T3B1";
pub const TCNN_MAGIC: &[u8; 4] = b"TCNN";
pub const TCNN_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },
    #[error("unknown dtype tag {0}")]
    UnknownDtype(u8),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("expected {expected} tensor, found {found}")]
    WrongDtype { expected: &'static str, found: &'static str },
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Core(#[from] weavelab_core::Error),
}

pub type Result<T> = std::result::Result<T, FormatError>;

/// A T3B tensor of either element type.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    F64(Tensor3<f64>),
    I32(Tensor3<i32>),
}

impl AnyTensor {
    pub fn dtype_name(&self) -> &'static str {
        match self {
            AnyTensor::F64(_) => "f64",
            AnyTensor::I32(_) => "i32",
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        match self {
            AnyTensor::F64(t) => t.dims(),
            AnyTensor::I32(t) => t.dims(),
        }
    }

    pub fn into_f64(self) -> Result<Tensor3<f64>> {
        match self {
            AnyTensor::F64(t) => Ok(t),
            other => Err(FormatError::WrongDtype { expected: "f64", found: other.dtype_name() }),
        }
    }

    pub fn into_i32(self) -> Result<Tensor3<i32>> {
        match self {
            AnyTensor::I32(t) => Ok(t),
            other => Err(FormatError::WrongDtype { expected: "i32", found: other.dtype_name() }),
        }
    }
}

impl From<Tensor3<f64>> for AnyTensor {
    fn from(t: Tensor3<f64>) -> Self {
        AnyTensor::F64(t)
    }
}

impl From<Tensor3<i32>> for AnyTensor {
    fn from(t: Tensor3<i32>) -> Self {
        AnyTensor::I32(t)
    }
}

fn dim_u32(d: usize) -> io::Result<u32> {
    u32::try_from(d).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "dimension exceeds u32"))
}

pub fn write_t3b<W: Write>(w: &mut W, t: &AnyTensor) -> Result<()> {
    let (c, h, wd) = t.dims();
    w.write_all(T3B_MAGIC)?;
    for d in [c, h, wd] {
        w.write_all(&dim_u32(d)?.to_le_bytes())?;
    }
    match t {
        AnyTensor::F64(t) => {
            w.write_all(&[0])?;
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        AnyTensor::I32(t) => {
            w.write_all(&[1])?;
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FormatError::Malformed("truncated data".into()),
        _ => FormatError::Io(e),
    })?;
    Ok(buf)
}

fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<()> {
    let found = read_array::<4, _>(r)?;
    if &found != magic {
        return Err(FormatError::BadMagic { found, expected: *magic });
    }
    Ok(())
}

/// Reads one T3B tensor, leaving the reader just past its last element.
pub fn read_t3b<R: Read>(r: &mut R) -> Result<AnyTensor> {
    expect_magic(r, T3B_MAGIC)?;
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = u32::from_le_bytes(read_array(r)?) as usize;
    }
    let [c, h, w] = dims;
    let n = c
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| FormatError::Malformed(format!("dims {c}x{h}x{w} overflow")))?;
    let tag = read_array::<1, _>(r)?[0];
    // Read incrementally so a lying header cannot force a huge allocation.
    let t = match tag {
        0 => {
            let mut data = Vec::new();
            for _ in 0..n {
                data.push(f64::from_le_bytes(read_array(r)?));
            }
            AnyTensor::F64(Tensor3::new(c, h, w, data)?)
        }
        1 => {
            let mut data = Vec::new();
            for _ in 0..n {
                data.push(i32::from_le_bytes(read_array(r)?));
            }
            AnyTensor::I32(Tensor3::new(c, h, w, data)?)
        }
        other => return Err(FormatError::UnknownDtype(other)),
    };
    Ok(t)
}

fn expect_eof<R: Read>(r: &mut R) -> Result<()> {
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(FormatError::Malformed("trailing bytes after payload".into()));
    }
    Ok(())
}

pub fn t3b_bytes(t: &AnyTensor) -> Vec<u8> {
    let mut buf = Vec::new();
    write_t3b(&mut buf, t).expect("writing to a Vec cannot fail for u32-sized dims");
    buf
}

/// Parses a complete T3B buffer; trailing bytes are an error.
pub fn t3b_from_bytes(mut bytes: &[u8]) -> Result<AnyTensor> {
    let t = read_t3b(&mut bytes)?;
    expect_eof(&mut bytes)?;
    Ok(t)
}

pub fn load_t3b(path: &Path) -> Result<AnyTensor> {
    t3b_from_bytes(&fs::read(path)?)
}

pub fn save_t3b(path: &Path, t: &AnyTensor) -> Result<()> {
    fs::write(path, t3b_bytes(t))?;
    Ok(())
}

fn to_i32(v: usize, what: &str) -> Result<i32> {
    i32::try_from(v).map_err(|_| FormatError::Malformed(format!("{what} {v} does not fit in i32")))
}

fn from_i32(v: i32, what: &str) -> Result<usize> {
    usize::try_from(v)
        .ok()
        .filter(|&v| v > 0)
        .ok_or_else(|| FormatError::Malformed(format!("{what} must be positive, got {v}")))
}

pub fn checkpoint_bytes(model: &TinyCnn) -> Result<Vec<u8>> {
    let (c, h, w) = model.input_dims();
    let g = model.geometry();
    let conv = model.conv();
    let (oc, ic, kh, kw) = conv.dims();
    let desc = [
        to_i32(c, "channels")?,
        to_i32(h, "height")?,
        to_i32(w, "width")?,
        to_i32(g.stride_v, "stride")?,
        to_i32(g.stride_h, "stride")?,
        to_i32(model.num_classes(), "classes")?,
    ];
    let fc = model.fc();
    let tensors: [AnyTensor; 5] = [
        Tensor3::new(1, 1, 6, desc.to_vec())?.into(),
        Tensor3::new(oc * ic, kh, kw, conv.weights().to_vec())?.into(),
        Tensor3::new(1, 1, oc, conv.bias().to_vec())?.into(),
        Tensor3::new(1, fc.rows(), fc.cols(), fc.data().to_vec())?.into(),
        Tensor3::new(1, 1, fc.rows(), model.fc_bias().to_vec())?.into(),
    ];
    let mut buf = Vec::new();
    buf.extend_from_slice(TCNN_MAGIC);
    buf.extend_from_slice(&TCNN_VERSION.to_le_bytes());
    for t in &tensors {
        write_t3b(&mut buf, t)?;
    }
    Ok(buf)
}

pub fn checkpoint_from_bytes(mut bytes: &[u8]) -> Result<TinyCnn> {
    let r = &mut bytes;
    expect_magic(r, TCNN_MAGIC)?;
    let version = u32::from_le_bytes(read_array(r)?);
    if version != TCNN_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let desc = read_t3b(r)?.into_i32()?;
    if desc.len() != 6 {
        return Err(FormatError::Malformed(format!("shape descriptor has {} entries, expected 6", desc.len())));
    }
    let d = desc.data();
    let input_dims = (from_i32(d[0], "channels")?, from_i32(d[1], "height")?, from_i32(d[2], "width")?);
    let geom = ConvGeometry::valid(from_i32(d[3], "stride")?, from_i32(d[4], "stride")?);
    let classes = from_i32(d[5], "classes")?;

    let weights = read_t3b(r)?.into_f64()?;
    let bias = read_t3b(r)?.into_f64()?;
    let fc_w = read_t3b(r)?.into_f64()?;
    let fc_b = read_t3b(r)?.into_f64()?;
    expect_eof(r)?;

    let (rows, kh, kw) = weights.dims();
    let ic = input_dims.0;
    if rows % ic != 0 {
        return Err(FormatError::Malformed(format!("{rows} kernel planes not divisible by {ic} input channels")));
    }
    let conv = FilterBank::new(rows / ic, ic, kh, kw, weights.into_data(), bias.into_data())?;
    let (_, fr, fcols) = fc_w.dims();
    if fr != classes {
        return Err(FormatError::Malformed(format!("dense layer has {fr} rows, descriptor says {classes} classes")));
    }
    let fc = Matrix::new(fr, fcols, fc_w.into_data())?;
    Ok(TinyCnn::from_parts(input_dims, conv, geom, fc, fc_b.into_data())?)
}

pub fn save_checkpoint(path: &Path, model: &TinyCnn) -> Result<()> {
    fs::write(path, checkpoint_bytes(model)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TinyCnn> {
    checkpoint_from_bytes(&fs::read(path)?)
}
