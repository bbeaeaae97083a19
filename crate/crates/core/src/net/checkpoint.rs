//! Versioned binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "IVTSCNN\0"
//! version  u32
//! input    u32      image side length
//! channels u32      input channels (always 1)
//! classes  u32
//! layers   u32      followed by one record per layer:
//!                   tag u8 (1 conv, 2 relu, 3 pool), conv: kernel u32, maps u32; pool: window u32
//! count    u64      number of parameters
//! payload  count x f64, conv kernels in layer order then the dense matrix
//! ```

use std::io::{Read, Write};

use super::{Architecture, CnnModel, LayerSpec};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"IVTSCNN\0";
pub const CHECKPOINT_VERSION: u32 = 1;

const TAG_CONV: u8 = 1;
const TAG_RELU: u8 = 2;
const TAG_POOL: u8 = 3;

fn u32_of(value: usize, what: &str) -> Result<u32> {
    u32::try_from(value).map_err(|_| Error::Checkpoint(format!("{what} {value} does not fit in u32")))
}

pub fn write_checkpoint<W: Write>(model: &CnnModel, mut out: W) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(64 + 8 * model.parameter_count());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    let header = [
        Ok(CHECKPOINT_VERSION),
        u32_of(model.input_size(), "input size"),
        Ok(1),
        u32_of(model.classes(), "class count"),
        u32_of(model.architecture().0.len(), "layer count"),
    ];
    for field in header {
        let field = field.map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e.to_string()))?;
        buf.extend_from_slice(&field.to_le_bytes());
    }
    for spec in &model.architecture().0 {
        match *spec {
            LayerSpec::Conv { kernel, maps } => {
                buf.push(TAG_CONV);
                buf.extend_from_slice(&(kernel as u32).to_le_bytes());
                buf.extend_from_slice(&(maps as u32).to_le_bytes());
            }
            LayerSpec::Relu => buf.push(TAG_RELU),
            LayerSpec::MaxPool { window } => {
                buf.push(TAG_POOL);
                buf.extend_from_slice(&(window as u32).to_le_bytes());
            }
        }
    }
    buf.extend_from_slice(&(model.parameter_count() as u64).to_le_bytes());
    for block in model.parameters() {
        for v in block {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<CnnModel> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let input_size = cur.u32()?;
    let channels = cur.u32()?;
    if channels != 1 {
        return Err(Error::Checkpoint(format!("unsupported input channel count {channels}")));
    }
    let classes = cur.u32()?;
    let n_layers = cur.u32()?;
    let mut specs = Vec::with_capacity(n_layers.min(1024));
    for _ in 0..n_layers {
        specs.push(match cur.u8()? {
            TAG_CONV => LayerSpec::Conv {
                kernel: cur.u32()?,
                maps: cur.u32()?,
            },
            TAG_RELU => LayerSpec::Relu,
            TAG_POOL => LayerSpec::MaxPool { window: cur.u32()? },
            tag => return Err(Error::Checkpoint(format!("unknown layer tag {tag}"))),
        });
    }
    let mut model = CnnModel::zeros(&Architecture(specs), input_size, classes)
        .map_err(|e| Error::Checkpoint(format!("invalid geometry: {e}")))?;
    let count = cur.u64()?;
    if count != model.parameter_count() as u64 {
        return Err(Error::Checkpoint(format!(
            "payload holds {count} parameters, geometry needs {}",
            model.parameter_count()
        )));
    }
    for block in model.parameters_mut() {
        for v in block.iter_mut() {
            *v = cur.f64()?;
        }
    }
    if cur.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    Ok(model)
}
