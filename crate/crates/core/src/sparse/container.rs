//! The `SPNN` model container.
//!
//! All integers are little-endian. Layout:
//!
//! ```text
//! magic        4  "SPNN"
//! version      u16  (1)
//! flags        u16  bit 0: dense mode (checkpoint)
//! seed         u64
//! input        u32 ×3  channels, height, width
//! epochs       u32
//! lr           f32
//! layer count  u32
//! layers       per layer, see below
//! crc32        u32  over every preceding byte
//! ```
//!
//! Each layer starts with a header: kind `u8` (0 dense, 1 conv, 2 max-pool),
//! flags `u8` (bit 0: relu), name length `u8` and name bytes, dropout `f32`,
//! then the dims (`fan_in, fan_out` / `in_channels, filters, kernel, stride` /
//! `size, stride`, all `u32`). Weighted layers continue with either
//!
//! * sparse mode: index bits `u8`, entry count `u32`, the packed gap stream
//!   (`ceil(entries · bits / 8)` bytes), `entries` value `f32`s, or
//! * dense mode: every weight as `f32`, then the mask as one bit per weight,
//!
//! followed in both modes by one dense `f32` bias per unit.

use std::path::Path;

use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::network::{InputShape, LayerKind, LayerSpec, Model, TrainState};
use crate::pruning::MaskedParam;

use super::bitpack::{pack, packed_len, unpack};
use super::relative::{decode_relative, encode_dense, max_gap};

pub const MAGIC: [u8; 4] = *b"SPNN";
pub const VERSION: u16 = 1;
const FLAG_DENSE: u16 = 1;
const FILE_HEADER_BYTES: usize = 4 + 2 + 2 + 8 + 12 + 4 + 4 + 4;
const CRC_BYTES: usize = 4;

/// Index width used for a layer kind unless overridden.
pub fn default_index_bits(kind: &LayerKind) -> u8 {
    if kind.is_conv() {
        8
    } else {
        5
    }
}

/// How weights are written.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Encoding {
    /// Relative-index streams. `index_bits` overrides the per-kind width.
    Sparse { index_bits: Option<u8> },
    /// Every weight plus a mask bitmap; used for checkpoints.
    Dense,
}

impl Encoding {
    pub const SPARSE: Encoding = Encoding::Sparse { index_bits: None };
}

/// Byte accounting for one weighted layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerStorage {
    pub name: String,
    /// 0 for dense encoding.
    pub index_bits: u8,
    pub weights_total: usize,
    /// Stored entries, fillers included.
    pub entries: usize,
    pub fillers: usize,
    /// Weights and biases as plain `f32` arrays.
    pub dense_bytes: usize,
    pub value_bytes: usize,
    pub index_bytes: usize,
    pub bias_bytes: usize,
    pub header_bytes: usize,
}

impl LayerStorage {
    pub fn sparse_bytes(&self) -> usize {
        self.value_bytes + self.index_bytes + self.bias_bytes + self.header_bytes
    }

    /// Index bits per value bit, before byte padding.
    pub fn index_overhead(&self) -> f64 {
        if self.entries == 0 {
            0.0
        } else {
            self.index_bits as f64 / 32.0
        }
    }
}

/// Storage breakdown of an encoded model.
#[derive(Clone, Debug, PartialEq)]
pub struct StorageReport {
    pub layers: Vec<LayerStorage>,
    /// File header, unweighted layer headers and trailing checksum.
    pub other_bytes: usize,
    pub file_bytes: usize,
}

impl StorageReport {
    pub fn dense_bytes(&self) -> usize {
        self.layers.iter().map(|l| l.dense_bytes).sum()
    }

    pub fn sparse_bytes(&self) -> usize {
        self.layers
            .iter()
            .map(LayerStorage::sparse_bytes)
            .sum::<usize>()
            + self.other_bytes
    }

    pub fn value_bytes(&self) -> usize {
        self.layers.iter().map(|l| l.value_bytes).sum()
    }

    pub fn index_bytes(&self) -> usize {
        self.layers.iter().map(|l| l.index_bytes).sum()
    }

    pub fn header_bytes(&self) -> usize {
        self.layers.iter().map(|l| l.header_bytes).sum::<usize>() + self.other_bytes
    }

    /// Packed index bits divided by value bits over all layers.
    pub fn index_overhead(&self) -> f64 {
        let idx: usize = self
            .layers
            .iter()
            .map(|l| l.entries * l.index_bits as usize)
            .sum();
        let val: usize = self.layers.iter().map(|l| l.entries * 32).sum();
        if val == 0 {
            0.0
        } else {
            idx as f64 / val as f64
        }
    }

    /// Index bytes as stored (padded per layer) divided by value bytes.
    pub fn index_overhead_padded(&self) -> f64 {
        let val = self.value_bytes();
        if val == 0 {
            0.0
        } else {
            self.index_bytes() as f64 / val as f64
        }
    }

    /// Same as [`StorageReport::index_overhead`] but with every header byte
    /// counted as index storage.
    pub fn index_overhead_with_headers(&self) -> f64 {
        let val = self.value_bytes();
        if val == 0 {
            0.0
        } else {
            (self.index_bytes() + self.header_bytes()) as f64 / val as f64
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "layer,index_bits,weights_total,entries,fillers,dense_bytes,value_bytes,index_bytes,bias_bytes,header_bytes,sparse_bytes,index_overhead\n",
        );
        for l in &self.layers {
            s += &format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                l.name,
                l.index_bits,
                l.weights_total,
                l.entries,
                l.fillers,
                l.dense_bytes,
                l.value_bytes,
                l.index_bytes,
                l.bias_bytes,
                l.header_bytes,
                l.sparse_bytes(),
                l.index_overhead()
            );
        }
        s += &format!(
            "total,,{},{},{},{},{},{},{},{},{},{}\n",
            self.layers.iter().map(|l| l.weights_total).sum::<usize>(),
            self.layers.iter().map(|l| l.entries).sum::<usize>(),
            self.layers.iter().map(|l| l.fillers).sum::<usize>(),
            self.dense_bytes(),
            self.value_bytes(),
            self.index_bytes(),
            self.layers.iter().map(|l| l.bias_bytes).sum::<usize>(),
            self.header_bytes(),
            self.sparse_bytes(),
            self.index_overhead()
        );
        s
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::invalid(format!("{v} exceeds u32")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32s(&mut self, v: &[f32]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

/// Serializes `model`. Returns the file bytes and their breakdown.
pub fn encode_model(model: &Model, encoding: Encoding) -> Result<(Vec<u8>, StorageReport)> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(&MAGIC);
    w.u16(VERSION);
    w.u16(if encoding == Encoding::Dense {
        FLAG_DENSE
    } else {
        0
    });
    w.u64(model.seed());
    let input = model.input();
    w.u32(input.channels)?;
    w.u32(input.height)?;
    w.u32(input.width)?;
    w.u32(model.state.epochs as usize)?;
    w.f32s(&[model.state.lr]);
    w.u32(model.specs().len())?;
    let mut layers = Vec::new();
    let mut other_bytes = FILE_HEADER_BYTES + CRC_BYTES;
    for (i, spec) in model.specs().iter().enumerate() {
        let start = w.0.len();
        let name = spec.name.as_bytes();
        if name.len() > u8::MAX as usize {
            return Err(Error::invalid(format!(
                "layer name `{}` too long",
                spec.name
            )));
        }
        match spec.kind {
            LayerKind::Dense { .. } => w.u8(0),
            LayerKind::Conv { .. } => w.u8(1),
            LayerKind::MaxPool { .. } => w.u8(2),
        }
        w.u8(spec.relu as u8);
        w.u8(name.len() as u8);
        w.0.extend_from_slice(name);
        w.f32s(&[spec.dropout]);
        match spec.kind {
            LayerKind::Dense { fan_in, fan_out } => {
                w.u32(fan_in)?;
                w.u32(fan_out)?;
            }
            LayerKind::Conv {
                in_channels,
                filters,
                kernel,
                stride,
            } => {
                w.u32(in_channels)?;
                w.u32(filters)?;
                w.u32(kernel)?;
                w.u32(stride)?;
            }
            LayerKind::MaxPool { size, stride } => {
                w.u32(size)?;
                w.u32(stride)?;
            }
        }
        let Some(p) = model.param(i) else {
            other_bytes += w.0.len() - start;
            continue;
        };
        let weights = p.effective_weights();
        let bias = p.bias().data();
        let mut st = LayerStorage {
            name: spec.name.clone(),
            index_bits: 0,
            weights_total: weights.len(),
            entries: 0,
            fillers: 0,
            dense_bytes: 4 * (weights.len() + bias.len()),
            value_bytes: 0,
            index_bytes: 0,
            bias_bytes: 4 * bias.len(),
            header_bytes: 0,
        };
        match encoding {
            Encoding::Sparse { index_bits } => {
                let bits = index_bits.unwrap_or_else(|| default_index_bits(&spec.kind));
                let (gaps, values) = encode_dense(&weights, bits)?;
                let stream = pack(&gaps, bits)?;
                w.u8(bits);
                w.u32(gaps.len())?;
                st.header_bytes = w.0.len() - start;
                w.0.extend_from_slice(&stream);
                w.f32s(&values);
                st.index_bits = bits;
                st.entries = gaps.len();
                st.fillers = values
                    .iter()
                    .zip(&gaps)
                    .filter(|(v, g)| v.to_bits() == 0 && **g as usize == max_gap(bits))
                    .count();
                st.index_bytes = stream.len();
                st.value_bytes = 4 * values.len();
            }
            Encoding::Dense => {
                st.header_bytes = w.0.len() - start;
                w.f32s(&weights);
                let bits: Vec<u32> = p.mask().data().iter().map(|&m| (m != 0.0) as u32).collect();
                let stream = pack(&bits, 1)?;
                w.0.extend_from_slice(&stream);
                st.entries = weights.len();
                st.value_bytes = 4 * weights.len();
                st.index_bytes = stream.len();
            }
        }
        w.f32s(bias);
        layers.push(st);
    }
    let crc = crc32fast::hash(&w.0);
    w.0.extend_from_slice(&crc.to_le_bytes());
    let file_bytes = w.0.len();
    Ok((
        w.0,
        StorageReport {
            layers,
            other_bytes,
            file_bytes,
        },
    ))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(Error::Truncated {
                what: "model file",
                needed: n,
                available,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| corrupt("length overflow"))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptStream(msg.into())
}

/// Parses a container written by [`encode_model`], in either mode. Masks of
/// sparse files are the nonzero pattern of the decoded weights.
pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            what: "model file",
            needed: FILE_HEADER_BYTES + CRC_BYTES,
            available: bytes.len(),
        });
    }
    if bytes[..4] != MAGIC {
        return Err(Error::BadMagic {
            what: "model file",
            expected: u32::from_le_bytes(MAGIC),
            found: u32::from_le_bytes(bytes[..4].try_into().unwrap()),
        });
    }
    if bytes.len() < FILE_HEADER_BYTES + CRC_BYTES {
        return Err(Error::Truncated {
            what: "model file",
            needed: FILE_HEADER_BYTES + CRC_BYTES,
            available: bytes.len(),
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let (body, tail) = bytes.split_at(bytes.len() - CRC_BYTES);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    let mut r = Reader { buf: body, pos: 6 };
    let flags = r.u16()?;
    if flags & !FLAG_DENSE != 0 {
        return Err(corrupt(format!("unknown flags {flags:#06x}")));
    }
    let dense = flags & FLAG_DENSE != 0;
    let seed = r.u64()?;
    let input = InputShape {
        channels: r.u32()?,
        height: r.u32()?,
        width: r.u32()?,
    };
    let state = TrainState {
        epochs: r.u32()? as u32,
        lr: r.f32s(1)?[0],
    };
    let count = r.u32()?;
    let mut specs = Vec::new();
    let mut params = Vec::new();
    for _ in 0..count {
        let kind_tag = r.u8()?;
        let relu = match r.u8()? {
            0 => false,
            1 => true,
            other => return Err(corrupt(format!("bad layer flags {other}"))),
        };
        let name_len = r.u8()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| corrupt("layer name is not UTF-8"))?
            .to_string();
        let dropout = r.f32s(1)?[0];
        let kind = match kind_tag {
            0 => LayerKind::Dense {
                fan_in: r.u32()?,
                fan_out: r.u32()?,
            },
            1 => LayerKind::Conv {
                in_channels: r.u32()?,
                filters: r.u32()?,
                kernel: r.u32()?,
                stride: r.u32()?,
            },
            2 => LayerKind::MaxPool {
                size: r.u32()?,
                stride: r.u32()?,
            },
            other => return Err(corrupt(format!("unknown layer kind {other}"))),
        };
        let spec = LayerSpec {
            name,
            kind,
            relu,
            dropout,
        };
        let param = match spec.kind.weight_shape() {
            None => None,
            Some(shape) => {
                let n = shape
                    .iter()
                    .try_fold(1usize, |a, &d| a.checked_mul(d))
                    .ok_or_else(|| corrupt(format!("{}: shape overflows", spec.name)))?;
                if dense && n > body.len() - r.pos {
                    return Err(corrupt(format!("{}: {n} weights cannot fit", spec.name)));
                }
                let (weights, mask) = if dense {
                    let weights = r.f32s(n)?;
                    let bits = unpack(r.take(packed_len(n, 1))?, 1, n)?;
                    let mask: Vec<f32> = bits.iter().map(|&b| b as f32).collect();
                    (weights, mask)
                } else {
                    let bits = r.u8()?;
                    if !(1..=16).contains(&bits) {
                        return Err(corrupt(format!("{}: index width {bits}", spec.name)));
                    }
                    let entries = r.u32()?;
                    let gaps = unpack(r.take(packed_len(entries, bits))?, bits, entries)?;
                    let values = r.f32s(entries)?;
                    let weights = decode_relative(&gaps, &values, n)?;
                    let mask = weights
                        .iter()
                        .map(|w| (w.to_bits() != 0) as u8 as f32)
                        .collect();
                    (weights, mask)
                };
                let bias = r.f32s(spec.kind.units())?;
                Some(MaskedParam::with_mask(
                    Tensor::new(shape.clone(), weights)?,
                    Tensor::new(shape, mask)?,
                    Tensor::new(vec![spec.kind.units()], bias)?,
                )?)
            }
        };
        specs.push(spec);
        params.push(param);
    }
    if r.pos != body.len() {
        return Err(corrupt(format!(
            "{} trailing bytes after the last layer",
            body.len() - r.pos
        )));
    }
    Model::from_parts(input, specs, params, seed, state)
}

/// Writes `bytes` to a temporary sibling of `path`, then renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes the sparse encoding of `model` to `path`.
pub fn export_model(model: &Model, path: impl AsRef<Path>) -> Result<StorageReport> {
    export_model_with(model, path, Encoding::SPARSE)
}

pub fn export_model_with(
    model: &Model,
    path: impl AsRef<Path>,
    encoding: Encoding,
) -> Result<StorageReport> {
    let (bytes, report) = encode_model(model, encoding)?;
    write_atomic(path, &bytes)?;
    Ok(report)
}

/// Reads a model file of either mode.
pub fn import_model(path: impl AsRef<Path>) -> Result<Model> {
    decode_model(&read(path.as_ref())?)
}

/// Writes a dense-mode checkpoint.
pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    export_model_with(model, path, Encoding::Dense).map(|_| ())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    import_model(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_model, Architecture};

    fn pruned_mlp() -> Model {
        let mut m = init_model(Architecture::Lenet300100, 5).unwrap();
        for l in m.weighted_layers() {
            let t = 0.04;
            m.param_mut(l).unwrap().prune_below(t);
        }
        m
    }

    #[test]
    fn sparse_roundtrip_is_bit_exact() {
        let m = pruned_mlp();
        let (bytes, report) = encode_model(&m, Encoding::SPARSE).unwrap();
        assert_eq!(report.file_bytes, bytes.len());
        assert_eq!(report.sparse_bytes(), bytes.len());
        let back = decode_model(&bytes).unwrap();
        assert_eq!(back.checksum(), m.checksum());
    }

    #[test]
    fn dense_roundtrip_is_bit_exact() {
        let mut m = pruned_mlp();
        m.state = TrainState {
            epochs: 7,
            lr: 0.01,
        };
        let (bytes, report) = encode_model(&m, Encoding::Dense).unwrap();
        assert_eq!(report.sparse_bytes(), bytes.len());
        let back = decode_model(&bytes).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn conv_layers_use_eight_bit_indices() {
        let m = init_model(Architecture::Lenet5, 1).unwrap();
        let (bytes, report) = encode_model(&m, Encoding::SPARSE).unwrap();
        let bits: Vec<u8> = report.layers.iter().map(|l| l.index_bits).collect();
        assert_eq!(bits, vec![8, 8, 5, 5]);
        assert_eq!(decode_model(&bytes).unwrap().checksum(), m.checksum());
    }

    #[test]
    fn corruption_is_detected() {
        let (bytes, _) = encode_model(&pruned_mlp(), Encoding::SPARSE).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_model(&bad), Err(Error::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            decode_model(&bad),
            Err(Error::UnsupportedVersion(9))
        ));
        let mut bad = bytes.clone();
        bad[100] ^= 1;
        assert!(matches!(
            decode_model(&bad),
            Err(Error::ChecksumMismatch { .. })
        ));
        assert!(decode_model(&bytes[..bytes.len() - 9]).is_err());
        assert!(decode_model(&bytes[..3]).is_err());
    }

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.spnn");
        let m = pruned_mlp();
        export_model(&m, &path).unwrap();
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        assert_eq!(import_model(&path).unwrap().checksum(), m.checksum());
    }
}
