//! The safetensors container: `u64` LE header length, JSON header, data.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use half::{bf16, f16};
use serde_json::{Map, Value};

use crate::tensor::{DType, Tensor};

use super::CheckpointError;

/// One tensor entry of the header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorRecord {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    /// Offsets into the data region (not the file).
    pub byte_range: Range<usize>,
}

impl TensorRecord {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// A parsed container holding its data region in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointIndex {
    records: BTreeMap<String, TensorRecord>,
    metadata: BTreeMap<String, String>,
    data: Vec<u8>,
}

const METADATA_KEY: &str = "__metadata__";

fn malformed(reason: impl Into<String>) -> CheckpointError {
    CheckpointError::MalformedHeader(reason.into())
}

fn parse_record(name: &str, value: &Value) -> Result<TensorRecord, CheckpointError> {
    let obj = value
        .as_object()
        .ok_or_else(|| malformed(format!("entry `{name}` is not an object")))?;
    let tag = obj
        .get("dtype")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed(format!("entry `{name}` has no dtype string")))?;
    let dtype = DType::parse(tag).ok_or_else(|| CheckpointError::UnknownDType {
        name: name.to_string(),
        tag: tag.to_string(),
    })?;
    let usizes = |key: &str| -> Result<Vec<usize>, CheckpointError> {
        obj.get(key)
            .and_then(Value::as_array)
            .ok_or_else(|| malformed(format!("entry `{name}` has no `{key}` array")))?
            .iter()
            .map(|v| {
                v.as_u64()
                    .map(|n| n as usize)
                    .ok_or_else(|| malformed(format!("entry `{name}`: `{key}` holds a non-integer")))
            })
            .collect()
    };
    let shape = usizes("shape")?;
    let offsets = usizes("data_offsets")?;
    let [begin, end] = offsets[..] else {
        return Err(malformed(format!("entry `{name}`: data_offsets must have two elements")));
    };
    if begin > end {
        return Err(malformed(format!("entry `{name}`: data_offsets [{begin}, {end}] are reversed")));
    }
    let expected = shape
        .iter()
        .try_fold(dtype.size(), |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| malformed(format!("entry `{name}`: shape {shape:?} overflows")))?;
    if end - begin != expected {
        return Err(malformed(format!(
            "entry `{name}`: {} bytes for shape {shape:?} of {dtype}, expected {expected}",
            end - begin
        )));
    }
    Ok(TensorRecord {
        name: name.to_string(),
        dtype,
        shape,
        byte_range: begin..end,
    })
}

/// Parse a complete container held in memory.
pub fn parse_safetensors(bytes: Vec<u8>) -> Result<CheckpointIndex, CheckpointError> {
    if bytes.len() < 8 {
        return Err(CheckpointError::Truncated(format!("{} bytes, need at least 8 for the header length", bytes.len())));
    }
    let n = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
    let header_end = 8u64
        .checked_add(n)
        .filter(|&e| e <= bytes.len() as u64)
        .ok_or_else(|| CheckpointError::Truncated(format!("header claims {n} bytes but file has {}", bytes.len() - 8)))?
        as usize;
    let text = std::str::from_utf8(&bytes[8..header_end]).map_err(|e| malformed(format!("header is not UTF-8: {e}")))?;
    let header: Map<String, Value> =
        serde_json::from_str(text).map_err(|e| malformed(format!("header is not a JSON object: {e}")))?;

    let mut records = BTreeMap::new();
    let mut metadata = BTreeMap::new();
    for (name, value) in &header {
        if name == METADATA_KEY {
            let map = value.as_object().ok_or_else(|| malformed("__metadata__ is not an object"))?;
            for (k, v) in map {
                let s = v.as_str().ok_or_else(|| malformed(format!("__metadata__ value for `{k}` is not a string")))?;
                metadata.insert(k.clone(), s.to_string());
            }
            continue;
        }
        records.insert(name.clone(), parse_record(name, value)?);
    }

    let data_len = bytes.len() - header_end;
    for r in records.values() {
        if r.byte_range.end > data_len {
            return Err(CheckpointError::OutOfBounds {
                name: r.name.clone(),
                end: r.byte_range.end,
                data_len,
            });
        }
    }
    let mut by_start: Vec<&TensorRecord> = records.values().filter(|r| !r.byte_range.is_empty()).collect();
    by_start.sort_by_key(|r| (r.byte_range.start, r.byte_range.end));
    for pair in by_start.windows(2) {
        if pair[1].byte_range.start < pair[0].byte_range.end {
            return Err(CheckpointError::Overlap {
                first: pair[0].name.clone(),
                second: pair[1].name.clone(),
            });
        }
    }

    let mut data = bytes;
    data.drain(..header_end);
    Ok(CheckpointIndex { records, metadata, data })
}

/// Widen a little-endian F32, F16 or BF16 payload to `f32` values, exactly.
pub fn widen(bytes: &[u8], dtype: DType) -> Result<Vec<f32>, CheckpointError> {
    let out = match dtype {
        DType::F32 => bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect(),
        DType::F16 => bytes
            .chunks_exact(2)
            .map(|c| f16::from_le_bytes([c[0], c[1]]).to_f32())
            .collect(),
        DType::BF16 => bytes
            .chunks_exact(2)
            .map(|c| bf16::from_le_bytes([c[0], c[1]]).to_f32())
            .collect(),
        DType::I64 => return Err(CheckpointError::UnsupportedDType(dtype)),
    };
    Ok(out)
}

impl CheckpointIndex {
    pub fn read(path: &Path) -> Result<CheckpointIndex, CheckpointError> {
        let bytes = std::fs::read(path).map_err(|e| CheckpointError::io(path, e))?;
        parse_safetensors(bytes)
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.records.keys().map(String::as_str)
    }

    pub fn records(&self) -> impl Iterator<Item = &TensorRecord> {
        self.records.values()
    }

    pub fn record(&self, name: &str) -> Option<&TensorRecord> {
        self.records.get(name)
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn data_region(&self) -> &[u8] {
        &self.data
    }

    pub fn payload(&self, name: &str) -> Option<&[u8]> {
        self.records.get(name).map(|r| &self.data[r.byte_range.clone()])
    }

    /// Load one tensor: floating types widened to F32, I64 kept as is.
    pub fn tensor(&self, name: &str) -> Result<Tensor, CheckpointError> {
        let r = self
            .records
            .get(name)
            .ok_or_else(|| CheckpointError::MissingTensor(name.to_string()))?;
        let bytes = &self.data[r.byte_range.clone()];
        // Scalars are stored with shape []; carry them as [1].
        let shape = if r.shape.is_empty() { vec![1] } else { r.shape.clone() };
        let t = match r.dtype {
            DType::I64 => Tensor::from_i64(
                shape,
                bytes.chunks_exact(8).map(|c| i64::from_le_bytes(c.try_into().expect("8 bytes"))).collect(),
            ),
            other => Tensor::from_f32(shape, widen(bytes, other)?),
        };
        t.map_err(|e| CheckpointError::Tensor {
            name: name.to_string(),
            source: e,
        })
    }

    /// Copy every record out as a writer entry, in name order.
    pub fn to_raw(&self) -> Vec<RawTensor> {
        self.records
            .values()
            .map(|r| RawTensor {
                name: r.name.clone(),
                dtype: r.dtype,
                shape: r.shape.clone(),
                data: self.data[r.byte_range.clone()].to_vec(),
            })
            .collect()
    }
}

/// Writer input: one named tensor with its raw little-endian payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTensor {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub data: Vec<u8>,
}

impl RawTensor {
    pub fn f32(name: &str, shape: &[usize], values: &[f32]) -> RawTensor {
        RawTensor {
            name: name.to_string(),
            dtype: DType::F32,
            shape: shape.to_vec(),
            data: values.iter().flat_map(|v| v.to_le_bytes()).collect(),
        }
    }

    pub fn i64(name: &str, shape: &[usize], values: &[i64]) -> RawTensor {
        RawTensor {
            name: name.to_string(),
            dtype: DType::I64,
            shape: shape.to_vec(),
            data: values.iter().flat_map(|v| v.to_le_bytes()).collect(),
        }
    }

    /// Values rounded to nearest F16.
    pub fn f16(name: &str, shape: &[usize], values: &[f32]) -> RawTensor {
        RawTensor {
            name: name.to_string(),
            dtype: DType::F16,
            shape: shape.to_vec(),
            data: values.iter().flat_map(|&v| f16::from_f32(v).to_le_bytes()).collect(),
        }
    }

    /// Values rounded to nearest BF16.
    pub fn bf16(name: &str, shape: &[usize], values: &[f32]) -> RawTensor {
        RawTensor {
            name: name.to_string(),
            dtype: DType::BF16,
            shape: shape.to_vec(),
            data: values.iter().flat_map(|&v| bf16::from_f32(v).to_le_bytes()).collect(),
        }
    }
}

/// Serialize tensors (laid out in the given order) and optional metadata.
///
/// Used for fixtures and tests; panics if a payload length disagrees with
/// its shape.
pub fn write_safetensors(tensors: &[RawTensor], metadata: &BTreeMap<String, String>) -> Vec<u8> {
    let mut header = Map::new();
    if !metadata.is_empty() {
        header.insert(
            METADATA_KEY.into(),
            Value::Object(metadata.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect()),
        );
    }
    let mut offset = 0usize;
    for t in tensors {
        let len = t.shape.iter().product::<usize>() * t.dtype.size();
        assert_eq!(t.data.len(), len, "payload of `{}` does not match its shape", t.name);
        header.insert(
            t.name.clone(),
            serde_json::json!({
                "dtype": t.dtype.as_str(),
                "shape": t.shape,
                "data_offsets": [offset, offset + len],
            }),
        );
        offset += len;
    }
    let mut text = serde_json::to_string(&Value::Object(header)).expect("serializable header");
    while text.len() % 8 != 0 {
        text.push(' ');
    }
    let mut out = Vec::with_capacity(8 + text.len() + offset);
    out.extend_from_slice(&(text.len() as u64).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    for t in tensors {
        out.extend_from_slice(&t.data);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// `{"w":{"dtype":"F32","shape":[2,2],"data_offsets":[0,16]}}` built by hand.
    fn hand_built() -> Vec<u8> {
        let header = br#"{"w":{"dtype":"F32","shape":[2,2],"data_offsets":[0,16]}}"#;
        let mut b = Vec::new();
        b.extend_from_slice(&(header.len() as u64).to_le_bytes());
        b.extend_from_slice(header);
        for v in [1.0f32, -2.5, 3.25, 0.0] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    #[test]
    fn hand_built_fixture() {
        let idx = parse_safetensors(hand_built()).unwrap();
        assert_eq!(idx.len(), 1);
        let r = idx.record("w").unwrap();
        assert_eq!((r.dtype, r.shape.clone(), r.byte_range.clone()), (DType::F32, vec![2, 2], 0..16));
        let t = idx.tensor("w").unwrap();
        assert_eq!(t.shape(), [2, 2]);
        assert_eq!(t.as_f32().unwrap(), [1.0, -2.5, 3.25, 0.0]);
    }

    #[test]
    fn header_longer_than_file_is_truncation() {
        let mut b = hand_built();
        b[..8].copy_from_slice(&10_000u64.to_le_bytes());
        assert!(matches!(parse_safetensors(b), Err(CheckpointError::Truncated(_))));
        assert!(matches!(parse_safetensors(vec![1, 2, 3]), Err(CheckpointError::Truncated(_))));
    }

    #[test]
    fn empty_tensor_set() {
        let mut b = 2u64.to_le_bytes().to_vec();
        b.extend_from_slice(b"{}");
        let idx = parse_safetensors(b).unwrap();
        assert!(idx.is_empty());
        assert!(idx.data_region().is_empty());
    }

    fn with_header(json: &str, data_len: usize) -> Vec<u8> {
        let mut b = (json.len() as u64).to_le_bytes().to_vec();
        b.extend_from_slice(json.as_bytes());
        b.extend(std::iter::repeat(0u8).take(data_len));
        b
    }

    #[test]
    fn error_kinds_are_distinct() {
        let overlap = r#"{"a":{"dtype":"F32","shape":[2],"data_offsets":[0,8]},"b":{"dtype":"F32","shape":[2],"data_offsets":[4,12]}}"#;
        assert!(matches!(parse_safetensors(with_header(overlap, 12)), Err(CheckpointError::Overlap { .. })));
        let oob = r#"{"a":{"dtype":"F32","shape":[4],"data_offsets":[0,16]}}"#;
        assert!(matches!(parse_safetensors(with_header(oob, 8)), Err(CheckpointError::OutOfBounds { .. })));
        let dtype = r#"{"a":{"dtype":"F64","shape":[1],"data_offsets":[0,8]}}"#;
        assert!(matches!(parse_safetensors(with_header(dtype, 8)), Err(CheckpointError::UnknownDType { .. })));
        assert!(matches!(parse_safetensors(with_header("{not json", 0)), Err(CheckpointError::MalformedHeader(_))));
        let size = r#"{"a":{"dtype":"F32","shape":[3],"data_offsets":[0,8]}}"#;
        assert!(matches!(parse_safetensors(with_header(size, 8)), Err(CheckpointError::MalformedHeader(_))));
    }

    #[test]
    fn widen_bit_patterns() {
        assert_eq!(widen(&0x3F80u16.to_le_bytes(), DType::BF16).unwrap(), [1.0]);
        assert_eq!(widen(&0x3C00u16.to_le_bytes(), DType::F16).unwrap(), [1.0]);
        assert!(matches!(widen(&[0; 8], DType::I64), Err(CheckpointError::UnsupportedDType(DType::I64))));
    }

    // IEEE half decoded from its fields in f64.
    fn f16_oracle(bits: u16) -> f64 {
        let sign = if bits >> 15 == 1 { -1.0 } else { 1.0 };
        let exp = ((bits >> 10) & 0x1f) as i32;
        let frac = (bits & 0x3ff) as f64;
        match exp {
            0 => sign * frac * 2f64.powi(-24),
            31 if frac == 0.0 => sign * f64::INFINITY,
            31 => f64::NAN,
            e => sign * (1.0 + frac / 1024.0) * 2f64.powi(e - 15),
        }
    }

    #[test]
    fn f16_widening_matches_field_decode_for_every_pattern() {
        let bytes: Vec<u8> = (0..=u16::MAX).flat_map(u16::to_le_bytes).collect();
        let got = widen(&bytes, DType::F16).unwrap();
        for (bits, v) in (0..=u16::MAX).zip(got) {
            let want = f16_oracle(bits);
            if want.is_nan() {
                assert!(v.is_nan());
            } else {
                assert_eq!(v as f64, want, "bits {bits:#06x}");
            }
        }
    }

    #[test]
    fn bf16_is_high_half_of_f32() {
        for bits in [0u16, 0x8000, 0x3F80, 0xC2F7, 0x7F80, 0x0001, 0x4049] {
            let v = widen(&bits.to_le_bytes(), DType::BF16).unwrap()[0];
            assert_eq!(v.to_bits(), (bits as u32) << 16);
        }
    }

    #[test]
    fn round_trip_mixed_dtypes() {
        let tensors = vec![
            RawTensor::f32("a", &[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            RawTensor::f16("b", &[3], &[0.5, -1.0, 65504.0]),
            RawTensor::bf16("c", &[2], &[1.0, -3.0]),
            RawTensor::i64("d", &[2], &[7, -1]),
        ];
        let meta = BTreeMap::from([("format".to_string(), "pt".to_string())]);
        let bytes = write_safetensors(&tensors, &meta);
        let idx = parse_safetensors(bytes.clone()).unwrap();
        assert_eq!(idx.metadata(), &meta);
        let mut sorted = tensors.clone();
        sorted.sort_by(|x, y| x.name.cmp(&y.name));
        assert_eq!(idx.to_raw(), sorted);
        let again = write_safetensors(&idx.to_raw(), idx.metadata());
        assert_eq!(parse_safetensors(again).unwrap(), idx);
        assert_eq!(idx.tensor("d").unwrap().as_i64().unwrap(), [7, -1]);
    }

    proptest! {
        #[test]
        fn widen_f32_is_bitwise_identity(bits in proptest::collection::vec(any::<u32>(), 1..64)) {
            let bytes: Vec<u8> = bits.iter().flat_map(|b| b.to_le_bytes()).collect();
            let out = widen(&bytes, DType::F32).unwrap();
            prop_assert!(out.iter().zip(&bits).all(|(v, &b)| v.to_bits() == b));
        }

        #[test]
        fn widen_f16_is_monotone(a in any::<u16>(), b in any::<u16>()) {
            let x = widen(&a.to_le_bytes(), DType::F16).unwrap()[0];
            let y = widen(&b.to_le_bytes(), DType::F16).unwrap()[0];
            let (fx, fy) = (f16_oracle(a), f16_oracle(b));
            if fx.is_finite() && fy.is_finite() {
                prop_assert_eq!(fx.partial_cmp(&fy), x.partial_cmp(&y));
            }
        }
    }
}
