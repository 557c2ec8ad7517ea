//! Binary model files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic "R2VFLMDL" | version u32 | payload length u64 | payload | sha256(payload)
//! ```
//!
//! The payload holds the configuration tags, class names, normalization,
//! `W1` (row-major), biases, `W2` (row-major) and optional training scores.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use super::{Activation, ModelConfig, RandomLayer, TrainedModel, Variant};
use crate::dataset::NormalizationParams;
use crate::error::{Error, Result};
use crate::kernel::{CenterScheme, KernelParams};
use crate::weighting::{ContributionScores, DeltaMode, WeightingConfig};

const MAGIC: &[u8; 8] = b"R2VFLMDL";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8;
const DIGEST_LEN: usize = 32;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }
    fn str(&mut self, s: &str) {
        self.usize(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn matrix(&mut self, m: &DMatrix<f64>) {
        self.usize(m.nrows());
        self.usize(m.ncols());
        for row in m.row_iter() {
            row.iter().for_each(|&x| self.f64(x));
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Malformed(format!("payload ends before offset {}", self.pos + n)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Malformed("length overflow".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self, elem_size: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.saturating_mul(elem_size) > self.buf.len() - self.pos {
            return Err(Error::Malformed(format!("length {n} exceeds remaining payload")));
        }
        Ok(n)
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn str(&mut self) -> Result<String> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Malformed("invalid utf-8 string".into()))
    }
    fn matrix(&mut self) -> Result<DMatrix<f64>> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let count = rows
            .checked_mul(cols)
            .filter(|c| c.saturating_mul(8) <= self.buf.len() - self.pos)
            .ok_or_else(|| Error::Malformed(format!("matrix {rows}x{cols} exceeds payload")))?;
        let data: Vec<f64> = (0..count).map(|_| self.f64()).collect::<Result<_>>()?;
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }
}

fn variant_tag(v: Variant) -> u8 {
    match v {
        Variant::Rvfl => 0,
        Variant::Elm => 1,
        Variant::R2vflA => 2,
        Variant::R2vflM => 3,
    }
}

fn activation_tag(a: Activation) -> u8 {
    match a {
        Activation::Sigmoid => 0,
        Activation::Tanh => 1,
        Activation::Relu => 2,
    }
}

fn bad_tag(what: &str, tag: u8) -> Error {
    Error::Malformed(format!("unknown {what} tag {tag}"))
}

fn encode_payload(model: &TrainedModel) -> Vec<u8> {
    let mut w = Writer::default();
    let cfg = &model.config;
    w.u8(variant_tag(cfg.variant));
    w.u8(activation_tag(cfg.activation));
    w.usize(cfg.hidden_nodes);
    w.f64(cfg.gamma);
    w.u64(cfg.seed);
    let wc = &cfg.weighting;
    w.u8(match wc.center_scheme {
        CenterScheme::Average => 0,
        CenterScheme::Median => 1,
    });
    match wc.delta {
        DeltaMode::Absolute(v) => {
            w.u8(0);
            w.f64(v);
        }
        DeltaMode::Quantile(q) => {
            w.u8(1);
            w.f64(q);
        }
    }
    w.f64(wc.tau_multiplier);
    w.f64(wc.kernel.gamma);

    w.usize(model.class_names.len());
    model.class_names.iter().for_each(|n| w.str(n));
    w.f64s(&model.normalization.min);
    w.f64s(&model.normalization.range);
    w.matrix(&model.random_layer.input_weights);
    w.f64s(&model.random_layer.bias);
    w.matrix(&model.output_weights);
    match &model.scores {
        None => w.u8(0),
        Some(s) => {
            w.u8(1);
            w.f64s(&s.cp);
            w.f64s(&s.m);
            w.f64s(&s.r);
        }
    }
    w.0
}

fn decode_payload(buf: &[u8]) -> Result<TrainedModel> {
    let mut r = Reader { buf, pos: 0 };
    let variant = match r.u8()? {
        0 => Variant::Rvfl,
        1 => Variant::Elm,
        2 => Variant::R2vflA,
        3 => Variant::R2vflM,
        t => return Err(bad_tag("variant", t)),
    };
    let activation = match r.u8()? {
        0 => Activation::Sigmoid,
        1 => Activation::Tanh,
        2 => Activation::Relu,
        t => return Err(bad_tag("activation", t)),
    };
    let hidden_nodes = r.usize()?;
    let gamma = r.f64()?;
    let seed = r.u64()?;
    let center_scheme = match r.u8()? {
        0 => CenterScheme::Average,
        1 => CenterScheme::Median,
        t => return Err(bad_tag("center scheme", t)),
    };
    let delta = match r.u8()? {
        0 => DeltaMode::Absolute(r.f64()?),
        1 => DeltaMode::Quantile(r.f64()?),
        t => return Err(bad_tag("delta mode", t)),
    };
    let tau_multiplier = r.f64()?;
    let kernel = KernelParams { gamma: r.f64()? };
    let config = ModelConfig {
        variant,
        hidden_nodes,
        gamma,
        activation,
        seed,
        weighting: WeightingConfig {
            delta,
            tau_multiplier,
            center_scheme,
            kernel,
        },
    };

    let n_classes = r.len(8)?;
    let class_names = (0..n_classes).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let normalization = NormalizationParams {
        min: r.f64s()?,
        range: r.f64s()?,
    };
    let input_weights = r.matrix()?;
    let bias = r.f64s()?;
    let output_weights = r.matrix()?;
    let scores = match r.u8()? {
        0 => None,
        1 => Some(ContributionScores {
            cp: r.f64s()?,
            m: r.f64s()?,
            r: r.f64s()?,
        }),
        t => return Err(bad_tag("scores", t)),
    };
    if r.pos != buf.len() {
        return Err(Error::Malformed(format!("{} trailing payload bytes", buf.len() - r.pos)));
    }

    let n = normalization.min.len();
    let expected_rows = if variant.direct_link() { n + hidden_nodes } else { hidden_nodes };
    if normalization.range.len() != n
        || input_weights.shape() != (n, hidden_nodes)
        || bias.len() != hidden_nodes
        || output_weights.shape() != (expected_rows, n_classes)
    {
        return Err(Error::Malformed("inconsistent matrix dimensions".into()));
    }
    Ok(TrainedModel {
        random_layer: RandomLayer { input_weights, bias },
        output_weights,
        normalization,
        config,
        class_names,
        scores,
    })
}

/// Serializes a model to bytes.
pub fn write_model(model: &TrainedModel) -> Vec<u8> {
    let payload = encode_payload(model);
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + DIGEST_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&Sha256::digest(&payload));
    out
}

/// Parses bytes written by [`write_model`], verifying version and checksum
/// before decoding anything.
pub fn read_model(bytes: &[u8]) -> Result<TrainedModel> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Malformed("file shorter than header".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Malformed("not a model file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != len.saturating_add(DIGEST_LEN) {
        return Err(Error::Malformed(format!(
            "expected {} bytes after header, found {}",
            len.saturating_add(DIGEST_LEN),
            body.len()
        )));
    }
    let (payload, digest) = body.split_at(len);
    if Sha256::digest(payload).as_slice() != digest {
        return Err(Error::Checksum);
    }
    decode_payload(payload)
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use crate::model::train;

    fn model(variant: Variant) -> TrainedModel {
        let ds = Dataset::new(
            DMatrix::from_fn(12, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 + 0.1 * j as f64),
            (0..12).map(|i| i % 3).collect(),
            vec!["x".into(), "y".into(), "z".into()],
            "io",
        )
        .unwrap();
        let mut cfg = ModelConfig::new(variant);
        cfg.hidden_nodes = 5;
        cfg.activation = Activation::Tanh;
        train(&ds, &cfg).unwrap()
    }

    #[test]
    fn round_trip_every_variant() {
        let probe = DMatrix::from_fn(4, 3, |i, j| (i as f64) - 0.5 * j as f64);
        for v in Variant::ALL {
            let m = model(v);
            let back = read_model(&write_model(&m)).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.predict(&probe).unwrap(), m.predict(&probe).unwrap());
        }
    }

    #[test]
    fn corrupted_payload_fails_checksum() {
        let mut bytes = write_model(&model(Variant::R2vflM));
        bytes[HEADER_LEN + 5] ^= 0x40;
        assert!(matches!(read_model(&bytes), Err(Error::Checksum)));
    }

    #[test]
    fn unknown_version_rejected() {
        let mut bytes = write_model(&model(Variant::Rvfl));
        bytes[8..12].copy_from_slice(&99u32.to_le_bytes());
        assert!(matches!(read_model(&bytes), Err(Error::Version { found: 99, .. })));
    }

    #[test]
    fn truncated_file_rejected() {
        let bytes = write_model(&model(Variant::Elm));
        assert!(matches!(read_model(&bytes[..bytes.len() - 1]), Err(Error::Malformed(_))));
        assert!(matches!(read_model(&bytes[..10]), Err(Error::Malformed(_))));
        assert!(matches!(read_model(b"not a model file at all"), Err(Error::Malformed(_))));
    }
}
