//! The `NDNA` trajectory file.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "NDNA"
//! 4       4     version, u32 LE = 1
//! 8       8     header_len, u64 LE
//! 16      H     UTF-8 JSON header
//! 16+H    …     sections: raw f64 LE, row-major, contiguous
//! ```
//!
//! Header fields: `model_id`, `L`, `D`, `T`, `N`, `dtype` (`"f64"`),
//! `sections` (list of `{name, byte_offset, byte_len}` with offsets relative
//! to the end of the header), plus `provenance` and `sample_ids`. Section
//! names are `layer_means`, `token_states`, `hidden_grads`,
//! `theta_grad_sqnorms`, written in that order.
//!
//! Files that start with `{` instead of the magic are read as the plain-JSON
//! alternate encoding (nested lists), capped at 1 MB.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{GradientBundle, Provenance, Trajectory};

pub const MAGIC: &[u8; 4] = b"NDNA";
pub const VERSION: u32 = 1;
pub const JSON_ALTERNATE_MAX_BYTES: usize = 1 << 20;

const PRELUDE: usize = 16;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct Section {
    name: String,
    byte_offset: u64,
    byte_len: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    model_id: String,
    #[serde(rename = "L")]
    layers: usize,
    #[serde(rename = "D")]
    dim: usize,
    #[serde(rename = "T")]
    tokens: usize,
    #[serde(rename = "N")]
    samples: usize,
    dtype: String,
    sections: Vec<Section>,
    #[serde(default)]
    provenance: BTreeMap<String, String>,
    #[serde(default)]
    sample_ids: Vec<String>,
}

/// Serializes a trajectory (and optional gradients) to file bytes.
pub fn encode(traj: &Trajectory, grads: Option<&GradientBundle>) -> Result<Vec<u8>> {
    if let Some(g) = grads {
        g.check_against(traj)?;
    }
    let mut payloads: Vec<(&str, Vec<f64>)> = vec![("layer_means", traj.layer_means().iter().copied().collect())];
    if let Some(t) = traj.token_states() {
        payloads.push(("token_states", t.iter().copied().collect()));
    }
    if let Some(g) = grads {
        if let Some(h) = g.hidden_grads() {
            payloads.push(("hidden_grads", h.iter().copied().collect()));
        }
        if let Some(t) = g.theta_grad_sqnorms() {
            payloads.push(("theta_grad_sqnorms", t.iter().copied().collect()));
        }
    }

    let mut offset = 0u64;
    let sections = payloads
        .iter()
        .map(|(name, data)| {
            let len = 8 * data.len() as u64;
            let s = Section {
                name: (*name).to_string(),
                byte_offset: offset,
                byte_len: len,
            };
            offset += len;
            s
        })
        .collect();
    let header = Header {
        model_id: traj.model_id().to_string(),
        layers: traj.layers(),
        dim: traj.dim(),
        tokens: traj.tokens(),
        samples: grads.map_or(0, GradientBundle::samples),
        dtype: "f64".into(),
        sections,
        provenance: traj.provenance().clone(),
        sample_ids: grads.map(|g| g.sample_ids().to_vec()).unwrap_or_default(),
    };
    let header_bytes = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;

    let mut out = Vec::with_capacity(PRELUDE + header_bytes.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for (_, data) in &payloads {
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Writes `traj` (and `grads`) to `path` in the binary format.
pub fn write_trajectory(traj: &Trajectory, grads: Option<&GradientBundle>, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode(traj, grads)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads and validates a trajectory file (binary or JSON alternate).
pub fn read_trajectory(path: impl AsRef<Path>) -> Result<(Trajectory, Option<GradientBundle>)> {
    let bytes = fs::read(path)?;
    decode(&bytes)
}

/// Parses file bytes; every invariant is re-checked.
pub fn decode(bytes: &[u8]) -> Result<(Trajectory, Option<GradientBundle>)> {
    if bytes.len() >= 4 && &bytes[..4] == MAGIC {
        return decode_binary(bytes);
    }
    if bytes
        .iter()
        .find(|b| !b.is_ascii_whitespace())
        .is_some_and(|&b| b == b'{')
    {
        return decode_json_alternate(bytes);
    }
    if bytes.len() < 4 {
        return Err(Error::Format(format!(
            "file is {} bytes, too short for a trajectory file",
            bytes.len()
        )));
    }
    Err(Error::Format(format!(
        "bad magic {:?}, expected \"NDNA\"",
        String::from_utf8_lossy(&bytes[..4])
    )))
}

fn decode_binary(bytes: &[u8]) -> Result<(Trajectory, Option<GradientBundle>)> {
    if bytes.len() < PRELUDE {
        return Err(Error::Corruption("truncated file prelude".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let header_end = (PRELUDE as u64)
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len() as u64)
        .ok_or_else(|| Error::Corruption("header extends past end of file".into()))? as usize;
    let header: Header = serde_json::from_slice(&bytes[PRELUDE..header_end])
        .map_err(|e| Error::Format(format!("header is not valid JSON: {e}")))?;
    if header.dtype != "f64" {
        return Err(Error::Format(format!("unsupported dtype {:?}", header.dtype)));
    }
    let payload = &bytes[header_end..];
    let (l, d, t, n) = (header.layers, header.dim, header.tokens, header.samples);

    let mut sections = header.sections.clone();
    sections.sort_by_key(|s| s.byte_offset);
    let mut cursor = 0u64;
    for s in &sections {
        if s.byte_offset != cursor {
            return Err(Error::Corruption(format!(
                "section {} starts at {} but previous section ends at {cursor}",
                s.name, s.byte_offset
            )));
        }
        cursor = cursor
            .checked_add(s.byte_len)
            .ok_or_else(|| Error::Corruption("section length overflow".into()))?;
    }
    if cursor > payload.len() as u64 {
        return Err(Error::Corruption(format!(
            "sections declare {cursor} payload bytes, file holds {}",
            payload.len()
        )));
    }
    if cursor < payload.len() as u64 {
        return Err(Error::Corruption(format!(
            "{} trailing bytes after last section",
            payload.len() as u64 - cursor
        )));
    }

    let mut seen: BTreeMap<&str, &Section> = BTreeMap::new();
    for s in &header.sections {
        let expected = match s.name.as_str() {
            "layer_means" => checked_len(&[l, d])?,
            "token_states" => checked_len(&[l, t, d])?,
            "hidden_grads" => checked_len(&[n, l, d])?,
            "theta_grad_sqnorms" => checked_len(&[n, l])?,
            other => return Err(Error::Format(format!("unknown section {other:?}"))),
        };
        if s.byte_len != expected {
            return Err(Error::Corruption(format!(
                "section {} is {} bytes, header dims imply {expected}",
                s.name, s.byte_len
            )));
        }
        if seen.insert(s.name.as_str(), s).is_some() {
            return Err(Error::Format(format!("duplicate section {:?}", s.name)));
        }
    }

    let read = |name: &str| -> Option<Vec<f64>> {
        seen.get(name).map(|s| {
            let start = s.byte_offset as usize;
            let end = start + s.byte_len as usize;
            payload[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect()
        })
    };

    let means = read("layer_means").ok_or_else(|| Error::Format("missing layer_means section".into()))?;
    let means = Array2::from_shape_vec((l, d), means).map_err(shape_err)?;
    let mut traj = Trajectory::new(header.model_id.clone(), means)?;
    traj.set_provenance(header.provenance.clone());
    match (read("token_states"), t) {
        (Some(ts), t) if t > 0 => {
            let ts = Array3::from_shape_vec((l, t, d), ts).map_err(shape_err)?;
            traj = traj.with_token_states(ts)?;
        }
        (Some(_), _) => {
            return Err(Error::Format("token_states present but T = 0".into()));
        }
        (None, 0) => {}
        (None, _) => {
            return Err(Error::Format("T > 0 but no token_states section".into()));
        }
    }

    let hidden = read("hidden_grads")
        .map(|h| Array3::from_shape_vec((n, l, d), h).map_err(shape_err))
        .transpose()?;
    let theta = read("theta_grad_sqnorms")
        .map(|h| Array2::from_shape_vec((n, l), h).map_err(shape_err))
        .transpose()?;
    let grads = if hidden.is_none() && theta.is_none() {
        if n != 0 {
            return Err(Error::Format("N > 0 but no gradient sections".into()));
        }
        None
    } else {
        let g = GradientBundle::new(hidden, theta, header.sample_ids.clone())?;
        g.check_against(&traj)?;
        Some(g)
    };
    Ok((traj, grads))
}

fn checked_len(dims: &[usize]) -> Result<u64> {
    dims.iter()
        .try_fold(8u64, |acc, &x| acc.checked_mul(x as u64))
        .ok_or_else(|| Error::Corruption("declared dimensions overflow".into()))
}

fn shape_err(e: ndarray::ShapeError) -> Error {
    Error::Corruption(e.to_string())
}

/// Plain-JSON alternate encoding for hand-written fixtures.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JsonTrajectory {
    #[serde(default)]
    pub model_id: String,
    pub layer_means: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_states: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_grads: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_grad_sqnorms: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sample_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: Provenance,
}

fn decode_json_alternate(bytes: &[u8]) -> Result<(Trajectory, Option<GradientBundle>)> {
    if bytes.len() > JSON_ALTERNATE_MAX_BYTES {
        return Err(Error::Format(format!(
            "JSON trajectory is {} bytes; the JSON encoding is limited to 1 MB",
            bytes.len()
        )));
    }
    let j: JsonTrajectory =
        serde_json::from_slice(bytes).map_err(|e| Error::Format(format!("invalid JSON trajectory: {e}")))?;
    let mut traj = Trajectory::from_rows(j.model_id, &j.layer_means)?;
    traj.set_provenance(j.provenance);
    if let Some(ts) = j.token_states {
        traj = traj.with_token_states(nested3(&ts)?)?;
    }
    let hidden = j.hidden_grads.as_deref().map(nested3).transpose()?;
    let theta = j.theta_grad_sqnorms.as_deref().map(nested2).transpose()?;
    let grads = if hidden.is_none() && theta.is_none() {
        None
    } else {
        let g = GradientBundle::new(hidden, theta, j.sample_ids)?;
        g.check_against(&traj)?;
        Some(g)
    };
    Ok((traj, grads))
}

/// Converts to the JSON alternate encoding.
pub fn to_json_alternate(traj: &Trajectory, grads: Option<&GradientBundle>) -> JsonTrajectory {
    let rows2 = |a: &Array2<f64>| a.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>();
    let rows3 = |a: &Array3<f64>| {
        a.outer_iter()
            .map(|m| m.rows().into_iter().map(|r| r.to_vec()).collect())
            .collect::<Vec<_>>()
    };
    JsonTrajectory {
        model_id: traj.model_id().to_string(),
        layer_means: rows2(&traj.layer_means().to_owned()),
        token_states: traj.token_states().map(rows3),
        hidden_grads: grads.and_then(|g| g.hidden_grads()).map(rows3),
        theta_grad_sqnorms: grads.and_then(|g| g.theta_grad_sqnorms()).map(rows2),
        sample_ids: grads.map(|g| g.sample_ids().to_vec()).unwrap_or_default(),
        provenance: traj.provenance().clone(),
    }
}

fn nested2(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != c) {
        return Err(Error::Format("ragged nested list".into()));
    }
    Array2::from_shape_vec((rows.len(), c), rows.iter().flatten().copied().collect())
        .map_err(|e| Error::Format(e.to_string()))
}

fn nested3(blocks: &[Vec<Vec<f64>>]) -> Result<Array3<f64>> {
    let r = blocks.first().map_or(0, Vec::len);
    let c = blocks.first().and_then(|b| b.first()).map_or(0, Vec::len);
    if blocks
        .iter()
        .any(|b| b.len() != r || b.iter().any(|row| row.len() != c))
    {
        return Err(Error::Format("ragged nested list".into()));
    }
    Array3::from_shape_vec(
        (blocks.len(), r, c),
        blocks.iter().flatten().flatten().copied().collect(),
    )
    .map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small() -> Trajectory {
        Trajectory::new("m", array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.5]]).unwrap()
    }

    #[test]
    fn size_arithmetic_for_two_layer_d3() {
        let bytes = encode(&small(), None).unwrap();
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        assert_eq!(bytes.len(), 4 + 4 + 8 + header_len + 48);
    }

    #[test]
    fn roundtrip_is_exact() {
        let t = small().with_provenance("pooling", "mean");
        let g = GradientBundle::new(
            Some(Array3::from_elem((2, 2, 3), 0.25)),
            Some(array![[1.0, 0.0], [2.0, 3.0]]),
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let bytes = encode(&t, Some(&g)).unwrap();
        let (t2, g2) = decode(&bytes).unwrap();
        assert_eq!(t2, t);
        assert_eq!(g2.as_ref(), Some(&g));
        assert_eq!(encode(&t2, g2.as_ref()).unwrap(), bytes);
    }

    #[test]
    fn corruption_cases() {
        let bytes = encode(&small(), None).unwrap();

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode(&bad_magic), Err(Error::Format(_))));

        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(decode(&v2), Err(Error::UnsupportedVersion(2))));

        let truncated = &bytes[..bytes.len() - 5];
        assert!(matches!(decode(truncated), Err(Error::Corruption(_))));

        let mut nan = bytes.clone();
        let n = nan.len();
        nan[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(decode(&nan), Err(Error::Invariant(_))));

        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(matches!(decode(&trailing), Err(Error::Corruption(_))));

        assert!(matches!(decode(b"ND"), Err(Error::Format(_))));
    }

    #[test]
    fn json_alternate_reads() {
        let j = r#"{"model_id":"hand","layer_means":[[0,0],[1,0],[1,1]],
                    "theta_grad_sqnorms":[[1,2,3]]}"#;
        let (t, g) = decode(j.as_bytes()).unwrap();
        assert_eq!(t.layers(), 3);
        assert_eq!(g.unwrap().samples(), 1);
        let back = to_json_alternate(&t, None);
        assert_eq!(back.layer_means[2], vec![1.0, 1.0]);
    }

    #[test]
    fn json_alternate_ragged_rejected() {
        let j = r#"{"layer_means":[[0,0],[1]]}"#;
        assert!(decode(j.as_bytes()).is_err());
    }
}
