//! Parameter checkpoints: one JSON header line followed by little-endian f64 values.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NetworkSpec, ParameterVector};

pub const CHECKPOINT_FORMAT: &str = "roomwave-params-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub spec_hash: String,
    pub spec: NetworkSpec,
    pub seed: u64,
    pub n_params: usize,
    /// `[fan_in, fan_out, weight_offset, bias_offset]` per layer.
    pub layout: Vec<[usize; 4]>,
    /// Half-open index ranges of frozen entries.
    #[serde(default)]
    pub frozen: Vec<(usize, usize)>,
}

fn frozen_ranges(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &t) in mask.iter().chain(Some(&true)).enumerate() {
        match (t, start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    out
}

pub fn write_checkpoint<W: Write>(
    mut out: W,
    params: &ParameterVector,
    spec: &NetworkSpec,
    seed: u64,
) -> Result<()> {
    params.check_against(spec)?;
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        spec_hash: spec.hash(),
        spec: spec.clone(),
        seed,
        n_params: params.len(),
        layout: params
            .layout
            .iter()
            .map(|l| [l.fan_in, l.fan_out, l.weight_offset, l.bias_offset])
            .collect(),
        frozen: frozen_ranges(&params.trainable),
    };
    let line = serde_json::to_string(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    writeln!(out, "{line}")?;
    let mut buf = Vec::with_capacity(8 * params.len());
    for v in &params.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(src: R) -> Result<(CheckpointHeader, ParameterVector)> {
    let mut reader = BufReader::new(src);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let header: CheckpointHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!(
            "unknown format {}",
            header.format
        )));
    }
    if header.spec.hash() != header.spec_hash {
        return Err(Error::Checkpoint(
            "spec hash does not match the stored spec".into(),
        ));
    }
    let mut params = ParameterVector::zeros(&header.spec);
    if params.len() != header.n_params {
        return Err(Error::Checkpoint(format!(
            "header declares {} parameters, spec implies {}",
            header.n_params,
            params.len()
        )));
    }
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * header.n_params {
        return Err(Error::Checkpoint(format!(
            "expected {} bytes of parameters, found {}",
            8 * header.n_params,
            bytes.len()
        )));
    }
    for (v, chunk) in params.values.iter_mut().zip(bytes.chunks_exact(8)) {
        *v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
    }
    for &(a, b) in &header.frozen {
        if a > b || b > params.len() {
            return Err(Error::Checkpoint(format!(
                "frozen range {a}..{b} out of bounds"
            )));
        }
        params.trainable[a..b].iter_mut().for_each(|t| *t = false);
    }
    Ok((header, params))
}

/// Reads a checkpoint and checks it against `spec`.
pub fn load_for_spec<R: Read>(src: R, spec: &NetworkSpec) -> Result<ParameterVector> {
    let (header, params) = read_checkpoint(src)?;
    if header.spec_hash != spec.hash() {
        return Err(Error::Checkpoint(format!(
            "checkpoint spec {} differs from configured spec {}",
            &header.spec_hash[..12],
            &spec.hash()[..12]
        )));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_glorot, Activation};

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = NetworkSpec::uniform(3, 2, 6, Activation::sin(2.0), 4).unwrap();
        let mut p = init_glorot(&spec);
        p.values[3] = -0.0;
        p.values[5] = 1e-310;
        p.set_trainable_layers([1, 2]);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p, &spec, 99).unwrap();
        let (h, q) = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(h.seed, 99);
        assert_eq!(q.trainable, p.trainable);
        assert!(q
            .values
            .iter()
            .zip(&p.values)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(load_for_spec(buf.as_slice(), &spec).is_ok());
        let other = NetworkSpec::uniform(3, 2, 6, Activation::SIN, 4).unwrap();
        assert!(load_for_spec(buf.as_slice(), &other).is_err());
    }

    #[test]
    fn truncated_file_is_rejected() {
        let spec = NetworkSpec::uniform(2, 1, 3, Activation::SIN, 0).unwrap();
        let p = init_glorot(&spec);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p, &spec, 0).unwrap();
        buf.truncate(buf.len() - 4);
        assert!(matches!(
            read_checkpoint(buf.as_slice()),
            Err(Error::Checkpoint(_))
        ));
    }

    #[test]
    fn frozen_ranges_are_compact() {
        assert_eq!(
            frozen_ranges(&[true, false, false, true, false]),
            vec![(1, 3), (4, 5)]
        );
        assert!(frozen_ranges(&[true; 4]).is_empty());
    }
}
