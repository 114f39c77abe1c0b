//! On-disk checkpoint format: a small header (magic, version, model spec
//! hash, seed, step) followed by the parameter layout and two little-endian
//! f32 arrays (params, velocity). Round-trips are bit-exact.

use crate::error::{CliError, Result};
use augmetrics_core::model::{ModelSpec, Params};
use augmetrics_core::trainer::Checkpoint;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"AUGMCKPT";
const VERSION: u32 = 1;

pub fn write_checkpoint(
    path: &Path,
    spec: &ModelSpec,
    seed: u64,
    ckpt: &Checkpoint,
) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&spec.hash().to_le_bytes());
    buf.extend_from_slice(&seed.to_le_bytes());
    buf.extend_from_slice(&(ckpt.step as u64).to_le_bytes());
    let layout = &ckpt.params.layout;
    buf.extend_from_slice(&(layout.len() as u32).to_le_bytes());
    for e in layout {
        let name = e.name.as_bytes();
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name);
        buf.extend_from_slice(&(e.offset as u64).to_le_bytes());
        buf.extend_from_slice(&(e.len as u64).to_le_bytes());
        buf.extend_from_slice(&(e.fan_in as u64).to_le_bytes());
    }
    buf.extend_from_slice(&(ckpt.params.values.len() as u64).to_le_bytes());
    for v in &ckpt.params.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in &ckpt.velocity {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    // Write-then-rename keeps partially written files invisible.
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&buf)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path, spec: &ModelSpec) -> Result<(u64, Checkpoint)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut at = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        if at + n > bytes.len() {
            return Err(CliError::Runtime(format!(
                "truncated checkpoint {}",
                path.display()
            )));
        }
        let s = &bytes[at..at + n];
        at += n;
        Ok(s)
    };
    if take(8)? != MAGIC {
        return Err(CliError::Runtime(format!(
            "bad checkpoint magic in {}",
            path.display()
        )));
    }
    let ver = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if ver != VERSION {
        return Err(CliError::Runtime(format!("unsupported checkpoint version {ver}")));
    }
    let spec_hash = u64::from_le_bytes(take(8)?.try_into().unwrap());
    if spec_hash != spec.hash() {
        return Err(CliError::Runtime(String::from(
            "checkpoint was written for a different model spec",
        )));
    }
    let seed = u64::from_le_bytes(take(8)?.try_into().unwrap());
    let step = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let n_layout = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    // The layout in the file is informational; the authoritative layout comes
    // from the spec (whose hash already matched). Skip over it.
    for _ in 0..n_layout {
        let name_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        take(name_len)?;
        take(24)?;
    }
    let n = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let layout = spec.layout();
    let expected: usize = layout.iter().map(|e| e.len).sum();
    if n != expected {
        return Err(CliError::Runtime(format!(
            "checkpoint has {n} params, spec expects {expected}"
        )));
    }
    let read_f32s = |count: usize, at: &mut usize, bytes: &[u8]| -> Result<Vec<f32>> {
        if *at + 4 * count > bytes.len() {
            return Err(CliError::Runtime(String::from("truncated checkpoint body")));
        }
        let out = bytes[*at..*at + 4 * count]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        *at += 4 * count;
        Ok(out)
    };
    let values = read_f32s(n, &mut at, &bytes)?;
    let velocity = read_f32s(n, &mut at, &bytes)?;
    Ok((
        seed,
        Checkpoint {
            step,
            params: Params { values, layout },
            velocity,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use augmetrics_core::model::{init, Architecture};

    fn spec() -> ModelSpec {
        ModelSpec {
            architecture: Architecture::Mlp { hidden: 4 },
            input_shape: (2, 2, 1),
            num_classes: 3,
            init_scale: 1.0,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = spec();
        let params = init(&spec, 9).unwrap();
        let velocity: Vec<f32> = params.values.iter().map(|v| v * 0.5 - 0.1).collect();
        let ckpt = Checkpoint {
            step: 1234,
            params,
            velocity,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt-1234");
        write_checkpoint(&path, &spec, 77, &ckpt).unwrap();
        let (seed, back) = read_checkpoint(&path, &spec).unwrap();
        assert_eq!(seed, 77);
        assert_eq!(back, ckpt);
        // Bytes are stable across rewrites.
        let first = std::fs::read(&path).unwrap();
        write_checkpoint(&path, &spec, 77, &ckpt).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn spec_mismatch_is_rejected() {
        let a = spec();
        let b = ModelSpec {
            num_classes: 4,
            ..spec()
        };
        let params = init(&a, 0).unwrap();
        let velocity = vec![0.0; params.values.len()];
        let ckpt = Checkpoint {
            step: 0,
            params,
            velocity,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt");
        write_checkpoint(&path, &a, 0, &ckpt).unwrap();
        assert!(read_checkpoint(&path, &b).is_err());
    }

    #[test]
    fn truncated_file_is_rejected() {
        let spec = spec();
        let params = init(&spec, 1).unwrap();
        let n = params.values.len();
        let ckpt = Checkpoint {
            step: 5,
            params,
            velocity: vec![0.0; n],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt");
        write_checkpoint(&path, &spec, 0, &ckpt).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(read_checkpoint(&path, &spec).is_err());
    }
}
