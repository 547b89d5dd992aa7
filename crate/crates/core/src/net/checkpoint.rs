//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes  "TSCHKPT\0"
//! version    u32
//! seed       u64
//! obs_dim    u32
//! action_dim u32
//! n_hidden   u32
//! hidden     n_hidden x u32
//! tensors    f64 values: for each trunk layer, then policy head, then value
//!            head: weights (row-major, outputs x inputs) followed by bias
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{Dense, MlpParams};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"TSCHKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(params: &MlpParams, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&params.seed.to_le_bytes())?;
    w.write_all(&(params.obs_dim() as u32).to_le_bytes())?;
    w.write_all(&(params.action_dim() as u32).to_le_bytes())?;
    let hidden = params.hidden();
    w.write_all(&(hidden.len() as u32).to_le_bytes())?;
    for h in hidden {
        w.write_all(&(h as u32).to_le_bytes())?;
    }
    for t in params.tensors() {
        for v in t {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_layer<R: Read>(r: &mut R, inputs: usize, outputs: usize) -> Result<Dense> {
    let mut layer = Dense::zeros(inputs, outputs);
    let mut b = [0u8; 8];
    for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
        r.read_exact(&mut b)?;
        *v = f64::from_le_bytes(b);
    }
    Ok(layer)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<MlpParams> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    let seed = u64::from_le_bytes(b);
    let obs_dim = read_u32(&mut r)? as usize;
    let action_dim = read_u32(&mut r)? as usize;
    let n_hidden = read_u32(&mut r)? as usize;
    if n_hidden > 64 {
        return Err(Error::Checkpoint(format!("implausible layer count {n_hidden}")));
    }
    let hidden = (0..n_hidden)
        .map(|_| read_u32(&mut r).map(|h| h as usize))
        .collect::<Result<Vec<_>>>()?;
    if obs_dim == 0 || action_dim == 0 || hidden.contains(&0) {
        return Err(Error::Checkpoint("zero-sized layer".into()));
    }

    let mut trunk = Vec::with_capacity(n_hidden);
    let mut width = obs_dim;
    for h in hidden {
        trunk.push(read_layer(&mut r, width, h)?);
        width = h;
    }
    let policy = read_layer(&mut r, width, action_dim)?;
    let value = read_layer(&mut r, width, 1)?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    let params = MlpParams::from_layers(trunk, policy, value, seed)?;
    if !params.is_finite() {
        return Err(Error::Checkpoint("non-finite parameter".into()));
    }
    Ok(params)
}

pub fn save_checkpoint(params: &MlpParams, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(params, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<MlpParams> {
    read_checkpoint(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::init_params;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let p = init_params(2, 3, &[4], 9).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&p, &mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(&buf[8..12], &1u32.to_le_bytes());
        assert_eq!(&buf[12..20], &9u64.to_le_bytes());
        assert_eq!(&buf[20..24], &2u32.to_le_bytes());
        assert_eq!(&buf[24..28], &3u32.to_le_bytes());
        assert_eq!(&buf[28..32], &1u32.to_le_bytes());
        assert_eq!(&buf[32..36], &4u32.to_le_bytes());
        assert_eq!(buf.len(), 36 + 8 * p.param_count());
        assert_eq!(&buf[36..44], &p.trunk[0].weights[0].to_le_bytes());
    }

    #[test]
    fn rejects_corrupt_input() {
        let p = init_params(2, 3, &[4], 9).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&p, &mut buf).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_checkpoint(extra.as_slice()).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(Error::Checkpoint(_))));
    }

    proptest! {
        #[test]
        fn roundtrip_is_exact(
            obs in 1usize..6, act in 1usize..5,
            hidden in prop::collection::vec(1usize..6, 0..3),
            seed in any::<u64>(),
        ) {
            let p = init_params(obs, act, &hidden, seed).unwrap();
            let mut buf = Vec::new();
            write_checkpoint(&p, &mut buf).unwrap();
            let q = read_checkpoint(buf.as_slice()).unwrap();
            prop_assert_eq!(&p, &q);
            for (a, b) in p.tensors().zip(q.tensors()) {
                for (x, y) in a.iter().zip(b) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }
}
