//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes   "CNETCKPT"
//! version    u32       1
//! count      u64       number of parameter records
//! record*    name_len u64, name (UTF-8), rank u64, extents u64 × rank,
//!            data f64 × product(extents)
//! ```

use std::io::{Read, Write};

use super::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CNETCKPT";
pub const VERSION: u32 = 1;

// Guards against allocating absurd buffers from a corrupt header.
const MAX_NAME_LEN: u64 = 1 << 16;
const MAX_RANK: u64 = 16;

pub fn write<W: Write>(mut w: W, params: &[(String, Tensor)]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    for (name, t) in params {
        w.write_all(&(name.len() as u64).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rank() as u64).to_le_bytes())?;
        for &e in t.shape() {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn to_bytes(params: &[(String, Tensor)]) -> Vec<u8> {
    let mut buf = Vec::new();
    write(&mut buf, params).expect("writing to a Vec cannot fail");
    buf
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let mut vb = [0u8; 4];
    r.read_exact(&mut vb)?;
    let version = u32::from_le_bytes(vb);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {}", version)));
    }
    let count = read_u64(&mut r)?;
    let mut out = Vec::new();
    for _ in 0..count {
        let name_len = read_u64(&mut r)?;
        if name_len > MAX_NAME_LEN {
            return Err(Error::Format(format!("name length {} too large", name_len)));
        }
        let mut name = vec![0u8; name_len as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
        let rank = read_u64(&mut r)?;
        if rank > MAX_RANK {
            return Err(Error::Format(format!("rank {} too large", rank)));
        }
        let shape = (0..rank)
            .map(|_| read_u64(&mut r).map(|e| e as usize))
            .collect::<Result<Vec<_>>>()?;
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .ok_or_else(|| Error::Format("extent overflow".into()))?;
        let mut data = Vec::with_capacity(len.min(1 << 24));
        let mut b = [0u8; 8];
        for _ in 0..len {
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        out.push((name, Tensor::new(shape, data)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let bytes = to_bytes(&[("w".into(), Tensor::scalar(1.0))]);
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 1);
        // name_len + name + rank(0) + one f64
        assert_eq!(bytes.len(), 20 + 8 + 1 + 8 + 8);
    }

    #[test]
    fn rejects_corruption() {
        let mut bytes = to_bytes(&[("w".into(), Tensor::zeros(&[2, 2]))]);
        assert!(read(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(matches!(read(&bytes[..]), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            shapes in prop::collection::vec(prop::collection::vec(0usize..4, 0..3), 0..4),
            seed in any::<u64>(),
        ) {
            let mut rng = crate::numerics::Rng::new(seed);
            let params: Vec<(String, Tensor)> = shapes
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let n: usize = s.iter().product();
                    let data = (0..n).map(|_| rng.gaussian() * 1e3).collect();
                    (format!("p{i}.ü"), Tensor::new(s.clone(), data).unwrap())
                })
                .collect();
            let bytes = to_bytes(&params);
            let back = read(&bytes[..]).unwrap();
            prop_assert_eq!(to_bytes(&back), bytes);
            for ((n1, t1), (n2, t2)) in params.iter().zip(&back) {
                prop_assert_eq!(n1, n2);
                prop_assert_eq!(t1.shape(), t2.shape());
                for (a, b) in t1.data().iter().zip(t2.data()) {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }
    }
}
