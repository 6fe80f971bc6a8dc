//! Tensor record serialization: magic "LVT1", u32 rank, u32 dims, then
//! little-endian f32 payload. Dataset clips and checkpoints concatenate
//! these records.

use std::io::{Read, Write};
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

pub const LVT_MAGIC: &[u8; 4] = b"LVT1";

pub fn write_tensor_to(w: &mut impl Write, t: &Tensor) -> std::io::Result<()> {
    w.write_all(LVT_MAGIC)?;
    w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
    for d in t.shape() {
        w.write_all(&(*d as u32).to_le_bytes())?;
    }
    for v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor_from(r: &mut impl Read, path: &str) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != LVT_MAGIC {
        return Err(Error::Format {
            path: path.to_string(),
            detail: format!("bad magic {magic:?}"),
        });
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(|e| Error::io(path, e))?;
    let rank = u32::from_le_bytes(u32buf) as usize;
    if rank > 8 {
        return Err(Error::Format {
            path: path.to_string(),
            detail: format!("implausible rank {rank}"),
        });
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        r.read_exact(&mut u32buf).map_err(|e| Error::io(path, e))?;
        shape.push(u32::from_le_bytes(u32buf) as usize);
    }
    let numel: usize = shape.iter().product();
    let mut bytes = vec![0u8; numel * 4];
    r.read_exact(&mut bytes).map_err(|e| Error::io(path, e))?;
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor::new(&shape, data)
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    let mut buf = Vec::with_capacity(8 + t.shape().len() * 4 + t.numel() * 4);
    write_tensor_to(&mut buf, t).expect("vec write");
    crate::fsutil::atomic_write(path, &buf)
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    read_tensor_from(&mut f, &path.display().to_string())
}

/// Size in bytes of one serialized record with the given shape.
pub fn record_size(shape: &[usize]) -> usize {
    8 + shape.len() * 4 + shape.iter().product::<usize>() * 4
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn roundtrip_is_bit_exact_across_seeds() {
        let mut rng = Rng::new(21);
        for _ in 0..20 {
            let rank = 1 + rng.below(4) as usize;
            let shape: Vec<usize> = (0..rank).map(|_| 1 + rng.below(5) as usize).collect();
            let t = Tensor::randn(&shape, &mut rng);
            let mut buf = Vec::new();
            write_tensor_to(&mut buf, &t).unwrap();
            let back = read_tensor_from(&mut &buf[..], "mem").unwrap();
            assert_eq!(back.shape(), t.shape());
            for (a, b) in back.data().iter().zip(t.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn record_size_matches_arithmetic() {
        let t = Tensor::zeros(&[9, 3, 32, 32]);
        let mut buf = Vec::new();
        write_tensor_to(&mut buf, &t).unwrap();
        assert_eq!(buf.len(), record_size(&[9, 3, 32, 32]));
        assert_eq!(buf.len(), 4 + 4 + 4 * 4 + 9 * 3 * 32 * 32 * 4);
    }

    #[test]
    fn bad_magic_rejected() {
        let t = Tensor::zeros(&[2, 2]);
        let mut buf = Vec::new();
        write_tensor_to(&mut buf, &t).unwrap();
        buf[0] = b'X';
        assert!(read_tensor_from(&mut &buf[..], "mem").is_err());
    }

    #[test]
    fn truncated_payload_rejected() {
        let t = Tensor::zeros(&[4, 4]);
        let mut buf = Vec::new();
        write_tensor_to(&mut buf, &t).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_tensor_from(&mut &buf[..], "mem").is_err());
    }
}
