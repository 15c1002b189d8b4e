//! `HLCK` checkpoint files: magic, u32 version, u32 tensor count, then per
//! tensor a u32 name length, UTF-8 name, u32 rank, u64 extents and
//! little-endian f32 data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Layer, Network};
use crate::error::{Error, Result};
use crate::io_util::{read_array, read_u32, read_u64};
use crate::tensor::{Scalar, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HLCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn from_network<T: Scalar>(net: &Network<T>) -> Self {
        Checkpoint {
            tensors: net
                .params()
                .into_iter()
                .map(|(name, p, _)| (name, p.cast()))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Code length stored in the last fully-connected layer.
    pub fn bits(&self) -> Option<usize> {
        self.tensors
            .iter()
            .rev()
            .find(|(n, t)| n.starts_with("fc") && n.ends_with(".weight") && t.shape().len() == 2)
            .map(|(_, t)| t.shape()[0])
    }

    /// Rebuilds the canonical network this checkpoint was saved from.
    pub fn to_canonical<T: Scalar>(&self) -> Result<Network<T>> {
        let bits = self
            .bits()
            .ok_or_else(|| Error::Format("checkpoint has no fully-connected output layer".into()))?;
        let mut net = Network::canonical(bits)?;
        self.load_into(&mut net)?;
        Ok(net)
    }

    /// Copies every parameter of `net` from the checkpoint, checking names and shapes.
    pub fn load_into<T: Scalar>(&self, net: &mut Network<T>) -> Result<()> {
        let expected = net.params().len();
        if expected != self.tensors.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {} tensors, network has {expected} parameters",
                self.tensors.len()
            )));
        }
        let names: Vec<String> = net.layer_names().to_vec();
        for (layer, lname) in net.layers_mut().iter_mut().zip(&names) {
            let (w, b) = match layer {
                Layer::Conv(l) => (&mut l.weight, &mut l.bias),
                Layer::Linear(l) => (&mut l.weight, &mut l.bias),
                _ => continue,
            };
            for (suffix, dst) in [("weight", w), ("bias", b)] {
                let key = format!("{lname}.{suffix}");
                let src = self
                    .get(&key)
                    .ok_or_else(|| Error::Format(format!("checkpoint is missing {key}")))?;
                if src.shape() != dst.shape() {
                    return Err(Error::Format(format!(
                        "{key}: checkpoint shape {:?} vs network {:?}",
                        src.shape(),
                        dst.shape()
                    )));
                }
                *dst = src.cast();
            }
        }
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &e in t.shape() {
                w.write_all(&(e as u64).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let magic: [u8; 4] = read_array(r, "checkpoint magic")?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!("bad checkpoint magic {magic:?}")));
        }
        let version = read_u32(r, "checkpoint version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let count = read_u32(r, "tensor count")? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = read_u32(r, "name length")? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)
                .map_err(|_| Error::Format("checkpoint truncated in tensor name".into()))?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let rank = read_u32(r, "rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(read_u64(r, "extent")? as usize);
            }
            let n: usize = shape.iter().product();
            let mut bytes = vec![0u8; n * 4];
            r.read_exact(&mut bytes)
                .map_err(|_| Error::Format(format!("checkpoint truncated in data of {name}")))?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push((name, Tensor::from_vec(&shape, data)?));
        }
        Ok(Checkpoint { tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::xavier_init;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut net = Network::<f32>::canonical(12).unwrap();
        xavier_init(&mut net, 5);
        let ck = Checkpoint::from_network(&net);
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"HLCK");
        let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, ck);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(again, buf);
        assert_eq!(back.bits(), Some(12));
        let restored: Network<f32> = back.to_canonical().unwrap();
        for ((_, a, _), (_, b, _)) in net.params().iter().zip(restored.params()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let buf = b"XXXX\x01\x00\x00\x00\x00\x00\x00\x00".to_vec();
        assert!(matches!(
            Checkpoint::read_from(&mut buf.as_slice()),
            Err(Error::Format(_))
        ));
    }
}
