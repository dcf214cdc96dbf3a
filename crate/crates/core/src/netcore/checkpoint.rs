//! Binary checkpoints: a format tag, a JSON header naming the network
//! specs, then one little-endian length-prefixed `f64` array per network.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{NetError, NetSpec, ParamVector};

pub const CHECKPOINT_FORMAT: &str = "autophoto-ckpt/1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Free-form provenance: tool version, configuration echo, scene ids.
    pub meta: serde_json::Value,
    pub nets: Vec<(String, NetSpec, ParamVector)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    nets: Vec<NetEntry>,
    meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetEntry {
    name: String,
    spec: NetSpec,
}

impl Checkpoint {
    pub fn net(&self, name: &str) -> Option<(&NetSpec, &ParamVector)> {
        self.nets.iter().find(|(n, _, _)| n == name).map(|(_, s, p)| (s, p))
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), NetError> {
        let header = Header {
            format: CHECKPOINT_FORMAT.to_string(),
            nets: self.nets.iter().map(|(name, spec, _)| NetEntry { name: name.clone(), spec: spec.clone() }).collect(),
            meta: self.meta.clone(),
        };
        let header = serde_json::to_vec(&header).map_err(|e| NetError::Checkpoint(e.to_string()))?;
        w.write_all(CHECKPOINT_FORMAT.as_bytes())?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for (_, _, params) in &self.nets {
            w.write_all(&(params.len() as u64).to_le_bytes())?;
            for v in params.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, NetError> {
        let mut tag = [0u8; CHECKPOINT_FORMAT.len()];
        r.read_exact(&mut tag)?;
        if tag != CHECKPOINT_FORMAT.as_bytes() {
            return Err(NetError::Checkpoint("missing autophoto-ckpt/1 tag".into()));
        }
        let header_len = read_u64(&mut r)? as usize;
        if header_len > 1 << 24 {
            return Err(NetError::Checkpoint(format!("header length {header_len} is implausible")));
        }
        let mut header = vec![0u8; header_len];
        r.read_exact(&mut header)?;
        let header: Header = serde_json::from_slice(&header).map_err(|e| NetError::Checkpoint(e.to_string()))?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(NetError::Checkpoint(format!("header format {:?}", header.format)));
        }
        let mut nets = Vec::with_capacity(header.nets.len());
        for entry in header.nets {
            let n = read_u64(&mut r)? as usize;
            if n != entry.spec.param_count() {
                return Err(NetError::Checkpoint(format!(
                    "net {:?}: {n} values stored, spec needs {}",
                    entry.name,
                    entry.spec.param_count()
                )));
            }
            let mut bytes = vec![0u8; n * 8];
            r.read_exact(&mut bytes)?;
            let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            let params = ParamVector::from_vec(&entry.spec, values)?;
            nets.push((entry.name, entry.spec, params));
        }
        Ok(Self { meta: header.meta, nets })
    }
}

fn read_u64(r: &mut impl Read) -> Result<u64, NetError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::Activation;
    use crate::seed;

    #[test]
    fn round_trip_and_layout() {
        let spec = NetSpec::mlp(&[3, 2], Activation::Tanh, Activation::Identity).unwrap();
        let params = ParamVector::init(&spec, &mut seed::rng(1));
        let ckpt = Checkpoint { meta: serde_json::json!({"v": 1}), nets: vec![("scorer".into(), spec.clone(), params.clone())] };
        let bytes = ckpt.to_bytes();
        assert!(bytes.starts_with(CHECKPOINT_FORMAT.as_bytes()));
        let header_len = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
        let body = &bytes[24 + header_len..];
        assert_eq!(u64::from_le_bytes(body[..8].try_into().unwrap()), 8);
        assert_eq!(f64::from_le_bytes(body[8..16].try_into().unwrap()), params[0]);
        assert_eq!(Checkpoint::read_from(bytes.as_slice()).unwrap(), ckpt);
    }

    #[test]
    fn rejects_truncated_and_mistagged() {
        let spec = NetSpec::mlp(&[3, 2], Activation::Tanh, Activation::Identity).unwrap();
        let ckpt = Checkpoint { meta: serde_json::Value::Null, nets: vec![("a".into(), spec.clone(), ParamVector::zeros(&spec))] };
        let bytes = ckpt.to_bytes();
        assert!(Checkpoint::read_from(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::read_from(bad.as_slice()).is_err());
    }
}
