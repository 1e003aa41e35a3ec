//! Binary checkpoint container.
//!
//! ```text
//! "VD2NN"              5 bytes
//! version              u16
//! config length        u32, then that many bytes of TOML
//! num_layers, n        u32, u32
//! phases               num_layers * n * n f64, row-major
//! head flag            u8 (0 none, 1 electronic head)
//!   k_in, k_out        u32, u32
//!   weights, bias      k_in * k_out f64, k_out f64
//! crc32                u32 over every preceding byte
//! ```
//! All integers and floats little-endian.

use std::path::Path;

use vd2nn::heads::ElectronicHead;
use vd2nn::network::{DiffractiveLayer, DiffractiveNetwork};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 5] = b"VD2NN";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub network: DiffractiveNetwork,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let net = &self.network;
        let n = net.grid().n;
        let mut b = Vec::with_capacity(64 + net.num_layers() * n * n * 8);
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        let text = self.config.to_toml();
        b.extend_from_slice(&(text.len() as u32).to_le_bytes());
        b.extend_from_slice(text.as_bytes());
        b.extend_from_slice(&(net.num_layers() as u32).to_le_bytes());
        b.extend_from_slice(&(n as u32).to_le_bytes());
        for layer in &net.layers {
            for p in &layer.phase {
                b.extend_from_slice(&p.to_le_bytes());
            }
        }
        match &net.electronic {
            None => b.push(0),
            Some(h) => {
                b.push(1);
                b.extend_from_slice(&(h.inputs() as u32).to_le_bytes());
                b.extend_from_slice(&(h.outputs() as u32).to_le_bytes());
                for w in h.weights.iter().chain(&h.bias) {
                    b.extend_from_slice(&w.to_le_bytes());
                }
            }
        }
        let crc = crc32fast::hash(&b);
        b.extend_from_slice(&crc.to_le_bytes());
        b
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |detail: String| CliError::checkpoint(path, detail);
        if bytes.len() < MAGIC.len() + 2 + 4 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(bad("not a checkpoint (bad magic)".into()));
        }
        let version = u16::from_le_bytes([bytes[5], bytes[6]]);
        if version != VERSION {
            return Err(bad(format!(
                "format version {version} is not supported (expected {VERSION})"
            )));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes([tail[0], tail[1], tail[2], tail[3]]);
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(bad(format!(
                "checksum mismatch (stored {stored:#010x}, computed {computed:#010x})"
            )));
        }

        let mut r = Reader {
            bytes: body,
            at: 7,
            path,
        };
        let len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(len)?).map_err(|e| bad(format!("config is not UTF-8: {e}")))?;
        let config = RunConfig::parse(text).map_err(|e| bad(format!("embedded config: {e}")))?;
        let num_layers = r.u32()? as usize;
        let n = r.u32()? as usize;
        let geometry = config.geometry.geometry();
        if num_layers != geometry.num_layers || n != geometry.grid.n {
            return Err(bad(format!(
                "{num_layers} layers of {n}x{n} do not match the embedded configuration"
            )));
        }
        let mut layers = Vec::with_capacity(num_layers);
        for _ in 0..num_layers {
            layers.push(DiffractiveLayer {
                phase: r.f64s(n * n)?,
                amplitude_floor: config.geometry.amplitude_floor,
            });
        }
        let electronic = match r.take(1)?[0] {
            0 => None,
            1 => {
                let k_in = r.u32()? as usize;
                let k_out = r.u32()? as usize;
                let weights = r.f64s(k_in * k_out)?;
                let bias = r.f64s(k_out)?;
                Some(ElectronicHead::new(k_in, k_out, weights, bias).map_err(|e| bad(e.to_string()))?)
            }
            f => return Err(bad(format!("unknown head flag {f}"))),
        };
        if r.at != body.len() {
            return Err(bad(format!("{} trailing bytes", body.len() - r.at)));
        }
        let layout = config.layout().map_err(|e| bad(e.to_string()))?;
        let network =
            DiffractiveNetwork::from_parts(geometry, layers, layout, electronic).map_err(|e| bad(e.to_string()))?;
        Ok(Checkpoint { config, network })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(k)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                CliError::checkpoint(self.path, format!("truncated: needed {k} bytes at offset {}", self.at))
            })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let s = self.take(4)?;
        Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
    }

    fn f64s(&mut self, k: usize) -> Result<Vec<f64>> {
        let s = self.take(k.checked_mul(8).unwrap_or(usize::MAX))?;
        Ok(s.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mode: &str) -> Checkpoint {
        let text = format!(
            "[geometry]\nn = 16\nnum_layers = 2\ninput_to_first = 5.0\nlayer_spacing = 5.0\nlast_to_output = 5.0\n\
             [readout]\nmode = \"{mode}\"\nnum_classes = 2\ndetector_side = 1.0\nrow_separation = 3.0\ncolumn_pitch = 2.0\npair_gap = 0.4\n\
             [encoding]\nchannel = \"amplitude\"\nobject_span = 6.0\n"
        );
        let config = RunConfig::parse(&text).unwrap();
        let mut network = config.network().unwrap();
        for (l, layer) in network.layers.iter_mut().enumerate() {
            layer
                .phase
                .iter_mut()
                .enumerate()
                .for_each(|(i, p)| *p = (i * (l + 3)) as f64 * 0.173 - 9.0);
        }
        Checkpoint { config, network }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for mode in ["standard", "differential", "hybrid"] {
            let c = small(mode);
            let bytes = c.to_bytes();
            let back = Checkpoint::from_bytes(&bytes, Path::new("x")).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn every_flipped_byte_is_caught() {
        let bytes = small("hybrid").to_bytes();
        for i in (0..bytes.len()).step_by(7) {
            let mut bad = bytes.clone();
            bad[i] ^= 0x20;
            assert!(Checkpoint::from_bytes(&bad, Path::new("x")).is_err(), "byte {i}");
        }
    }

    #[test]
    fn version_mismatch_is_named() {
        let mut bytes = small("standard").to_bytes();
        bytes[5] = 9;
        let err = Checkpoint::from_bytes(&bytes, Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("version 9"));
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn truncation_is_rejected() {
        let bytes = small("standard").to_bytes();
        for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(Checkpoint::from_bytes(&bytes[..cut], Path::new("x")).is_err());
        }
    }
}
