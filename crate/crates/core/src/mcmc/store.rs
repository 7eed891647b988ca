//! Thinned posterior draws, addressable by parameter block, persisted as a
//! directory of flat little-endian f64 arrays plus a JSON manifest.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

const MODULE: &str = "mcmc-engine";

/// One parameter block: `data` laid out as [chain][draw][flattened dims].
#[derive(Clone, Debug)]
pub struct Block {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Block {
    pub fn len_per_draw(&self) -> usize {
        self.dims.iter().product()
    }
}

/// Post-burn-in, thinned draws across chains.
#[derive(Clone, Debug)]
pub struct SampleStore {
    pub stage: String,
    pub n_chains: usize,
    pub draws_per_chain: usize,
    pub blocks: BTreeMap<String, Block>,
    /// Free-form provenance (config echo, seed, species, standardization).
    pub meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    stage: String,
    n_chains: usize,
    draws_per_chain: usize,
    blocks: BTreeMap<String, Vec<usize>>,
    meta: serde_json::Value,
}

impl SampleStore {
    pub fn new(stage: &str, n_chains: usize, draws_per_chain: usize) -> Self {
        SampleStore {
            stage: stage.to_string(),
            n_chains,
            draws_per_chain,
            blocks: BTreeMap::new(),
            meta: serde_json::Value::Null,
        }
    }

    pub fn total_draws(&self) -> usize {
        self.n_chains * self.draws_per_chain
    }

    pub fn insert(&mut self, name: &str, dims: Vec<usize>, data: Vec<f64>) -> Result<()> {
        let expect = self.total_draws() * dims.iter().product::<usize>();
        if data.len() != expect {
            return Err(Error::numerical(
                MODULE,
                format!("block '{name}': expected {expect} values, got {}", data.len()),
            ));
        }
        self.blocks.insert(name.to_string(), Block { dims, data });
        Ok(())
    }

    pub fn block(&self, name: &str) -> Result<&Block> {
        self.blocks.get(name).ok_or_else(|| {
            Error::missing(MODULE, format!("parameter block '{name}' not in store"))
        })
    }

    /// Values of one draw of a block: (chain, draw) -> flattened parameter slice.
    pub fn draw(&self, name: &str, chain: usize, draw: usize) -> Result<&[f64]> {
        let b = self.block(name)?;
        let len = b.len_per_draw();
        let start = (chain * self.draws_per_chain + draw) * len;
        Ok(&b.data[start..start + len])
    }

    /// Values of one draw addressed by a global draw index in chain-major order.
    pub fn draw_global(&self, name: &str, global: usize) -> Result<&[f64]> {
        let chain = global / self.draws_per_chain;
        let draw = global % self.draws_per_chain;
        self.draw(name, chain, draw)
    }

    /// The series of one scalar (flat index within the block) for one chain.
    pub fn scalar_series(&self, name: &str, flat_idx: usize, chain: usize) -> Result<Vec<f64>> {
        let b = self.block(name)?;
        let len = b.len_per_draw();
        if flat_idx >= len {
            return Err(Error::missing(
                MODULE,
                format!("scalar index {flat_idx} out of range for block '{name}'"),
            ));
        }
        Ok((0..self.draws_per_chain)
            .map(|d| b.data[(chain * self.draws_per_chain + d) * len + flat_idx])
            .collect())
    }

    /// Pooled series of one scalar across chains, chain-major.
    pub fn pooled_series(&self, name: &str, flat_idx: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.total_draws());
        for chain in 0..self.n_chains {
            out.extend(self.scalar_series(name, flat_idx, chain)?);
        }
        Ok(out)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let manifest = Manifest {
            stage: self.stage.clone(),
            n_chains: self.n_chains,
            draws_per_chain: self.draws_per_chain,
            blocks: self
                .blocks
                .iter()
                .map(|(k, v)| (k.clone(), v.dims.clone()))
                .collect(),
            meta: self.meta.clone(),
        };
        let mut mf = std::fs::File::create(dir.join("manifest.json"))?;
        serde_json::to_writer_pretty(&mut mf, &manifest)?;
        mf.write_all(b"\n")?;
        for (name, block) in &self.blocks {
            let mut f =
                std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{name}.bin")))?);
            for v in &block.data {
                f.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join("manifest.json");
        if !mpath.exists() {
            return Err(Error::missing(
                MODULE,
                format!("no manifest.json under {}", dir.display()),
            ));
        }
        let manifest: Manifest = serde_json::from_reader(std::fs::File::open(mpath)?)?;
        let mut store = SampleStore::new(&manifest.stage, manifest.n_chains, manifest.draws_per_chain);
        store.meta = manifest.meta;
        for (name, dims) in manifest.blocks {
            let path = dir.join(format!("{name}.bin"));
            if !path.exists() {
                return Err(Error::missing(
                    MODULE,
                    format!("block file missing: {}", path.display()),
                ));
            }
            let mut buf = Vec::new();
            std::fs::File::open(&path)?.read_to_end(&mut buf)?;
            if buf.len() % 8 != 0 {
                return Err(Error::numerical(
                    MODULE,
                    format!("corrupt block file {}", path.display()),
                ));
            }
            let data: Vec<f64> = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            store.insert(&name, dims, data)?;
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_through_disk() {
        let mut store = SampleStore::new("stage1", 2, 3);
        store.meta = serde_json::json!({"seed": 7});
        let data: Vec<f64> = (0..2 * 3 * 4).map(|i| i as f64 * 0.5).collect();
        store.insert("beta", vec![2, 2], data.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        store.save(dir.path()).unwrap();
        let loaded = SampleStore::load(dir.path()).unwrap();
        assert_eq!(loaded.n_chains, 2);
        assert_eq!(loaded.draws_per_chain, 3);
        assert_eq!(loaded.block("beta").unwrap().data, data);
        assert_eq!(loaded.meta["seed"], 7);
        assert_eq!(loaded.draw("beta", 1, 2).unwrap(), &data[20..24]);
        assert_eq!(loaded.draw_global("beta", 5).unwrap(), &data[20..24]);
        let s = loaded.scalar_series("beta", 1, 0).unwrap();
        assert_eq!(s, vec![0.5, 2.5, 4.5]);
        assert!(loaded.block("nope").is_err());
    }

    #[test]
    fn insert_rejects_wrong_length() {
        let mut store = SampleStore::new("stage1", 1, 2);
        assert!(store.insert("x", vec![3], vec![0.0; 5]).is_err());
    }
}
