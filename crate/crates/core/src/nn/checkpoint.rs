//! Model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "LCMDL01"
//! config: kind:u8 (0 gcn, 1 gat) | hidden:u32 | n_classes:u32 | seed:u64
//!         | leaky_slope:f64 | use_edge_attr:u8 | in_dim:u32 | edge_dim:u32 (0 = none)
//! n_tensors:u32, then per tensor: name_len:u32 | name | rows:u32 | cols:u32 | rows·cols × f64
//! optimizer flag:u8; when 1:
//!   lr, weight_decay, beta1, beta2, eps : f64 | step_count:u64
//!   n_tensors:u32 tensors named "m/<param>" followed by n_tensors named "v/<param>"
//! ```

use std::fs;
use std::path::Path;

use crate::binio::{len_u32, Reader, Writer};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::optim::{AdamWConfig, AdamWState};

use super::{init_params, ModelConfig, ModelKind, ModelParams};

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"LCMDL01";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub optimizer: Option<AdamWState>,
}

impl Checkpoint {
    pub fn in_dim(&self) -> usize {
        self.params.input_dim()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(CHECKPOINT_MAGIC);
        let c = &self.config;
        w.u8(match c.kind {
            ModelKind::Gcn => 0,
            ModelKind::Gat => 1,
        });
        w.u32(len_u32(c.hidden_dim));
        w.u32(len_u32(c.n_classes));
        w.u64(c.seed);
        w.f64(c.leaky_slope);
        w.u8(u8::from(c.use_edge_attr));
        w.u32(len_u32(self.params.input_dim()));
        w.u32(len_u32(self.params.edge_dim().unwrap_or(0)));

        let tensors = self.params.tensors();
        w.u32(len_u32(tensors.len()));
        for (name, t) in &tensors {
            write_tensor(&mut w, name, t);
        }
        match &self.optimizer {
            None => w.u8(0),
            Some(opt) => {
                w.u8(1);
                let oc = &opt.config;
                for x in [oc.lr, oc.weight_decay, oc.beta1, oc.beta2, oc.eps] {
                    w.f64(x);
                }
                w.u64(opt.step_count);
                w.u32(len_u32(opt.m.len()));
                for ((name, _), m) in tensors.iter().zip(&opt.m) {
                    write_tensor(&mut w, &format!("m/{name}"), m);
                }
                for ((name, _), v) in tensors.iter().zip(&opt.v) {
                    write_tensor(&mut w, &format!("v/{name}"), v);
                }
            }
        }
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_magic(CHECKPOINT_MAGIC)?;
        let kind = match r.u8()? {
            0 => ModelKind::Gcn,
            1 => ModelKind::Gat,
            k => return Err(Error::Format(format!("unknown model kind code {k}"))),
        };
        let config = ModelConfig {
            kind,
            hidden_dim: r.u32()? as usize,
            n_classes: r.u32()? as usize,
            seed: r.u64()?,
            leaky_slope: r.f64()?,
            use_edge_attr: r.u8()? != 0,
        };
        let in_dim = r.u32()? as usize;
        let edge_dim = match r.u32()? {
            0 => None,
            d => Some(d as usize),
        };
        // Shape template; every entry is overwritten below.
        let mut params = init_params(&config, in_dim, edge_dim)?;
        let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
        let n = r.u32()? as usize;
        if n != names.len() {
            return Err(Error::Format(format!(
                "checkpoint has {n} tensors, config implies {}",
                names.len()
            )));
        }
        for (slot, name) in params.tensors_mut().into_iter().zip(&names) {
            read_tensor_into(&mut r, name, slot)?;
        }

        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let config = AdamWConfig {
                    lr: r.f64()?,
                    weight_decay: r.f64()?,
                    beta1: r.f64()?,
                    beta2: r.f64()?,
                    eps: r.f64()?,
                };
                let step_count = r.u64()?;
                let k = r.u32()? as usize;
                if k != names.len() {
                    return Err(Error::Format(format!("optimizer has {k} moment tensors")));
                }
                let mut state = AdamWState::new(config, &params);
                state.step_count = step_count;
                for (slot, name) in state.m.iter_mut().zip(&names) {
                    read_tensor_into(&mut r, &format!("m/{name}"), slot)?;
                }
                for (slot, name) in state.v.iter_mut().zip(&names) {
                    read_tensor_into(&mut r, &format!("v/{name}"), slot)?;
                }
                Some(state)
            }
            f => return Err(Error::Format(format!("bad optimizer flag {f}"))),
        };
        r.finish()?;
        Ok(Self {
            config,
            params,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn write_tensor(w: &mut Writer, name: &str, t: &Matrix) {
    w.str(name);
    w.u32(len_u32(t.rows()));
    w.u32(len_u32(t.cols()));
    for &x in t.as_slice() {
        w.f64(x);
    }
}

fn read_tensor_into(r: &mut Reader<'_>, expected: &str, slot: &mut Matrix) -> Result<()> {
    let name = r.str()?;
    if name != expected {
        return Err(Error::Format(format!("tensor {name:?} where {expected:?} was expected")));
    }
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    if (rows, cols) != slot.shape() {
        return Err(Error::Format(format!(
            "tensor {name} is {rows}x{cols}, expected {:?}",
            slot.shape()
        )));
    }
    for x in slot.as_mut_slice() {
        *x = r.f64()?;
    }
    Ok(())
}
