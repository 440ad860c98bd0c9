//! Versioned binary model files, little-endian throughout:
//!
//! ```text
//! "PMDL" | u32 version = 1 | u8 kind (0 linear, 1 forest)
//! u32 n_features | n_features × (u32 byte length, UTF-8 name)
//! linear: f64 intercept | f64 ridge | n_features × f64 weight
//! forest: u32 n_trees | per tree: u32 n_nodes | nodes
//!   node: u8 0, f64 value                                   (leaf)
//!       | u8 1, u32 feature, f64 threshold, u32 left, u32 right (split)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{Forest, LinearModel, Model, Node, TrainedModel, Tree};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PMDL";
const VERSION: u32 = 1;

pub fn write_model<W: Write>(m: &TrainedModel, w: &mut W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[match m.model {
        Model::Linear(_) => 0u8,
        Model::Forest(_) => 1u8,
    }])?;
    w.write_all(&(m.feature_names.len() as u32).to_le_bytes())?;
    for name in &m.feature_names {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
    }
    match &m.model {
        Model::Linear(l) => {
            w.write_all(&l.intercept.to_le_bytes())?;
            w.write_all(&l.ridge.to_le_bytes())?;
            for v in &l.weights {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Model::Forest(f) => {
            w.write_all(&(f.trees.len() as u32).to_le_bytes())?;
            for t in &f.trees {
                w.write_all(&(t.nodes.len() as u32).to_le_bytes())?;
                for node in &t.nodes {
                    match *node {
                        Node::Leaf(v) => {
                            w.write_all(&[0])?;
                            w.write_all(&v.to_le_bytes())?;
                        }
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => {
                            w.write_all(&[1])?;
                            w.write_all(&feature.to_le_bytes())?;
                            w.write_all(&threshold.to_le_bytes())?;
                            w.write_all(&left.to_le_bytes())?;
                            w.write_all(&right.to_le_bytes())?;
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.bytes
            .read_exact(&mut buf)
            .map_err(|_| Error::Format("truncated model file".into()))?;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let n = self.u32()? as usize;
        if n > self.bytes.len() {
            return Err(Error::Format(format!(
                "model file claims {n} {what}, only {} bytes left",
                self.bytes.len()
            )));
        }
        Ok(n)
    }
}

pub fn read_model(bytes: &[u8]) -> Result<TrainedModel> {
    let mut r = Reader { bytes };
    if &r.take::<4>()? != MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let kind = r.u8()?;
    let d = r.count("features")?;
    let mut feature_names = Vec::with_capacity(d);
    for _ in 0..d {
        let len = r.count("name bytes")?;
        let (name, rest) = r.bytes.split_at(len);
        r.bytes = rest;
        feature_names.push(
            String::from_utf8(name.to_vec())
                .map_err(|_| Error::Format("feature name is not UTF-8".into()))?,
        );
    }
    let model = match kind {
        0 => {
            let intercept = r.f64()?;
            let ridge = r.f64()?;
            let weights = (0..d).map(|_| r.f64()).collect::<Result<_>>()?;
            Model::Linear(LinearModel {
                intercept,
                weights,
                ridge,
            })
        }
        1 => {
            let n_trees = r.count("trees")?;
            if n_trees == 0 {
                return Err(Error::Format("forest has no trees".into()));
            }
            let mut trees = Vec::with_capacity(n_trees);
            for t in 0..n_trees {
                let n_nodes = r.count("nodes")?;
                let mut nodes = Vec::with_capacity(n_nodes);
                for _ in 0..n_nodes {
                    nodes.push(match r.u8()? {
                        0 => Node::Leaf(r.f64()?),
                        1 => Node::Split {
                            feature: r.u32()?,
                            threshold: r.f64()?,
                            left: r.u32()?,
                            right: r.u32()?,
                        },
                        tag => return Err(Error::Format(format!("tree {t}: bad node tag {tag}"))),
                    });
                }
                let valid = !nodes.is_empty()
                    && nodes.iter().enumerate().all(|(i, n)| match *n {
                        Node::Leaf(_) => true,
                        Node::Split {
                            feature, left, right, ..
                        } => {
                            (feature as usize) < d
                                && (left as usize) > i
                                && (right as usize) > i
                                && (left as usize) < n_nodes
                                && (right as usize) < n_nodes
                        }
                    });
                if !valid {
                    return Err(Error::Format(format!("tree {t} is malformed")));
                }
                trees.push(Tree { nodes });
            }
            Model::Forest(Forest { n_features: d, trees })
        }
        k => return Err(Error::Format(format!("unknown model kind {k}"))),
    };
    if !r.bytes.is_empty() {
        return Err(Error::Format(format!(
            "{} trailing bytes in model file",
            r.bytes.len()
        )));
    }
    Ok(TrainedModel { feature_names, model })
}

pub fn save_model(m: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_model(m, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io_at(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io_at(path, e))?;
    read_model(&bytes)
}
