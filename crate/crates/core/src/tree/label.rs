use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ulam-Harris address of a particle.
///
/// The empty path is the initial ancestor; `(3, 2, 7)` is the seventh child of
/// the second child of the third child of the ancestor. Children are numbered
/// from 1 in birth order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParticleLabel(Vec<u32>);

impl ParticleLabel {
    pub fn root() -> Self {
        ParticleLabel(Vec::new())
    }

    /// Builds a label from child indices; every index must be at least 1.
    pub fn from_path(path: Vec<u32>) -> Result<Self> {
        if path.contains(&0) {
            return Err(Error::MalformedTree(format!(
                "child indices start at 1, got {path:?}"
            )));
        }
        Ok(ParticleLabel(path))
    }

    pub fn path(&self) -> &[u32] {
        &self.0
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn generation(&self) -> usize {
        self.0.len()
    }

    /// The `j`th child of this particle (`j >= 1`).
    pub fn child(&self, j: u32) -> Self {
        debug_assert!(j >= 1);
        let mut path = Vec::with_capacity(self.0.len() + 1);
        path.extend_from_slice(&self.0);
        path.push(j);
        ParticleLabel(path)
    }

    pub fn parent(&self) -> Option<Self> {
        if self.0.is_empty() {
            None
        } else {
            Some(ParticleLabel(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    pub fn concat(&self, other: &ParticleLabel) -> Self {
        let mut path = self.0.clone();
        path.extend_from_slice(&other.0);
        ParticleLabel(path)
    }

    /// `u <= v`: `self` is a prefix of `other` (every label is its own ancestor).
    pub fn is_ancestor_of(&self, other: &ParticleLabel) -> bool {
        other.0.starts_with(&self.0)
    }

    pub fn is_strict_ancestor_of(&self, other: &ParticleLabel) -> bool {
        self.0.len() < other.0.len() && self.is_ancestor_of(other)
    }

    /// Most recent common ancestor.
    pub fn common_ancestor(&self, other: &ParticleLabel) -> ParticleLabel {
        let n = self
            .0
            .iter()
            .zip(&other.0)
            .take_while(|(a, b)| a == b)
            .count();
        ParticleLabel(self.0[..n].to_vec())
    }
}

impl fmt::Display for ParticleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("∅");
        }
        for (i, j) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{j}")?;
        }
        Ok(())
    }
}

impl FromStr for ParticleLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "∅" || s.is_empty() {
            return Ok(ParticleLabel::root());
        }
        let path = s
            .split('.')
            .map(|part| {
                part.parse::<u32>().map_err(|e| Error::Parse {
                    line: 0,
                    msg: format!("bad label `{s}`: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ParticleLabel::from_path(path)
    }
}
