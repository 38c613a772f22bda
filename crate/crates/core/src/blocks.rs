//! Block-partitioned vectors, the block-maximum norm and projection onto
//! box-shaped product constraint sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Block dimensions `[n_1, ..., n_N]` of a decision vector, one block per agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Partition {
    dims: Vec<usize>,
    offsets: Vec<usize>,
}

impl Partition {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidPartition("at least one block is required".into()));
        }
        if let Some(i) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidPartition(format!("block {i} has dimension 0")));
        }
        let mut offsets = Vec::with_capacity(dims.len() + 1);
        offsets.push(0);
        for d in &dims {
            offsets.push(offsets.last().unwrap() + d);
        }
        Ok(Self { dims, offsets })
    }

    /// `blocks` blocks of identical size.
    pub fn uniform(blocks: usize, dim: usize) -> Result<Self> {
        Self::new(vec![dim; blocks])
    }

    pub fn num_blocks(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.dims
    }

    /// Index range of block `i` (zero based).
    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        (0..self.num_blocks()).map(|i| self.range(i))
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.num_blocks() {
            return Err(Error::BlockIndex {
                index: i,
                blocks: self.num_blocks(),
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<usize>> for Partition {
    type Error = Error;

    fn try_from(dims: Vec<usize>) -> Result<Self> {
        Self::new(dims)
    }
}

impl From<Partition> for Vec<usize> {
    fn from(p: Partition) -> Self {
        p.dims
    }
}

/// `max_i ||v_i||_2` over the blocks of `v`.
pub fn block_max_norm_slice(v: &[f64], p: &Partition) -> f64 {
    p.ranges()
        .map(|r| euclidean(&v[r]))
        .fold(0.0, f64::max)
}

/// `||a - b||_{2,inf}` without allocating the difference.
pub fn block_max_distance(a: &[f64], b: &[f64], p: &Partition) -> f64 {
    p.ranges()
        .map(|r| {
            a[r.clone()]
                .iter()
                .zip(&b[r])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

pub fn euclidean(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// A decision vector together with its block partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionedVector {
    data: Vec<f64>,
    partition: Partition,
}

impl PartitionedVector {
    pub fn new(data: Vec<f64>, partition: Partition) -> Result<Self> {
        if data.len() != partition.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: partition.total_dim(),
                found: data.len(),
            });
        }
        Ok(Self { data, partition })
    }

    pub fn zeros(partition: Partition) -> Self {
        Self {
            data: vec![0.0; partition.total_dim()],
            partition,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Block `i` (zero based).
    pub fn block(&self, i: usize) -> Result<&[f64]> {
        self.partition.check_index(i)?;
        Ok(&self.data[self.partition.range(i)])
    }

    pub fn block_mut(&mut self, i: usize) -> Result<&mut [f64]> {
        self.partition.check_index(i)?;
        let r = self.partition.range(i);
        Ok(&mut self.data[r])
    }

    /// Reassemble a vector from per-block slices.
    pub fn from_blocks(blocks: &[&[f64]], partition: Partition) -> Result<Self> {
        if blocks.len() != partition.num_blocks() {
            return Err(Error::DimensionMismatch {
                expected: partition.num_blocks(),
                found: blocks.len(),
            });
        }
        let mut data = Vec::with_capacity(partition.total_dim());
        for (i, b) in blocks.iter().enumerate() {
            if b.len() != partition.block_dims()[i] {
                return Err(Error::DimensionMismatch {
                    expected: partition.block_dims()[i],
                    found: b.len(),
                });
            }
            data.extend_from_slice(b);
        }
        Ok(Self { data, partition })
    }

    pub fn block_max_norm(&self) -> f64 {
        block_max_norm_slice(&self.data, &self.partition)
    }

    pub fn norm2(&self) -> f64 {
        euclidean(&self.data)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.partition != other.partition {
            return Err(Error::PartitionMismatch);
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self {
            data,
            partition: self.partition.clone(),
        })
    }
}

/// `||v||_{2,inf}`: the largest Euclidean norm over the blocks of `v`.
pub fn block_max_norm(v: &PartitionedVector) -> f64 {
    v.block_max_norm()
}

/// Block `i` of `v` (zero based).
pub fn block_slice(v: &PartitionedVector, i: usize) -> Result<&[f64]> {
    v.block(i)
}

/// Axis-aligned box `[lower, upper]`, read blockwise as `U_1 x ... x U_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
    partition: Partition,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, partition: Partition) -> Result<Self> {
        let n = partition.total_dim();
        for (name, v) in [("lower", &lower), ("upper", &upper)] {
            if v.len() != n {
                return Err(Error::InvalidBox(format!(
                    "{name} bound has length {}, expected {n}",
                    v.len()
                )));
            }
        }
        for (k, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidBox(format!("coordinate {k} is unbounded")));
            }
            if lo > hi {
                return Err(Error::InvalidBox(format!(
                    "coordinate {k} is empty: {lo} > {hi}"
                )));
            }
        }
        Ok(Self {
            lower,
            upper,
            partition,
        })
    }

    /// The same interval `[lo, hi]` on every coordinate.
    pub fn uniform(lo: f64, hi: f64, partition: Partition) -> Result<Self> {
        let n = partition.total_dim();
        Self::new(vec![lo; n], vec![hi; n], partition)
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.lower.len()
            && v.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| *lo <= *x && *x <= *hi)
    }

    /// Clamp `v` into the box, in place.
    pub fn project_in_place(&self, v: &mut [f64]) {
        for (x, (lo, hi)) in v.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *x = x.clamp(*lo, *hi);
        }
    }

    /// Clamp a single block into `U_i`.
    pub fn project_block_in_place(&self, i: usize, block: &mut [f64]) {
        let r = self.partition.range(i);
        for (x, (lo, hi)) in block
            .iter_mut()
            .zip(self.lower[r.clone()].iter().zip(&self.upper[r]))
        {
            *x = x.clamp(*lo, *hi);
        }
    }

    pub fn project(&self, v: &PartitionedVector) -> Result<PartitionedVector> {
        if v.partition() != &self.partition {
            return Err(Error::PartitionMismatch);
        }
        let mut out = v.clone();
        self.project_in_place(out.as_mut_slice());
        Ok(out)
    }
}

/// Euclidean projection of `v` onto the box `set`.
pub fn project_box(v: &PartitionedVector, set: &BoxSet) -> Result<PartitionedVector> {
    set.project(v)
}
