//! Lazy vertex arena for simulations on the (possibly truncated) tree.
//!
//! Vertices are interned on first touch; children are materialized as one
//! contiguous block when their parent first needs them. Each record carries
//! the environment hash-chain state, so weights come for free without ever
//! rebuilding a digit path.

use crate::tree::VertexId;
use crate::weights::QuenchedEnvironment;

pub(crate) const NO_VERTEX: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct VertRec {
    parent: u32,
    /// Start of the contiguous child block; 0 means not materialized
    /// (slot 0 is the root, which is never anybody's child).
    children_start: u32,
    depth: u32,
    digit: u16,
    class: u16,
    hash: u64,
}

#[derive(Debug)]
pub(crate) struct Arena<'a> {
    env: &'a QuenchedEnvironment,
    degree: u16,
    truncate_depth: Option<u32>,
    values: Vec<f64>,
    recs: Vec<VertRec>,
}

impl<'a> Arena<'a> {
    pub fn new(env: &'a QuenchedEnvironment, degree: usize, truncate_depth: Option<usize>) -> Self {
        let root_hash = env.root_hash();
        let root = VertRec {
            parent: NO_VERTEX,
            children_start: 0,
            depth: 0,
            digit: 0,
            class: env.class_from_hash(root_hash) as u16,
            hash: root_hash,
        };
        Self {
            env,
            degree: degree as u16,
            truncate_depth: truncate_depth.map(|d| d as u32),
            values: env.distribution().values().to_vec(),
            recs: vec![root],
        }
    }

    pub fn len(&self) -> usize {
        self.recs.len()
    }

    pub fn degree(&self) -> usize {
        self.degree as usize
    }

    #[inline]
    pub fn depth(&self, idx: u32) -> u32 {
        self.recs[idx as usize].depth
    }

    #[inline]
    pub fn parent(&self, idx: u32) -> u32 {
        self.recs[idx as usize].parent
    }

    #[inline]
    pub fn class(&self, idx: u32) -> u16 {
        self.recs[idx as usize].class
    }

    #[inline]
    pub fn weight(&self, idx: u32) -> f64 {
        self.values[self.recs[idx as usize].class as usize]
    }

    /// Child block, materializing it on first use. `None` below the
    /// truncation boundary.
    pub fn children(&mut self, idx: u32) -> Option<std::ops::Range<u32>> {
        let rec = &self.recs[idx as usize];
        if let Some(limit) = self.truncate_depth {
            if rec.depth >= limit {
                return None;
            }
        }
        if rec.children_start != 0 {
            let start = rec.children_start;
            return Some(start..start + self.degree as u32);
        }
        let start = self.recs.len() as u32;
        let parent_hash = rec.hash;
        let parent_depth = rec.depth;
        self.recs[idx as usize].children_start = start;
        for j in 0..self.degree {
            let hash = QuenchedEnvironment::child_hash(parent_hash, j);
            self.recs.push(VertRec {
                parent: idx,
                children_start: 0,
                depth: parent_depth + 1,
                digit: j,
                class: self.env.class_from_hash(hash) as u16,
                hash,
            });
        }
        Some(start..start + self.degree as u32)
    }

    /// Child block if already materialized.
    pub fn children_if_present(&self, idx: u32) -> Option<std::ops::Range<u32>> {
        let rec = &self.recs[idx as usize];
        if rec.children_start != 0 {
            Some(rec.children_start..rec.children_start + self.degree as u32)
        } else {
            None
        }
    }

    /// Materialize every vertex down to the truncation depth, breadth
    /// first. Requires a truncated arena; index order then matches the
    /// breadth-first order of [`crate::tree::TruncatedTree`].
    pub fn materialize_full(&mut self) {
        let limit = self.truncate_depth.expect("materialize_full needs a truncation");
        let mut i = 0u32;
        while (i as usize) < self.recs.len() {
            if self.recs[i as usize].depth < limit {
                self.children(i);
            }
            i += 1;
        }
    }

    /// Rebuild the digit path of a vertex (walks to the root).
    pub fn vertex_id(&self, idx: u32) -> VertexId {
        let mut digits = Vec::with_capacity(self.depth(idx) as usize);
        let mut cur = idx;
        while self.recs[cur as usize].parent != NO_VERTEX {
            digits.push(self.recs[cur as usize].digit);
            cur = self.recs[cur as usize].parent;
        }
        digits.reverse();
        VertexId::from_digits(&digits)
    }
}
