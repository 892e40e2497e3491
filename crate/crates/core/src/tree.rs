//! Addressing of the rooted regular tree `T^d` without materializing it.
//!
//! The root has degree `d`; every other vertex has degree `d+1` (one parent,
//! `d` children). A vertex is addressed by its digit path from the root, so
//! ids are O(depth) and collision free.

use crate::{Error, Result};
use std::collections::HashMap;
use std::fmt;

/// Path-from-root address of a vertex. The root is the empty path.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexId {
    digits: Vec<u16>,
}

impl VertexId {
    pub fn root() -> Self {
        Self { digits: Vec::new() }
    }

    pub fn from_digits(digits: &[u16]) -> Self {
        Self { digits: digits.to_vec() }
    }

    pub fn digits(&self) -> &[u16] {
        &self.digits
    }

    /// Graph distance from the root.
    pub fn depth(&self) -> usize {
        self.digits.len()
    }

    pub fn is_root(&self) -> bool {
        self.digits.is_empty()
    }

    /// The `j`-th child (digit appended).
    pub fn child(&self, j: u16) -> Self {
        let mut digits = Vec::with_capacity(self.digits.len() + 1);
        digits.extend_from_slice(&self.digits);
        digits.push(j);
        Self { digits }
    }

    /// All `d` children.
    pub fn children(&self, degree: usize) -> Vec<Self> {
        assert!(degree >= 2, "tree degree must be at least 2");
        (0..degree as u16).map(|j| self.child(j)).collect()
    }

    /// Parent, or `None` at the root.
    pub fn parent(&self) -> Option<Self> {
        if self.digits.is_empty() {
            None
        } else {
            Some(Self { digits: self.digits[..self.digits.len() - 1].to_vec() })
        }
    }

    /// Children plus parent: `d` neighbors at the root, `d+1` elsewhere.
    pub fn neighbors(&self, degree: usize) -> Vec<Self> {
        let mut out = self.children(degree);
        if let Some(p) = self.parent() {
            out.push(p);
        }
        out
    }
}

/// Dot-joined digits; the root prints as `ε`.
impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.digits.is_empty() {
            return write!(f, "ε");
        }
        let mut first = true;
        for d in &self.digits {
            if !first {
                write!(f, ".")?;
            }
            write!(f, "{d}")?;
            first = false;
        }
        Ok(())
    }
}

/// All vertices of `T^d` of depth at most `depth`, enumerated breadth first.
///
/// Vertices at the truncation depth have no children; the boundary is
/// absorbing in the sense that nothing exists below it.
#[derive(Debug, Clone)]
pub struct TruncatedTree {
    degree: usize,
    depth: usize,
    verts: Vec<VertexId>,
    index: HashMap<VertexId, usize>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
}

impl TruncatedTree {
    pub fn new(degree: usize, depth: usize) -> Result<Self> {
        if degree < 2 {
            return Err(Error::InvalidInput(format!(
                "tree degree must be at least 2, got {degree}"
            )));
        }
        let mut verts = vec![VertexId::root()];
        let mut parent = vec![None];
        let mut level_start = 0;
        for _ in 0..depth {
            let level_end = verts.len();
            for i in level_start..level_end {
                let v = verts[i].clone();
                for j in 0..degree as u16 {
                    verts.push(v.child(j));
                    parent.push(Some(i));
                }
            }
            level_start = level_end;
        }
        let index: HashMap<VertexId, usize> =
            verts.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect();
        let mut children = vec![Vec::new(); verts.len()];
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(i);
            }
        }
        Ok(Self { degree, depth, verts, index, parent, children })
    }

    /// Like [`Self::new`] but refuses trees above a vertex budget.
    pub fn with_max_vertices(degree: usize, depth: usize, max: usize) -> Result<Self> {
        let mut count = 1usize;
        let mut level = 1usize;
        for _ in 0..depth {
            level = level.saturating_mul(degree);
            count = count.saturating_add(level);
            if count > max {
                return Err(Error::StateSpaceTooLarge { got: count, max });
            }
        }
        Self::new(degree, depth)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.verts.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn vertices(&self) -> &[VertexId] {
        &self.verts
    }

    pub fn vertex(&self, i: usize) -> &VertexId {
        &self.verts[i]
    }

    pub fn index_of(&self, v: &VertexId) -> Option<usize> {
        self.index.get(v).copied()
    }

    pub fn parent_of(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    pub fn children_of(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    /// Neighbor indices inside the truncation.
    pub fn neighbors_of(&self, i: usize) -> Vec<usize> {
        let mut out = self.children[i].clone();
        if let Some(p) = self.parent[i] {
            out.push(p);
        }
        out
    }

    /// Undirected edges `(parent, child)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.verts.len()).filter_map(move |i| self.parent[i].map(|p| (p, i)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_has_d_children() {
        let root = VertexId::root();
        assert_eq!(root.children(4).len(), 4);
        assert_eq!(root.neighbors(4).len(), 4);
    }

    #[test]
    fn non_root_degree_is_d_plus_one() {
        let v = VertexId::root().child(0);
        assert_eq!(v.neighbors(2).len(), 3);
        assert_eq!(VertexId::root().neighbors(3).len(), 3);
        assert_eq!(VertexId::from_digits(&[1, 2]).neighbors(3).len(), 4);
    }

    #[test]
    fn depth_counts_digits() {
        let v = VertexId::root().child(0).child(1);
        assert_eq!(v.depth(), 2);
    }

    #[test]
    fn parent_round_trip() {
        assert_eq!(VertexId::root().parent(), None);
        assert_eq!(
            VertexId::from_digits(&[0, 1]).parent().unwrap(),
            VertexId::from_digits(&[0])
        );
        let v = VertexId::from_digits(&[3, 1, 2]);
        for c in v.children(5) {
            assert_eq!(c.parent().unwrap(), v);
            assert_eq!(c.depth(), v.depth() + 1);
        }
    }

    #[test]
    fn neighbor_relation_symmetric() {
        let d = 3;
        let u = VertexId::from_digits(&[1]);
        for v in u.neighbors(d) {
            assert!(v.neighbors(d).contains(&u), "asymmetric at {v}");
        }
    }

    #[test]
    fn display_format() {
        assert_eq!(VertexId::root().to_string(), "ε");
        assert_eq!(VertexId::from_digits(&[0, 12, 3]).to_string(), "0.12.3");
    }

    #[test]
    fn truncated_tree_counts() {
        let t = TruncatedTree::new(2, 3).unwrap();
        assert_eq!(t.len(), 1 + 2 + 4 + 8);
        let t = TruncatedTree::new(3, 2).unwrap();
        assert_eq!(t.len(), 1 + 3 + 9);
    }

    #[test]
    fn truncated_tree_structure() {
        let t = TruncatedTree::new(2, 2).unwrap();
        assert_eq!(t.parent_of(0), None);
        assert_eq!(t.children_of(0).len(), 2);
        // Leaves have no children.
        for i in 0..t.len() {
            if t.vertex(i).depth() == 2 {
                assert!(t.children_of(i).is_empty());
            }
        }
        // Index map is consistent.
        for i in 0..t.len() {
            assert_eq!(t.index_of(t.vertex(i)), Some(i));
        }
        assert_eq!(t.edges().count(), t.len() - 1);
    }

    #[test]
    fn vertex_budget_enforced() {
        assert!(TruncatedTree::with_max_vertices(2, 3, 20_000).is_ok());
        assert!(TruncatedTree::with_max_vertices(10, 10, 20_000).is_err());
    }
}
