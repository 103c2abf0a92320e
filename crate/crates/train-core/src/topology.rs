//! Network shapes over which attestation runs.
//!
//! Node 0 is always the verifier; provers are numbered from 1. Every
//! shape is a spanning tree rooted at the verifier, stored as a parent
//! array plus a CSR children table so child lists of a million-node
//! tree stay allocation-free to walk.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

pub const VERIFIER_ID: u32 = 0;

pub const TREE_MIN_DEGREE: u32 = 2;
pub const TREE_MAX_DEGREE: u32 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    /// Verifier at one end, provers chained one per hop.
    Line,
    /// Every prover one hop from the verifier.
    Star,
    /// Verifier with a single gateway prover whose subtree is a complete
    /// `degree`-ary tree filled in breadth-first order.
    Tree { degree: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyError {
    NoProvers,
    InvalidDegree(u32),
}

impl fmt::Display for TopologyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologyError::NoProvers => write!(f, "topology needs at least one prover"),
            TopologyError::InvalidDegree(d) => write!(
                f,
                "tree degree {d} outside {TREE_MIN_DEGREE}..={TREE_MAX_DEGREE}"
            ),
        }
    }
}

impl core::error::Error for TopologyError {}

#[derive(Debug, Clone)]
pub struct Topology {
    kind: TopologyKind,
    parent: Vec<u32>,
    height: Vec<u32>,
    child_start: Vec<u32>,
    children: Vec<u32>,
    height_net: u32,
}

impl Topology {
    pub fn line(n_provers: u32) -> Result<Self, TopologyError> {
        Self::build(TopologyKind::Line, n_provers)
    }

    pub fn star(n_provers: u32) -> Result<Self, TopologyError> {
        Self::build(TopologyKind::Star, n_provers)
    }

    pub fn tree(n_provers: u32, degree: u32) -> Result<Self, TopologyError> {
        Self::build(TopologyKind::Tree { degree }, n_provers)
    }

    pub fn build(kind: TopologyKind, n_provers: u32) -> Result<Self, TopologyError> {
        if n_provers == 0 {
            return Err(TopologyError::NoProvers);
        }
        if let TopologyKind::Tree { degree } = kind {
            if !(TREE_MIN_DEGREE..=TREE_MAX_DEGREE).contains(&degree) {
                return Err(TopologyError::InvalidDegree(degree));
            }
        }
        let n_nodes = n_provers as usize + 1;
        let mut parent = vec![0u32; n_nodes];
        for i in 1..n_nodes {
            let id = i as u32;
            parent[i] = match kind {
                TopologyKind::Line => id - 1,
                TopologyKind::Star => VERIFIER_ID,
                TopologyKind::Tree { degree } => {
                    if id == 1 {
                        VERIFIER_ID
                    } else {
                        (id - 2) / degree + 1
                    }
                }
            };
        }
        let mut height = vec![0u32; n_nodes];
        let mut height_net = 0;
        for i in 1..n_nodes {
            height[i] = height[parent[i] as usize] + 1;
            height_net = height_net.max(height[i]);
        }
        let mut child_start = vec![0u32; n_nodes + 1];
        for i in 1..n_nodes {
            child_start[parent[i] as usize + 1] += 1;
        }
        for i in 0..n_nodes {
            child_start[i + 1] += child_start[i];
        }
        let mut cursor = child_start.clone();
        let mut children = vec![0u32; n_provers as usize];
        for i in 1..n_nodes {
            let p = parent[i] as usize;
            children[cursor[p] as usize] = i as u32;
            cursor[p] += 1;
        }
        Ok(Topology {
            kind,
            parent,
            height,
            child_start,
            children,
            height_net,
        })
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn n_provers(&self) -> u32 {
        self.parent.len() as u32 - 1
    }

    pub fn node_count(&self) -> u32 {
        self.parent.len() as u32
    }

    /// Parent of `id`; the verifier is its own parent.
    pub fn parent(&self, id: u32) -> u32 {
        self.parent[id as usize]
    }

    pub fn children(&self, id: u32) -> &[u32] {
        let i = id as usize;
        &self.children[self.child_start[i] as usize..self.child_start[i + 1] as usize]
    }

    /// Hop distance from the verifier; 0 for the verifier itself.
    pub fn height(&self, id: u32) -> u32 {
        self.height[id as usize]
    }

    pub fn height_net(&self) -> u32 {
        self.height_net
    }

    /// True when a direct link joins the two nodes.
    pub fn are_neighbors(&self, a: u32, b: u32) -> bool {
        a != b && (self.parent[a as usize] == b || self.parent[b as usize] == a)
    }
}
