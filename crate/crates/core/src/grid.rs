//! Regular lattices over a box in one or two dimensions with node masks.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metric::{MetricSpace, NormContext};
use crate::scalar::Real;

/// Role of a lattice node relative to the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Interior,
    Boundary,
    Exterior,
}

impl NodeKind {
    pub fn is_inside(self) -> bool {
        self != NodeKind::Exterior
    }

    pub fn code(self) -> char {
        match self {
            NodeKind::Interior => 'i',
            NodeKind::Boundary => 'b',
            NodeKind::Exterior => 'e',
        }
    }

    pub fn from_code(c: &str) -> Option<Self> {
        match c {
            "i" | "interior" => Some(NodeKind::Interior),
            "b" | "boundary" => Some(NodeKind::Boundary),
            "e" | "exterior" => Some(NodeKind::Exterior),
            _ => None,
        }
    }
}

/// A regular lattice `lo + (i·h_x, j·h_y)` stored row-major (`x` fastest).
#[derive(Debug, Clone)]
pub struct GridDomain<T> {
    dim: usize,
    lo: [T; 2],
    h: [T; 2],
    n: [usize; 2],
    kinds: Vec<NodeKind>,
    norm: NormContext,
}

impl<T: Real> GridDomain<T> {
    /// Lattice with `n[a]` nodes per axis spanning `[lo[a], hi[a]]`, all nodes inside.
    ///
    /// Nodes on the edge of the box are boundary nodes.
    pub fn rectangle(dim: usize, lo: [T; 2], hi: [T; 2], n: [usize; 2], norm: NormContext) -> Result<Self> {
        Self::from_predicate(dim, lo, hi, n, norm, |_| true)
    }

    /// Lattice whose inside nodes satisfy `inside`. An inside node with a lattice
    /// neighbor that is outside (or off the lattice) is a boundary node.
    pub fn from_predicate(
        dim: usize,
        lo: [T; 2],
        hi: [T; 2],
        n: [usize; 2],
        norm: NormContext,
        inside: impl Fn([T; 2]) -> bool,
    ) -> Result<Self> {
        let mut g = Self::empty(dim, lo, hi, n, norm)?;
        let inside: Vec<bool> = (0..g.len()).map(|k| inside(g.point(k))).collect();
        g.kinds = classify(&g, &inside);
        Ok(g)
    }

    /// Lattice with explicit node kinds, as read from a file.
    pub fn from_kinds(dim: usize, lo: [T; 2], h: [T; 2], n: [usize; 2], norm: NormContext, kinds: Vec<NodeKind>) -> Result<Self> {
        let hi = [
            lo[0] + h[0] * T::from_usize(n[0].saturating_sub(1)).unwrap_or_else(T::zero),
            lo[1] + h[1] * T::from_usize(n[1].saturating_sub(1)).unwrap_or_else(T::zero),
        ];
        let mut g = Self::empty(dim, lo, hi, n, norm)?;
        if dim == 2 {
            g.h = h;
        } else {
            g.h[0] = h[0];
        }
        if kinds.len() != g.len() {
            return Err(Error::Domain(format!("{} node kinds for {} nodes", kinds.len(), g.len())));
        }
        g.kinds = kinds;
        Ok(g)
    }

    fn empty(dim: usize, lo: [T; 2], hi: [T; 2], n: [usize; 2], norm: NormContext) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::Domain(format!("grid dimension {dim} is not 1 or 2")));
        }
        let n = if dim == 1 { [n[0], 1] } else { n };
        let mut h = [T::one(); 2];
        for a in 0..dim {
            if n[a] < 2 {
                return Err(Error::Domain(format!("axis {a} needs at least 2 nodes")));
            }
            if !(hi[a] > lo[a]) {
                return Err(Error::Domain(format!("axis {a}: box [{}, {}] is empty", lo[a], hi[a])));
            }
            h[a] = (hi[a] - lo[a]) / T::from_usize(n[a] - 1).expect("node count");
        }
        let lo = if dim == 1 { [lo[0], T::zero()] } else { lo };
        Ok(Self { dim, lo, h, n, kinds: vec![NodeKind::Interior; n[0] * n[1]], norm })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> [usize; 2] {
        self.n
    }

    pub fn lo(&self) -> [T; 2] {
        self.lo
    }

    pub fn hi(&self) -> [T; 2] {
        [
            self.lo[0] + self.h[0] * T::from_usize(self.n[0] - 1).expect("count"),
            self.lo[1] + self.h[1] * T::from_usize(self.n[1] - 1).expect("count"),
        ]
    }

    /// Mesh width per axis (the second entry is 1 for one-dimensional grids).
    pub fn spacing(&self) -> [T; 2] {
        self.h
    }

    /// Largest mesh width over the active axes.
    pub fn mesh(&self) -> T {
        if self.dim == 1 {
            self.h[0]
        } else {
            self.h[0].max(self.h[1])
        }
    }

    pub fn norm(&self) -> NormContext {
        self.norm
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn kind(&self, k: usize) -> NodeKind {
        self.kinds[k]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n[0] + i
    }

    #[inline]
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % self.n[0], k / self.n[0])
    }

    pub fn point(&self, k: usize) -> [T; 2] {
        let (i, j) = self.ij(k);
        [
            self.lo[0] + self.h[0] * T::from_usize(i).expect("index"),
            self.lo[1] + self.h[1] * T::from_usize(j).expect("index"),
        ]
    }

    /// Node reached from `(i, j)` by the lattice offset `(di, dj)`, clamped to the box.
    #[inline]
    pub fn clamped(&self, i: usize, j: usize, di: isize, dj: isize) -> usize {
        let ci = (i as isize + di).clamp(0, self.n[0] as isize - 1) as usize;
        let cj = (j as isize + dj).clamp(0, self.n[1] as isize - 1) as usize;
        self.index(ci, cj)
    }

    /// Norm of the physical vector of a lattice offset.
    #[inline]
    pub fn offset_norm(&self, di: isize, dj: isize) -> T {
        self.vector_norm(self.h[0] * T::from_isize(di).expect("offset"), self.h[1] * T::from_isize(dj).expect("offset"))
    }

    pub fn node_dist(&self, a: usize, b: usize) -> T {
        let (ia, ja) = self.ij(a);
        let (ib, jb) = self.ij(b);
        self.offset_norm(ia as isize - ib as isize, ja as isize - jb as isize)
    }

    /// Lattice offsets `(di, dj)` with physical norm at most `r` (strictly below when `open`).
    pub fn offsets_within(&self, r: T, open: bool) -> Vec<(isize, isize)> {
        let ri = (r / self.h[0]).floor().to_isize().unwrap_or(0).max(0);
        let rj = if self.dim == 1 { 0 } else { (r / self.h[1]).floor().to_isize().unwrap_or(0).max(0) };
        let mut out = Vec::new();
        for dj in -rj..=rj {
            for di in -ri..=ri {
                let d = self.offset_norm(di, dj);
                if (open && d < r) || (!open && d <= r) {
                    out.push((di, dj));
                }
            }
        }
        out
    }

    /// Lattice nodes (of any kind) within distance `r` of node `c`.
    pub fn ball(&self, c: usize, r: T) -> Vec<usize> {
        let (i, j) = self.ij(c);
        let mut out: Vec<usize> = self
            .offsets_within(r, false)
            .into_iter()
            .filter_map(|(di, dj)| {
                let (a, b) = (i as isize + di, j as isize + dj);
                (a >= 0 && b >= 0 && (a as usize) < self.n[0] && (b as usize) < self.n[1])
                    .then(|| self.index(a as usize, b as usize))
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn nodes_of(&self, kind: NodeKind) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.kinds[k] == kind).collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        self.nodes_of(NodeKind::Interior)
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        self.nodes_of(NodeKind::Boundary)
    }

    /// Interior and boundary nodes.
    pub fn inside_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.kinds[k].is_inside()).collect()
    }

    pub fn all_nodes(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    /// The given nodes as a metric space under the grid norm, in the given order.
    pub fn metric_space(&self, nodes: &[usize]) -> Result<MetricSpace<T>> {
        if self.dim == 1 {
            let xs: Vec<T> = nodes.iter().map(|&k| self.point(k)[0]).collect();
            MetricSpace::from_coords(1, xs, self.norm.p)
        } else {
            let pts: Vec<T> = nodes.iter().flat_map(|&k| self.point(k)).collect();
            MetricSpace::from_coords(2, pts, self.norm.p)
        }
    }

    /// Exact Lipschitz constant of `f` over the given nodes.
    pub fn lip(&self, f: &[T], nodes: &[usize], tol: T) -> Result<T> {
        if f.len() != self.len() {
            return Err(Error::Domain(format!("field has {} values for {} nodes", f.len(), self.len())));
        }
        if nodes.len() < 2 {
            return Ok(T::zero());
        }
        let space = self.metric_space(nodes)?;
        let vals: Vec<T> = nodes.iter().map(|&k| f[k]).collect();
        Ok(space.lip_all(&vals, tol)?.value)
    }

    /// Distance from each node to the nearest boundary node (infinite when there is none).
    pub fn boundary_distance(&self) -> Vec<T> {
        let bnd = self.boundary_nodes();
        if bnd.is_empty() {
            return vec![T::infinity(); self.len()];
        }
        let pts: Vec<[T; 2]> = bnd.iter().map(|&k| self.point(k)).collect();
        (0..self.len())
            .into_par_iter()
            .map(|k| {
                let p = self.point(k);
                pts.iter().fold(T::infinity(), |m, q| m.min(self.vector_norm(p[0] - q[0], p[1] - q[1])))
            })
            .collect()
    }

    /// Norm of a physical vector (only the first component in 1D).
    #[inline]
    pub fn vector_norm(&self, a: T, b: T) -> T {
        if self.dim == 1 {
            a.abs()
        } else {
            self.norm.p.eval2(a, b)
        }
    }

    /// Dual norm of a covector (only the first component in 1D).
    #[inline]
    pub fn dual_norm(&self, a: T, b: T) -> T {
        if self.dim == 1 {
            a.abs()
        } else {
            self.norm.q.eval2(a, b)
        }
    }

    /// Lattice neighbors along the axes (2 in 1D, 4 in 2D), `None` off the lattice.
    pub fn axis_neighbors(&self, k: usize) -> [Option<usize>; 4] {
        let (i, j) = self.ij(k);
        let mut out = [None; 4];
        out[0] = (i > 0).then(|| k - 1);
        out[1] = (i + 1 < self.n[0]).then(|| k + 1);
        if self.dim == 2 {
            out[2] = (j > 0).then(|| k - self.n[0]);
            out[3] = (j + 1 < self.n[1]).then(|| k + self.n[0]);
        }
        out
    }
}

fn classify<T: Real>(g: &GridDomain<T>, inside: &[bool]) -> Vec<NodeKind> {
    (0..g.len())
        .map(|k| {
            if !inside[k] {
                return NodeKind::Exterior;
            }
            let nb = g.axis_neighbors(k);
            let active = if g.dim == 1 { &nb[..2] } else { &nb[..] };
            if active.iter().all(|n| n.is_some_and(|m| inside[m])) {
                NodeKind::Interior
            } else {
                NodeKind::Boundary
            }
        })
        .collect()
}
