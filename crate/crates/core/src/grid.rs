//! Uniform 1D/2D lattices, scalar fields sampled on them, and the discrete
//! integral, norm and support primitives every other module builds on.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform lattice with the same spacing on every axis.
///
/// Nodes are stored row-major with the first axis slowest, so in 2D the
/// flat index of `(i, j)` is `i * shape[1] + j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    shape: Vec<usize>,
    spacing: f64,
    origin: Vec<f64>,
}

impl Grid {
    pub fn new(shape: Vec<usize>, spacing: f64, origin: Vec<f64>) -> Result<Self> {
        let dim = shape.len();
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if origin.len() != dim {
            return Err(Error::InvalidGrid(format!("origin has {} coordinates for a {dim}D grid", origin.len())));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {spacing}")));
        }
        if let Some(n) = shape.iter().find(|&&n| n < 3) {
            return Err(Error::InvalidGrid(format!("every axis needs at least 3 nodes, got {n}")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(Self { dim, shape, spacing, origin })
    }

    /// 1D grid of `n` nodes covering `[lo, lo + (n-1) h]`.
    pub fn line(n: usize, spacing: f64, lo: f64) -> Result<Self> {
        Self::new(vec![n], spacing, vec![lo])
    }

    /// 1D grid on `[-half_width, half_width]` with a node at 0 whenever
    /// `half_width / h` is an integer.
    pub fn centered_line(half_width: f64, spacing: f64) -> Result<Self> {
        let half = (half_width / spacing).round() as usize;
        Self::line(2 * half + 1, spacing, -(half as f64) * spacing)
    }

    /// Square 2D grid on `[-half_width, half_width]^2`.
    pub fn centered_square(half_width: f64, spacing: f64) -> Result<Self> {
        let half = (half_width / spacing).round() as usize;
        let lo = -(half as f64) * spacing;
        Self::new(vec![2 * half + 1; 2], spacing, vec![lo, lo])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `h^N`, the volume attached to one node.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Splits a flat index into per-axis indices (second entry is 0 in 1D).
    pub fn unravel(&self, index: usize) -> [usize; 2] {
        if self.dim == 1 {
            [index, 0]
        } else {
            [index / self.shape[1], index % self.shape[1]]
        }
    }

    pub fn ravel(&self, idx: [usize; 2]) -> usize {
        if self.dim == 1 {
            idx[0]
        } else {
            idx[0] * self.shape[1] + idx[1]
        }
    }

    /// Coordinate of a node along each axis, computed from the index.
    pub fn coord(&self, index: usize) -> [f64; 2] {
        let idx = self.unravel(index);
        let mut out = [0.0; 2];
        for axis in 0..self.dim {
            out[axis] = self.origin[axis] + idx[axis] as f64 * self.spacing;
        }
        out
    }

    /// Euclidean norm of the node coordinate.
    pub fn radius(&self, index: usize) -> f64 {
        let c = self.coord(index);
        c[0].hypot(c[1])
    }

    /// Smallest per-axis index distance from a node to the box boundary.
    pub fn boundary_distance(&self, index: usize) -> usize {
        let idx = self.unravel(index);
        (0..self.dim).map(|axis| idx[axis].min(self.shape[axis] - 1 - idx[axis])).min().unwrap_or(0)
    }
}

/// Scalar function sampled on every node of a [`Grid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidField(format!("{} values for a grid of {} nodes", values.len(), grid.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("non-finite value at node {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self { grid: grid.clone(), values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        Self { grid: grid.clone(), values: vec![value; grid.len()] }
    }

    /// Samples `f` at every node coordinate (2D gets `[x, y]`, 1D `[x, 0]`).
    pub fn from_fn(grid: &Grid, mut f: impl FnMut([f64; 2]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(grid.coord(i))).collect();
        Self::new(grid.clone(), values)
    }

    /// Builds a field from values already known to be finite.
    pub(crate) fn from_raw(grid: &Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid: grid.clone(), values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(Self::from_raw(&self.grid, self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect()))
    }

    pub fn positive_part(&self) -> Self {
        self.map(|v| v.max(0.0))
    }

    pub fn negative_part(&self) -> Self {
        self.map(|v| (-v).max(0.0))
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn l1_norm(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().map(|v| v.abs()).sum::<f64>()
    }

    pub(crate) fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// CSV snapshot: `index,coord[,coord2],value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.grid.dim == 1 {
            out.push_str("index,coord,value\n");
        } else {
            out.push_str("index,coord,coord2,value\n");
        }
        for (i, v) in self.values.iter().enumerate() {
            let c = self.grid.coord(i);
            if self.grid.dim == 1 {
                let _ = writeln!(out, "{i},{},{v}", c[0]);
            } else {
                let _ = writeln!(out, "{i},{},{},{v}", c[0], c[1]);
            }
        }
        out
    }

    /// JSON snapshot: `{grid: {dim, shape, spacing, origin}, values: [...]}`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("field serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Field = serde_json::from_str(text).map_err(|e| Error::InvalidField(e.to_string()))?;
        let grid = Grid::new(raw.grid.shape, raw.grid.spacing, raw.grid.origin)?;
        if grid.dim != raw.grid.dim {
            return Err(Error::InvalidField("grid.dim disagrees with grid.shape".into()));
        }
        Self::new(grid, raw.values)
    }
}

/// `h^N * sum(values)`, summed in ascending index order.
pub fn integral(field: &Field) -> f64 {
    field.grid.cell_volume() * field.values.iter().sum::<f64>()
}

/// `h^N * sum |a_i - b_i|`.
pub fn l1_distance(a: &Field, b: &Field) -> Result<f64> {
    a.check_same_grid(b)?;
    let sum: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).sum();
    Ok(a.grid.cell_volume() * sum)
}

/// `h^N * sum (a_i - b_i)_+`.
pub fn l1_positive_part_distance(a: &Field, b: &Field) -> Result<f64> {
    a.check_same_grid(b)?;
    let sum: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).max(0.0)).sum();
    Ok(a.grid.cell_volume() * sum)
}

/// Default support threshold `1e-10 * max(1, ||f||_inf)`.
pub fn default_eps(field: &Field) -> f64 {
    1e-10 * field.sup_norm().max(1.0)
}

/// Set of grid nodes, stored as a dense mask over the grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeSet {
    mask: Vec<bool>,
}

impl NodeSet {
    pub fn empty(len: usize) -> Self {
        Self { mask: vec![false; len] }
    }

    pub fn from_mask(mask: Vec<bool>) -> Self {
        Self { mask }
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut mask = vec![false; len];
        for i in indices {
            mask[i] = true;
        }
        Self { mask }
    }

    pub fn contains(&self, index: usize) -> bool {
        self.mask[index]
    }

    pub fn insert(&mut self, index: usize) {
        self.mask[index] = true;
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }

    /// Nodes of `self` missing from `other`.
    pub fn difference<'a>(&'a self, other: &'a NodeSet) -> impl Iterator<Item = usize> + 'a {
        self.indices().filter(move |&i| !other.mask[i])
    }

    /// Dilation by a closed ball of radius `radius`, discretized as
    /// `ceil(radius / h)` nodes per axis (Euclidean ball in 2D).
    pub fn dilate(&self, grid: &Grid, radius: f64) -> NodeSet {
        let reach = if radius <= 0.0 { 0 } else { (radius / grid.spacing() - 1e-9).ceil() as isize };
        if reach == 0 {
            return self.clone();
        }
        let mut out = vec![false; self.mask.len()];
        match grid.dim() {
            1 => {
                let n = grid.shape()[0] as isize;
                for i in self.indices() {
                    let lo = (i as isize - reach).max(0);
                    let hi = (i as isize + reach).min(n - 1);
                    for j in lo..=hi {
                        out[j as usize] = true;
                    }
                }
            }
            _ => {
                let (nx, ny) = (grid.shape()[0] as isize, grid.shape()[1] as isize);
                let r2 = reach * reach;
                for idx in self.indices() {
                    let [i, j] = grid.unravel(idx);
                    let (i, j) = (i as isize, j as isize);
                    for di in -reach..=reach {
                        let ii = i + di;
                        if ii < 0 || ii >= nx {
                            continue;
                        }
                        for dj in -reach..=reach {
                            let jj = j + dj;
                            if jj < 0 || jj >= ny || di * di + dj * dj > r2 {
                                continue;
                            }
                            out[(ii * ny + jj) as usize] = true;
                        }
                    }
                }
            }
        }
        NodeSet { mask: out }
    }

    /// Nodes of the set with at least one axis neighbour outside it (or on
    /// the box edge).
    fn boundary_nodes(&self, grid: &Grid) -> Vec<usize> {
        let shape = grid.shape();
        self.indices()
            .filter(|&idx| {
                let p = grid.unravel(idx);
                (0..grid.dim()).any(|axis| {
                    let neighbour_outside = |delta: isize| {
                        let k = p[axis] as isize + delta;
                        if k < 0 || k >= shape[axis] as isize {
                            return true;
                        }
                        let mut q = p;
                        q[axis] = k as usize;
                        !self.mask[grid.ravel(q)]
                    };
                    neighbour_outside(-1) || neighbour_outside(1)
                })
            })
            .collect()
    }
}

/// Nodes where `|value| > eps`.
pub fn support_mask(field: &Field, eps: f64) -> NodeSet {
    NodeSet { mask: field.values.iter().map(|v| v.abs() > eps).collect() }
}

/// Minimum Euclidean distance between node coordinates of two sets;
/// `+inf` when either set is empty.
pub fn set_distance(a: &NodeSet, b: &NodeSet, grid: &Grid) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    if a.mask.iter().zip(&b.mask).any(|(&x, &y)| x && y) {
        return 0.0;
    }
    let h = grid.spacing();
    if grid.dim() == 1 {
        // Both index lists are sorted; walk them together.
        let ia: Vec<usize> = a.indices().collect();
        let ib: Vec<usize> = b.indices().collect();
        let (mut p, mut q) = (0, 0);
        let mut best = usize::MAX;
        while p < ia.len() && q < ib.len() {
            best = best.min(ia[p].abs_diff(ib[q]));
            if ia[p] < ib[q] {
                p += 1;
            } else {
                q += 1;
            }
        }
        return best as f64 * h;
    }
    // For disjoint sets a closest pair always lies on the two set boundaries.
    let ba = a.boundary_nodes(grid);
    let bb = b.boundary_nodes(grid);
    let mut best = u64::MAX;
    for &i in &ba {
        let [ai, aj] = grid.unravel(i);
        for &j in &bb {
            let [bi, bj] = grid.unravel(j);
            let di = ai.abs_diff(bi) as u64;
            let dj = aj.abs_diff(bj) as u64;
            best = best.min(di * di + dj * dj);
        }
    }
    (best as f64).sqrt() * h
}
