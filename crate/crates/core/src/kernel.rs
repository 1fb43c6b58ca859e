//! Discrete convolution kernels: sampled radial profiles with compact
//! support, renormalized to unit discrete mass.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

/// Radial profile shape, before normalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// `(1 - r/R)_+`
    Tent,
    /// `(1 - (r/R)^2)_+^2`
    PolyBump,
}

impl Profile {
    /// Unnormalized profile value at distance `r` for support radius `radius`.
    pub fn eval(self, r: f64, radius: f64) -> f64 {
        let s = r / radius;
        match self {
            Profile::Tent => (1.0 - s).max(0.0),
            Profile::PolyBump => {
                let q = (1.0 - s * s).max(0.0);
                q * q
            }
        }
    }
}

/// Kernel shape plus radius; becomes a [`DiscreteKernel`] once a grid is known.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub profile: Profile,
    pub radius: f64,
}

impl KernelSpec {
    pub fn tent(radius: f64) -> Self {
        Self { profile: Profile::Tent, radius }
    }

    pub fn poly_bump(radius: f64) -> Self {
        Self { profile: Profile::PolyBump, radius }
    }

    pub fn build(&self, grid: &Grid) -> Result<DiscreteKernel> {
        build_kernel(self.profile, self.radius, grid)
    }
}

/// Sampled kernel `J` on the offsets `-m..=m` of each axis.
///
/// `weights` hold the sampled values of `J` itself (so `h^N * sum = 1`),
/// stored row-major over the `(2m+1)^N` offset box.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteKernel {
    profile: Profile,
    radius: f64,
    spacing: f64,
    dim: usize,
    half_width: usize,
    weights: Vec<f64>,
    // weights * h^N, used by the convolution
    scaled: Vec<f64>,
}

#[derive(Serialize)]
struct KernelDump<'a> {
    profile: Profile,
    #[serde(rename = "R_J")]
    radius: f64,
    h: f64,
    dim: usize,
    weights: &'a [f64],
}

/// Samples `profile` on the grid offsets and rescales by one common factor so
/// the discrete mass `h^N * sum(weights)` is 1.
pub fn build_kernel(profile: Profile, radius: f64, grid: &Grid) -> Result<DiscreteKernel> {
    let h = grid.spacing();
    if !radius.is_finite() || radius < 2.0 * h * (1.0 - 1e-12) {
        return Err(Error::KernelUnderResolved { radius, spacing: h });
    }
    // outermost offset with a nonzero profile value: k h < R
    let half_width = ((radius / h) * (1.0 - 1e-12)).ceil() as usize - 1;
    let width = 2 * half_width + 1;
    let dim = grid.dim();
    let m = half_width as isize;
    let raw: Vec<f64> = if dim == 1 {
        (-m..=m).map(|k| profile.eval(k.unsigned_abs() as f64 * h, radius)).collect()
    } else {
        let mut out = Vec::with_capacity(width * width);
        for ki in -m..=m {
            for kj in -m..=m {
                let r = ((ki * ki + kj * kj) as f64).sqrt() * h;
                out.push(profile.eval(r, radius));
            }
        }
        out
    };
    let cell = grid.cell_volume();
    let mass = cell * raw.iter().sum::<f64>();
    let weights: Vec<f64> = raw.iter().map(|w| w / mass).collect();
    let scaled = weights.iter().map(|w| w * cell).collect();
    Ok(DiscreteKernel { profile, radius, spacing: h, dim, half_width, weights, scaled })
}

impl DiscreteKernel {
    pub fn profile(&self) -> Profile {
        self.profile
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest offset index `m` carrying a nonzero weight along an axis.
    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at an integer offset; zero outside the stored box.
    pub fn weight(&self, offset: [isize; 2]) -> f64 {
        let m = self.half_width as isize;
        let width = 2 * m + 1;
        if offset[0].abs() > m || offset[1].abs() > m || (self.dim == 1 && offset[1] != 0) {
            return 0.0;
        }
        let idx = if self.dim == 1 { offset[0] + m } else { (offset[0] + m) * width + offset[1] + m };
        self.weights[idx as usize]
    }

    /// `h^N * sum(weights)`.
    pub fn discrete_mass(&self) -> f64 {
        self.scaled.iter().sum()
    }

    /// `h^N J(0)`, the diagonal coefficient of `v -> J * v`.
    pub fn diagonal(&self) -> f64 {
        self.scaled[self.scaled.len() / 2]
    }

    fn offsets(&self) -> impl Iterator<Item = ([isize; 2], f64)> + '_ {
        let m = self.half_width as isize;
        let width = (2 * m + 1) as usize;
        self.weights.iter().enumerate().map(move |(idx, &w)| {
            if self.dim == 1 {
                ([idx as isize - m, 0], w)
            } else {
                ([(idx / width) as isize - m, (idx % width) as isize - m], w)
            }
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&KernelDump {
            profile: self.profile,
            radius: self.radius,
            h: self.spacing,
            dim: self.dim,
            weights: &self.weights,
        })
        .expect("kernel serialization cannot fail")
    }

    fn check_grid(&self, grid: &Grid) -> Result<()> {
        if grid.dim() != self.dim || (grid.spacing() - self.spacing).abs() > 1e-14 * self.spacing {
            return Err(Error::InvalidKernel(format!(
                "kernel built for {}D spacing {}, field has {}D spacing {}",
                self.dim,
                self.spacing,
                grid.dim(),
                grid.spacing()
            )));
        }
        Ok(())
    }

    /// `h^N sum_{k != 0} weight(k) values_{i-k}` at one node, ascending `k`.
    pub(crate) fn off_diagonal_at(&self, grid: &Grid, values: &[f64], index: usize) -> f64 {
        let m = self.half_width as isize;
        let width = 2 * m + 1;
        let s = &self.scaled;
        let p = grid.unravel(index);
        let mut acc = 0.0;
        if grid.dim() == 1 {
            let n = values.len() as isize;
            let i = p[0] as isize;
            for k in (i - (n - 1)).max(-m)..=i.min(m) {
                if k != 0 {
                    acc += s[(k + m) as usize] * values[(i - k) as usize];
                }
            }
        } else {
            let (nx, ny) = (grid.shape()[0] as isize, grid.shape()[1] as isize);
            let (i, j) = (p[0] as isize, p[1] as isize);
            for ki in (i - (nx - 1)).max(-m)..=i.min(m) {
                for kj in (j - (ny - 1)).max(-m)..=j.min(m) {
                    if ki != 0 || kj != 0 {
                        acc += s[((ki + m) * width + kj + m) as usize] * values[((i - ki) * ny + j - kj) as usize];
                    }
                }
            }
        }
        acc
    }

    /// Writes `J * input` into `out` (zero extension outside the box).
    ///
    /// Each output node sums its terms in ascending offset order; nodes
    /// farther than `m` from the nonzero region of `input` are set to 0.
    pub(crate) fn convolve_into(&self, grid: &Grid, input: &[f64], out: &mut [f64]) {
        let m = self.half_width;
        let Some(bbox) = nonzero_bbox(grid, input) else {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        };
        let s = &self.scaled;
        if grid.dim() == 1 {
            let n = input.len();
            let lo = bbox[0].0.saturating_sub(m);
            let hi = (bbox[0].1 + m).min(n - 1);
            let body = |(i, o): (usize, &mut f64)| {
                if i < lo || i > hi {
                    *o = 0.0;
                    return;
                }
                // offset k = i - j, ascending k means descending j
                let k_lo = (i as isize - (n as isize - 1)).max(-(m as isize));
                let k_hi = (i as isize).min(m as isize);
                let mut acc = 0.0;
                for k in k_lo..=k_hi {
                    acc += s[(k + m as isize) as usize] * input[(i as isize - k) as usize];
                }
                *o = acc;
            };
            if n >= 2048 {
                out.par_iter_mut().enumerate().for_each(body);
            } else {
                out.iter_mut().enumerate().for_each(body);
            }
        } else {
            let (nx, ny) = (grid.shape()[0], grid.shape()[1]);
            let width = 2 * m + 1;
            let row_lo = bbox[0].0.saturating_sub(m);
            let row_hi = (bbox[0].1 + m).min(nx - 1);
            let col_lo = bbox[1].0.saturating_sub(m);
            let col_hi = (bbox[1].1 + m).min(ny - 1);
            let row = |(i, orow): (usize, &mut [f64])| {
                for (j, o) in orow.iter_mut().enumerate() {
                    if i < row_lo || i > row_hi || j < col_lo || j > col_hi {
                        *o = 0.0;
                        continue;
                    }
                    let mut acc = 0.0;
                    let ki_lo = (i as isize - (nx as isize - 1)).max(-(m as isize));
                    let ki_hi = (i as isize).min(m as isize);
                    let kj_lo = (j as isize - (ny as isize - 1)).max(-(m as isize));
                    let kj_hi = (j as isize).min(m as isize);
                    for ki in ki_lo..=ki_hi {
                        let srow = (ki + m as isize) as usize * width;
                        let irow = (i as isize - ki) as usize * ny;
                        for kj in kj_lo..=kj_hi {
                            acc += s[srow + (kj + m as isize) as usize] * input[irow + (j as isize - kj) as usize];
                        }
                    }
                    *o = acc;
                }
            };
            if nx * ny >= 4096 {
                out.par_chunks_mut(ny).enumerate().for_each(row);
            } else {
                out.chunks_mut(ny).enumerate().for_each(row);
            }
        }
    }
}

/// Per-axis index range holding every nonzero entry, or `None` if all zero.
fn nonzero_bbox(grid: &Grid, values: &[f64]) -> Option<[(usize, usize); 2]> {
    let mut bbox = [(usize::MAX, 0usize); 2];
    let mut any = false;
    for (idx, &v) in values.iter().enumerate() {
        if v != 0.0 {
            any = true;
            let p = grid.unravel(idx);
            for axis in 0..2 {
                bbox[axis].0 = bbox[axis].0.min(p[axis]);
                bbox[axis].1 = bbox[axis].1.max(p[axis]);
            }
        }
    }
    any.then_some(bbox)
}

/// `out_i = h^N * sum_k weight(k) v_{i-k}`, with `v = 0` outside the grid.
pub fn convolve(kernel: &DiscreteKernel, v: &Field) -> Result<Field> {
    kernel.check_grid(v.grid())?;
    let mut out = vec![0.0; v.values().len()];
    kernel.convolve_into(v.grid(), v.values(), &mut out);
    Ok(Field::from_raw(v.grid(), out))
}

/// `sup J` over the whole support.
pub fn kernel_sup(kernel: &DiscreteKernel) -> f64 {
    kernel.weights.iter().copied().fold(0.0, f64::max)
}

/// `sup J` over sampled offsets with `|offset| h <= radius`.
pub fn kernel_sup_ball(kernel: &DiscreteKernel, radius: f64) -> f64 {
    let h = kernel.spacing;
    kernel
        .offsets()
        .filter(|(k, _)| {
            let r = ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt() * h;
            r <= radius.max(0.0) + 1e-12 * h
        })
        .map(|(_, w)| w)
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::integral;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tent_hand_quadrature() {
        let g = Grid::centered_line(3.0, 0.5).unwrap();
        let k = build_kernel(Profile::Tent, 1.0, &g).unwrap();
        assert_eq!(k.half_width(), 1);
        assert_eq!(k.weights(), &[0.5, 1.0, 0.5]);
    }

    #[test]
    fn under_resolved_kernel_is_rejected() {
        let g = Grid::centered_line(3.0, 0.5).unwrap();
        assert!(matches!(build_kernel(Profile::Tent, 0.9, &g), Err(Error::KernelUnderResolved { .. })));
    }

    #[test]
    fn unit_mass_symmetry_and_monotone_profile() {
        for dim in [1, 2] {
            for profile in [Profile::Tent, Profile::PolyBump] {
                for &(radius, h) in &[(1.0, 0.05), (1.0, 0.3), (2.5, 0.1), (8.0, 0.25)] {
                    let g = if dim == 1 {
                        Grid::centered_line(10.0, h).unwrap()
                    } else {
                        Grid::centered_square(3.0, h).unwrap()
                    };
                    let k = build_kernel(profile, radius, &g).unwrap();
                    assert!((k.discrete_mass() - 1.0).abs() < 4.0 * f64::EPSILON * k.weights().len() as f64);
                    let m = k.half_width() as isize;
                    for a in -m..=m {
                        for b in if dim == 1 { 0..=0 } else { -m..=m } {
                            let w = k.weight([a, b]);
                            assert!(w >= 0.0);
                            assert_eq!(w, k.weight([-a, -b]));
                            if dim == 2 {
                                assert_eq!(w, k.weight([b, a]));
                            }
                            let r = ((a * a + b * b) as f64).sqrt() * h;
                            if r >= radius {
                                assert_eq!(w, 0.0);
                            }
                        }
                    }
                    for a in 0..m {
                        assert!(k.weight([a, 0]) >= k.weight([a + 1, 0]));
                    }
                }
            }
        }
    }

    fn direct_convolution(k: &DiscreteKernel, v: &Field) -> Vec<f64> {
        let g = v.grid();
        let m = k.half_width() as isize;
        let cell = g.cell_volume();
        (0..g.len())
            .map(|i| {
                let p = g.unravel(i);
                let mut acc = 0.0;
                for j in 0..g.len() {
                    let q = g.unravel(j);
                    let off = [p[0] as isize - q[0] as isize, p[1] as isize - q[1] as isize];
                    if off[0].abs() <= m && off[1].abs() <= m {
                        acc += k.weight(off) * v.values()[j];
                    }
                }
                cell * acc
            })
            .collect()
    }

    #[test]
    fn impulse_reproduces_kernel() {
        let g = Grid::centered_line(3.0, 0.1).unwrap();
        let k = build_kernel(Profile::PolyBump, 1.0, &g).unwrap();
        let i0 = 30;
        let mut vals = vec![0.0; g.len()];
        vals[i0] = 1.0;
        let out = convolve(&k, &Field::new(g.clone(), vals).unwrap()).unwrap();
        for i in 0..g.len() {
            let expect = 0.1 * k.weight([i as isize - i0 as isize, 0]);
            assert!((out.values()[i] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_is_fixed_in_the_interior() {
        let g = Grid::centered_line(5.0, 0.1).unwrap();
        let k = build_kernel(Profile::Tent, 1.0, &g).unwrap();
        let out = convolve(&k, &Field::constant(&g, 1.0)).unwrap();
        for i in 0..g.len() {
            if g.boundary_distance(i) > k.half_width() {
                assert!((out.values()[i] - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn matches_direct_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for dim in [1, 2] {
            let g = if dim == 1 {
                Grid::centered_line(4.0, 0.1).unwrap()
            } else {
                Grid::centered_square(1.0, 0.1).unwrap()
            };
            let k = build_kernel(Profile::Tent, 0.45, &g).unwrap();
            let v = Field::from_fn(&g, |_| rng.gen_range(-1.0..1.0)).unwrap();
            let fast = convolve(&k, &v).unwrap();
            let slow = direct_convolution(&k, &v);
            for (a, b) in fast.values().iter().zip(&slow) {
                assert!((a - b).abs() < 1e-14, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn interior_mass_is_conserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = Grid::centered_square(2.0, 0.1).unwrap();
        let k = build_kernel(Profile::PolyBump, 0.5, &g).unwrap();
        let v =
            Field::from_fn(&g, |x| if x[0].abs() < 1.0 && x[1].abs() < 1.0 { rng.gen_range(-3.0..3.0) } else { 0.0 })
                .unwrap();
        let before = integral(&v);
        let after = integral(&convolve(&k, &v).unwrap());
        assert!((after - before).abs() <= 1e-13 * before.abs().max(1.0));
    }

    #[test]
    fn spacing_mismatch_is_an_error() {
        let g = Grid::centered_line(3.0, 0.1).unwrap();
        let k = build_kernel(Profile::Tent, 1.0, &g).unwrap();
        let other = Grid::centered_line(3.0, 0.2).unwrap();
        assert!(convolve(&k, &Field::zeros(&other)).is_err());
    }

    #[test]
    fn sup_over_balls() {
        let g = Grid::centered_line(3.0, 0.1).unwrap();
        let k = build_kernel(Profile::Tent, 1.0, &g).unwrap();
        let j0 = k.weight([0, 0]);
        assert_eq!(kernel_sup(&k), j0);
        assert_eq!(kernel_sup_ball(&k, 0.0), j0);
        assert_eq!(kernel_sup_ball(&k, 3.7), j0);
        // scan oracle over offsets within 1/2
        let scan = (-5..=5).map(|a| k.weight([a, 0])).fold(0.0, f64::max);
        assert_eq!(kernel_sup_ball(&k, 0.5), scan);
    }

    #[test]
    fn dump_has_expected_keys() {
        let g = Grid::centered_line(3.0, 0.5).unwrap();
        let k = build_kernel(Profile::Tent, 1.0, &g).unwrap();
        assert_eq!(k.to_json(), r#"{"profile":"tent","R_J":1.0,"h":0.5,"dim":1,"weights":[0.5,1.0,0.5]}"#);
    }
}
