//! Floquet–Bloch reduction of the periodic operator `A = −Δ + 2d + f`.
//!
//! For a quasimomentum `k ∈ [0, 2π)^d` (one phase per period cell along each
//! axis) the operator restricted to Bloch waves `u(n + q∘m) = e^{i k·m} u(n)`
//! is a Hermitian matrix of size `q₁⋯q_d`. Its sorted eigenvalues, swept over
//! `k`, are the bands; their union is the spectrum of `A`.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::model::ModelSpec;

/// Default k-points per axis for quadrature and band scans.
pub fn default_k_points(d: usize) -> usize {
    match d {
        1 => 256,
        2 => 64,
        _ => 24,
    }
}

/// Gaps narrower than this are treated as touching bands.
const MIN_GAP_WIDTH: f64 = 1e-9;

fn cell_local(model: &ModelSpec, mut flat: usize) -> Vec<usize> {
    let mut local = vec![0; model.d];
    for axis in (0..model.d).rev() {
        local[axis] = flat % model.period[axis];
        flat /= model.period[axis];
    }
    local
}

/// Hermitian Bloch matrix at quasimomentum `k`.
pub fn bloch_matrix(model: &ModelSpec, k: &[f64]) -> DMatrix<Complex<f64>> {
    assert_eq!(k.len(), model.d, "quasimomentum dimension");
    let size = model.cell_size();
    let two_d = 2.0 * model.d as f64;
    let mut h = DMatrix::from_element(size, size, Complex::new(0.0, 0.0));
    for s in 0..size {
        h[(s, s)] += Complex::new(two_d + model.cell_values[s], 0.0);
        let local = cell_local(model, s);
        for axis in 0..model.d {
            let q = model.period[axis];
            for step in [-1i64, 1] {
                let mut t = local.clone();
                let raw = local[axis] as i64 + step;
                let wrapped = raw.rem_euclid(q as i64);
                t[axis] = wrapped as usize;
                let crossings = (raw - wrapped) / q as i64;
                let phase = Complex::from_polar(1.0, k[axis] * crossings as f64);
                h[(s, model.cell_index(&t))] -= phase;
            }
        }
    }
    h
}

/// Sorted eigenvalues of the Bloch matrix.
pub fn band_energies(model: &ModelSpec, k: &[f64]) -> Vec<f64> {
    let h = bloch_matrix(model, k);
    match h.nrows() {
        1 => vec![h[(0, 0)].re],
        2 => {
            let (a, c) = (h[(0, 0)].re, h[(1, 1)].re);
            let b = h[(0, 1)].norm();
            let mean = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            vec![mean - rad, mean + rad]
        }
        _ => {
            let mut e: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
            e.sort_by(f64::total_cmp);
            e
        }
    }
}

fn band_energy(model: &ModelSpec, k: &[f64], band: usize) -> f64 {
    band_energies(model, k)[band]
}

/// Uniform tensor grid `k_a = 2π j / m`, row-major with axis 0 slowest.
pub fn k_grid(d: usize, per_axis: usize) -> Vec<Vec<f64>> {
    let total = per_axis.pow(d as u32);
    (0..total)
        .map(|mut flat| {
            let mut k = vec![0.0; d];
            for axis in (0..d).rev() {
                k[axis] = 2.0 * PI * (flat % per_axis) as f64 / per_axis as f64;
                flat /= per_axis;
            }
            k
        })
        .collect()
}

/// An open interval free of spectrum with both endpoints in the spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub lower: f64,
    pub upper: f64,
    /// Number of bands below the gap.
    pub bands_below: usize,
}

impl Gap {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, lambda: f64) -> bool {
        self.lower < lambda && lambda < self.upper
    }
}

#[derive(Debug, Clone)]
pub struct BandStructure {
    pub k_samples: Vec<Vec<f64>>,
    /// `bands[i]` holds the sorted energies at `k_samples[i]`.
    pub bands: Vec<Vec<f64>>,
    /// Refined `(min, max)` of every band.
    pub band_ranges: Vec<(f64, f64)>,
    pub gap_list: Vec<Gap>,
}

/// Golden-section minimisation of `g` on `[a, b]`.
fn golden_min(mut a: f64, mut b: f64, g: impl Fn(f64) -> f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..80 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if gc < gd {
            b = d;
            d = c;
            gd = gc;
            c = b - inv_phi * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + inv_phi * (b - a);
            gd = g(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, g(x))
}

/// Coordinate-wise local refinement of a band extremum found on the grid.
fn refine_extremum(model: &ModelSpec, band: usize, start: &[f64], step: f64, sign: f64) -> f64 {
    let mut k = start.to_vec();
    let mut best = sign * band_energy(model, &k, band);
    let sweeps = if model.d == 1 { 1 } else { 4 };
    for _ in 0..sweeps {
        for axis in 0..model.d {
            let centre = k[axis];
            let (x, v) = golden_min(centre - step, centre + step, |t| {
                let mut kk = k.clone();
                kk[axis] = t;
                sign * band_energy(model, &kk, band)
            });
            if v < best {
                best = v;
                k[axis] = x;
            }
        }
    }
    sign * best
}

impl BandStructure {
    pub fn compute(model: &ModelSpec, per_axis: usize) -> BandStructure {
        let per_axis = per_axis.max(2);
        let k_samples = k_grid(model.d, per_axis);
        let bands: Vec<Vec<f64>> = k_samples.iter().map(|k| band_energies(model, k)).collect();
        let nb = model.cell_size();
        let step = 2.0 * PI / per_axis as f64;
        let band_ranges: Vec<(f64, f64)> = (0..nb)
            .map(|j| {
                let (mut imin, mut imax) = (0, 0);
                for (i, e) in bands.iter().enumerate() {
                    if e[j] < bands[imin][j] {
                        imin = i;
                    }
                    if e[j] > bands[imax][j] {
                        imax = i;
                    }
                }
                let lo = refine_extremum(model, j, &k_samples[imin], step, 1.0).min(bands[imin][j]);
                let hi =
                    refine_extremum(model, j, &k_samples[imax], step, -1.0).max(bands[imax][j]);
                (lo, hi)
            })
            .collect();
        let gap_list = (0..nb.saturating_sub(1))
            .filter_map(|j| {
                let lower = band_ranges[..=j]
                    .iter()
                    .map(|r| r.1)
                    .fold(f64::NEG_INFINITY, f64::max);
                let upper = band_ranges[j + 1..]
                    .iter()
                    .map(|r| r.0)
                    .fold(f64::INFINITY, f64::min);
                (upper - lower > MIN_GAP_WIDTH).then_some(Gap {
                    lower,
                    upper,
                    bands_below: j + 1,
                })
            })
            .collect();
        BandStructure {
            k_samples,
            bands,
            band_ranges,
            gap_list,
        }
    }

    pub fn spectrum_min(&self) -> f64 {
        self.band_ranges.first().map_or(0.0, |r| r.0)
    }

    pub fn spectrum_max(&self) -> f64 {
        self.band_ranges
            .iter()
            .map(|r| r.1)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Widest bounded gap, if any.
    pub fn widest_gap(&self) -> Option<Gap> {
        self.gap_list
            .iter()
            .copied()
            .max_by(|a, b| a.width().total_cmp(&b.width()))
    }
}

/// Widest bounded spectral gap of the periodic operator.
pub fn find_gap(model: &ModelSpec, per_axis: usize) -> Option<Gap> {
    BandStructure::compute(model, per_axis).widest_gap()
}

/// Integrated density of states `ρ(λ)` by Brillouin-zone quadrature.
///
/// d = 1: band functions are monotone on `[0, π]`, so with an even grid every
/// cell holds at most one crossing of `λ`; it is located by bracketed root
/// finding. d = 2: cells straddling `λ` are refined once by midpoints and the
/// band is interpolated linearly on two triangles per cell. d ≥ 3: straddling
/// cells are refined and classified by their centres.
#[derive(Debug, Clone)]
pub struct BlochIds<'m> {
    model: &'m ModelSpec,
    per_axis: usize,
    /// Energies on the grid, flat row-major index.
    grid: Vec<Vec<f64>>,
    ranges: Vec<(f64, f64)>,
    refine_depth: usize,
}

impl<'m> BlochIds<'m> {
    pub fn new(model: &'m ModelSpec, per_axis: usize) -> Self {
        let mut per_axis = per_axis.max(2);
        if per_axis % 2 == 1 {
            per_axis += 1;
        }
        let bs = BandStructure::compute(model, per_axis);
        BlochIds {
            model,
            per_axis,
            grid: bs.bands,
            ranges: bs.band_ranges,
            refine_depth: 1,
        }
    }

    pub fn with_default_grid(model: &'m ModelSpec) -> Self {
        Self::new(model, default_k_points(model.d))
    }

    pub fn with_refine_depth(mut self, depth: usize) -> Self {
        self.refine_depth = depth;
        self
    }

    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter()
            .fold(0, |acc, &i| acc * self.per_axis + (i % self.per_axis))
    }

    pub fn ids(&self, lambda: f64) -> f64 {
        let nb = self.model.cell_size();
        let mut total = 0.0;
        for band in 0..nb {
            let (lo, hi) = self.ranges[band];
            total += if lambda <= lo {
                0.0
            } else if lambda > hi {
                1.0
            } else {
                match self.model.d {
                    1 => self.fraction_1d(band, lambda),
                    2 => self.fraction_2d(band, lambda),
                    _ => self.fraction_nd(band, lambda),
                }
            };
        }
        total / nb as f64
    }

    fn fraction_1d(&self, band: usize, lambda: f64) -> f64 {
        let m = self.per_axis;
        let h = 2.0 * PI / m as f64;
        let mut full = 0usize;
        let mut partial = 0.0;
        for i in 0..m {
            let e0 = self.grid[i][band];
            let e1 = self.grid[(i + 1) % m][band];
            match (e0 < lambda, e1 < lambda) {
                (true, true) => full += 1,
                (false, false) => {}
                (below0, _) => {
                    let k0 = i as f64 * h;
                    let root = bracketed_root(k0, k0 + h, e0 - lambda, e1 - lambda, |k| {
                        band_energy(self.model, &[k], band) - lambda
                    });
                    let frac = (root - k0) / h;
                    partial += if below0 { frac } else { 1.0 - frac };
                }
            }
        }
        (full as f64 + partial) / m as f64
    }

    fn fraction_2d(&self, band: usize, lambda: f64) -> f64 {
        let m = self.per_axis;
        let h = 2.0 * PI / m as f64;
        let mut full = 0usize;
        let mut partial = 0.0;
        for i in 0..m {
            for j in 0..m {
                let c = [
                    self.grid[self.flat(&[i, j])][band],
                    self.grid[self.flat(&[i + 1, j])][band],
                    self.grid[self.flat(&[i, j + 1])][band],
                    self.grid[self.flat(&[i + 1, j + 1])][band],
                ];
                let below = c.iter().filter(|&&e| e < lambda).count();
                if below == 4 {
                    full += 1;
                } else if below > 0 || c.contains(&lambda) {
                    let k0 = [i as f64 * h, j as f64 * h];
                    partial += self.refine_square(band, lambda, k0, h, c, self.refine_depth);
                }
            }
        }
        (full as f64 + partial) / (m * m) as f64
    }

    /// Fraction of the square `[k0, k0 + h]²` where the band lies below `lambda`.
    fn refine_square(
        &self,
        band: usize,
        lambda: f64,
        k0: [f64; 2],
        h: f64,
        c: [f64; 4],
        depth: usize,
    ) -> f64 {
        if depth == 0 {
            // corners 00, 10, 01, 11; triangles (00,10,11) and (00,01,11)
            return 0.5
                * (triangle_fraction(c[0], c[1], c[3], lambda)
                    + triangle_fraction(c[0], c[2], c[3], lambda));
        }
        let half = 0.5 * h;
        let e = |a: f64, b: f64| band_energy(self.model, &[k0[0] + a, k0[1] + b], band);
        // 3×3 lattice of points in the square
        let g = [
            [c[0], e(0.0, half), c[2]],
            [e(half, 0.0), e(half, half), e(half, h)],
            [c[1], e(h, half), c[3]],
        ];
        let mut acc = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                let sub = [g[a][b], g[a + 1][b], g[a][b + 1], g[a + 1][b + 1]];
                let below = sub.iter().filter(|&&v| v < lambda).count();
                acc += if below == 4 {
                    1.0
                } else if below == 0 {
                    0.0
                } else {
                    let origin = [k0[0] + a as f64 * half, k0[1] + b as f64 * half];
                    self.refine_square(band, lambda, origin, half, sub, depth - 1)
                };
            }
        }
        0.25 * acc
    }

    fn fraction_nd(&self, band: usize, lambda: f64) -> f64 {
        let d = self.model.d;
        let m = self.per_axis;
        let h = 2.0 * PI / m as f64;
        let sub = 1usize << (self.refine_depth + 1);
        let mut acc = 0.0;
        let cells = m.pow(d as u32);
        for flat in 0..cells {
            let mut idx = vec![0; d];
            let mut rest = flat;
            for axis in (0..d).rev() {
                idx[axis] = rest % m;
                rest /= m;
            }
            let corners: Vec<f64> = (0..1usize << d)
                .map(|mask| {
                    let c: Vec<usize> = (0..d).map(|a| idx[a] + ((mask >> a) & 1)).collect();
                    self.grid[self.flat(&c)][band]
                })
                .collect();
            let below = corners.iter().filter(|&&v| v < lambda).count();
            if below == corners.len() {
                acc += 1.0;
            } else if below > 0 {
                let points = sub.pow(d as u32);
                let mut hits = 0usize;
                for p in 0..points {
                    let mut rest = p;
                    let k: Vec<f64> = (0..d)
                        .map(|a| {
                            let s = rest % sub;
                            rest /= sub;
                            (idx[a] as f64 + (s as f64 + 0.5) / sub as f64) * h
                        })
                        .collect();
                    if band_energy(self.model, &k, band) < lambda {
                        hits += 1;
                    }
                }
                acc += hits as f64 / points as f64;
            }
        }
        acc / cells as f64
    }
}

/// Area fraction of a triangle where the linear interpolant of the vertex
/// values lies strictly below `lambda`.
pub fn triangle_fraction(a: f64, b: f64, c: f64, lambda: f64) -> f64 {
    let mut e = [a, b, c];
    e.sort_by(f64::total_cmp);
    let [e0, e1, e2] = e;
    if lambda <= e0 {
        0.0
    } else if lambda <= e1 {
        (lambda - e0) * (lambda - e0) / ((e1 - e0) * (e2 - e0))
    } else if lambda < e2 {
        1.0 - (e2 - lambda) * (e2 - lambda) / ((e2 - e0) * (e2 - e1))
    } else {
        1.0
    }
}

/// Root of `g` in `[a, b]` with `g(a)`, `g(b)` of opposite sign (Illinois).
fn bracketed_root(mut a: f64, mut b: f64, mut ga: f64, mut gb: f64, g: impl Fn(f64) -> f64) -> f64 {
    if ga == 0.0 {
        return a;
    }
    if gb == 0.0 {
        return b;
    }
    let mut side = 0;
    for _ in 0..200 {
        let x = (a * gb - b * ga) / (gb - ga);
        if (b - a).abs() < 1e-14 {
            return x;
        }
        let gx = g(x);
        if gx == 0.0 {
            return x;
        }
        if (gx < 0.0) == (ga < 0.0) {
            a = x;
            ga = gx;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        } else {
            b = x;
            gb = gx;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
    }
    0.5 * (a + b)
}

/// `ρ(λ)` on the default k-grid.
pub fn ids_bloch(model: &ModelSpec, lambda: f64) -> f64 {
    BlochIds::with_default_grid(model).ids(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free1() -> ModelSpec {
        ModelSpec::free(1, 1.0, 2.0).unwrap()
    }

    #[test]
    fn free_dispersion() {
        let m = free1();
        let h = bloch_matrix(&m, &[PI]);
        assert!((h[(0, 0)].re - 4.0).abs() < 1e-14);
        for k in [0.0, 0.3, 2.0, 5.5] {
            assert!((band_energies(&m, &[k])[0] - (2.0 - 2.0 * k.cos())).abs() < 1e-14);
        }
        assert!(find_gap(&m, 64).is_none());
    }

    #[test]
    fn period_two_at_zero() {
        let c = 3.0;
        let m = ModelSpec::period_two([0.0, c], 1.0, 2.0).unwrap();
        let e = band_energies(&m, &[0.0]);
        let rad = ((c / 2.0) * (c / 2.0) + 4.0f64).sqrt();
        assert!((e[0] - (2.0 + c / 2.0 - rad)).abs() < 1e-14);
        assert!((e[1] - (2.0 + c / 2.0 + rad)).abs() < 1e-14);
        let h = bloch_matrix(&m, &[1.1]);
        assert!((h.adjoint() - &h).norm() < 1e-15);
    }

    #[test]
    fn period_two_gap_closed_form() {
        // bands 2 + c/2 ± sqrt(c²/4 + 2 + 2cos k): gap (2, 2 + c)
        let m = ModelSpec::period_two([0.0, 3.0], 1.0, 2.0).unwrap();
        let g64 = find_gap(&m, 64).unwrap();
        let g256 = find_gap(&m, 256).unwrap();
        assert!((g64.lower - 2.0).abs() < 1e-9 && (g64.upper - 5.0).abs() < 1e-9);
        assert!((g64.lower - g256.lower).abs() < 1e-6);
        assert!((g64.upper - g256.upper).abs() < 1e-6);
        assert_eq!(g64.bands_below, 1);
    }

    #[test]
    fn checkerboard_gap() {
        let m = ModelSpec::checkerboard(4.0, 1.0, 2.0).unwrap();
        let g = find_gap(&m, 32).unwrap();
        assert!((g.lower - 4.0).abs() < 1e-7, "{g:?}");
        assert!((g.upper - 8.0).abs() < 1e-7, "{g:?}");
        let bs = BandStructure::compute(&m, 16);
        assert!(bs.spectrum_min() >= -4.0 - 1e-12 && bs.spectrum_max() <= 12.0 + 1e-12);
    }

    #[test]
    fn free_ids_closed_form() {
        let m = free1();
        let ids = BlochIds::with_default_grid(&m);
        for j in 0..=20 {
            let lam = 4.0 * j as f64 / 20.0;
            let exact = (1.0 - lam / 2.0).acos() / PI;
            assert!((ids.ids(lam) - exact).abs() < 1e-10, "{lam}");
        }
        assert_eq!(ids.ids(-1.0), 0.0);
        assert_eq!(ids.ids(5.0), 1.0);
    }

    #[test]
    fn free_ids_d2_symmetry() {
        // band centre of the square lattice is half filled by symmetry
        let m = ModelSpec::free(2, 1.0, 2.0).unwrap();
        let ids = BlochIds::new(&m, 32);
        assert!((ids.ids(4.0) - 0.5).abs() < 1e-3);
        assert_eq!(ids.ids(-0.1), 0.0);
        assert_eq!(ids.ids(8.1), 1.0);
    }

    #[test]
    fn triangle_fraction_limits() {
        assert_eq!(triangle_fraction(0.0, 1.0, 2.0, -1.0), 0.0);
        assert_eq!(triangle_fraction(0.0, 1.0, 2.0, 3.0), 1.0);
        assert!((triangle_fraction(0.0, 1.0, 2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((triangle_fraction(1.0, 1.0, 1.0, 1.0)).abs() < 1e-15);
    }
}
