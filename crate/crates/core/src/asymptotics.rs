//! Large-coupling asymptotics of the flow count:
//! `N(λ, α) ≈ α^{d/p} ∫_{ℝ^d} (ρ(λ + Ψ(θ)|x|^{-p}) − ρ(λ)) dx`.
//!
//! Pieces: counts on the inner ball, the shell and
//! the exterior of a region split, the volume bound for the inner ball, the
//! Riemann-sum bracket for the shell, and the ratio of the full count to the
//! integral along an α-grid.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bloch::{BandStructure, Gap};
use crate::domain::{unit_ball_volume, LatticeDomain, RegionSplit};
use crate::dos::DosTable;
use crate::eigencount::count_below;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::operator::assemble;
use crate::par;

/// Default inner splitting radius `ε₁`.
pub const DEFAULT_EPS1: f64 = 0.3;
/// `ε₂ = auto` resolves to this multiple of the admissibility bound.
pub const AUTO_EPS2_FACTOR: f64 = 1.25;
/// Default truncation rule: lattice radius `c·ε₂·α^{1/p}`.
pub const DEFAULT_RADIUS_RULE: f64 = 1.5;
/// Relative size of the one-time λ shift on a spectrum collision.
pub const LAMBDA_SHIFT: f64 = 1e-7;

// ---------------------------------------------------------------------------
// quadrature

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n > 0);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            if n == 1 {
                p0 = 1.0;
                p1 = x;
            } else {
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
            }
            // p1 = P_n(x), p0 = P_{n−1}(x)
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

struct Rule {
    fine: Vec<(f64, f64)>,
    coarse: Vec<(f64, f64)>,
}

impl Rule {
    fn new() -> Self {
        Rule {
            fine: gauss_legendre(10),
            coarse: gauss_legendre(5),
        }
    }

    fn apply(nodes: &[(f64, f64)], a: f64, b: f64, f: &impl Fn(f64) -> f64) -> f64 {
        let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
        nodes.iter().map(|&(x, w)| w * f(m + h * x)).sum::<f64>() * h
    }

    /// Adaptive bisection on `[a, b]`; returns (value, error estimate).
    fn integrate(
        &self,
        a: f64,
        b: f64,
        tol: f64,
        depth: usize,
        f: &impl Fn(f64) -> f64,
    ) -> (f64, f64) {
        let q = Self::apply(&self.fine, a, b, f);
        let err = (q - Self::apply(&self.coarse, a, b, f)).abs();
        if err <= tol * (1.0 + q.abs()) || depth == 0 || b - a < 1e-14 {
            return (q, err);
        }
        let m = 0.5 * (a + b);
        let (l, el) = self.integrate(a, m, 0.5 * tol, depth - 1, f);
        let (r, er) = self.integrate(m, b, 0.5 * tol, depth - 1, f);
        (l + r, el + er)
    }
}

/// Quadrature directions on `S^{d−1}` with weights summing to its area.
pub fn sphere_directions(d: usize, samples: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    let samples = samples.max(1);
    Ok(match d {
        1 => vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)],
        2 => (0..samples)
            .map(|j| {
                let t = 2.0 * PI * j as f64 / samples as f64;
                (vec![t.cos(), t.sin()], 2.0 * PI / samples as f64)
            })
            .collect(),
        3 => {
            let polar = gauss_legendre(samples);
            let az = 2 * samples;
            let mut out = Vec::with_capacity(samples * az);
            for &(z, w) in &polar {
                let s = (1.0 - z * z).sqrt();
                for j in 0..az {
                    let t = 2.0 * PI * (j as f64 + 0.5) / az as f64;
                    out.push((vec![s * t.cos(), s * t.sin(), z], w * 2.0 * PI / az as f64));
                }
            }
            out
        }
        _ => return Err(Error::invalid("d", "direction quadrature supports d <= 3")),
    })
}

fn default_direction_samples(d: usize) -> usize {
    match d {
        1 => 2,
        2 => 64,
        _ => 12,
    }
}

// ---------------------------------------------------------------------------
// gaps and admissibility

/// The spectral gap of `model` that contains `lambda`.
pub fn gap_containing(model: &ModelSpec, lambda: f64) -> Result<Gap> {
    let bands = BandStructure::compute(model, crate::bloch::default_k_points(model.d));
    bands
        .gap_list
        .into_iter()
        .find(|g| g.contains(lambda))
        .ok_or(Error::NotInGap { lambda })
}

/// `(‖Ψ‖_∞/|λ₊−λ| + ‖Ψ‖_∞/|λ₋−λ|)^{1/p}`: `ε₂` must exceed this.
pub fn eps2_lower_bound(model: &ModelSpec, lambda: f64, gap: &Gap) -> f64 {
    let s = model.impurity.psi.sup();
    (s / (gap.upper - lambda).abs() + s / (lambda - gap.lower).abs()).powf(1.0 / model.impurity.p)
}

pub fn auto_eps2(model: &ModelSpec, lambda: f64, gap: &Gap) -> f64 {
    AUTO_EPS2_FACTOR * eps2_lower_bound(model, lambda, gap)
}

// ---------------------------------------------------------------------------
// theoretical integral

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalIntegral {
    pub lambda: f64,
    pub value: f64,
    pub quadrature_error: f64,
    pub direction_samples: usize,
    pub radial_tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralOptions {
    /// Directions on the sphere (ignored for d = 1); `None` picks a default.
    pub direction_samples: Option<usize>,
    pub radial_tolerance: f64,
}

impl Default for IntegralOptions {
    fn default() -> Self {
        IntegralOptions {
            direction_samples: None,
            radial_tolerance: 1e-10,
        }
    }
}

/// `∫_{ℝ^d} (ρ(λ + Ψ(θ)|x|^{-p}) − ρ(λ)) dx` for `λ` inside a gap of `model`.
pub fn theoretical_integral(
    dos: &DosTable,
    model: &ModelSpec,
    lambda: f64,
) -> Result<TheoreticalIntegral> {
    let gap = gap_containing(model, lambda)?;
    theoretical_integral_in_gap(dos, model, lambda, &gap, IntegralOptions::default())
}

/// As [`theoretical_integral`] with the gap supplied by the caller.
///
/// Along each direction the integrand vanishes once `λ + Ψr^{-p}` drops into
/// the gap, and is piecewise smooth between radii where `λ + Ψr^{-p}` meets a
/// table knot; each piece gets adaptive Gauss–Legendre.
pub fn theoretical_integral_in_gap(
    dos: &DosTable,
    model: &ModelSpec,
    lambda: f64,
    gap: &Gap,
    opts: IntegralOptions,
) -> Result<TheoreticalIntegral> {
    if !gap.contains(lambda) {
        return Err(Error::NotInGap { lambda });
    }
    let (_, top) = model.spectral_bounds();
    if !dos.covers(lambda, top) {
        return Err(Error::DosCoverage {
            needed_from: lambda,
            needed_to: top,
        });
    }
    let d = model.d;
    let p = model.impurity.p;
    let samples = opts
        .direction_samples
        .unwrap_or_else(|| default_direction_samples(d));
    let rho_l = dos.eval(lambda)?;
    let rule = Rule::new();

    let run = |samples: usize| -> Result<(f64, f64)> {
        let mut total = 0.0;
        let mut err = 0.0;
        for (theta, w) in sphere_directions(d, samples)? {
            let psi = model.impurity.psi.eval(&theta);
            let (v, e) = radial_integral(
                dos,
                rho_l,
                lambda,
                psi,
                p,
                d,
                gap.upper,
                &rule,
                opts.radial_tolerance,
            )?;
            total += w * v;
            err += w * e;
        }
        Ok((total, err))
    };
    let (value, mut error) = run(samples)?;
    if d > 1 {
        let (half, _) = run((samples / 2).max(1))?;
        error += (value - half).abs();
    }
    Ok(TheoreticalIntegral {
        lambda,
        value,
        quadrature_error: error,
        direction_samples: if d == 1 { 2 } else { samples },
        radial_tolerance: opts.radial_tolerance,
    })
}

#[allow(clippy::too_many_arguments)]
fn radial_integral(
    dos: &DosTable,
    rho_l: f64,
    lambda: f64,
    psi: f64,
    p: f64,
    d: usize,
    upper_edge: f64,
    rule: &Rule,
    tol: f64,
) -> Result<(f64, f64)> {
    if psi <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let radius = |u: f64| (psi / (u - lambda)).powf(1.0 / p);
    let (_, table_top) = dos.range();
    let r_max = radius(upper_edge);
    let r_top = radius(table_top);
    let dm = d as i32;
    // beyond the table ρ = 1 (the table reaches past the spectrum)
    let mut value = (1.0 - rho_l) * r_top.powi(dm) / d as f64;
    let mut error = 0.0;
    let mut cuts: Vec<f64> = dos
        .lambda_grid()
        .iter()
        .filter(|&&u| u > upper_edge && u < table_top)
        .map(|&u| radius(u))
        .collect();
    cuts.push(r_top);
    cuts.push(r_max);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let f = |r: f64| {
        let u = (lambda + psi * r.powf(-p)).min(table_top);
        let rho = dos.eval(u).unwrap_or(1.0);
        (rho - rho_l) * r.powi(dm - 1)
    };
    for w in cuts.windows(2) {
        let (v, e) = rule.integrate(w[0], w[1], tol, 30, &f);
        value += v;
        error += e;
    }
    Ok((value, error))
}

// ---------------------------------------------------------------------------
// flow counts

/// `count_below(A_Ω − αV, λ) − count_below(A_Ω, λ)`.
pub fn flow_count(
    model: &ModelSpec,
    lambda: f64,
    alpha: f64,
    domain: &LatticeDomain,
) -> Result<usize> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::invalid(
            "alpha",
            format!("must be >= 0, got {alpha}"),
        ));
    }
    let base = assemble(domain, model)?;
    if alpha == 0.0 || base.is_empty() {
        return Ok(0);
    }
    let v = base.potential(model);
    let perturbed = base.perturbed(&v, alpha)?;
    let below_free = count_below(&base, lambda)?;
    let below = count_below(&perturbed, lambda)?;
    below.checked_sub(below_free).ok_or_else(|| {
        Error::NumericalBreakdown(format!(
            "negative flow count {below} − {below_free} at alpha = {alpha}"
        ))
    })
}

/// Runs `f(λ)`; on a spectrum collision retries once at `λ + shift`.
/// Returns the value and the shift used (0 when none).
pub fn with_lambda_shift<T>(
    lambda: f64,
    shift: f64,
    f: impl Fn(f64) -> Result<T>,
) -> Result<(T, f64)> {
    match f(lambda) {
        Ok(v) => Ok((v, 0.0)),
        Err(e) if e.is_spectrum_hit() => Ok((f(lambda + shift)?, shift)),
        Err(e) => Err(e),
    }
}

/// Lattice ball `|n| < c·ε₂·α^{1/p}` used as the finite stand-in for ℤ^d.
pub fn truncation_domain(
    model: &ModelSpec,
    eps2: f64,
    alpha: f64,
    radius_rule: f64,
) -> Result<LatticeDomain> {
    if !(radius_rule >= 1.0) {
        return Err(Error::invalid("radius_rule", "must be >= 1"));
    }
    LatticeDomain::ball(
        radius_rule * eps2 * alpha.powf(1.0 / model.impurity.p),
        model.d,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub alpha: f64,
    /// Count on the whole truncation ball.
    pub n: usize,
    pub n1: usize,
    pub n2: usize,
    /// Count on the exterior between `ε₂α^{1/p}` and the truncation radius.
    pub n3_check: usize,
    /// Links crossing one of the two splitting spheres.
    pub links_r: usize,
    /// `2·ω_d(ε₁α^{1/p} + √d)^d`.
    pub n1_bound: f64,
    pub lambda_shift: f64,
}

impl SplitCounts {
    /// `|N − (N₁+N₂)| ≤ 2·links_r`.
    pub fn splitting_holds(&self) -> bool {
        (self.n as i64 - (self.n1 + self.n2) as i64).unsigned_abs() as usize <= 2 * self.links_r
    }

    pub fn n1_bound_holds(&self) -> bool {
        (self.n1 as f64) <= self.n1_bound
    }
}

/// Counts on the split regions. `gap` is the gap containing `lambda`; the
/// split must satisfy the `ε₂` admissibility bound.
pub fn region_split_counts(
    model: &ModelSpec,
    lambda: f64,
    gap: &Gap,
    split: &RegionSplit,
    radius_rule: f64,
) -> Result<SplitCounts> {
    let d = model.d;
    let bound = eps2_lower_bound(model, lambda, gap);
    if !(split.eps2 > bound) {
        return Err(Error::invalid(
            "eps2",
            format!(
                "{} does not exceed the admissibility bound {bound}",
                split.eps2
            ),
        ));
    }
    if split.p != model.impurity.p {
        return Err(Error::invalid(
            "split.p",
            "must equal the impurity exponent",
        ));
    }
    let whole = truncation_domain(model, split.eps2, split.alpha, radius_rule)?;
    let inner = split.inner(d)?;
    let shell = split.shell(d)?;
    let rtrunc = radius_rule * split.outer_radius();
    let outer = if rtrunc > split.outer_radius() {
        Some(split.outer_truncated(d, rtrunc)?)
    } else {
        None
    };
    let shift = LAMBDA_SHIFT * gap.width();
    let alpha = split.alpha;
    let ((n, n1, n2, n3), used) = with_lambda_shift(lambda, shift, |l| {
        let n3 = match &outer {
            Some(o) => flow_count(model, l, alpha, o)?,
            None => 0,
        };
        Ok((
            flow_count(model, l, alpha, &whole)?,
            flow_count(model, l, alpha, &inner)?,
            flow_count(model, l, alpha, &shell)?,
            n3,
        ))
    })?;
    Ok(SplitCounts {
        alpha,
        n,
        n1,
        n2,
        n3_check: n3,
        links_r: split.splitting_links(d)?,
        n1_bound: 2.0
            * unit_ball_volume(d)
            * (split.inner_radius() + (d as f64).sqrt()).powi(d as i32),
        lambda_shift: used,
    })
}

// ---------------------------------------------------------------------------
// Riemann sandwich

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    pub cell_size: f64,
    pub cells: usize,
    pub lower_sum: f64,
    pub upper_sum: f64,
    /// `N₂(λ, α) / α^{d/p}`.
    pub n2_scaled: f64,
    pub lambda_shift: f64,
}

impl Sandwich {
    pub fn brackets(&self, tol: f64) -> bool {
        self.lower_sum - tol <= self.n2_scaled && self.n2_scaled <= self.upper_sum + tol
    }
}

/// A cell `δ([0,1)^d + i)` of the partition, intersected with the shell.
struct Cell {
    volume: f64,
    /// Points of the closed cell in the shell at which `V` is sampled.
    probes: Vec<Vec<f64>>,
}

fn clamp_radius(x: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let r = crate::domain::norm(x);
    if r == 0.0 {
        let mut y = vec![0.0; x.len()];
        y[0] = lo;
        return y;
    }
    let t = r.clamp(lo, hi) / r;
    x.iter().map(|v| v * t).collect()
}

/// `∫_0^x ∫_0^y 1{u² + v² < r²} dv du`, signed by quadrant.
fn corner_disk_area(x: f64, y: f64, r: f64) -> f64 {
    let (ax, ay) = (x.abs(), y.abs());
    let sign = x.signum() * y.signum();
    if ax * ax + ay * ay <= r * r {
        return sign * ax * ay;
    }
    let xe = ax.min(r);
    let u0 = (r * r - ay * ay).max(0.0).sqrt().min(xe);
    let g = |u: f64| {
        0.5 * (u * (r * r - u * u).max(0.0).sqrt() + r * r * (u / r).clamp(-1.0, 1.0).asin())
    };
    sign * (ay * u0 + g(xe) - g(u0))
}

/// Area of `[x0, x1] × [y0, y1]` inside the disk of radius `r`.
fn rect_disk_area(x0: f64, x1: f64, y0: f64, y1: f64, r: f64) -> f64 {
    corner_disk_area(x1, y1, r) - corner_disk_area(x0, y1, r) - corner_disk_area(x1, y0, r)
        + corner_disk_area(x0, y0, r)
}

/// Measure of `{x ∈ [a, a+δ]^d : e1 < |x| < e2}` and probe points.
fn shell_cells(d: usize, e1: f64, e2: f64, delta: f64) -> Result<Vec<Cell>> {
    let imax = (e2 / delta).ceil() as i64 + 1;
    let mut cells = Vec::new();
    match d {
        1 => {
            for i in -imax..=imax {
                let (a, b) = (i as f64 * delta, (i + 1) as f64 * delta);
                // intersect [a, b) with (−e2, −e1) ∪ (e1, e2)
                let mut vol = 0.0;
                let mut probes = Vec::new();
                for (lo, hi) in [(-e2, -e1), (e1, e2)] {
                    let (l, h) = (a.max(lo), b.min(hi));
                    if h > l {
                        vol += h - l;
                        probes.push(vec![l]);
                        probes.push(vec![h]);
                    }
                }
                if vol > 0.0 {
                    cells.push(Cell {
                        volume: vol,
                        probes,
                    });
                }
            }
        }
        2 => {
            for i in -imax..=imax {
                for j in -imax..=imax {
                    let (x0, y0) = (i as f64 * delta, j as f64 * delta);
                    let (x1, y1) = (x0 + delta, y0 + delta);
                    let corners = [[x0, y0], [x1, y0], [x0, y1], [x1, y1]];
                    let nearest = [0f64.clamp(x0, x1), 0f64.clamp(y0, y1)];
                    let rmin = crate::domain::norm(&nearest);
                    let rmax = corners
                        .iter()
                        .map(|c| crate::domain::norm(c))
                        .fold(0.0, f64::max);
                    if rmin >= e2 || rmax <= e1 {
                        continue;
                    }
                    let vol =
                        rect_disk_area(x0, x1, y0, y1, e2) - rect_disk_area(x0, x1, y0, y1, e1);
                    if vol <= 0.0 {
                        continue;
                    }
                    let mut probes: Vec<Vec<f64>> =
                        corners.iter().map(|c| clamp_radius(c, e1, e2)).collect();
                    probes.push(clamp_radius(&nearest, e1, e2));
                    let far = corners
                        .iter()
                        .max_by(|a, b| crate::domain::norm(*a).total_cmp(&crate::domain::norm(*b)))
                        .unwrap();
                    probes.push(clamp_radius(far, e1, e2));
                    // edge midpoints catch angular extrema of mild Ψ
                    for m in [
                        [0.5 * (x0 + x1), y0],
                        [0.5 * (x0 + x1), y1],
                        [x0, 0.5 * (y0 + y1)],
                        [x1, 0.5 * (y0 + y1)],
                    ] {
                        probes.push(clamp_radius(&m, e1, e2));
                    }
                    cells.push(Cell {
                        volume: vol,
                        probes,
                    });
                }
            }
        }
        _ => return Err(Error::invalid("d", "the Riemann sandwich supports d <= 2")),
    }
    Ok(cells)
}

/// Lower and upper Riemann sums of `ρ(λ + V(x)) − ρ(λ)` over the shell
/// `ε₁ < |x| < ε₂`, with `V` taken at its minimum and maximum on each cell,
/// together with the measured `N₂(λ, α)/α^{d/p}`.
pub fn riemann_sandwich(
    model: &ModelSpec,
    lambda: f64,
    gap: &Gap,
    split: &RegionSplit,
    cell_size: f64,
    dos: &DosTable,
) -> Result<Sandwich> {
    if !(cell_size.is_finite() && cell_size > 0.0) {
        return Err(Error::invalid("cell_size", "must be > 0"));
    }
    let d = model.d;
    let cells = shell_cells(d, split.eps1, split.eps2, cell_size)?;
    let rho_l = dos.eval(lambda)?;
    let (_, table_top) = dos.range();
    let rho = |u: f64| -> Result<f64> {
        if u >= table_top {
            Ok(1.0)
        } else {
            dos.eval(u)
        }
    };
    let (mut lower, mut upper) = (0.0, 0.0);
    for c in &cells {
        let vs: Vec<f64> = c.probes.iter().map(|x| model.evaluate_v_at(x)).collect();
        let vmin = vs.iter().cloned().fold(f64::INFINITY, f64::min);
        let vmax = vs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        lower += (rho(lambda + vmin)? - rho_l) * c.volume;
        upper += (rho(lambda + vmax)? - rho_l) * c.volume;
    }
    let shift = LAMBDA_SHIFT * gap.width();
    let shell = split.shell(d)?;
    let (n2, used) =
        with_lambda_shift(lambda, shift, |l| flow_count(model, l, split.alpha, &shell))?;
    Ok(Sandwich {
        cell_size,
        cells: cells.len(),
        lower_sum: lower,
        upper_sum: upper,
        n2_scaled: n2 as f64 / split.alpha.powf(d as f64 / model.impurity.p),
        lambda_shift: used,
    })
}

// ---------------------------------------------------------------------------
// convergence study

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub alpha: f64,
    pub n: usize,
    pub n1: usize,
    pub n2: usize,
    pub n3_check: usize,
    pub links_r: usize,
    pub n1_bound: f64,
    /// `2ω_d ε₁^d α^{d/p}`
    pub n1_envelope: f64,
    pub ratio: Option<f64>,
    pub lambda_shift: f64,
    pub splitting_holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    /// `|R − 1|` is nonincreasing along the α-grid.
    pub trend_toward_1: bool,
    pub final_deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub model_hash: String,
    pub lambda: f64,
    pub gap: Gap,
    pub eps1: f64,
    pub eps2: f64,
    pub radius_rule: f64,
    pub integral: TheoreticalIntegral,
    pub records: Vec<StudyRecord>,
    pub verdict: Verdict,
}

pub const STUDY_CSV_HEADER: &str = "alpha,N,N1,N2,ratio,links_r,lambda_shift";

impl ExperimentReport {
    pub fn ratios(&self) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.ratio).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{STUDY_CSV_HEADER}\n");
        for r in &self.records {
            let ratio = r.ratio.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.alpha, r.n, r.n1, r.n2, ratio, r.links_r, r.lambda_shift
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Settings of a convergence study beyond the model and λ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudySettings {
    pub eps1: f64,
    pub eps2: f64,
    pub radius_rule: f64,
}

/// `R(α) = N(λ, α) / (α^{d/p} I(λ))` along `alphas`, with the split counts
/// that bound it.
pub fn convergence_study(
    model: &ModelSpec,
    lambda: f64,
    gap: &Gap,
    alphas: &[f64],
    settings: StudySettings,
    integral: &TheoreticalIntegral,
) -> Result<ExperimentReport> {
    let p = model.impurity.p;
    let d = model.d as f64;
    let results = par::map(alphas, |&alpha| -> Result<StudyRecord> {
        let split = RegionSplit::new(settings.eps1, settings.eps2, alpha, p)?;
        let c = region_split_counts(model, lambda, gap, &split, settings.radius_rule)?;
        let scale = alpha.powf(d / p);
        let ratio = (integral.value > 0.0).then(|| c.n as f64 / (scale * integral.value));
        Ok(StudyRecord {
            alpha,
            n: c.n,
            n1: c.n1,
            n2: c.n2,
            n3_check: c.n3_check,
            links_r: c.links_r,
            n1_bound: c.n1_bound,
            n1_envelope: 2.0 * unit_ball_volume(model.d) * settings.eps1.powf(d) * scale,
            ratio,
            lambda_shift: c.lambda_shift,
            splitting_holds: c.splitting_holds(),
        })
    });
    let records = results.into_iter().collect::<Result<Vec<_>>>()?;
    let devs: Vec<Option<f64>> = records
        .iter()
        .map(|r| r.ratio.map(|v| (v - 1.0).abs()))
        .collect();
    let trend =
        devs.iter().all(Option::is_some) && devs.windows(2).all(|w| w[1].unwrap() <= w[0].unwrap());
    Ok(ExperimentReport {
        model_hash: model.hash(),
        lambda,
        gap: *gap,
        eps1: settings.eps1,
        eps2: settings.eps2,
        radius_rule: settings.radius_rule,
        integral: integral.clone(),
        verdict: Verdict {
            trend_toward_1: trend && !records.is_empty(),
            final_deviation: devs.last().copied().flatten(),
        },
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dos::{build_table, DosRoute, Provenance};

    fn gap_model() -> ModelSpec {
        ModelSpec::period_two([0.0, 3.0], 1.0, 2.0).unwrap()
    }

    #[test]
    fn gauss_legendre_exactness() {
        for n in [1, 2, 5, 10] {
            let rule = gauss_legendre(n);
            let wsum: f64 = rule.iter().map(|r| r.1).sum();
            assert!((wsum - 2.0).abs() < 1e-13);
            // exact for degree 2n − 1
            let deg = 2 * n - 1;
            let q: f64 = rule.iter().map(|&(x, w)| w * x.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 {
                2.0 / deg as f64
            } else {
                0.0
            };
            assert!((q - exact).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn step_density_closed_form() {
        // ρ jumps by h at λ₊ (steep ramp), Ψ ≡ c, d = 1: 2·h·(c/(λ₊−λ))^{1/p}
        let m = gap_model();
        let gap = Gap {
            lower: 2.0,
            upper: 5.0,
            bands_below: 1,
        };
        let (h, lambda) = (0.5, 3.5);
        let table = DosTable::new(
            vec![-4.0, 2.0, 5.0, 5.0 + 1e-9, 12.0],
            vec![0.0, 0.5, 0.5, 0.5 + h, 1.0f64.min(0.5 + h)],
            Provenance::Bloch,
            m.hash(),
        )
        .unwrap();
        let got = theoretical_integral_in_gap(&table, &m, lambda, &gap, IntegralOptions::default())
            .unwrap();
        let expected = 2.0 * h * (1.0f64 / (5.0 - lambda)).sqrt();
        assert!(
            (got.value - expected).abs() < 1e-6,
            "{} vs {expected}",
            got.value
        );
    }

    #[test]
    fn zero_profile_gives_zero() {
        let mut m = gap_model();
        m.impurity.psi = crate::model::Psi::Constant { value: 0.0 };
        let t = build_table(&m, &DosRoute::Bloch { k_points: Some(64) }, 201).unwrap();
        let i = theoretical_integral(&t, &m, 3.5).unwrap();
        assert_eq!(i.value, 0.0);
        assert!(matches!(
            theoretical_integral(&t, &m, 1.0),
            Err(Error::NotInGap { .. })
        ));
    }

    #[test]
    fn flow_count_basics() {
        let m = gap_model();
        let dom = LatticeDomain::ball(40.0, 1).unwrap();
        assert_eq!(flow_count(&m, 3.5, 0.0, &dom).unwrap(), 0);
        let mut last = 0;
        for a in [1.0, 10.0, 100.0, 1000.0] {
            let n = flow_count(&m, 3.5, a, &dom).unwrap();
            assert!(n >= last);
            last = n;
        }
        assert!(last >= 1);
    }

    #[test]
    fn split_counts_d1() {
        let m = gap_model();
        let gap = gap_containing(&m, 3.5).unwrap();
        let eps2 = auto_eps2(&m, 3.5, &gap);
        assert!((eps2 - 1.25 * (4.0f64 / 3.0).sqrt()).abs() < 1e-6);
        for alpha in [100.0, 1000.0] {
            let split = RegionSplit::new(DEFAULT_EPS1, eps2, alpha, 2.0).unwrap();
            let c = region_split_counts(&m, 3.5, &gap, &split, DEFAULT_RADIUS_RULE).unwrap();
            assert!(c.splitting_holds(), "{c:?}");
            assert!(c.n1_bound_holds());
            assert_eq!(c.n3_check, 0);
            assert_eq!(c.links_r, 4);
        }
        let bad = RegionSplit::new(0.3, 1.0, 100.0, 2.0).unwrap();
        assert!(region_split_counts(&m, 3.5, &gap, &bad, 1.5).is_err());
    }

    #[test]
    fn sandwich_orders_and_degenerates() {
        let m = gap_model();
        let gap = gap_containing(&m, 3.5).unwrap();
        let t = build_table(&m, &DosRoute::Bloch { k_points: None }, 801).unwrap();
        let split = RegionSplit::new(0.3, 1.5, 100.0, 2.0).unwrap();
        for delta in [0.125, 0.25, 5.0] {
            let s = riemann_sandwich(&m, 3.5, &gap, &split, delta, &t).unwrap();
            assert!(s.lower_sum <= s.upper_sum + 1e-15, "{s:?}");
        }
        assert!(riemann_sandwich(&m, 3.5, &gap, &split, 0.0, &t).is_err());
    }

    #[test]
    fn shell_cell_areas_d2() {
        let cells = shell_cells(2, 0.5, 1.5, 0.25).unwrap();
        let area: f64 = cells.iter().map(|c| c.volume).sum();
        assert!((area - PI * (1.5 * 1.5 - 0.25)).abs() < 1e-9, "{area}");
        let cells = shell_cells(1, 0.3, 1.4, 0.25).unwrap();
        let len: f64 = cells.iter().map(|c| c.volume).sum();
        assert!((len - 2.2).abs() < 1e-12);
    }
}
