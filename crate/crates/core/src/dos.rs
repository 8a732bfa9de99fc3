//! Integrated density of states `ρ(λ)`: tabulation, file format, cache, and
//! the finite-volume estimate `N(A_{βΩ}, λ) / (β^d vol Ω)`.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bloch::{BandStructure, BlochIds, Gap};
use crate::domain::LatticeDomain;
use crate::eigencount::negatives_below;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::operator::assemble;
use crate::par;

/// Environment variable naming the cache directory.
pub const CACHE_ENV: &str = "SPECTRAL_FLOW_CACHE";

pub const CSV_HEADER: &str = "lambda,rho,provenance,model_hash";

/// Slack allowed when checking monotonicity and range of tabulated values.
const TABLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Bloch,
    FiniteVolume(Vec<f64>),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Bloch => f.write_str("bloch"),
            Provenance::FiniteVolume(betas) => {
                let parts: Vec<String> = betas.iter().map(|b| b.to_string()).collect();
                write!(f, "finite_volume({})", parts.join(";"))
            }
        }
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "bloch" {
            return Ok(Provenance::Bloch);
        }
        let inner = s
            .strip_prefix("finite_volume(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| Error::Table(format!("unknown provenance `{s}`")))?;
        let betas = inner
            .split(';')
            .map(|b| b.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Table(format!("bad beta in `{s}`: {e}")))?;
        Ok(Provenance::FiniteVolume(betas))
    }
}

/// `ρ` sampled on a sorted λ-grid; evaluated by linear interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DosTable {
    lambda_grid: Vec<f64>,
    rho_values: Vec<f64>,
    provenance: Provenance,
    model_hash: String,
}

impl DosTable {
    pub fn new(
        lambda_grid: Vec<f64>,
        rho_values: Vec<f64>,
        provenance: Provenance,
        model_hash: String,
    ) -> Result<Self> {
        if lambda_grid.len() != rho_values.len() {
            return Err(Error::Table(format!(
                "{} grid points but {} values",
                lambda_grid.len(),
                rho_values.len()
            )));
        }
        if lambda_grid.len() < 2 {
            return Err(Error::Table("need at least two grid points".into()));
        }
        if lambda_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Table(
                "lambda grid must be strictly increasing".into(),
            ));
        }
        for (i, &r) in rho_values.iter().enumerate() {
            if !(-TABLE_TOL..=1.0 + TABLE_TOL).contains(&r) {
                return Err(Error::Table(format!(
                    "rho = {r} outside [0, 1] at index {i}"
                )));
            }
        }
        if let Some(i) = rho_values.windows(2).position(|w| w[1] < w[0] - TABLE_TOL) {
            return Err(Error::Table(format!(
                "rho decreases between lambda = {} and {}",
                lambda_grid[i],
                lambda_grid[i + 1]
            )));
        }
        Ok(DosTable {
            lambda_grid,
            rho_values,
            provenance,
            model_hash,
        })
    }

    pub fn lambda_grid(&self) -> &[f64] {
        &self.lambda_grid
    }

    pub fn rho_values(&self) -> &[f64] {
        &self.rho_values
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn model_hash(&self) -> &str {
        &self.model_hash
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lambda_grid[0], *self.lambda_grid.last().unwrap())
    }

    pub fn covers(&self, a: f64, b: f64) -> bool {
        let (lo, hi) = self.range();
        lo <= a && b <= hi
    }

    /// Linear interpolation; outside the grid is a coverage error.
    pub fn eval(&self, lambda: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        if !(lo <= lambda && lambda <= hi) {
            return Err(Error::DosCoverage {
                needed_from: lambda.min(lo),
                needed_to: lambda.max(hi),
            });
        }
        let j = self.lambda_grid.partition_point(|&x| x <= lambda);
        if j == self.lambda_grid.len() {
            return Ok(*self.rho_values.last().unwrap());
        }
        let (x0, x1) = (self.lambda_grid[j - 1], self.lambda_grid[j]);
        let (r0, r1) = (self.rho_values[j - 1], self.rho_values[j]);
        Ok(r0 + (r1 - r0) * (lambda - x0) / (x1 - x0))
    }

    /// Checks the structural properties every table of `model` must have:
    /// monotone, in `[0, 1]`, zero below and one above the spectral bounds,
    /// and constant across each gap in `gaps` (to `tol`).
    pub fn check_invariants(&self, model: &ModelSpec, gaps: &[Gap], tol: f64) -> Result<()> {
        let (lo, hi) = model.spectral_bounds();
        for (&x, &r) in self.lambda_grid.iter().zip(&self.rho_values) {
            if x < lo && r.abs() > tol {
                return Err(Error::Table(format!("rho({x}) = {r} below the spectrum")));
            }
            if x > hi && (r - 1.0).abs() > tol {
                return Err(Error::Table(format!("rho({x}) = {r} above the spectrum")));
            }
        }
        for g in gaps {
            let inside: Vec<f64> = self
                .lambda_grid
                .iter()
                .zip(&self.rho_values)
                .filter(|(&x, _)| g.contains(x))
                .map(|(_, &r)| r)
                .collect();
            if let (Some(a), Some(b)) = (inside.first(), inside.last()) {
                if (b - a).abs() > tol {
                    return Err(Error::Table(format!(
                        "rho varies by {} across gap ({}, {})",
                        b - a,
                        g.lower,
                        g.upper
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        let prov = self.provenance.to_string();
        for (x, r) in self.lambda_grid.iter().zip(&self.rho_values) {
            out.push_str(&format!("{x},{r},{prov},{}\n", self.model_hash));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == CSV_HEADER => {}
            other => return Err(Error::Table(format!("unexpected header {other:?}"))),
        }
        let (mut grid, mut rho) = (Vec::new(), Vec::new());
        let mut meta: Option<(String, String)> = None;
        for (lineno, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::Table(format!(
                    "line {}: expected 4 fields",
                    lineno + 2
                )));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Table(format!("line {}: {e}", lineno + 2)))
            };
            grid.push(parse(fields[0])?);
            rho.push(parse(fields[1])?);
            let this = (fields[2].trim().to_string(), fields[3].trim().to_string());
            match &meta {
                None => meta = Some(this),
                Some(m) if *m != this => {
                    return Err(Error::Table(format!(
                        "line {}: mixed provenance or hash",
                        lineno + 2
                    )))
                }
                _ => {}
            }
        }
        let (prov, hash) = meta.ok_or_else(|| Error::Table("empty table".into()))?;
        DosTable::new(grid, rho, prov.parse()?, hash)
    }

    /// Writes via a sibling temporary file and rename, so readers never see
    /// a partial table.
    pub fn write_atomic(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_csv(&fs::read_to_string(path)?)
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid("path", "has no file name"))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// How `ρ` is computed for a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "route")]
pub enum DosRoute {
    Bloch {
        #[serde(default)]
        k_points: Option<usize>,
    },
    FiniteVolume {
        betas: Vec<f64>,
        #[serde(default)]
        base_domain: Option<LatticeDomain>,
    },
}

impl DosRoute {
    fn cache_tag(&self) -> String {
        match self {
            DosRoute::Bloch { k_points } => format!("bloch-k{}", k_points.unwrap_or(0)),
            DosRoute::FiniteVolume { betas, base_domain } => {
                let base = base_domain
                    .as_ref()
                    .map(|b| serde_json::to_string(b).expect("domain serializes"))
                    .unwrap_or_default();
                let key = format!("{betas:?}{base}");
                let h = sha_short(key.as_bytes());
                format!("fv-{h}")
            }
        }
    }
}

fn sha_short(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes)[..4]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// λ-grid for tabulation: `points` uniform samples over the spectral bounds
/// padded by one unit, merged with the band edges so that gaps are exact
/// interpolation intervals.
pub fn default_lambda_grid(model: &ModelSpec, bands: &BandStructure, points: usize) -> Vec<f64> {
    let (lo, hi) = model.spectral_bounds();
    let (a, b) = (lo - 1.0, hi + 1.0);
    let points = points.max(2);
    let mut grid: Vec<f64> = (0..points)
        .map(|i| a + (b - a) * i as f64 / (points - 1) as f64)
        .collect();
    for &(e0, e1) in &bands.band_ranges {
        grid.push(e0);
        grid.push(e1);
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * (1.0 + y.abs()));
    grid
}

/// Default number of uniform λ samples for a table.
pub fn default_grid_points(d: usize) -> usize {
    if d == 1 {
        2001
    } else {
        401
    }
}

/// Tabulates `ρ` by Brillouin-zone quadrature.
pub fn bloch_table(model: &ModelSpec, grid: &[f64], k_points: Option<usize>) -> Result<DosTable> {
    let ids = match k_points {
        Some(k) => BlochIds::new(model, k),
        None => BlochIds::with_default_grid(model),
    };
    let rho = par::map(grid, |&x| ids.ids(x));
    DosTable::new(grid.to_vec(), rho, Provenance::Bloch, model.hash())
}

/// Finite-volume estimate of `ρ(λ)` along a sequence of dilations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteVolumeIds {
    pub betas: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Ratio at the largest β.
    pub value: f64,
    /// `|last − previous|`.
    pub error: f64,
}

fn check_betas(betas: &[f64]) -> Result<()> {
    if betas.len() < 2 {
        return Err(Error::invalid("beta_sequence", "needs at least two values"));
    }
    if betas.iter().any(|b| !(b.is_finite() && *b > 0.0))
        || betas.windows(2).any(|w| !(w[0] < w[1]))
    {
        return Err(Error::invalid(
            "beta_sequence",
            "must be positive and increasing",
        ));
    }
    Ok(())
}

/// `N(A_{βΩ}, λ) / (β^d vol Ω)` for each β. Eigenvalues within the spectrum
/// tolerance of `λ` are not counted; they carry no weight in the limit.
pub fn ids_finite_volume(
    model: &ModelSpec,
    lambda: f64,
    betas: &[f64],
    base_domain: &LatticeDomain,
) -> Result<FiniteVolumeIds> {
    let tables = finite_volume_ratios(model, &[lambda], betas, base_domain)?;
    let ratios: Vec<f64> = tables.iter().map(|r| r[0]).collect();
    let n = ratios.len();
    Ok(FiniteVolumeIds {
        betas: betas.to_vec(),
        value: ratios[n - 1],
        error: (ratios[n - 1] - ratios[n - 2]).abs(),
        ratios,
    })
}

/// `ratios[b][i]` = finite-volume ratio at `betas[b]` and `grid[i]`.
fn finite_volume_ratios(
    model: &ModelSpec,
    grid: &[f64],
    betas: &[f64],
    base_domain: &LatticeDomain,
) -> Result<Vec<Vec<f64>>> {
    check_betas(betas)?;
    if base_domain.dimension() != model.d {
        return Err(Error::DimensionMismatch {
            expected: model.d,
            got: base_domain.dimension(),
        });
    }
    let vol = base_domain.volume()?;
    if !(vol > 0.0) {
        return Err(Error::invalid("base_domain", "must have positive volume"));
    }
    let per_beta = |&beta: &f64| -> Result<Vec<f64>> {
        let op = assemble(&base_domain.scale(beta)?, model)?;
        let denom = beta.powi(model.d as i32) * vol;
        grid.iter()
            .map(|&x| Ok(negatives_below(&op, x)? as f64 / denom))
            .collect()
    };
    par::map(betas, per_beta).into_iter().collect()
}

/// Tabulates the finite-volume estimate at the largest β.
pub fn finite_volume_table(
    model: &ModelSpec,
    grid: &[f64],
    betas: &[f64],
    base_domain: &LatticeDomain,
) -> Result<DosTable> {
    check_betas(betas)?;
    let last = [*betas.last().unwrap()];
    let op = assemble(&base_domain.scale(last[0])?, model)?;
    let denom = last[0].powi(model.d as i32) * base_domain.volume()?;
    let counts = par::map(grid, |&x| negatives_below(&op, x));
    let rho = counts
        .into_iter()
        .map(|c| c.map(|c| (c as f64 / denom).min(1.0)))
        .collect::<Result<Vec<_>>>()?;
    DosTable::new(
        grid.to_vec(),
        rho,
        Provenance::FiniteVolume(betas.to_vec()),
        model.hash(),
    )
}

/// Cache directory from the environment, if set.
pub fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

/// Cache file for a model, route and grid size.
pub fn cache_path(dir: &Path, model: &ModelSpec, route: &DosRoute, grid_points: usize) -> PathBuf {
    dir.join(format!(
        "dos-{}-{}-n{grid_points}.csv",
        model.hash(),
        route.cache_tag()
    ))
}

/// Builds the table for `route`, consulting and filling the cache in `dir`.
/// A cached file is reused only when its model hash matches.
pub fn load_or_build(
    model: &ModelSpec,
    route: &DosRoute,
    grid_points: usize,
    dir: Option<&Path>,
) -> Result<DosTable> {
    let path = dir.map(|d| cache_path(d, model, route, grid_points));
    if let Some(p) = path.as_deref().filter(|p| p.exists()) {
        if let Ok(t) = DosTable::read(p) {
            if t.model_hash() == model.hash() {
                return Ok(t);
            }
        }
    }
    let table = build_table(model, route, grid_points)?;
    if let Some(p) = path {
        table.write_atomic(&p)?;
    }
    Ok(table)
}

pub fn build_table(model: &ModelSpec, route: &DosRoute, grid_points: usize) -> Result<DosTable> {
    let k = match route {
        DosRoute::Bloch { k_points: Some(k) } => *k,
        _ => crate::bloch::default_k_points(model.d),
    };
    let bands = BandStructure::compute(model, k);
    let grid = default_lambda_grid(model, &bands, grid_points);
    match route {
        DosRoute::Bloch { k_points } => bloch_table(model, &grid, *k_points),
        DosRoute::FiniteVolume { betas, base_domain } => {
            let base = match base_domain {
                Some(b) => b.clone(),
                None => LatticeDomain::ball(1.0, model.d)?,
            };
            finite_volume_table(model, &grid, betas, &base)
        }
    }
}
