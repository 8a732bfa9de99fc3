//! Birman–Schwinger operator `X(λ) = √V (A_Ω − λ)^{-1} √V` on a finite
//! domain, and the counting identity `N(λ, α) = n₊(α⁻¹, X(λ))`.
//!
//! On a finite matrix the identity is exact: `A_Ω − αV − λ` is congruent to
//! `(A_Ω − λ) ⊕ (α⁻¹ − X)` on the support of `V` (Haynsworth), so both sides
//! count the same negative directions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::domain::{LatticeDomain, Site};
use crate::eigencount::{count_below, inertia, BlockLdlt, SymmetricSpectrum};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::operator::{assemble, SparseSymmetricOperator};
use crate::par;

/// Default support cutoff relative to `‖V‖_∞`.
pub const DEFAULT_RELATIVE_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct BsOperator {
    pub lambda: f64,
    pub support_sites: Vec<Site>,
    /// `V` on the support sites.
    pub support_values: Vec<f64>,
    pub matrix: DMatrix<f64>,
    pub truncation_domain: LatticeDomain,
}

impl BsOperator {
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn spectrum(&self) -> SymmetricSpectrum {
        SymmetricSpectrum::new(&self.matrix)
    }
}

fn sup_v(op: &SparseSymmetricOperator, model: &ModelSpec) -> f64 {
    op.potential(model).into_iter().fold(0.0, f64::max)
}

/// `V` with every value below `cutoff` set to zero.
fn masked_potential(op: &SparseSymmetricOperator, model: &ModelSpec, cutoff: f64) -> Vec<f64> {
    op.potential(model)
        .into_iter()
        .map(|v| if v >= cutoff && v > 0.0 { v } else { 0.0 })
        .collect()
}

/// Cutoff used when none is given: `1e-12·‖V‖_∞` on the domain.
pub fn default_cutoff(model: &ModelSpec, domain: &LatticeDomain) -> Result<f64> {
    let op = assemble(domain, model)?;
    Ok(DEFAULT_RELATIVE_CUTOFF * sup_v(&op, model))
}

fn resolvent_factor(op: &SparseSymmetricOperator, lambda: f64) -> Result<BlockLdlt> {
    if inertia(op, lambda)?.zeros > 0 {
        return Err(Error::ResolventSingular { lambda });
    }
    let f = BlockLdlt::factor(op, lambda);
    if f.inertia().zeros > 0 {
        return Err(Error::ResolventSingular { lambda });
    }
    Ok(f)
}

/// Dense `X(λ)` on the sites where `V ≥ v_cutoff`.
pub fn build_bs(
    model: &ModelSpec,
    domain: &LatticeDomain,
    lambda: f64,
    v_cutoff: f64,
) -> Result<BsOperator> {
    if !lambda.is_finite() {
        return Err(Error::invalid("lambda", "must be finite"));
    }
    if !(v_cutoff >= 0.0) {
        return Err(Error::invalid("v_cutoff", "must be >= 0"));
    }
    let op = assemble(domain, model)?;
    let v = masked_potential(&op, model, v_cutoff);
    let support: Vec<usize> = (0..op.len()).filter(|&i| v[i] > 0.0).collect();
    let m = support.len();
    let mut matrix = DMatrix::zeros(m, m);
    if m > 0 {
        let factor = resolvent_factor(&op, lambda)?;
        let sqrt_v: Vec<f64> = support.iter().map(|&i| v[i].sqrt()).collect();
        let columns = par::map(&support, |&j| -> Result<Vec<f64>> {
            let mut col = vec![0.0; op.len()];
            col[j] = 1.0;
            factor
                .solve_in_place(&mut col)
                .map_err(|_| Error::ResolventSingular { lambda })?;
            Ok(support.iter().map(|&i| col[i]).collect())
        });
        for (b, col) in columns.into_iter().enumerate() {
            let col = col?;
            for a in 0..m {
                matrix[(a, b)] = sqrt_v[a] * col[a] * sqrt_v[b];
            }
        }
        // exact symmetry in storage
        for a in 0..m {
            for b in 0..a {
                let s = 0.5 * (matrix[(a, b)] + matrix[(b, a)]);
                matrix[(a, b)] = s;
                matrix[(b, a)] = s;
            }
        }
    }
    Ok(BsOperator {
        lambda,
        support_values: support.iter().map(|&i| v[i]).collect(),
        support_sites: support.iter().map(|&i| op.sites()[i].clone()).collect(),
        matrix,
        truncation_domain: domain.clone(),
    })
}

/// One α of a verification run. Flagged rows hit a spectrum on either side
/// and carry no counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsRow {
    pub alpha: f64,
    pub n_plus: Option<usize>,
    pub flow_count: Option<usize>,
    pub equal: bool,
    pub flagged: bool,
}

pub const BS_CSV_HEADER: &str = "alpha,n_plus,flow_count,equal,flagged";

pub fn rows_to_csv(rows: &[BsRow]) -> String {
    let opt = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
    let mut out = format!("{BS_CSV_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.alpha,
            opt(r.n_plus),
            opt(r.flow_count),
            r.equal,
            r.flagged
        ));
    }
    out
}

/// Compares `n₊(α⁻¹, X(λ))` with `count_below(A_Ω − αV, λ) − count_below(A_Ω, λ)`
/// for every α. Both sides use `V` restricted to the same support.
pub fn verify_bs_principle(
    model: &ModelSpec,
    domain: &LatticeDomain,
    lambda: f64,
    alphas: &[f64],
    v_cutoff: Option<f64>,
) -> Result<Vec<BsRow>> {
    if let Some(a) = alphas.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
        return Err(Error::invalid("alpha", format!("must be >= 0, got {a}")));
    }
    let cutoff = match v_cutoff {
        Some(c) => c,
        None => default_cutoff(model, domain)?,
    };
    let bs = build_bs(model, domain, lambda, cutoff)?;
    let spectrum = bs.spectrum();
    let base = assemble(domain, model)?;
    let v = masked_potential(&base, model, cutoff);
    let base_count = count_below(&base, lambda)?;
    let rows = par::map(alphas, |&alpha| -> Result<BsRow> {
        if alpha == 0.0 {
            return Ok(BsRow {
                alpha,
                n_plus: Some(0),
                flow_count: Some(0),
                equal: true,
                flagged: false,
            });
        }
        let n_plus = match spectrum.n_plus(1.0 / alpha) {
            Ok(n) => Some(n),
            Err(e) if e.is_spectrum_hit() => None,
            Err(e) => return Err(e),
        };
        let perturbed = base.perturbed(&v, alpha)?;
        let flow = match count_below(&perturbed, lambda) {
            Ok(n) => Some(n - base_count.min(n)),
            Err(e) if e.is_spectrum_hit() => None,
            Err(e) => return Err(e),
        };
        let flagged = n_plus.is_none() || flow.is_none();
        Ok(BsRow {
            alpha,
            n_plus,
            flow_count: flow,
            equal: !flagged && n_plus == flow,
            flagged,
        })
    });
    rows.into_iter().collect()
}
