//! Subcommand bodies: each resolves the configuration, runs the computation
//! and writes its files into the output directory once everything is done.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::asymptotics::{
    convergence_study, flow_count, riemann_sandwich, theoretical_integral_in_gap,
    truncation_domain, with_lambda_shift, ExperimentReport, IntegralOptions, Sandwich,
    StudySettings, TheoreticalIntegral, LAMBDA_SHIFT,
};
use crate::birman_schwinger::{rows_to_csv, verify_bs_principle, BsRow};
use crate::bloch::{default_k_points, BandStructure, Gap};
use crate::config::{ExperimentConfig, Format, LambdaSpec, RouteChoice};
use crate::domain::{LatticeDomain, RegionSplit};
use crate::dos::{cache_dir, load_or_build, write_atomic, DosTable};
use crate::error::{Error, Result};
use crate::plot::LogXPlot;

/// Files written by a command, in write order.
#[derive(Debug, Clone, Default)]
pub struct Written(pub Vec<PathBuf>);

struct Sink<'a> {
    cfg: &'a ExperimentConfig,
    files: Vec<(PathBuf, String)>,
}

impl<'a> Sink<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Self {
        Sink {
            cfg,
            files: Vec::new(),
        }
    }

    fn add(&mut self, format: Format, name: &str, body: String) {
        if self.cfg.output.wants(format) {
            self.files
                .push((self.cfg.output.directory.join(name), body));
        }
    }

    fn flush(self) -> Result<Written> {
        let mut out = Vec::with_capacity(self.files.len());
        for (path, body) in self.files {
            write_atomic(&path, body.as_bytes())?;
            out.push(path);
        }
        Ok(Written(out))
    }
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct BandsOutcome {
    pub k_points: usize,
    pub band_ranges: Vec<(f64, f64)>,
    pub gaps: Vec<Gap>,
    pub widest_gap: Option<Gap>,
}

impl BandsOutcome {
    pub fn summary(&self) -> String {
        match self.widest_gap {
            None => "no gap".to_string(),
            Some(g) => format!(
                "gap ({}, {}) with {} band(s) below",
                g.lower, g.upper, g.bands_below
            ),
        }
    }
}

pub fn cmd_bands(cfg: &ExperimentConfig) -> Result<(BandsOutcome, Written)> {
    let model = &cfg.model;
    let k = cfg
        .band_k_points
        .unwrap_or_else(|| default_k_points(model.d));
    let bs = BandStructure::compute(model, k);
    let mut sink = Sink::new(cfg);
    let mut csv = String::new();
    let kcols: Vec<String> = (0..model.d).map(|a| format!("k_{a}")).collect();
    let bcols: Vec<String> = (0..model.cell_size())
        .map(|b| format!("band_{b}"))
        .collect();
    csv.push_str(&format!("{},{}\n", kcols.join(","), bcols.join(",")));
    for (kv, e) in bs.k_samples.iter().zip(&bs.bands) {
        let row: Vec<String> = kv.iter().chain(e.iter()).map(|v| v.to_string()).collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    let outcome = BandsOutcome {
        k_points: k,
        band_ranges: bs.band_ranges.clone(),
        gaps: bs.gap_list.clone(),
        widest_gap: bs.widest_gap(),
    };
    sink.add(Format::Csv, "bands.csv", csv);
    sink.add(Format::Json, "gaps.json", json(&outcome)?);
    Ok((outcome, sink.flush()?))
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DosOutcome {
    pub tables: Vec<DosTable>,
    /// `sup |ρ_bloch − ρ_finite_volume|` over the grid, when both routes ran.
    pub max_disagreement: Option<f64>,
}

fn table_for(cfg: &ExperimentConfig, route: &crate::dos::DosRoute) -> Result<DosTable> {
    let dir = cache_dir();
    load_or_build(
        &cfg.model,
        route,
        cfg.dos.grid_points_for(cfg.model.d),
        dir.as_deref(),
    )
}

/// The table that feeds the theoretical integral.
pub fn primary_table(cfg: &ExperimentConfig) -> Result<DosTable> {
    table_for(cfg, &cfg.dos.primary_route())
}

pub fn cmd_dos(cfg: &ExperimentConfig) -> Result<(DosOutcome, Written)> {
    let mut sink = Sink::new(cfg);
    let outcome = match cfg.dos.route {
        RouteChoice::Bloch | RouteChoice::FiniteVolume => {
            let t = primary_table(cfg)?;
            sink.add(Format::Csv, "dos.csv", t.to_csv());
            DosOutcome {
                tables: vec![t],
                max_disagreement: None,
            }
        }
        RouteChoice::Both => {
            let b = table_for(cfg, &cfg.dos.bloch_route())?;
            let f = table_for(cfg, &cfg.dos.finite_volume_route())?;
            let mut csv = String::from("lambda,rho_bloch,rho_finite_volume,agreement\n");
            let mut worst: f64 = 0.0;
            for (&x, &rb) in b.lambda_grid().iter().zip(b.rho_values()) {
                let rf = f.eval(x)?;
                let diff = (rb - rf).abs();
                worst = worst.max(diff);
                csv.push_str(&format!("{x},{rb},{rf},{diff}\n"));
            }
            sink.add(Format::Csv, "dos_bloch.csv", b.to_csv());
            sink.add(Format::Csv, "dos_finite_volume.csv", f.to_csv());
            sink.add(Format::Csv, "dos_agreement.csv", csv);
            DosOutcome {
                tables: vec![b, f],
                max_disagreement: Some(worst),
            }
        }
    };
    Ok((outcome, sink.flush()?))
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowRow {
    pub alpha: f64,
    pub n: usize,
    pub lambda_shift: f64,
}

pub const FLOW_CSV_HEADER: &str = "alpha,N,lambda_shift";

pub fn flow_rows(cfg: &ExperimentConfig, lambda: f64, gap: &Gap) -> Result<Vec<FlowRow>> {
    let eps2 = cfg.resolve_eps2(lambda, gap);
    let alphas = cfg.alpha_grid.values()?;
    let shift = LAMBDA_SHIFT * gap.width();
    let rows = crate::par::map(&alphas, |&alpha| -> Result<FlowRow> {
        let dom = truncation_domain(&cfg.model, eps2, alpha, cfg.radius_rule)?;
        let (n, used) =
            with_lambda_shift(lambda, shift, |l| flow_count(&cfg.model, l, alpha, &dom))?;
        Ok(FlowRow {
            alpha,
            n,
            lambda_shift: used,
        })
    });
    rows.into_iter().collect()
}

pub fn cmd_flow(cfg: &ExperimentConfig) -> Result<(Vec<FlowRow>, Written)> {
    let (lambda, gap) = cfg.resolve_lambda()?;
    let rows = flow_rows(cfg, lambda, &gap)?;
    let mut csv = format!("{FLOW_CSV_HEADER}\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{}\n", r.alpha, r.n, r.lambda_shift));
    }
    let mut sink = Sink::new(cfg);
    sink.add(Format::Csv, "flow.csv", csv);
    sink.add(Format::Json, "flow.json", json(&rows)?);
    Ok((rows, sink.flush()?))
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct BsOutcome {
    pub lambda: f64,
    pub rows: Vec<BsRow>,
    pub flagged: usize,
    pub mismatches: usize,
}

impl BsOutcome {
    pub fn all_equal(&self) -> bool {
        self.mismatches == 0
    }
}

/// α values for the verification: the configured grid, then any seeded
/// random draws from `(0, alpha_grid.max)`.
pub fn bs_alphas(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    let mut alphas = cfg.alpha_grid.values()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.bs.random_alphas {
        alphas.push(rng.gen_range(0.0..cfg.alpha_grid.max.max(f64::MIN_POSITIVE)));
    }
    Ok(alphas)
}

pub fn cmd_bs_verify(cfg: &ExperimentConfig) -> Result<(BsOutcome, Written)> {
    let (lambda, _) = cfg.resolve_lambda()?;
    let dom = LatticeDomain::ball(cfg.bs.domain_radius, cfg.model.d)?;
    let rows = verify_bs_principle(&cfg.model, &dom, lambda, &bs_alphas(cfg)?, cfg.bs.v_cutoff)?;
    let outcome = BsOutcome {
        lambda,
        flagged: rows.iter().filter(|r| r.flagged).count(),
        mismatches: rows.iter().filter(|r| !r.flagged && !r.equal).count(),
        rows,
    };
    let mut sink = Sink::new(cfg);
    sink.add(Format::Csv, "bs.csv", rows_to_csv(&outcome.rows));
    sink.add(Format::Json, "bs.json", json(&outcome)?);
    Ok((outcome, sink.flush()?))
}

// ---------------------------------------------------------------------------

pub fn integral_for(
    cfg: &ExperimentConfig,
    table: &DosTable,
    lambda: f64,
    gap: &Gap,
) -> Result<TheoreticalIntegral> {
    theoretical_integral_in_gap(table, &cfg.model, lambda, gap, IntegralOptions::default())
}

pub fn study(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let (lambda, gap) = cfg.resolve_lambda()?;
    let table = primary_table(cfg)?;
    let integral = integral_for(cfg, &table, lambda, &gap)?;
    let settings = StudySettings {
        eps1: cfg.split.eps1,
        eps2: cfg.resolve_eps2(lambda, &gap),
        radius_rule: cfg.radius_rule,
    };
    convergence_study(
        &cfg.model,
        lambda,
        &gap,
        &cfg.alpha_grid.values()?,
        settings,
        &integral,
    )
}

pub fn ratio_svg(report: &ExperimentReport) -> String {
    let pts: Vec<(f64, f64)> = report
        .records
        .iter()
        .filter_map(|r| r.ratio.map(|v| (r.alpha, v)))
        .collect();
    LogXPlot {
        title: "R(α) = N(λ, α) / (α^{d/p} I(λ))",
        x_label: "α",
        y_label: "R(α)",
        points: &pts,
        reference: Some(1.0),
    }
    .to_svg()
}

pub fn cmd_asymptotics(cfg: &ExperimentConfig) -> Result<(ExperimentReport, Written)> {
    let report = study(cfg)?;
    let mut sink = Sink::new(cfg);
    sink.add(Format::Json, "asymptotics.json", report.to_json()?);
    sink.add(Format::Csv, "asymptotics.csv", report.to_csv());
    sink.add(Format::Svg, "ratio.svg", ratio_svg(&report));
    Ok((report, sink.flush()?))
}

// ---------------------------------------------------------------------------

/// Stages that need λ inside a gap.
#[derive(Debug, Clone, Serialize)]
pub struct GapStages {
    pub lambda: f64,
    pub flow: Vec<FlowRow>,
    pub bs_flagged: usize,
    pub bs_mismatches: usize,
    pub asymptotics: ExperimentReport,
    pub sandwich: Vec<Sandwich>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub model_hash: String,
    pub bands: BandsOutcome,
    pub dos_max_disagreement: Option<f64>,
    /// `None` when the background has no gap and λ was left on auto.
    pub gap_stages: Option<GapStages>,
}

impl Summary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("model {}\n", self.model_hash));
        s.push_str(&format!("bands: {}\n", self.bands.summary()));
        if let Some(d) = self.dos_max_disagreement {
            s.push_str(&format!("dos routes: max |bloch - finite volume| = {d}\n"));
        }
        let Some(g) = &self.gap_stages else {
            s.push_str("no spectral gap: flow, birman-schwinger and asymptotics skipped\n");
            return s;
        };
        let r = &g.asymptotics;
        s.push_str(&format!("lambda = {}\n", g.lambda));
        s.push_str(&format!(
            "integral I(lambda) = {} (quadrature error {:e})\n",
            r.integral.value, r.integral.quadrature_error
        ));
        s.push_str(&format!(
            "birman-schwinger: {} mismatches, {} flagged\n",
            g.bs_mismatches, g.bs_flagged
        ));
        s.push_str("alpha,N,N1,N2,N3_check,links_r,ratio\n");
        for x in &r.records {
            let ratio = x.ratio.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                x.alpha, x.n, x.n1, x.n2, x.n3_check, x.links_r, ratio
            ));
        }
        s.push_str(&format!(
            "verdict: trend_toward_1 = {}, final deviation = {}\n",
            r.verdict.trend_toward_1,
            r.verdict
                .final_deviation
                .map(|v| v.to_string())
                .unwrap_or_else(|| "-".into())
        ));
        for w in &g.sandwich {
            s.push_str(&format!(
                "sandwich delta = {}: {} <= {} <= {}\n",
                w.cell_size, w.lower_sum, w.n2_scaled, w.upper_sum
            ));
        }
        s
    }
}

fn gap_stages(cfg: &ExperimentConfig, written: &mut Written) -> Result<GapStages> {
    let (flow, w) = cmd_flow(cfg)?;
    written.0.extend(w.0);
    let (bs, w) = cmd_bs_verify(cfg)?;
    written.0.extend(w.0);
    let (report, w) = cmd_asymptotics(cfg)?;
    written.0.extend(w.0);

    let table = primary_table(cfg)?;
    let alpha_max = *cfg.alpha_grid.values()?.last().expect("nonempty grid");
    let sandwich = if cfg.model.d <= 2 && alpha_max > 0.0 {
        let split = RegionSplit::new(report.eps1, report.eps2, alpha_max, cfg.model.impurity.p)?;
        cfg.sandwich
            .cell_sizes
            .iter()
            .map(|&delta| {
                riemann_sandwich(
                    &cfg.model,
                    report.lambda,
                    &report.gap,
                    &split,
                    delta,
                    &table,
                )
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(GapStages {
        lambda: report.lambda,
        flow,
        bs_flagged: bs.flagged,
        bs_mismatches: bs.mismatches,
        asymptotics: report,
        sandwich,
    })
}

/// Runs every stage and writes their files plus a combined summary. A model
/// without a gap gets bands and density of states only, unless λ was given.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<(Summary, Written)> {
    // settle λ before anything is written
    let gapped = match cfg.resolve_lambda() {
        Ok(_) => true,
        Err(_) if matches!(cfg.lambda, LambdaSpec::Auto(_)) => false,
        Err(e) => return Err(e),
    };
    let (bands, mut written) = cmd_bands(cfg)?;
    let (dos, w) = cmd_dos(cfg)?;
    written.0.extend(w.0);
    let stages = if gapped {
        Some(gap_stages(cfg, &mut written)?)
    } else {
        None
    };
    let summary = Summary {
        model_hash: cfg.model.hash(),
        bands,
        dos_max_disagreement: dos.max_disagreement,
        gap_stages: stages,
    };
    let mut sink = Sink::new(cfg);
    sink.add(Format::Json, "summary.json", json(&summary)?);
    let text_path = cfg.output.directory.join("summary.txt");
    sink.files.push((text_path, summary.to_text()));
    written.0.extend(sink.flush()?.0);
    Ok((summary, written))
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::invalid("config", format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text)
}
