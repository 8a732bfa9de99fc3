//! Acceptance run. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any fails.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spectral_flow::asymptotics::{flow_count, riemann_sandwich};
use spectral_flow::birman_schwinger::verify_bs_principle;
use spectral_flow::bloch::{find_gap, ids_bloch, BandStructure};
use spectral_flow::commands::{self, cmd_asymptotics, study};
use spectral_flow::config::{ExperimentConfig, RouteChoice};
use spectral_flow::domain::{LatticeDomain, RegionSplit};
use spectral_flow::dos::{build_table, ids_finite_volume, DosRoute, DosTable};
use spectral_flow::eigencount::{count_below_with, CountMethod};
use spectral_flow::model::{Impurity, ModelSpec, Psi};
use spectral_flow::operator::assemble;
use spectral_flow::Result;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    let mut cfg = commands::load_config(&path).expect("config");
    cfg.dos.route = RouteChoice::Bloch;
    cfg
}

fn free_ids(lambda: f64) -> f64 {
    (1.0 - lambda / 2.0).clamp(-1.0, 1.0).acos() / PI
}

fn free_lattice_ids() -> Result<Outcome> {
    let model = ModelSpec::free(1, 1.0, 2.0)?;
    let base = LatticeDomain::ball(1.0, 1)?;
    let (mut bloch_err, mut fv_err) = (0.0f64, 0.0f64);
    for i in 0..=20 {
        let l = 4.0 * i as f64 / 20.0;
        bloch_err = bloch_err.max((ids_bloch(&model, l) - free_ids(l)).abs());
        fv_err = fv_err
            .max((ids_finite_volume(&model, l, &[100.0, 200.0], &base)?.value - free_ids(l)).abs());
    }
    Ok(outcome(
        bloch_err <= 1e-4 && fv_err <= 0.02,
        format!("max bloch error {bloch_err:.2e}, max finite-volume error {fv_err:.4}"),
    ))
}

fn bs_exactness() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut rows, mut flagged, mut mismatches) = (0, 0, 0);
    for _ in 0..50 {
        let a = rng.gen_range(-1.0..1.0);
        let b = a + rng.gen_range(1.5..5.0);
        let model = ModelSpec::period_two([a, b], 1.0, 2.0)?;
        let gap = find_gap(&model, 64).expect("period-2 cell with distinct values has a gap");
        let domain = LatticeDomain::ball(rng.gen_range(4.0..29.5), 1)?;
        assert!(domain.site_count()? <= 60);
        let alphas: Vec<f64> = (0..20)
            .map(|_| 10f64.powf(rng.gen_range(-1.0..4.0)))
            .collect();
        for r in verify_bs_principle(&model, &domain, gap.midpoint(), &alphas, None)? {
            rows += 1;
            if r.flagged {
                flagged += 1;
            } else if !r.equal {
                mismatches += 1;
            }
        }
    }
    let frac = flagged as f64 / rows as f64;
    Ok(outcome(
        mismatches == 0 && frac <= 0.02,
        format!("{rows} rows, {mismatches} mismatches, {flagged} flagged"),
    ))
}

fn splitting(report: &spectral_flow::asymptotics::ExperimentReport) -> Outcome {
    let ok = report
        .records
        .iter()
        .all(|r| r.splitting_holds && r.n3_check == 0 && r.links_r <= 8);
    let detail: Vec<String> = report
        .records
        .iter()
        .map(|r| {
            format!(
                "α={}: N={} N1={} N2={} N3={} links={}",
                r.alpha, r.n, r.n1, r.n2, r.n3_check, r.links_r
            )
        })
        .collect();
    outcome(ok, detail.join("; "))
}

fn n1_bound(report: &spectral_flow::asymptotics::ExperimentReport) -> Outcome {
    let ok = report.records.iter().all(|r| r.n1 as f64 <= r.n1_bound);
    let detail: Vec<String> = report
        .records
        .iter()
        .map(|r| format!("{} <= {:.2}", r.n1, r.n1_bound))
        .collect();
    outcome(ok, detail.join(", "))
}

fn main_trend(report: &spectral_flow::asymptotics::ExperimentReport) -> Result<Outcome> {
    let ratios: Vec<String> = report
        .ratios()
        .iter()
        .map(|r| r.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()))
        .collect();
    let dev = report.verdict.final_deviation;
    let d1_ok = report.verdict.trend_toward_1 && dev.is_some_and(|d| d <= 0.2);

    let mut cfg = config("checkerboard_d2.json");
    cfg.alpha_grid.max = cfg.alpha_grid.max.min(400.0);
    let smoke = study(&cfg)?;
    let smoke_ok = smoke
        .records
        .iter()
        .all(|r| r.splitting_holds && r.n3_check == 0);
    Ok(outcome(
        d1_ok && smoke_ok,
        format!(
            "I = {:.6}, R = [{}], |R(1e4) - 1| = {:.4}; d=2 smoke splitting {}",
            report.integral.value,
            ratios.join(", "),
            dev.unwrap_or(f64::NAN),
            if smoke_ok { "holds" } else { "fails" }
        ),
    ))
}

fn sandwich() -> Result<Outcome> {
    let cfg = config("period2_d1.json");
    let (lambda, gap) = cfg.resolve_lambda()?;
    let table = commands::primary_table(&cfg)?;
    let split = RegionSplit::new(
        cfg.split.eps1,
        cfg.resolve_eps2(lambda, &gap),
        1e4,
        cfg.model.impurity.p,
    )?;
    let coarse = riemann_sandwich(&cfg.model, lambda, &gap, &split, 0.25, &table)?;
    let fine = riemann_sandwich(&cfg.model, lambda, &gap, &split, 0.125, &table)?;
    let halving = (fine.upper_sum - fine.lower_sum) / (coarse.upper_sum - coarse.lower_sum);
    Ok(outcome(
        coarse.brackets(0.05) && (0.4..=0.6).contains(&halving),
        format!(
            "N2/α^(1/2) = {:.4} in [{:.4}, {:.4}]; gap ratio {:.3}",
            coarse.n2_scaled, coarse.lower_sum, coarse.upper_sum, halving
        ),
    ))
}

fn random_model(rng: &mut ChaCha8Rng, d: usize) -> Result<ModelSpec> {
    let period: Vec<usize> = (0..d).map(|_| rng.gen_range(1..=3)).collect();
    let cells: usize = period.iter().product();
    let values = (0..cells).map(|_| rng.gen_range(0.0..4.0)).collect();
    let impurity = Impurity {
        psi: Psi::Constant {
            value: rng.gen_range(0.5..2.0),
        },
        p: rng.gen_range(1.0..3.0),
        near_field_cap: 1.0,
        correction: None,
    };
    ModelSpec::new(d, period, values, impurity)
}

fn dense_count(m: &nalgebra::DMatrix<f64>, lambda: f64) -> Option<usize> {
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    if eig.iter().any(|e| (e - lambda).abs() < 1e-6) {
        return None;
    }
    Some(eig.iter().filter(|&&e| e < lambda).count())
}

fn monotonicity(tables: &[DosTable]) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut done, mut mismatches) = (0, 0);
    while done < 200 {
        let d = rng.gen_range(1..=2);
        let model = random_model(&mut rng, d)?;
        let radius = if d == 1 {
            rng.gen_range(3.0..300.0)
        } else {
            rng.gen_range(2.0..13.0)
        };
        let domain = LatticeDomain::ball(radius, d)?;
        let base = assemble(&domain, &model)?;
        let op = base.perturbed(&base.potential(&model), rng.gen_range(0.0..50.0))?;
        let lambda = rng.gen_range(-5.0..10.0);
        let Some(want) = dense_count(&op.to_dense(), lambda) else {
            continue;
        };
        let mut methods = vec![CountMethod::Auto, CountMethod::BlockLdlt];
        if d == 1 {
            methods.push(CountMethod::Sturm);
        }
        for m in methods {
            if count_below_with(&op, lambda, m)? != want {
                mismatches += 1;
            }
        }
        done += 1;
    }

    let mut nonmonotone = 0;
    for _ in 0..20 {
        let d = rng.gen_range(1..=2);
        let model = random_model(&mut rng, d)?;
        let domain = LatticeDomain::ball(if d == 1 { 40.0 } else { 6.0 }, d)?;
        let bands = BandStructure::compute(&model, 32);
        let lambda = bands
            .widest_gap()
            .map(|g| g.midpoint())
            .unwrap_or(bands.spectrum_min() - 0.5);
        let mut prev = 0;
        let mut alpha = 0.5;
        while alpha < 1e4 {
            match flow_count(&model, lambda, alpha, &domain) {
                Ok(n) => {
                    if n < prev {
                        nonmonotone += 1;
                    }
                    prev = n;
                }
                Err(e) if e.is_spectrum_hit() => {}
                Err(e) => return Err(e),
            }
            alpha *= 1.7;
        }
    }

    let bad_tables = tables
        .iter()
        .filter(|t| {
            let r = t.rho_values();
            r.iter().any(|v| !(0.0..=1.0).contains(v)) || r.windows(2).any(|w| w[1] < w[0])
        })
        .count();
    Ok(outcome(
        mismatches == 0 && nonmonotone == 0 && bad_tables == 0,
        format!(
            "{mismatches} count mismatches over 200 instances, {nonmonotone} flow decreases, {bad_tables}/{} bad tables",
            tables.len()
        ),
    ))
}

fn determinism() -> Result<Outcome> {
    let dir = tempfile::tempdir().expect("tempdir");
    let mut cfg = config("period2_d1.json");
    let mut files = Vec::new();
    for run in ["a", "b"] {
        cfg.output.directory = dir.path().join(run);
        let (_, written) = cmd_asymptotics(&cfg)?;
        files.push(
            written
                .0
                .iter()
                .map(|p| (p.file_name().unwrap().to_owned(), std::fs::read(p).unwrap()))
                .collect::<Vec<_>>(),
        );
    }
    Ok(outcome(
        files[0] == files[1] && !files[0].is_empty(),
        format!("{} files compared", files[0].len()),
    ))
}

fn main() {
    let cache = tempfile::tempdir().expect("tempdir");
    std::env::set_var("SPECTRAL_FLOW_CACHE", cache.path());

    let cfg = config("period2_d1.json");
    let report = study(&cfg).expect("d=1 study");
    let mut tables = vec![commands::primary_table(&cfg).unwrap()];
    let checker = config("checkerboard_d2.json");
    tables.push(commands::primary_table(&checker).unwrap());
    let free = ModelSpec::free(1, 1.0, 2.0).unwrap();
    let fv = DosRoute::FiniteVolume {
        betas: vec![50.0, 100.0],
        base_domain: Some(LatticeDomain::ball(1.0, 1).unwrap()),
    };
    tables.push(build_table(&free, &fv, 201).unwrap());

    type Check<'a> = (&'a str, Box<dyn Fn() -> Result<Outcome> + 'a>);
    let checks: Vec<Check> = vec![
        ("1 free-lattice IDS closed form", Box::new(free_lattice_ids)),
        ("2 Birman-Schwinger exactness", Box::new(bs_exactness)),
        (
            "3 splitting inequality",
            Box::new(|| Ok(splitting(&report))),
        ),
        ("4 inner-ball bound", Box::new(|| Ok(n1_bound(&report)))),
        ("5 ratio trend", Box::new(|| main_trend(&report))),
        ("6 Riemann sandwich", Box::new(sandwich)),
        ("7 monotonicity suite", Box::new(|| monotonicity(&tables))),
        ("8 determinism", Box::new(determinism)),
    ];

    let mut failures = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let o = check().unwrap_or_else(|e| outcome(false, format!("error: {e}")));
        if !o.pass {
            failures += 1;
        }
        println!(
            "[{}] {name}: {} ({:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failures > 0 {
        eprintln!("{failures} criteria failed");
        std::process::exit(1);
    }
}
