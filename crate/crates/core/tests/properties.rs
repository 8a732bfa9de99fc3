use nalgebra::SymmetricEigen;
use proptest::prelude::*;

use spectral_flow::asymptotics::flow_count;
use spectral_flow::domain::{LatticeDomain, RegionSplit};
use spectral_flow::dos::{DosTable, Provenance};
use spectral_flow::eigencount::{count_below_with, inertia, CountMethod};
use spectral_flow::model::{Impurity, ModelSpec, Psi};
use spectral_flow::operator::assemble;

fn model_strategy() -> impl Strategy<Value = ModelSpec> {
    (
        1usize..=2,
        prop::collection::vec(0.0f64..4.0, 9),
        0.3f64..2.0,
        1.0f64..3.0,
    )
        .prop_flat_map(|(d, vals, psi, p)| {
            prop::collection::vec(1usize..=3, d).prop_map(move |period| {
                let cells: usize = period.iter().product();
                ModelSpec::new(
                    d,
                    period,
                    vals[..cells].to_vec(),
                    Impurity {
                        psi: Psi::Constant { value: psi },
                        p,
                        near_field_cap: 1.0,
                        correction: None,
                    },
                )
                .unwrap()
            })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn counts_agree_across_methods(model in model_strategy(), r in 2.0f64..9.0, alpha in 0.0f64..30.0, lambda in -3.0f64..10.0) {
        let domain = LatticeDomain::ball(r, model.d).unwrap();
        let base = assemble(&domain, &model).unwrap();
        let op = base.perturbed(&base.potential(&model), alpha).unwrap();
        let eig = SymmetricEigen::new(op.to_dense()).eigenvalues;
        prop_assume!(eig.iter().all(|e| (e - lambda).abs() > 1e-6));
        let want = eig.iter().filter(|&&e| e < lambda).count();
        prop_assert_eq!(count_below_with(&op, lambda, CountMethod::BlockLdlt).unwrap(), want);
        prop_assert_eq!(count_below_with(&op, lambda, CountMethod::Dense).unwrap(), want);
        let inr = inertia(&op, lambda).unwrap();
        prop_assert_eq!(inr.size(), op.len());
    }

    #[test]
    fn flow_is_monotone_in_alpha(model in model_strategy(), lambda in -1.0f64..9.0, a in 0.1f64..100.0, factor in 1.0f64..10.0) {
        let domain = LatticeDomain::ball(5.0, model.d).unwrap();
        let lo = flow_count(&model, lambda, a, &domain);
        let hi = flow_count(&model, lambda, a * factor, &domain);
        if let (Ok(lo), Ok(hi)) = (lo, hi) {
            prop_assert!(lo <= hi);
        }
    }

    #[test]
    fn table_interpolation_stays_monotone(steps in prop::collection::vec(0.0f64..1.0, 2..40), xs in prop::collection::vec(-5.0f64..10.0, 10)) {
        let total: f64 = steps.iter().sum::<f64>().max(1e-9);
        let mut acc = 0.0;
        let rho: Vec<f64> = steps.iter().map(|s| { acc += s / total; acc.min(1.0) }).collect();
        let grid: Vec<f64> = (0..rho.len()).map(|i| -5.0 + 15.0 * i as f64 / (rho.len() - 1) as f64).collect();
        let t = DosTable::new(grid, rho, Provenance::Bloch, "h".into()).unwrap();
        let mut xs = xs;
        xs.sort_by(f64::total_cmp);
        let vals: Vec<f64> = xs.iter().map(|&x| t.eval(x).unwrap()).collect();
        prop_assert!(vals.windows(2).all(|w| w[0] <= w[1] + 1e-15));
        prop_assert!(vals.iter().all(|v| (0.0..=1.0).contains(v)));
        let back = DosTable::from_csv(&t.to_csv()).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn splitting_radii_are_ordered(eps1 in 0.01f64..1.0, extra in 0.01f64..3.0, alpha in 1.0f64..1e5, p in 1.0f64..4.0) {
        let s = RegionSplit::new(eps1, eps1 + extra, alpha, p).unwrap();
        prop_assert!(s.inner_radius() < s.outer_radius());
        prop_assert!((s.scale() - alpha.powf(1.0 / p)).abs() <= 1e-9 * s.scale());
    }
}

#[test]
fn provenance_text_round_trip() {
    for p in [
        Provenance::Bloch,
        Provenance::FiniteVolume(vec![50.0, 100.5]),
    ] {
        assert_eq!(p.to_string().parse::<Provenance>().unwrap(), p);
    }
    assert!("finite_volume(x)".parse::<Provenance>().is_err());
}

#[test]
fn finite_volume_ids_does_not_depend_on_shape() {
    use spectral_flow::dos::ids_finite_volume;
    // Lattice-point counts of the closed cube exceed its volume by O(1/β), so
    // only the shrinking difference is asserted.
    let model = ModelSpec::checkerboard(4.0, 1.0, 2.0).unwrap();
    let ball = LatticeDomain::ball(1.0, 2).unwrap();
    let cube = LatticeDomain::cube(1.0, 2).unwrap();
    for lambda in [3.0, 6.0, 9.5] {
        let a = ids_finite_volume(&model, lambda, &[30.0, 50.0], &ball).unwrap();
        let b = ids_finite_volume(&model, lambda, &[30.0, 50.0], &cube).unwrap();
        let diff: Vec<f64> = a
            .ratios
            .iter()
            .zip(&b.ratios)
            .map(|(x, y)| (x - y).abs())
            .collect();
        assert!(
            diff[1] < diff[0] && diff[1] < 0.025,
            "lambda {lambda}: {diff:?}"
        );
    }
}
