//! Property tests over risk measures, file formats and parameter maps.

use proptest::prelude::*;

use collective_risk::inference::{transform_from_unconstrained, transform_to_unconstrained};
use collective_risk::io::{read_portfolio, write_portfolio};
use collective_risk::model::{
    BlockState, GammaHyper, HyperPrior, ModelSpec, ParameterLayout, ParameterState, PortfolioData, PriorConfig, Record,
};
use collective_risk::risk::{expected_shortfall, tail_value_at_risk, value_at_risk};

fn sample() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![0.0..1e4, (0u32..5).prop_map(f64::from)], 1..300)
}

proptest! {
    #[test]
    fn risk_measures_are_ordered(xs in sample(), t1 in 0.001..0.999, t2 in 0.001..0.999) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let v_lo = value_at_risk(&xs, lo).unwrap();
        let v_hi = value_at_risk(&xs, hi).unwrap();
        prop_assert!(min <= v_lo && v_lo <= v_hi && v_hi <= max);
        prop_assert!(xs.contains(&v_lo));
        let t = tail_value_at_risk(&xs, lo).unwrap();
        prop_assert!(t >= v_lo - 1e-9 * v_lo.abs().max(1.0) && t <= max + 1e-9 * max.abs().max(1.0));
        prop_assert!(expected_shortfall(&xs, lo).unwrap() >= 0.0);
    }

    #[test]
    fn portfolio_files_round_trip(
        cells in prop::collection::vec((0u64..50, 0.01f64..1e6, 1u64..10_000), 6),
    ) {
        // 2 services x 1 class x 3 months
        let records: Vec<Record> = cells
            .iter()
            .enumerate()
            .map(|(i, &(n, x, pop))| Record {
                service: 1 + (i / 3) as u32,
                age_class: 1,
                month: 1 + i % 3,
                n_claims: n,
                claim_total: if n == 0 { 0.0 } else { x },
                population: pop,
            })
            .collect();
        let data = PortfolioData::new(records).unwrap();
        let mut buf = Vec::new();
        write_portfolio(&data, &mut buf).unwrap();
        prop_assert_eq!(read_portfolio(buf.as_slice()).unwrap(), data);
    }

    #[test]
    fn parameter_maps_invert(
        spec_idx in 0usize..6,
        pin in any::<bool>(),
        values in prop::collection::vec(1e-3f64..1e3, 16),
    ) {
        let spec = ModelSpec::ALL[spec_idx];
        let mut prior = PriorConfig::half_cauchy();
        if pin {
            prior.theta = HyperPrior::Pinned { shape: 2.0, rate: 3.0 };
        }
        let block = |k: usize| BlockState {
            values: values[4 * k..4 * k + 2].to_vec(),
            hyper: GammaHyper::new(values[4 * k + 2], values[4 * k + 3]),
        };
        let mut state = ParameterState {
            lambda: block(0),
            theta: block(1),
            nu: spec.has_nu().then(|| block(2)),
            delta: spec.has_delta().then(|| block(3)),
        };
        if pin {
            state.theta.hyper = GammaHyper::new(2.0, 3.0);
        }
        let layout = ParameterLayout::new(spec, prior, 2);
        let flat = layout.flatten(&state).unwrap();
        prop_assert_eq!(&layout.unflatten(&flat).unwrap(), &state);
        let z = transform_to_unconstrained(&layout, &state).unwrap();
        let back = layout.flatten(&transform_from_unconstrained(&layout, &z).unwrap()).unwrap();
        for (a, b) in flat.iter().zip(&back) {
            prop_assert!((a / b - 1.0).abs() < 1e-12);
        }
    }
}
