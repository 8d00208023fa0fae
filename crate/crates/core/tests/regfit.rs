use std::sync::Arc;

use fracheat::kernel::spectral_decompose;
use fracheat::regfit::*;
use fracheat::solver::{solve_duhamel, Source};
use fracheat::{Error, Grid, GridField, Ladder, OperatorMatrix, QuadratureScheme, SourceSpec, SpatialDomain, SpectralDecomposition};

fn dec_on(pad: f64, n: usize, s: f64) -> SpectralDecomposition {
    let g = Grid::new(SpatialDomain::interval(pad), n).unwrap();
    let a = OperatorMatrix::assemble(&g, 2.0 * s, &QuadratureScheme::default()).unwrap();
    spectral_decompose(&Arc::new(a)).unwrap()
}

fn window() -> TimeWindow {
    TimeWindow::new(0.02, 0.3, 8).unwrap()
}

#[test]
fn smoothing_slopes() {
    let dec = dec_on(0.25, 321, 0.5);
    let spike = smoothing_slope(&dec, &InitialData::WorstSpike, 2.0, &window(), 0.1).unwrap();
    assert!(spike.pass && spike.reliable, "{spike:?}");
    assert!((spike.predicted + 0.5).abs() < 1e-15);
    let flat = smoothing_slope(&dec, &InitialData::WorstL2, 2.0, &window(), 0.1).unwrap();
    assert_eq!(flat.predicted, 0.0);
    assert!(flat.pass && flat.measured.abs() <= 0.1, "{flat:?}");
    let weighted = weighted_smoothing_slope(&dec, &InitialData::WorstSpike, 2.0, &window(), 0.15).unwrap();
    assert!(weighted.pass, "{weighted:?}");
    let [lo, hi] = spike.window;
    assert!(lo >= 0.02 && hi <= 0.1 / dec.lambda1() + 1e-15);
}

#[test]
fn gradient_slopes() {
    let dec = dec_on(0.25, 321, 0.5);
    let spike = gradient_regularity_slope(&dec, &InitialData::WorstSpike, 0.5, 2.0, &window(), 0.2).unwrap();
    assert!(spike.pass, "{spike:?}");
    let l2 = gradient_regularity_slope(&dec, &InitialData::WorstL2, 0.5, 2.0, &window(), 0.15).unwrap();
    assert!(l2.pass, "{l2:?}");
    let phi = dec.eigenfunction(0);
    let field = InitialData::Field { w0: phi, sigma: 2.0 };
    assert!(gradient_regularity_slope(&dec, &field, 0.5, 2.0, &window(), 0.15).is_ok());
}

#[test]
fn slope_json_has_required_fields() {
    let dec = dec_on(0.25, 161, 0.5);
    let check = smoothing_slope(&dec, &InitialData::WorstSpike, 2.0, &TimeWindow::new(0.01, 0.3, 5).unwrap(), 0.1).unwrap();
    let v = serde_json::to_value(&check).unwrap();
    for key in ["theorem_tag", "params", "predicted", "measured", "tolerance", "window", "R2", "pass"] {
        assert!(v.get(key).is_some(), "{key}");
    }
}

fn pulse_study(n: usize, r: f64, horizon: f64) -> SourceNormReport {
    let dec = dec_on(0.25, n, 0.5);
    let g = dec.grid().clone();
    let eps = g.h();
    let mut times = vec![0.0];
    let k = 24;
    times.extend((0..k).map(|i| eps * (horizon / eps).powf(i as f64 / (k - 1) as f64)));
    let ladder = Ladder::new(times).unwrap();
    let src = spike_pulse(&g, &[0.1], &ladder);
    source_spacetime_norm(&dec, &src, &ladder, 0.5, r).unwrap()
}

#[test]
fn source_norm_below_and_above_threshold() {
    let below = RefinementStudy::new(pulse_study(128, 1.2, 0.2), pulse_study(256, 1.2, 0.2));
    assert!(below.coarse.below_threshold && below.fine.norm.is_finite());
    assert!((below.coarse.source_norm - 1.0).abs() < 1e-12);
    assert!(below.is_stable(0.8, 1.25), "{below:?}");
    let above = RefinementStudy::new(pulse_study(128, 1.5, 0.2), pulse_study(256, 1.5, 0.2));
    assert!(!above.coarse.below_threshold);
    assert!(above.growth > below.growth, "{} vs {}", above.growth, below.growth);
}

#[test]
fn source_constant_shrinks_with_horizon() {
    let ratios: Vec<f64> = [0.1, 0.2, 0.4].iter().map(|&t| pulse_study(128, 1.2, t).ratio).collect();
    assert!(ratios.windows(2).all(|w| w[0] < w[1]), "{ratios:?}");
}

#[test]
fn zero_source_zero_norm() {
    let dec = dec_on(0.25, 64, 0.5);
    let ladder = Ladder::uniform(0.1, 4).unwrap();
    let src = SourceSpec::forcing(dec.grid(), Source::Zero).with_labels(Some(1.0), None);
    let rep = source_spacetime_norm(&dec, &src, &ladder, 0.5, 1.2).unwrap();
    assert_eq!(rep.norm, 0.0);
    assert_eq!(rep.ratio, 0.0);
}

#[test]
fn difference_quotient_ratio() {
    let scheme = QuadratureScheme::default();
    let mut ratios = Vec::new();
    for n in [128, 192] {
        let dec = dec_on(0.5, n, 0.5);
        let phi = dec.eigenfunction(0);
        let rep = gut_check(&phi, 0.5, 2.0, &scheme).unwrap();
        assert!(rep.ratio.is_finite() && rep.ratio > 0.0);
        let doubled = gut_check(&phi.scaled(2.0), 0.5, 2.0, &scheme).unwrap();
        assert!((doubled.ratio / rep.ratio - 1.0).abs() < 1e-12);
        ratios.push(rep.ratio);
    }
    let stability = ratios[1] / ratios[0];
    assert!((0.75..=1.25).contains(&stability));
    // regression value
    assert!((ratios[0] - 1.166).abs() < 0.01, "{ratios:?}");
    let zero = gut_check(&GridField::zeros(&Grid::new(SpatialDomain::interval(0.5), 64).unwrap()), 0.5, 2.0, &scheme).unwrap();
    assert_eq!(zero.ratio, 0.0);
}

#[test]
fn hardy_and_sobolev() {
    let dec = dec_on(0.5, 128, 0.5);
    let phi = dec.eigenfunction(0);
    let rep = functional_inequalities(&phi, 0.4, 2.0).unwrap();
    let hardy = rep.hardy.unwrap();
    let sobolev = rep.sobolev.unwrap();
    // regression constants
    assert!(hardy.lhs <= 0.25 * hardy.rhs, "{hardy:?}");
    assert!(sobolev.lhs <= 0.35 * sobolev.rhs, "{sobolev:?}");
    let zero = functional_inequalities(&GridField::zeros(dec.grid()), 0.4, 2.0).unwrap();
    assert_eq!(zero.hardy.unwrap().lhs, 0.0);
    assert_eq!(zero.sobolev.unwrap().rhs, 0.0);
    let refused = functional_inequalities(&phi, 0.6, 2.0).unwrap();
    assert!(refused.sobolev.is_none() && refused.hardy.is_none());
    assert_eq!(refused.refusals.len(), 2);
    assert!(matches!(sobolev_inequality(&phi, 0.5, 2.0), Err(Error::Refused(_))));
}

#[test]
fn level_set_bound_for_l1_data() {
    for n in [128, 192] {
        let dec = dec_on(0.25, n, 0.5);
        let g = dec.grid().clone();
        let ladder = Ladder::uniform(0.2, 20).unwrap();
        let traj = solve_duhamel(&dec, &SourceSpec::initial(GridField::spike(&g, &[0.1], 1.0)), &ladder).unwrap();
        let rep = level_set_check(&traj, 0.5, 1.2, 1.5, 1.0).unwrap();
        // regression constant
        assert!(rep.constant > 0.0 && rep.constant <= 0.57, "{rep:?}");
    }
    let dec = dec_on(0.25, 64, 0.5);
    let ladder = Ladder::uniform(0.1, 2).unwrap();
    let traj = solve_duhamel(&dec, &SourceSpec::initial(GridField::zeros(dec.grid())), &ladder).unwrap();
    assert!(matches!(level_set_check(&traj, 0.6, 1.2, 1.5, 1.0), Err(Error::Refused(_))));
    assert!(level_set_check(&traj, 0.5, 1.5, 1.5, 1.0).is_err());
}
