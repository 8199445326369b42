use proptest::prelude::*;
use spingate::control::ShuttleSchedule;
use spingate::dynamics::{propagate, ramp_flip_flop};
use spingate::{HyperfineModel, SpinPairParams};

fn ramp_leakage(b_mt: f64, t_ramp: f64) -> f64 {
    let params = SpinPairParams::new(b_mt, HyperfineModel::default()).unwrap();
    let s = ShuttleSchedule::build(10.0, 2.0, t_ramp, 0.0, t_ramp / 2000.0).unwrap();
    ramp_flip_flop(&params, &s).unwrap()
}

#[test]
fn stronger_field_protects_a_fast_ramp() {
    let p: Vec<f64> = [50.0, 100.0, 200.0, 400.0].iter().map(|&b| ramp_leakage(b, 1.0)).collect();
    assert!(p.windows(2).all(|w| w[1] < w[0]), "{p:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn doubling_the_ramp_time_reduces_flip_flops(t in 0.5f64..4.0, b in 80.0f64..300.0) {
        let slow = ramp_leakage(b, 2.0 * t);
        let fast = ramp_leakage(b, t);
        prop_assert!(slow <= fast.max(1e-14), "{fast} -> {slow}");
    }

    #[test]
    fn propagators_stay_unitary(t in 0.2f64..6.0, tau in 0.0f64..10.0, b in 10.0f64..1000.0) {
        let params = SpinPairParams::new(b, HyperfineModel::default()).unwrap();
        let s = ShuttleSchedule::build(10.0, 2.0, t, tau, t / 500.0).unwrap();
        let p = propagate(&params, &s).unwrap();
        prop_assert!(p.max_unitarity_defect < 1e-10);
    }
}
