use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;
use swipt_core::physics::*;
use swipt_core::scenario::ChannelSet;

fn cvec(parts: &[(f64, f64)]) -> DVector<Complex64> {
    DVector::from_iterator(parts.len(), parts.iter().map(|&(re, im)| Complex64::new(re, im)))
}

fn entry() -> impl Strategy<Value = (f64, f64)> {
    (-2.0f64..2.0, -2.0f64..2.0)
}

proptest! {
    #[test]
    fn beamformer_power_matches_trace(h in prop::collection::vec(entry(), 3), x in prop::collection::vec(entry(), 3)) {
        let (h, x) = (cvec(&h), cvec(&x));
        let ch = ChannelSet::new(vec![vec![h.clone()]], vec![1.0]).unwrap();
        let set = PrecoderSet::from_beamformers(&[vec![x.clone()]]).unwrap();
        let direct = h.dotc(&x).norm_sqr();
        prop_assert!((signal_i(&ch, &set, 0).unwrap() - direct).abs() <= 1e-12 * direct.max(1.0));
        prop_assert!((set.total_power() - x.norm_squared()).abs() <= 1e-12 * x.norm_squared().max(1.0));
    }

    #[test]
    fn utilities_are_consistent(
        h in prop::collection::vec(entry(), 8),
        x in prop::collection::vec(entry(), 8),
        alpha in prop::collection::vec(0.0f64..=1.0, 2),
        eta in prop::collection::vec(0.05f64..=1.0, 2),
    ) {
        let hs: Vec<Vec<DVector<Complex64>>> =
            (0..2).map(|i| (0..2).map(|j| cvec(&h[4 * i + 2 * j..4 * i + 2 * j + 2])).collect()).collect();
        let xs: Vec<Vec<DVector<Complex64>>> =
            (0..2).map(|l| (0..2).map(|j| cvec(&x[4 * l + 2 * j..4 * l + 2 * j + 2])).collect()).collect();
        let ch = ChannelSet::new(hs, vec![0.5, 2.0]).unwrap();
        let set = PrecoderSet::from_beamformers(&xs).unwrap();
        let ts = TsAllocation::new(alpha.clone()).unwrap();
        let u = ts_utilities(&ch, &set, &ts, &eta).unwrap();
        for i in 0..2 {
            let s = signal_i(&ch, &set, i).unwrap();
            let inter = interference_i(&ch, &set, i).unwrap();
            let e = energy_i(&ch, &set, i).unwrap();
            prop_assert!(inter >= 0.0 && s >= 0.0);
            prop_assert!((e - s - inter).abs() <= 1e-12 * e.max(1.0));
            prop_assert_eq!(ts.alpha(i) + ts.beta(i), 1.0);
            prop_assert!((u.rate_ts[i] - alpha[i] * u.rate_raw[i]).abs() <= 1e-12 * u.rate_raw[i].max(1.0));
            prop_assert!((u.energy_ts[i] - ts.beta(i) * eta[i] * u.energy_raw[i]).abs() <= 1e-12 * u.energy_raw[i].max(1.0));
            let r = (s / (ch.noise_power(i) + inter)).ln_1p();
            prop_assert!((rate_i(&ch, &set, i).unwrap() - r).abs() <= 1e-12 * r.max(1.0));
        }
    }

    #[test]
    fn rate_grows_with_power(scale in 1.01f64..10.0, x in prop::collection::vec(entry(), 2)) {
        let ch = ChannelSet::new(vec![vec![cvec(&[(0.3, 0.4), (-0.5, 0.1)])]], vec![1.0]).unwrap();
        let set = PrecoderSet::from_beamformers(&[vec![cvec(&x)]]).unwrap();
        let r0 = rate_i(&ch, &set, 0).unwrap();
        let r1 = rate_i(&ch, &set.scale(scale), 0).unwrap();
        prop_assert!(r1 >= r0);
    }
}
