use proptest::prelude::*;
use stable_euler::drift::{make_holder_drift, SpaceProfile, TimeProfile};
use stable_euler::error_analysis::{fit_rate, normalized_spread};
use stable_euler::kernel1d::Kernel1D;
use stable_euler::rng::{substream, StreamKind};
use stable_euler::stable_noise::{sample_isotropic_increment, StableSpec};
use std::sync::OnceLock;

const ALPHAS: [f64; 3] = [1.2, 1.5, 1.9];

fn kernel(i: usize) -> &'static Kernel1D {
    static CACHE: OnceLock<Vec<Kernel1D>> = OnceLock::new();
    &CACHE.get_or_init(|| {
        ALPHAS
            .iter()
            .map(|&a| Kernel1D::new(&StableSpec::new(a, 1).unwrap()).unwrap())
            .collect()
    })[i]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_power_laws_fit_exactly(slope in 0.2f64..2.0, c in 1e-3f64..1e2, n in 4usize..8) {
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|k| {
                let h = 0.5f64.powi(k as i32 + 2);
                (h, c * h.powf(slope))
            })
            .collect();
        let fit = fit_rate(&pairs, slope).unwrap();
        prop_assert!((fit.slope - slope).abs() < 1e-10);
        prop_assert!((fit.intercept - c.ln()).abs() < 1e-9);
        prop_assert!(fit.residual_rms < 1e-10);
        prop_assert!((normalized_spread(&pairs, slope) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn capped_power_respects_its_seminorm(beta in 0.05f64..0.95, amp in 0.1f64..5.0, x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let b = make_holder_drift(beta, amp, 1, SpaceProfile::CappedPower, TimeProfile::Constant).unwrap();
        let gap = (x - y).abs();
        prop_assume!(gap > 1e-12);
        let diff = (b.eval1(0.0, x) - b.eval1(0.0, y)).abs();
        prop_assert!(diff <= b.holder_seminorm * gap.powf(beta) * (1.0 + 1e-12));
        prop_assert!(b.eval1(0.0, x).abs() <= b.sup_norm);
    }

    #[test]
    fn increments_scale_self_similarly(alpha in 1.1f64..2.0, dt in 1e-3f64..10.0, index in 0u64..1000) {
        let spec = StableSpec::new(alpha, 2).unwrap();
        let unit = sample_isotropic_increment(&spec, 1.0, &mut substream(9, StreamKind::Noise, index)).unwrap();
        let scaled = sample_isotropic_increment(&spec, dt, &mut substream(9, StreamKind::Noise, index)).unwrap();
        for (u, s) in unit.iter().zip(&scaled) {
            prop_assert!((s - spec.scale(dt) * u).abs() <= 1e-12 * (1.0 + s.abs()));
        }
    }

    #[test]
    fn kernel_is_even_and_decreasing(i in 0usize..ALPHAS.len(), x in 0.0f64..30.0, t in 0.05f64..4.0) {
        let k = kernel(i);
        let p = k.pdf(t, x);
        prop_assert!(p > 0.0);
        prop_assert_eq!(p, k.pdf(t, -x));
        prop_assert!(k.pdf(t, x + 0.1) <= p);
    }
}
