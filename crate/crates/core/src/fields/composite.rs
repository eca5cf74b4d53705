use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::exp;

/// One point sample along a ray: distance, density and color.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaySample {
    pub t: f64,
    pub sigma: f64,
    pub rgb: [f64; 3],
}

impl RaySample {
    pub fn new(t: f64, sigma: f64, rgb: [f64; 3]) -> Result<Self> {
        if !t.is_finite() || sigma.is_nan() || sigma < 0.0 {
            return Err(Error::NonFinite("ray sample"));
        }
        if rgb.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::config("sample color outside [0, 1]"));
        }
        Ok(RaySample { t, sigma, rgb })
    }
}

/// Length assigned to the interval after the last sample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum FinalInterval {
    /// Repeat the previous interval; undefined for a single sample.
    #[default]
    ReplicateLast,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Composited {
    pub rgb: [f64; 3],
    /// Contribution weight `T_k * alpha_k` of each sample.
    pub weights: Vec<f64>,
    /// Transmittance left after the last sample.
    pub transmittance: f64,
}

/// Emission–absorption compositing with `delta_k = t_{k+1} - t_k` and
/// `T_k = exp(-sum_{j<k} sigma_j delta_j)`; the residual transmittance
/// lets the background through.
pub fn composite(
    samples: &[RaySample],
    background: [f64; 3],
    final_interval: FinalInterval,
) -> Result<Composited> {
    for (i, w) in samples.windows(2).enumerate() {
        if w[1].t < w[0].t {
            return Err(Error::UnsortedSamples { index: i + 1 });
        }
    }
    let n = samples.len();
    let mut rgb = [0.0; 3];
    let mut weights = Vec::with_capacity(n);
    let mut transmittance = 1.0;
    for k in 0..n {
        let delta = if k + 1 < n {
            samples[k + 1].t - samples[k].t
        } else {
            match final_interval {
                FinalInterval::Fixed(d) => d,
                FinalInterval::ReplicateLast if n >= 2 => samples[n - 1].t - samples[n - 2].t,
                FinalInterval::ReplicateLast => return Err(Error::UndefinedInterval),
            }
        };
        let optical = samples[k].sigma * delta;
        // sigma = inf with delta = 0 contributes nothing.
        let optical = if optical.is_nan() { 0.0 } else { optical };
        let survive = exp(-optical);
        let w = transmittance * (1.0 - survive);
        for c in 0..3 {
            rgb[c] += w * samples[k].rgb[c];
        }
        weights.push(w);
        transmittance *= survive;
    }
    for c in 0..3 {
        rgb[c] += transmittance * background[c];
    }
    Ok(Composited {
        rgb,
        weights,
        transmittance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::ln;
    use alloc::vec;
    use proptest::prelude::*;

    fn s(t: f64, sigma: f64, rgb: [f64; 3]) -> RaySample {
        RaySample::new(t, sigma, rgb).unwrap()
    }

    #[test]
    fn empty_ray_shows_background() {
        let c = composite(&[], [1.0, 1.0, 1.0], FinalInterval::ReplicateLast).unwrap();
        assert_eq!(c.rgb, [1.0, 1.0, 1.0]);
        assert_eq!(c.transmittance, 1.0);
    }

    #[test]
    fn opaque_sample_hides_background() {
        let c = composite(
            &[s(0.0, 50.0, [1.0, 0.0, 0.0])],
            [0.0, 0.0, 1.0],
            FinalInterval::Fixed(1.0),
        )
        .unwrap();
        for (a, b) in c.rgb.iter().zip([1.0, 0.0, 0.0]) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn half_transparent_then_opaque() {
        let samples = [s(0.0, ln(2.0), [1.0, 0.0, 0.0]), s(1.0, 50.0, [0.0, 1.0, 0.0])];
        let c = composite(&samples, [0.0; 3], FinalInterval::ReplicateLast).unwrap();
        assert!((c.rgb[0] - 0.5).abs() < 1e-12);
        assert!((c.rgb[1] - 0.5).abs() < 1e-12);
        assert_eq!(c.rgb[2], 0.0);
    }

    #[test]
    fn rejects_unsorted_and_undefined_interval() {
        let samples = [s(1.0, 1.0, [0.0; 3]), s(0.5, 1.0, [0.0; 3])];
        assert_eq!(
            composite(&samples, [0.0; 3], FinalInterval::ReplicateLast),
            Err(Error::UnsortedSamples { index: 1 })
        );
        assert_eq!(
            composite(&[s(0.0, 1.0, [0.0; 3])], [0.0; 3], FinalInterval::ReplicateLast),
            Err(Error::UndefinedInterval)
        );
    }

    fn arb_samples() -> impl Strategy<Value = Vec<RaySample>> {
        prop::collection::vec((0.0f64..1.0, 0.0f64..5.0, prop::array::uniform3(0.0f64..=1.0)), 2..12)
            .prop_map(|v| {
                let mut t = 0.0;
                v.into_iter()
                    .map(|(dt, sigma, rgb)| {
                        t += dt;
                        RaySample { t, sigma, rgb }
                    })
                    .collect()
            })
    }

    proptest! {
        #[test]
        fn zero_density_returns_background(mut samples in arb_samples(), bg in prop::array::uniform3(0.0f64..=1.0)) {
            for x in &mut samples { x.sigma = 0.0; }
            let c = composite(&samples, bg, FinalInterval::ReplicateLast).unwrap();
            prop_assert_eq!(c.rgb, bg);
        }

        #[test]
        fn weights_and_colors_bounded(samples in arb_samples(), bg in prop::array::uniform3(0.0f64..=1.0)) {
            let c = composite(&samples, bg, FinalInterval::ReplicateLast).unwrap();
            let total: f64 = c.weights.iter().sum();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&total));
            for v in c.rgb { prop_assert!((0.0..=1.0 + 1e-12).contains(&v)); }
        }

        #[test]
        fn appending_empty_samples_changes_nothing(samples in arb_samples(), bg in prop::array::uniform3(0.0f64..=1.0)) {
            let fixed = FinalInterval::Fixed(0.25);
            let base = composite(&samples, bg, fixed).unwrap();
            let mut longer = samples.clone();
            let last = samples[samples.len() - 1].t;
            // the old last sample now gets its interval from the next t
            longer.push(RaySample { t: last + 0.25, sigma: 0.0, rgb: [0.3; 3] });
            longer.push(RaySample { t: last + 0.9, sigma: 0.0, rgb: [0.7; 3] });
            let ext = composite(&longer, bg, fixed).unwrap();
            for c in 0..3 { prop_assert!((base.rgb[c] - ext.rgb[c]).abs() < 1e-12); }
        }

        #[test]
        fn denser_first_sample_never_raises_later_weights(samples in arb_samples(), extra in 0.0f64..10.0) {
            let base = composite(&samples, [0.0; 3], FinalInterval::ReplicateLast).unwrap();
            let mut denser = samples.clone();
            denser[0].sigma += extra;
            let more = composite(&denser, [0.0; 3], FinalInterval::ReplicateLast).unwrap();
            for k in 1..samples.len() {
                prop_assert!(more.weights[k] <= base.weights[k] + 1e-15);
            }
        }
    }

    #[test]
    fn weights_sum_to_one_minus_transmittance() {
        let samples = vec![s(0.0, 0.3, [0.2; 3]), s(0.4, 1.1, [0.9; 3]), s(1.0, 2.0, [0.1; 3])];
        let c = composite(&samples, [0.0; 3], FinalInterval::ReplicateLast).unwrap();
        let total: f64 = c.weights.iter().sum();
        assert!((total + c.transmittance - 1.0).abs() < 1e-14);
    }
}
