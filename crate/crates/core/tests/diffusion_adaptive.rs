//! Monte-Carlo checks on the forward-diffusion marginals and closed-loop
//! behavior of the adaptive cap controller.

use vocdiff_core::adaptive::{record_minibatch, sample_t, update_t, AdaptiveState};
use vocdiff_core::audio::AudioBuffer;
use vocdiff_core::diffusion::{build_schedule, diffuse, NoiseSource};
use vocdiff_core::envelope::{invert_filter, minimum_phase_filter, SpectralEnvelope};
use vocdiff_core::rng::Rng;
use vocdiff_core::stft::StftConfig;

#[test]
fn marginal_variance_tracks_one_minus_alpha_bar() {
    let sched = build_schedule(500, 1e-4, 0.02).unwrap();
    let sigma = 0.05;
    let noise = NoiseSource::Standard { sigma };
    let mut rng = Rng::seed_from_u64(51);
    let x = AudioBuffer::zeros(512, 16_000);
    for t in [1usize, 250, 500] {
        let ab = sched.alpha_bar_at(t).unwrap();
        let expect = (1.0 - ab) * sigma * sigma;
        let mut acc = 0.0;
        let mut count = 0usize;
        for _ in 0..1000 {
            let y = diffuse(&x, t, &sched, &noise, &mut rng).unwrap();
            acc += y.energy();
            count += y.len();
        }
        let var = acc / count as f64;
        let rel = (var - expect).abs() / expect;
        assert!(rel < 0.10, "t {t}: var {var:.3e} vs {expect:.3e} (rel {rel:.3})");
    }
}

#[test]
fn snr_decreases_monotonically_in_t() {
    let sched = build_schedule(200, 1e-4, 0.02).unwrap();
    let noise = NoiseSource::Standard { sigma: 0.5 };
    let mut rng = Rng::seed_from_u64(52);
    let x = AudioBuffer::new(
        (0..2048)
            .map(|n| (2.0 * std::f64::consts::PI * 440.0 * n as f64 / 16_000.0).sin())
            .collect(),
        16_000,
    );
    let mut last_snr = f64::INFINITY;
    for t in [1usize, 10, 50, 100, 200] {
        let mut noise_energy = 0.0;
        for _ in 0..100 {
            let y = diffuse(&x, t, &sched, &noise, &mut rng).unwrap();
            let (sc, _) = sched.mix_coefficients(t).unwrap();
            noise_energy += y
                .samples
                .iter()
                .zip(x.samples.iter())
                .map(|(yv, xv)| (yv - sc * xv) * (yv - sc * xv))
                .sum::<f64>();
        }
        let (sc, _) = sched.mix_coefficients(t).unwrap();
        let snr = sc * sc * x.energy() * 100.0 / noise_energy;
        assert!(snr < last_snr, "t {t}: snr {snr} did not decrease");
        last_snr = snr;
    }
}

/// Matched seeds: a flat envelope through the shaped sampler must reproduce
/// the standard (white) statistics band by band.
#[test]
fn flat_envelope_matches_standard_noise_psd() {
    let fft_size = 256;
    let bins = fft_size / 2 + 1;
    let cfg = StftConfig::new(fft_size, 64, fft_size, true).unwrap();
    let sigma = 0.05;
    let env = SpectralEnvelope::from_flat(vec![2.5; bins], 1, bins).unwrap();
    let shaped = NoiseSource::Shaped(
        vocdiff_core::envelope::ShapedNoiseSampler::new(
            invert_filter(&minimum_phase_filter(&env).unwrap()).unwrap(),
            cfg,
            sigma,
            16_000,
        )
        .unwrap(),
    );
    let standard = NoiseSource::Standard { sigma };

    let n = 8192;
    let mut psd_shaped = vec![0.0; bins];
    let mut psd_standard = vec![0.0; bins];
    let mut rng_a = Rng::seed_from_u64(53);
    let mut rng_b = Rng::seed_from_u64(54);
    let draws = 200;
    for _ in 0..draws {
        let a = shaped.draw(n, 16_000, &mut rng_a).unwrap();
        let b = standard.draw(n, 16_000, &mut rng_b).unwrap();
        for (acc, x) in [(&mut psd_shaped, &a), (&mut psd_standard, &b)] {
            let p = vocdiff_core::envelope::welch_psd(&x.samples, fft_size).unwrap();
            for (s, v) in acc.iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
    }
    for k in 1..bins - 1 {
        let db = 10.0 * (psd_shaped[k] / psd_standard[k]).log10();
        assert!(db.abs() <= 1.0, "bin {k}: {db:.2} dB apart");
    }
    let total_shaped: f64 = psd_shaped.iter().sum();
    let total_standard: f64 = psd_standard.iter().sum();
    assert!((total_shaped / total_standard - 1.0).abs() < 0.05);
}

#[test]
fn triangular_distribution_chi_square_t3() {
    let state = AdaptiveState::new(3, 1, 500, 0.6, 1, 4).unwrap();
    let mut rng = Rng::seed_from_u64(55);
    let draws = 10_000;
    let mut counts = [0usize; 3];
    for _ in 0..draws {
        counts[sample_t(&state, &mut rng) - 1] += 1;
    }
    let expected = [draws as f64 / 6.0, 2.0 * draws as f64 / 6.0, 3.0 * draws as f64 / 6.0];
    let chi2: f64 = counts
        .iter()
        .zip(expected.iter())
        .map(|(&o, &e)| (o as f64 - e) * (o as f64 - e) / e)
        .sum();
    // α = 0.01, dof = 2
    assert!(chi2 < 9.210, "chi² {chi2:.3} (counts {counts:?})");
}

#[test]
fn controller_traverses_range_under_persistent_signal() {
    let mut state = AdaptiveState::new(5, 5, 105, 0.6, 2, 4).unwrap();
    let budget = (105 - 5) / 2;
    for _ in 0..budget {
        update_t(&mut state, 1.0).unwrap();
    }
    assert_eq!(state.t_current, 105);
    for _ in 0..budget {
        update_t(&mut state, 0.0).unwrap();
    }
    assert_eq!(state.t_current, 5);
}

/// Simulated discriminator whose overfitting falls as T rises: the cap must
/// settle into a band around the crossing and stay within ±2C.
#[test]
fn closed_loop_converges_to_crossing_band() {
    let t_min = 5usize;
    let t_max = 500usize;
    let c_step = 1usize;
    let d_target = 0.6;
    let crossing = 150.0;
    let r_d_of_t = |t: usize| -> f64 {
        // strictly decreasing in t, crosses d_target at `crossing`
        (d_target + 0.3 * (crossing - t as f64) / 100.0).clamp(-1.0, 1.0)
    };
    let batch_size = 64usize;
    // The minibatch sign statistic quantizes r_d; derive the effective
    // crossing from the same quantized response the controller sees.
    let eff_r_d = |t: usize| -> f64 {
        let above = ((r_d_of_t(t) + 1.0) / 2.0 * batch_size as f64).round() as usize;
        (2.0 * above as f64 - batch_size as f64) / batch_size as f64
    };
    let cross_lo = (t_min..t_max)
        .filter(|&t| eff_r_d(t) > d_target)
        .max()
        .unwrap();
    let cross_hi = (t_min..t_max)
        .filter(|&t| eff_r_d(t) < d_target)
        .min()
        .unwrap();

    let mut state = AdaptiveState::new(t_min, t_min, t_max, d_target, c_step, 4).unwrap();
    let mut trajectory = Vec::new();
    for step in 0..4000 {
        let r = r_d_of_t(state.t_current);
        let above = ((r + 1.0) / 2.0 * batch_size as f64).round() as usize;
        let outputs: Vec<f64> = (0..batch_size)
            .map(|i| if i < above { 0.9 } else { 0.1 })
            .collect();
        if let Some(r_d) = record_minibatch(&mut state, &outputs).unwrap() {
            update_t(&mut state, r_d).unwrap();
        }
        if step >= 3000 {
            trajectory.push(state.t_current);
        }
    }
    let lo = *trajectory.iter().min().unwrap();
    let hi = *trajectory.iter().max().unwrap();
    let band = 2 * c_step;
    assert!(
        lo + band >= cross_lo && hi <= cross_hi + band,
        "late trajectory [{lo}, {hi}] not within ±{band} of crossing [{cross_lo}, {cross_hi}]"
    );
}
