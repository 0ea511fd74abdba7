//! Envelope estimation, minimum-phase construction, and noise-shaping law
//! checks against independent oracles (naive DFT, analytic filter responses,
//! direct-DFT Welch periodograms).

use vocdiff_core::audio::AudioBuffer;
use vocdiff_core::envelope::{
    estimate_envelope, invert_filter, minimum_phase_filter, ShapedNoiseSampler, SpectralEnvelope,
};
use vocdiff_core::mel::{MelFilterbank, MelGrid};
use vocdiff_core::rng::Rng;
use vocdiff_core::stft::StftConfig;

const PI: f64 = std::f64::consts::PI;

fn naive_dft(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    for k in 0..n {
        for (idx, &v) in x.iter().enumerate() {
            let angle = -2.0 * PI * (k * idx) as f64 / n as f64;
            re[k] += v * angle.cos();
            im[k] += v * angle.sin();
        }
    }
    (re, im)
}

fn naive_inverse_dft(re: &[f64], im: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = re.len();
    let mut ore = vec![0.0; n];
    let mut oim = vec![0.0; n];
    for idx in 0..n {
        for k in 0..n {
            let angle = 2.0 * PI * (k * idx) as f64 / n as f64;
            ore[idx] += re[k] * angle.cos() - im[k] * angle.sin();
            oim[idx] += re[k] * angle.sin() + im[k] * angle.cos();
        }
        ore[idx] /= n as f64;
        oim[idx] /= n as f64;
    }
    (ore, oim)
}

#[test]
fn flat_mel_gives_constant_envelope() {
    let fb = MelFilterbank::new(32, 256, 16_000, 0.0, 8000.0).unwrap();
    let c = 0.7; // log-domain constant
    let mut mel = MelGrid::new(32, 4);
    mel.data.iter_mut().for_each(|v| *v = c);
    let env = estimate_envelope(&mel, &fb, 24, -40.0).unwrap();
    // Lift ripple allowed: constant within 5% over covered bins, away from
    // the band edges of the filterbank.
    let mid = env.at(0, env.num_bins / 2);
    for f in 0..env.num_frames {
        for k in 4..env.num_bins - 4 {
            let rel = (env.at(f, k) - mid).abs() / mid;
            assert!(rel < 0.05, "frame {f} bin {k}: rel deviation {rel}");
        }
    }
}

#[test]
fn silence_mel_gives_flat_positive_envelope() {
    let fb = MelFilterbank::new(32, 256, 16_000, 0.0, 8000.0).unwrap();
    let mut mel = MelGrid::new(32, 2);
    let floor = (1e-5f64).ln();
    mel.data.iter_mut().for_each(|v| *v = floor);
    let env = estimate_envelope(&mel, &fb, 24, -40.0).unwrap();
    let first = env.at(0, env.num_bins / 2);
    assert!(first > 0.0);
    for k in 4..env.num_bins - 4 {
        assert!((env.at(0, k) - first).abs() / first < 0.05, "bin {k}");
    }
}

#[test]
fn cepstral_order_bounds_enforced() {
    let fb = MelFilterbank::new(32, 256, 16_000, 0.0, 8000.0).unwrap();
    let mel = MelGrid::new(32, 1);
    assert!(estimate_envelope(&mel, &fb, 128, -40.0).is_err());
    assert!(estimate_envelope(&mel, &fb, 0, -40.0).is_err());
}

#[test]
fn formant_bump_is_unimodal_and_matches_direct_smoothing_oracle() {
    let fft_size = 256;
    let fb = MelFilterbank::new(32, fft_size, 16_000, 0.0, 8000.0).unwrap();
    let bump_band = 12usize;
    let mut mel = MelGrid::new(32, 1);
    for b in 0..32 {
        let d = (b as f64 - bump_band as f64) / 2.5;
        mel.set(b, 0, -6.0 + 5.0 * (-0.5 * d * d).exp());
    }
    let order = 24;
    let floor_db = -40.0;
    let env = estimate_envelope(&mel, &fb, order, floor_db).unwrap();

    // Oracle: same documented recipe, independent DFT. Lift, edge-extend
    // uncovered bins, pre-floor, truncate the quefrency range, exponentiate,
    // post-floor.
    let mel_lin: Vec<f64> = (0..32).map(|b| mel.at(b, 0).exp()).collect();
    let mut lifted = vec![0.0; fb.num_bins];
    fb.lift(&mel_lin, &mut lifted);
    let (cov_lo, cov_hi) = fb.lift_anchor_bins();
    for k in 0..cov_lo {
        lifted[k] = lifted[cov_lo];
    }
    for k in cov_hi + 1..fb.num_bins {
        lifted[k] = lifted[cov_hi];
    }
    let peak = lifted.iter().cloned().fold(0.0, f64::max);
    let pre_floor = peak * 10f64.powf(floor_db / 20.0);
    lifted.iter_mut().for_each(|v| {
        if *v < pre_floor {
            *v = pre_floor;
        }
    });
    let full_log: Vec<f64> = (0..fft_size)
        .map(|j| {
            let k = if j < fb.num_bins { j } else { fft_size - j };
            lifted[k].ln()
        })
        .collect();
    let (cre, cim) = naive_inverse_dft(&full_log, &vec![0.0; fft_size]);
    assert!(cim.iter().all(|v| v.abs() < 1e-9));
    let mut kept = cre.clone();
    for q in order..=fft_size - order {
        kept[q] = 0.0;
    }
    let (sre, _) = naive_dft(&kept);
    let mut oracle: Vec<f64> = sre[..fb.num_bins].iter().map(|&v| v.exp()).collect();
    let omax = oracle.iter().cloned().fold(0.0, f64::max);
    let ofloor = omax * 10f64.powf(floor_db / 20.0);
    oracle.iter_mut().for_each(|v| {
        if *v < ofloor {
            *v = ofloor;
        }
    });
    for k in 0..fb.num_bins {
        let rel = (env.at(0, k) - oracle[k]).abs() / oracle[k];
        assert!(rel < 1e-6, "bin {k}: {} vs oracle {}", env.at(0, k), oracle[k]);
    }

    // Unimodal in frequency with the peak near the bump band's center.
    let frame: Vec<f64> = (0..fb.num_bins).map(|k| env.at(0, k)).collect();
    let peak_bin = frame
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    let row = &fb.weights[bump_band * fb.num_bins..(bump_band + 1) * fb.num_bins];
    let band_center_bin = row
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    assert!(
        (peak_bin as isize - band_center_bin as isize).unsigned_abs() <= 4,
        "peak bin {peak_bin} vs band center {band_center_bin}"
    );
    let tol = 1.05; // smoothing ripple allowance
    for k in 1..=peak_bin {
        assert!(frame[k] * tol >= frame[k - 1], "rising side dips at bin {k}");
    }
    for k in peak_bin + 1..frame.len() {
        assert!(frame[k] <= frame[k - 1] * tol, "falling side rises at bin {k}");
    }
    // The peak must dominate both tails by a wide margin.
    assert!(frame[peak_bin] > 5.0 * frame[0]);
    assert!(frame[peak_bin] > 5.0 * frame[frame.len() - 1]);
}

#[test]
fn minimum_phase_matches_analytic_one_pole() {
    let fft_size = 256;
    let bins = fft_size / 2 + 1;
    let a = 0.5f64;
    // |H| of H(z) = 1/(1 - a·z⁻¹) sampled on the bin grid.
    let mags: Vec<f64> = (0..bins)
        .map(|k| {
            let w = 2.0 * PI * k as f64 / fft_size as f64;
            1.0 / (1.0 - 2.0 * a * w.cos() + a * a).sqrt()
        })
        .collect();
    let env = SpectralEnvelope::from_flat(mags.clone(), 1, bins).unwrap();
    let filt = minimum_phase_filter(&env).unwrap();
    for k in 0..bins - 4 {
        let w = 2.0 * PI * k as f64 / fft_size as f64;
        let analytic_phase = -(a * w.sin()).atan2(1.0 - a * w.cos());
        let got_phase = filt.im[k].atan2(filt.re[k]);
        let mut diff = got_phase - analytic_phase;
        while diff > PI {
            diff -= 2.0 * PI;
        }
        while diff < -PI {
            diff += 2.0 * PI;
        }
        assert!(diff.abs() < 1e-3, "bin {k}: phase err {diff}");
        let rel = (filt.magnitude(0, k) - mags[k]).abs() / mags[k];
        assert!(rel < 1e-6, "bin {k}: magnitude err {rel}");
    }
}

#[test]
fn minimum_phase_energy_is_causal() {
    // Random cepstrally-smooth envelopes, every frame ≥ 99.9% causal energy.
    let fft_size = 256;
    let bins = fft_size / 2 + 1;
    let mut rng = Rng::seed_from_u64(31);
    for case in 0..20 {
        let mags: Vec<f64> = smooth_random_envelope(&mut rng, fft_size);
        let env = SpectralEnvelope::from_flat(mags, 1, bins).unwrap();
        let filt = minimum_phase_filter(&env).unwrap();
        // Oracle inverse DFT of the full symmetric response.
        let mut fre = vec![0.0; fft_size];
        let mut fim = vec![0.0; fft_size];
        for k in 0..bins {
            fre[k] = filt.re[k];
            fim[k] = filt.im[k];
            if k > 0 && k < bins - 1 {
                fre[fft_size - k] = filt.re[k];
                fim[fft_size - k] = -filt.im[k];
            }
        }
        let (h, himag) = naive_inverse_dft(&fre, &fim);
        assert!(himag.iter().all(|v| v.abs() < 1e-8));
        let total: f64 = h.iter().map(|v| v * v).sum();
        let causal: f64 = h[..fft_size / 2].iter().map(|v| v * v).sum();
        let frac = causal / total;
        assert!(frac >= 0.999, "case {case}: causal fraction {frac}");
    }
}

/// Positive envelope with bounded log-domain oscillation.
fn smooth_random_envelope(rng: &mut Rng, fft_size: usize) -> Vec<f64> {
    let bins = fft_size / 2 + 1;
    let n_comp = 5;
    let coefs: Vec<(f64, f64)> = (0..n_comp)
        .map(|_| (rng.gauss() * 0.8, rng.uniform_in(0.0, 2.0 * PI)))
        .collect();
    (0..bins)
        .map(|k| {
            let x = k as f64 / (bins - 1) as f64;
            let log_mag: f64 = coefs
                .iter()
                .enumerate()
                .map(|(i, (a, p))| a * (PI * (i + 1) as f64 * x + p).cos())
                .sum();
            log_mag.exp()
        })
        .collect()
}

/// Direct-DFT Welch periodogram (non-overlapping segments), normalized so
/// white noise of variance v reads v in every bin. Independent of the
/// library's PSD helper.
fn oracle_welch(x: &[f64], seg: usize, acc: &mut [f64]) -> usize {
    let window: Vec<f64> = (0..seg)
        .map(|n| 0.5 * (1.0 - (2.0 * PI * n as f64 / seg as f64).cos()))
        .collect();
    let w2: f64 = window.iter().map(|w| w * w).sum();
    let mut count = 0;
    let mut start = 0;
    while start + seg <= x.len() {
        let frame: Vec<f64> = (0..seg).map(|i| x[start + i] * window[i]).collect();
        let (re, im) = naive_dft(&frame);
        for k in 0..acc.len() {
            acc[k] += (re[k] * re[k] + im[k] * im[k]) / w2;
        }
        count += 1;
        start += seg;
    }
    count
}

#[test]
fn shaped_noise_follows_inverse_square_envelope_law() {
    let fft_size = 256;
    let bins = fft_size / 2 + 1;
    let cfg = StftConfig::new(fft_size, 64, fft_size, true).unwrap();
    let sigma = 0.05;
    let mut rng = Rng::seed_from_u64(33);

    // Formant: 24 dB bump. Tilt: 24 dB across the band.
    let formant: Vec<f64> = (0..bins)
        .map(|k| {
            let d = (k as f64 - 40.0) / 12.0;
            10f64.powf((24.0 * (-0.5 * d * d).exp() - 12.0) / 20.0)
        })
        .collect();
    let tilt: Vec<f64> = (0..bins)
        .map(|k| 10f64.powf((-12.0 + 24.0 * k as f64 / (bins - 1) as f64) / 20.0))
        .collect();

    for (name, mags) in [("formant", formant), ("tilt", tilt)] {
        let contrast = mags.iter().cloned().fold(0.0, f64::max)
            / mags.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(20.0 * contrast.log10() >= 20.0, "{name}: contrast too small");

        let env = SpectralEnvelope::from_flat(mags.clone(), 1, bins).unwrap();
        let filt = invert_filter(&minimum_phase_filter(&env).unwrap()).unwrap();
        let sampler = ShapedNoiseSampler::new(filt, cfg.clone(), sigma, 16_000).unwrap();

        // Independent prediction: normalize 1/env to unit mean square over
        // the full symmetric spectrum, scale by sigma, square per bin.
        let mut ms = 0.0;
        for k in 0..bins {
            let weight = if k == 0 || k == bins - 1 { 1.0 } else { 2.0 };
            ms += weight / (mags[k] * mags[k]);
        }
        ms /= fft_size as f64;
        let predict: Vec<f64> = (0..bins)
            .map(|k| sigma * sigma / (mags[k] * mags[k] * ms))
            .collect();

        let n = 8192;
        let mut acc = vec![0.0; bins];
        let mut segs = 0;
        for _ in 0..120 {
            let e = sampler.sample(n, &mut rng).unwrap();
            segs += oracle_welch(&e.samples, fft_size, &mut acc);
        }
        for v in acc.iter_mut() {
            *v /= segs as f64;
        }
        for k in 1..bins - 1 {
            let db = 10.0 * (acc[k] / predict[k]).log10();
            assert!(
                db.abs() <= 1.5,
                "{name} bin {k}: deviation {db:.2} dB (got {}, predicted {})",
                acc[k],
                predict[k]
            );
        }
    }
}

#[test]
fn sigma_0p05_total_power_within_ten_percent() {
    let fft_size = 256;
    let bins = fft_size / 2 + 1;
    let cfg = StftConfig::new(fft_size, 64, fft_size, true).unwrap();
    let mut rng = Rng::seed_from_u64(34);
    let mags = smooth_random_envelope(&mut rng, fft_size);
    let env = SpectralEnvelope::from_flat(mags, 1, bins).unwrap();
    let filt = invert_filter(&minimum_phase_filter(&env).unwrap()).unwrap();
    let sampler = ShapedNoiseSampler::new(filt, cfg, 0.05, 16_000).unwrap();
    let n = 4096;
    let mut acc = 0.0;
    let draws = 500;
    for _ in 0..draws {
        let e = sampler.sample(n, &mut rng).unwrap();
        acc += e.energy() / n as f64;
    }
    let mean = acc / draws as f64;
    let expect = 0.05 * 0.05;
    assert!(
        mean >= 0.9 * expect && mean <= 1.1 * expect,
        "mean power {mean} vs sigma² {expect}"
    );
}

/// The library PSD helper must agree with the independent direct-DFT
/// estimator in expectation (they use different overlaps, so compare
/// averages over many draws).
#[test]
fn library_psd_matches_direct_dft_estimator() {
    let fft_size = 128;
    let bins = fft_size / 2 + 1;
    let cfg = StftConfig::new(fft_size, 32, fft_size, true).unwrap();
    let mags: Vec<f64> = (0..bins)
        .map(|k| 10f64.powf((-8.0 + 16.0 * k as f64 / (bins - 1) as f64) / 20.0))
        .collect();
    let env = SpectralEnvelope::from_flat(mags, 1, bins).unwrap();
    let inv = invert_filter(&minimum_phase_filter(&env).unwrap()).unwrap();
    let sampler = ShapedNoiseSampler::new(inv, cfg, 0.05, 16_000).unwrap();
    let mut rng = Rng::seed_from_u64(77);
    let n = 8192;
    let mut lib = vec![0.0; bins];
    let mut oracle = vec![0.0; bins];
    let draws = 60;
    let mut oracle_segs = 0;
    for _ in 0..draws {
        let e = sampler.sample(n, &mut rng).unwrap();
        let p = vocdiff_core::envelope::welch_psd(&e.samples, fft_size).unwrap();
        for (a, v) in lib.iter_mut().zip(p.iter()) {
            *a += v / draws as f64;
        }
        oracle_segs += oracle_welch(&e.samples, fft_size, &mut oracle);
    }
    oracle.iter_mut().for_each(|v| *v /= oracle_segs as f64);
    for k in 1..bins - 1 {
        let db = 10.0 * (lib[k] / oracle[k]).log10();
        assert!(db.abs() < 0.3, "bin {k}: estimators disagree by {db:.2} dB");
    }
}

/// Formant-shaped synthetic noise must produce an estimated envelope whose
/// dominant peak sits inside the resonator band the generator draws from.
#[test]
fn formant_noise_dataset_yields_peaked_envelope() {
    use vocdiff_core::mel::mel_spectrogram;
    use vocdiff_core::synth::{generate_dataset, SyntheticKind, SyntheticSpec};

    let sr = 16_000u32;
    let cfg = StftConfig::new(256, 64, 256, true).unwrap();
    let fb = MelFilterbank::new(32, 256, sr, 0.0, 8000.0).unwrap();
    let spec = SyntheticSpec {
        kind: SyntheticKind::FormantNoise,
        f0_min: 300.0,
        f0_max: 700.0,
        num_items: 5,
        duration_secs: 0.4,
        seed: 41,
        sample_rate: sr,
    };
    let items = generate_dataset(&spec, &cfg, &fb, 1e-5).unwrap();
    for (buf, _) in &items {
        let mel = mel_spectrogram(buf, &cfg, &fb, 1e-5).unwrap();
        let env = estimate_envelope(&mel, &fb, 24, -40.0).unwrap();
        // Frame-averaged envelope in dB.
        let bins = env.num_bins;
        let avg: Vec<f64> = (0..bins)
            .map(|k| {
                (0..env.num_frames).map(|f| env.at(f, k).ln()).sum::<f64>()
                    / env.num_frames as f64
            })
            .collect();
        let peak_bin = avg
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let peak_hz = peak_bin as f64 * sr as f64 / 256.0;
        // Resonator centers are drawn from [300, 2800] for this f0 range.
        assert!(
            (150.0..=3200.0).contains(&peak_hz),
            "envelope peak at {peak_hz:.0} Hz outside the formant band"
        );
        // ...and the peak stands well above the spectrum edge.
        let edge = avg[bins - 8..].iter().sum::<f64>() / 8.0;
        let prominence_db = 8.686 * (avg[peak_bin] - edge);
        assert!(prominence_db > 6.0, "flat envelope ({prominence_db:.1} dB)");
    }
}

#[test]
fn shaped_noise_lowpass_suppression_matches_filter_gain() {
    // Lowpass-shaped *forward* filter on white noise: high-band PSD drops by
    // the filter's per-band power gain.
    let fft_size = 256;
    let bins = fft_size / 2 + 1;
    let cfg = StftConfig::new(fft_size, 64, fft_size, true).unwrap();
    let mags: Vec<f64> = (0..bins)
        .map(|k| {
            let x = k as f64 / (bins - 1) as f64;
            // smooth lowpass: 0 dB to -18 dB
            10f64.powf((-18.0 * x * x) / 20.0)
        })
        .collect();
    let env = SpectralEnvelope::from_flat(mags.clone(), 1, bins).unwrap();
    let filt = minimum_phase_filter(&env).unwrap();
    let mut rng = Rng::seed_from_u64(35);
    let n = 8192;
    let mut acc = vec![0.0; bins];
    let mut segs = 0;
    for _ in 0..120 {
        let mut white = AudioBuffer::zeros(n, 16_000);
        rng.fill_gauss(&mut white.samples);
        let shaped = vocdiff_core::envelope::apply_filter(&white, &filt, &cfg).unwrap();
        segs += oracle_welch(&shaped.samples, fft_size, &mut acc);
    }
    for v in acc.iter_mut() {
        *v /= segs as f64;
    }
    for k in 1..bins - 1 {
        let expected = mags[k] * mags[k]; // unit-variance white input
        let db = 10.0 * (acc[k] / expected).log10();
        assert!(db.abs() <= 1.5, "bin {k}: {db:.2} dB deviation");
    }
}
