//! Loss-stack routing: the mel term must be untouched by diffusion, the
//! reported total must decompose exactly, and the discriminator optimum must
//! be where it should be.

use vocdiff_core::audio::AudioBuffer;
use vocdiff_core::diffusion::build_schedule;
use vocdiff_core::losses::{discriminator_loss, generator_loss, LossWeights, MelLossConfig};
use vocdiff_core::mel::MelFilterbank;
use vocdiff_core::nets::{forward_discriminators, MpdConfig, MpdNet, MrdConfig, MrdNet};
use vocdiff_core::rng::Rng;
use vocdiff_core::stft::StftConfig;
use vocdiff_core::tensor::{self, Tensor};

fn tiny_discs(rng: &mut Rng) -> (MpdNet, MrdNet) {
    (
        MpdNet::new(
            MpdConfig {
                periods: vec![2, 3],
                channels: vec![4],
            },
            rng,
        )
        .unwrap(),
        MrdNet::new(
            MrdConfig {
                resolutions: vec![(64, 16, 32)],
                channels: vec![4],
            },
            rng,
        )
        .unwrap(),
    )
}

/// Changing the diffusion draw (t or ε) must leave g_mel bit-identical for
/// a fixed generator output.
#[test]
fn g_mel_ignores_diffusion_entirely() {
    let mut rng = Rng::seed_from_u64(61);
    let (mpd, mrd) = tiny_discs(&mut rng);
    let seg = 128;
    let x = AudioBuffer::new((0..seg).map(|_| rng.gauss() * 0.3).collect(), 16_000);
    let g_out = Tensor::constant(&[seg], (0..seg).map(|_| rng.gauss() * 0.3).collect());
    let mel_cfg = MelLossConfig::new(
        StftConfig::new(64, 16, 64, true).unwrap(),
        MelFilterbank::new(8, 64, 16_000, 0.0, 8000.0).unwrap(),
        1e-5,
    )
    .unwrap();
    let w = LossWeights::default();
    let sched = build_schedule(100, 1e-4, 0.02).unwrap();

    let mut g_mel_bits = Vec::new();
    let mut g_adv_values = Vec::new();
    let mut diff_rng = Rng::seed_from_u64(62);
    for &t_step in &[1usize, 37, 100] {
        let (sc, nc) = sched.mix_coefficients(t_step).unwrap();
        let eps_r: Vec<f64> = (0..seg).map(|_| diff_rng.gauss() * 0.05).collect();
        let eps_f: Vec<f64> = (0..seg).map(|_| diff_rng.gauss() * 0.05).collect();
        let y_real = Tensor::constant(
            &[seg],
            x.samples
                .iter()
                .zip(eps_r.iter())
                .map(|(s, e)| sc * s + nc * e)
                .collect(),
        );
        let y_fake = tensor::add(
            &tensor::scale(&g_out, sc),
            &Tensor::constant(&[seg], eps_f.iter().map(|e| nc * e).collect()),
        );
        let (_, feats_real) = forward_discriminators(&mpd, &mrd, &y_real).unwrap();
        let (scores_fake, feats_fake) = forward_discriminators(&mpd, &mrd, &y_fake).unwrap();
        let (_, report) = generator_loss(
            &scores_fake,
            &feats_real,
            &feats_fake,
            &x,
            &g_out,
            &w,
            &mel_cfg,
        )
        .unwrap();
        g_mel_bits.push(report.g_mel.to_bits());
        g_adv_values.push(report.g_adv);
    }
    assert_eq!(g_mel_bits[0], g_mel_bits[1], "g_mel changed with t");
    assert_eq!(g_mel_bits[0], g_mel_bits[2], "g_mel changed with t");
    // while the adversarial term does respond to the diffusion draw
    assert!(
        (g_adv_values[0] - g_adv_values[2]).abs() > 1e-12,
        "g_adv should vary across t"
    );
}

#[test]
fn report_total_decomposes_with_reference_weights() {
    let mut rng = Rng::seed_from_u64(63);
    let (mpd, mrd) = tiny_discs(&mut rng);
    let seg = 128;
    let x = AudioBuffer::new((0..seg).map(|_| rng.gauss() * 0.3).collect(), 16_000);
    let g_out = Tensor::constant(&[seg], (0..seg).map(|_| rng.gauss() * 0.3).collect());
    let mel_cfg = MelLossConfig::new(
        StftConfig::new(64, 16, 64, true).unwrap(),
        MelFilterbank::new(8, 64, 16_000, 0.0, 8000.0).unwrap(),
        1e-5,
    )
    .unwrap();
    let w = LossWeights {
        lambda_fm: 2.0,
        lambda_mel: 45.0,
    };
    let y = Tensor::constant(&[seg], x.samples.clone());
    let (_, feats_real) = forward_discriminators(&mpd, &mrd, &y).unwrap();
    let (scores_fake, feats_fake) = forward_discriminators(&mpd, &mrd, &g_out).unwrap();
    let (total, report) = generator_loss(
        &scores_fake,
        &feats_real,
        &feats_fake,
        &x,
        &g_out,
        &w,
        &mel_cfg,
    )
    .unwrap();
    let recomposed = report.g_adv + 2.0 * report.g_fm + 45.0 * report.g_mel;
    assert!(
        (report.g_total - recomposed).abs() < 1e-9,
        "total {} vs recomposed {recomposed}",
        report.g_total
    );
    assert!((total.item() - report.g_total).abs() < 1e-12);
}

/// Unit terms: with g_adv = g_fm = g_mel = 1 the weighted total is 48.
#[test]
fn unit_terms_total_48() {
    let w = LossWeights::default();
    let total = 1.0 + w.lambda_fm * 1.0 + w.lambda_mel * 1.0;
    assert_eq!(total, 48.0);
}

#[test]
fn perfect_generator_scores_zero_total() {
    let mut rng = Rng::seed_from_u64(64);
    let (mpd, mrd) = tiny_discs(&mut rng);
    let seg = 128;
    let x = AudioBuffer::new((0..seg).map(|_| rng.gauss() * 0.3).collect(), 16_000);
    let g_out = Tensor::constant(&[seg], x.samples.clone());
    let mel_cfg = MelLossConfig::new(
        StftConfig::new(64, 16, 64, true).unwrap(),
        MelFilterbank::new(8, 64, 16_000, 0.0, 8000.0).unwrap(),
        1e-5,
    )
    .unwrap();
    let w = LossWeights::default();
    // identical diffused inputs: features match exactly
    let y = Tensor::constant(&[seg], x.samples.clone());
    let (_, feats_real) = forward_discriminators(&mpd, &mrd, &y).unwrap();
    let (_, feats_fake) = forward_discriminators(&mpd, &mrd, &y).unwrap();
    // force fake scores to the real target
    let ones: Vec<Tensor> = feats_fake
        .iter()
        .map(|_| Tensor::constant(&[4], vec![1.0; 4]))
        .collect();
    let (total, report) = generator_loss(&ones, &feats_real, &feats_fake, &x, &g_out, &w, &mel_cfg)
        .unwrap();
    assert!(total.item().abs() < 1e-12, "total {}", total.item());
    assert_eq!(report.g_fm, 0.0);
    assert_eq!(report.g_mel, 0.0);
}

/// The LSGAN discriminator objective is minimized exactly at (real, fake) =
/// (1, 0); any perturbation must increase it.
#[test]
fn discriminator_loss_minimum_at_one_zero() {
    let base_real = vec![1.0; 6];
    let base_fake = vec![0.0; 6];
    let mk = |v: &[f64]| Tensor::constant(&[v.len()], v.to_vec());
    let (l0, _) = discriminator_loss(&[mk(&base_real)], &[mk(&base_fake)]).unwrap();
    assert_eq!(l0.item(), 0.0);
    let mut rng = Rng::seed_from_u64(65);
    for _ in 0..50 {
        let real: Vec<f64> = base_real.iter().map(|v| v + rng.gauss() * 0.1).collect();
        let fake: Vec<f64> = base_fake.iter().map(|v| v + rng.gauss() * 0.1).collect();
        if real == base_real && fake == base_fake {
            continue;
        }
        let (l, _) = discriminator_loss(&[mk(&real)], &[mk(&fake)]).unwrap();
        assert!(l.item() > 0.0);
    }
}

/// Real-branch features are gradient-stopped: optimizing the generator loss
/// must not accumulate gradient into discriminator parameters through the
/// feature-matching targets.
#[test]
fn fm_real_branch_is_gradient_stopped() {
    let mut rng = Rng::seed_from_u64(66);
    let (mpd, mrd) = tiny_discs(&mut rng);
    let seg = 128;
    let x = AudioBuffer::new((0..seg).map(|_| rng.gauss() * 0.3).collect(), 16_000);
    let g_out = Tensor::parameter(&[seg], (0..seg).map(|_| rng.gauss() * 0.3).collect());
    let mel_cfg = MelLossConfig::new(
        StftConfig::new(64, 16, 64, true).unwrap(),
        MelFilterbank::new(8, 64, 16_000, 0.0, 8000.0).unwrap(),
        1e-5,
    )
    .unwrap();
    let y = Tensor::constant(&[seg], x.samples.clone());
    let (_, feats_real) = forward_discriminators(&mpd, &mrd, &y).unwrap();
    let (scores_fake, feats_fake) = forward_discriminators(&mpd, &mrd, &g_out).unwrap();
    // Only the FM term: weights zero out adversarial and mel contributions
    // by subtracting them is overkill; simply check that backward through the
    // generator loss leaves grads on g_out but the real-branch features,
    // being detached, contribute none of their own graph.
    let (total, _) = generator_loss(
        &scores_fake,
        &feats_real,
        &feats_fake,
        &x,
        &g_out,
        &LossWeights::default(),
        &mel_cfg,
    )
    .unwrap();
    vocdiff_core::nets::ParamSet::zero_grad(&mpd);
    vocdiff_core::nets::ParamSet::zero_grad(&mrd);
    tensor::backward(&total).unwrap();
    assert!(g_out.grad().iter().any(|&g| g != 0.0));
    // Discriminator params do receive gradient via the FAKE branch (their
    // convs process y_fake), but the real branch must contribute nothing:
    // re-run with fake branch detached to isolate it.
    let (scores_fake_d, feats_fake_d): (Vec<Tensor>, Vec<Vec<Tensor>>) = (
        scores_fake.iter().map(|s| s.detach()).collect(),
        feats_fake
            .iter()
            .map(|fs| fs.iter().map(|f| f.detach()).collect())
            .collect(),
    );
    let (total_d, _) = generator_loss(
        &scores_fake_d,
        &feats_real,
        &feats_fake_d,
        &x,
        &g_out.detach(),
        &LossWeights::default(),
        &mel_cfg,
    )
    .unwrap();
    vocdiff_core::nets::ParamSet::zero_grad(&mpd);
    vocdiff_core::nets::ParamSet::zero_grad(&mrd);
    tensor::backward(&total_d).unwrap();
    for p in vocdiff_core::nets::ParamSet::parameters(&mpd)
        .iter()
        .chain(vocdiff_core::nets::ParamSet::parameters(&mrd).iter())
    {
        assert!(p.grad().iter().all(|&g| g == 0.0));
    }
}
