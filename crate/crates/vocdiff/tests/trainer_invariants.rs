//! Trainer-level invariants: adaptive-cap coupling, loss routing across
//! diffusion streams, and run bookkeeping.

use vocdiff::trainer::{self, DiffusionMode, TrainConfig, Trainer};
use vocdiff_core::adaptive::{update_t, AdaptiveState};
use vocdiff_core::mel::MelFilterbank;
use vocdiff_core::stft::StftConfig;
use vocdiff_core::synth::{generate_dataset, SyntheticKind, SyntheticSpec};
use vocdiff_core::AudioBuffer;

fn tiny_config(mode: DiffusionMode, seed: u64, steps: usize) -> TrainConfig {
    TrainConfig {
        steps,
        batch_size: 2,
        segment_length: 256,
        mode,
        seed,
        generator_channels: 8,
        upsample_rates: vec![4, 4],
        resblock_kernels: vec![3],
        resblock_dilations: vec![1, 2],
        mpd_periods: vec![2, 3],
        mpd_channels: vec![4],
        mrd_resolutions: vec![(64, 16, 32)],
        mrd_channels: vec![4],
        num_mels: 16,
        mel_fft: 128,
        checkpoint_every: 0,
        ..TrainConfig::default()
    }
}

fn tiny_dataset() -> Vec<AudioBuffer> {
    let spec = SyntheticSpec {
        kind: SyntheticKind::FormantNoise,
        f0_min: 200.0,
        f0_max: 600.0,
        num_items: 6,
        duration_secs: 0.25,
        seed: 13,
        sample_rate: 16_000,
    };
    let cfg = StftConfig::new(256, 64, 256, true).unwrap();
    let fb = MelFilterbank::new(32, 256, 16_000, 0.0, 8000.0).unwrap();
    generate_dataset(&spec, &cfg, &fb, 1e-5)
        .unwrap()
        .into_iter()
        .map(|(b, _)| b)
        .collect()
}

/// Replaying the logged r_d stream through a fresh controller must
/// reproduce the logged cap trajectory exactly.
#[test]
fn adaptive_cap_replays_from_r_d_log() {
    let cfg = tiny_config(DiffusionMode::Standard, 21, 40);
    let mut tr = Trainer::new(cfg.clone(), tiny_dataset()).unwrap();
    let mut log: Vec<(Option<f64>, usize)> = Vec::new();
    for _ in 0..40 {
        let rec = tr.train_step().unwrap();
        log.push((rec.r_d, rec.t_cap.unwrap()));
    }
    // r_d must appear exactly every rd_window steps.
    for (i, (r_d, _)) in log.iter().enumerate() {
        assert_eq!(r_d.is_some(), (i + 1) % cfg.rd_window == 0, "step {}", i + 1);
    }
    let mut replay = AdaptiveState::new(
        cfg.t_initial,
        cfg.t_min,
        cfg.t_max,
        cfg.d_target,
        cfg.c_step,
        cfg.rd_window,
    )
    .unwrap();
    for (i, (r_d, t_cap)) in log.iter().enumerate() {
        if let Some(r_d) = r_d {
            update_t(&mut replay, *r_d).unwrap();
        }
        assert_eq!(
            replay.t_current,
            *t_cap,
            "cap trajectory diverges at step {}",
            i + 1
        );
    }
}

/// The mel term never touches the diffusion stream: reseeding it changes
/// the adversarial terms of the first step but leaves g_mel bit-identical.
#[test]
fn g_mel_independent_of_diffusion_stream() {
    let cfg = tiny_config(DiffusionMode::Spec, 33, 1);
    let data = tiny_dataset();
    let mut a = Trainer::new(cfg.clone(), data.clone()).unwrap();
    let mut b = Trainer::new(cfg, data).unwrap();
    b.reseed_diffusion(0xdecafbad);
    let ra = a.train_step().unwrap();
    let rb = b.train_step().unwrap();
    assert_eq!(
        ra.report.g_mel.to_bits(),
        rb.report.g_mel.to_bits(),
        "g_mel changed with the diffusion stream"
    );
    assert_ne!(
        ra.report.g_adv.to_bits(),
        rb.report.g_adv.to_bits(),
        "adversarial term should respond to the diffusion stream"
    );
}

/// steps = 0 still emits the initial checkpoint and a metrics header.
#[test]
fn zero_steps_emits_initial_checkpoint_only() {
    let out = std::env::temp_dir().join("vocdiff-zero-steps");
    let _ = std::fs::remove_dir_all(&out);
    trainer::train(
        tiny_config(DiffusionMode::Spec, 5, 0),
        tiny_dataset(),
        &out,
        None,
        true,
    )
    .unwrap();
    assert!(out.join("ckpt_initial/manifest.json").exists());
    assert!(out.join("ckpt_initial/arrays.bin").exists());
    assert!(!out.join("ckpt_final").exists());
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1, "header only");
}
