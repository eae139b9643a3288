use cinetrack_core::phantom::{
    beating_annulus, moving_circle, AnnulusParams, CircleParams, PhantomSpec,
};
use cinetrack_core::tracking::{track_bidirectional, track_path, CineSequence};
use cinetrack_core::{dice, propagate_step, Label, PipelineConfig};

fn circle(shift: f64, noise: f64, seed: u64) -> cinetrack_core::phantom::Phantom {
    let mut spec = PhantomSpec::new(64, 64, 10);
    spec.noise_sigma = noise;
    spec.seed = seed;
    moving_circle(&spec, &CircleParams::centered(&spec, 20.0, (shift, 0.0))).unwrap()
}

#[test]
fn single_step_follows_a_shifted_disk() {
    let config = PipelineConfig::default();
    for seed in 0..4 {
        let p = circle(1.0, 0.05, seed);
        let out = propagate_step(&p.truth[0], &p.sequence.frames()[1], &config).unwrap();
        let d = dice(&out, &p.truth[1], 1).unwrap();
        assert!(d >= 0.95, "seed {seed}: {d}");
    }
}

#[test]
fn single_step_on_identical_frame_is_stable() {
    let p = circle(0.0, 0.05, 3);
    let frame = &p.sequence.frames()[0];
    let out = propagate_step(&p.truth[0], frame, &PipelineConfig::default()).unwrap();
    let d = dice(&out, &p.truth[0], 1).unwrap();
    assert!(d >= 0.98, "{d}");
}

#[test]
fn ten_step_paths() {
    let config = PipelineConfig::default();
    let still = circle(0.0, 0.0, 0);
    let path: Vec<usize> = (0..10).collect();
    let masks = track_path(&still.sequence, &path, &config).unwrap();
    assert!(dice(masks.last().unwrap(), still.sequence.ed_mask(), 1).unwrap() >= 0.95);

    let moving = circle(1.0, 0.05, 11);
    let masks = track_path(&moving.sequence, &path, &config).unwrap();
    assert_eq!(masks.len(), 10);
    assert!(dice(masks.last().unwrap(), &moving.truth[9], 1).unwrap() >= 0.95);
}

#[test]
fn two_frame_sequence_fuses_to_the_shared_path() {
    let p = circle(1.0, 0.05, 2);
    let frames = p.sequence.frames()[..2].to_vec();
    let seq =
        CineSequence::new(frames, 0, 1, p.truth[0].clone(), Some(p.truth[1].clone())).unwrap();
    let r = track_bidirectional(&seq, &PipelineConfig::default()).unwrap();
    assert_eq!(r.forward_path, r.backward_path);
    assert_eq!(&r.fused_es, r.forward_es());
    assert!(r.dice_per_structure.unwrap().rv >= 0.95);
}

#[test]
fn beating_annulus_fused_dice_per_structure() {
    let spec = PhantomSpec::new(96, 96, 20);
    let p = beating_annulus(&spec, &AnnulusParams::centered(&spec, 16.0, 28.0, 0.3)).unwrap();
    let r = track_bidirectional(&p.sequence, &PipelineConfig::default()).unwrap();
    let d = r.dice_per_structure.unwrap();
    assert!(d.myo >= 0.90 && d.lv >= 0.90, "{d:?}");
    assert_eq!(d.get(Label::RightVentricle), Some(1.0));
    assert_eq!(r.forward_path.len() + r.backward_path.len(), 22);
}
