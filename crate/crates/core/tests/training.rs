use gasdf::error::Error;
use gasdf::geometry::rng::SampleRng;
use gasdf::geometry::{generate_frames, Frame, SceneFile, Vec3, ROOM_SCENE};
use gasdf::sampling::generate_batch;
use gasdf::training::{
    evaluate_losses, run_online, write_checkpoint, Checkpoint, Config, FrameLog, LossWeights, Profile, SdfPredictor,
    TrainState,
};

fn small_config() -> Config {
    let mut c = Config::profile(Profile::DeskScale);
    c.hash_grid.table_size = 1 << 14;
    c.sampling.rays = 256;
    c.train.iterations_per_frame = 3;
    c.train.seed = 17;
    c
}

fn room_frames(n: usize) -> Vec<Frame> {
    let sf = SceneFile::parse(ROOM_SCENE).unwrap();
    let poses = sf.poses().unwrap();
    generate_frames(&sf.scene().unwrap(), &poses[..n], 500, 2).unwrap()
}

fn checkpoint_bytes(state: &TrainState<f32>) -> Vec<u8> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, state).unwrap();
    buf
}

fn without_timing(logs: &[FrameLog]) -> Vec<FrameLog> {
    logs.iter().map(|l| FrameLog { wall_ms: 0.0, ..l.clone() }).collect()
}

#[test]
fn one_frame_runs_the_configured_steps() {
    let frames = room_frames(1);
    let mut state = TrainState::<f32>::new(small_config()).unwrap();
    let logs = run_online(&mut state, &frames, |_, _| Ok(())).unwrap();
    assert_eq!(logs.len(), 1);
    assert_eq!(logs[0].steps, 3);
    assert_eq!(state.step, 3);
    assert!(logs[0].keyframe_inserted);
    assert!(logs[0].octants_created > 0);
}

#[test]
fn zero_weights_leave_parameters_unchanged() {
    let mut config = small_config();
    config.losses = LossWeights::zero();
    let frames = room_frames(1);
    let mut state = TrainState::<f32>::new(config).unwrap();
    state.model.octree.insert_points(&frames[0].points, &frames[0].points);
    let before = state.model.clone();
    let batch = generate_batch(&[&frames[0]], &state.config.sampling, 1).unwrap();
    for _ in 0..5 {
        let r = state.train_step(&batch).unwrap();
        assert_eq!(r.losses.total(), 0.0);
    }
    assert_eq!(state.model.octree.params(), before.octree.params());
    let (a, b) = (state.model.net.as_ref().unwrap(), before.net.as_ref().unwrap());
    assert_eq!(a.grid.params(), b.grid.params());
    for (la, lb) in a.mlp.layers().iter().zip(b.mlp.layers()) {
        assert_eq!((&la.weights, &la.biases), (&lb.weights, &lb.biases));
    }
}

#[test]
fn fixed_batch_loss_mostly_decreases() {
    let frames = room_frames(2);
    let mut config = small_config();
    config.train.lr_octree = 1e-3;
    let mut state = TrainState::<f64>::new(config).unwrap();
    for f in &frames {
        state.model.octree.insert_points(&f.points, &f.points);
    }
    let refs: Vec<&Frame> = frames.iter().collect();
    let batch = generate_batch(&refs, &state.config.sampling, 4).unwrap();
    let mut losses = Vec::new();
    for _ in 0..51 {
        losses.push(state.train_step(&batch).unwrap().losses.total());
    }
    let non_increasing = losses.windows(2).filter(|w| w[1] <= w[0]).count();
    assert!(non_increasing >= 45, "{non_increasing}/50 steps non-increasing: {losses:?}");
    assert!(losses[50] < 0.5 * losses[0], "{losses:?}");
}

#[test]
fn runs_are_deterministic() {
    let frames = room_frames(4);
    let run = || {
        let mut state = TrainState::<f32>::new(small_config()).unwrap();
        let logs = run_online(&mut state, &frames, |_, _| Ok(())).unwrap();
        (without_timing(&logs), checkpoint_bytes(&state))
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0, b.0);
    assert!(a.1 == b.1, "checkpoints differ");
}

#[test]
fn losses_ignore_sample_order() {
    let frames = room_frames(2);
    let mut state = TrainState::<f64>::new(small_config()).unwrap();
    run_online(&mut state, &frames, |_, _| Ok(())).unwrap();
    let refs: Vec<&Frame> = frames.iter().collect();
    let batch = generate_batch(&refs, &state.config.sampling, 8).unwrap();
    let mut shuffled = batch.clone();
    let mut rng = SampleRng::new(3);
    fn shuffle<T>(v: &mut [T], rng: &mut SampleRng) {
        for i in (1..v.len()).rev() {
            v.swap(i, rng.index(i + 1));
        }
    }
    shuffle(&mut shuffled.surface, &mut rng);
    shuffle(&mut shuffled.perturbed, &mut rng);
    shuffle(&mut shuffled.free, &mut rng);
    let w = &state.config.losses;
    let a = evaluate_losses(&state.model, &batch, w, 0.01, None).unwrap();
    let b = evaluate_losses(&state.model, &shuffled, w, 0.01, None).unwrap();
    for (x, y) in [(a.recon, b.recon), (a.eik, b.eik), (a.proj, b.proj)] {
        assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}");
    }
}

#[test]
fn non_finite_values_abort_the_step() {
    let frames = room_frames(1);
    let mut state = TrainState::<f32>::new(small_config()).unwrap();
    state.model.octree.insert_points(&frames[0].points, &frames[0].points);
    let params = state.model.octree.params_mut();
    for p in params.iter_mut().step_by(4) {
        *p = f32::NAN;
    }
    let batch = generate_batch(&[&frames[0]], &state.config.sampling, 1).unwrap();
    match state.train_step(&batch) {
        Err(Error::NonFiniteLoss { step: 0, .. }) => {}
        other => panic!("expected a non-finite loss, got {other:?}"),
    }

    let mut config = small_config();
    config.train.lr_octree = 1e300;
    let mut state = TrainState::<f32>::new(config).unwrap();
    let err = run_online(&mut state, &frames, |_, _| Ok(())).unwrap_err();
    assert!(matches!(err, Error::NonFiniteLoss { .. }), "{err}");
}

#[test]
fn empty_frames_are_skipped() {
    let mut frames = room_frames(2);
    frames[0].points = vec![Vec3::splat(5.0)];
    let mut state = TrainState::<f32>::new(small_config()).unwrap();
    let logs = run_online(&mut state, &frames, |_, _| Ok(())).unwrap();
    assert_eq!(logs.len(), 1);
    assert_eq!(logs[0].frame_id, frames[1].id);
    assert_eq!(state.frames_seen, 2);
}

#[test]
fn checkpoint_roundtrip_is_byte_exact() {
    let frames = room_frames(3);
    let mut state = TrainState::<f32>::new(small_config()).unwrap();
    run_online(&mut state, &frames, |_, _| Ok(())).unwrap();
    let bytes = checkpoint_bytes(&state);
    assert_eq!(&bytes[..4], b"NSCK");
    let restored = Checkpoint::<f32>::from_bytes(&bytes).unwrap().into_state(&frames).unwrap();
    assert_eq!(checkpoint_bytes(&restored), bytes);
    let probes: Vec<Vec3> = (0..50).map(|i| Vec3::new(0.02 * i as f64 - 0.5, 0.1, -0.2)).collect();
    assert_eq!(restored.model.predict_batch(&probes).unwrap(), state.model.predict_batch(&probes).unwrap());

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(Checkpoint::<f32>::from_bytes(&bad), Err(Error::Format { .. })));
    let mut bad = bytes.clone();
    bad[4] = 9;
    assert!(matches!(Checkpoint::<f32>::from_bytes(&bad), Err(Error::Format { .. })));
    assert!(Checkpoint::<f32>::from_bytes(&bytes[..bytes.len() - 3]).is_err());
}

#[test]
fn resumed_run_matches_the_uninterrupted_one() {
    let frames = room_frames(6);
    let mut full = TrainState::<f32>::new(small_config()).unwrap();
    run_online(&mut full, &frames, |_, _| Ok(())).unwrap();

    let mut first = TrainState::<f32>::new(small_config()).unwrap();
    run_online(&mut first, &frames[..3], |_, _| Ok(())).unwrap();
    let saved = checkpoint_bytes(&first);
    let mut resumed = Checkpoint::<f32>::from_bytes(&saved).unwrap().into_state(&frames[..3]).unwrap();
    run_online(&mut resumed, &frames[3..], |_, _| Ok(())).unwrap();
    assert!(checkpoint_bytes(&resumed) == checkpoint_bytes(&full), "resumed checkpoint differs");
}

#[test]
fn prior_only_checkpoints_have_no_network() {
    let mut config = small_config();
    config.model.prior_only = true;
    let frames = room_frames(2);
    let mut state = TrainState::<f32>::new(config).unwrap();
    run_online(&mut state, &frames, |_, _| Ok(())).unwrap();
    let bytes = checkpoint_bytes(&state);
    let back = Checkpoint::<f32>::from_bytes(&bytes).unwrap();
    assert!(back.model.net.is_none());
    assert_eq!(checkpoint_bytes(&back.into_state(&frames).unwrap()), bytes);
}

