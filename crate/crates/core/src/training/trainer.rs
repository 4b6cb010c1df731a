use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::geometry::rng::mix_seed;
use crate::geometry::Frame;
use crate::num::Real;
use crate::octree::GRADIENT_CLAMP;
use crate::residual::GradBuffer;
use crate::sampling::{generate_batch, KeyframeStore, SampleBatch};

use super::config::Config;
use super::losses::{evaluate_losses, LossReport};
use super::model::SdfModel;
use super::optim::Adam;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepReport {
    pub losses: LossReport,
    pub grad_norm_octree: f64,
    pub grad_norm_network: f64,
}

/// Summary of one processed frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameLog {
    pub frame_id: u64,
    pub octants_created: usize,
    pub vertices_created: usize,
    pub keyframe_inserted: bool,
    pub keyframes: usize,
    pub steps: usize,
    /// Loss terms averaged over this frame's steps.
    pub recon: f64,
    pub eik: f64,
    pub proj: f64,
    pub wall_ms: f64,
}

impl fmt::Display for FrameLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "frame_id={} octants_created={} vertices_created={} keyframe_inserted={} keyframes={} steps={} recon={:.6e} eik={:.6e} proj={:.6e} wall_ms={:.1}",
            self.frame_id,
            self.octants_created,
            self.vertices_created,
            self.keyframe_inserted,
            self.keyframes,
            self.steps,
            self.recon,
            self.eik,
            self.proj,
            self.wall_ms
        )
    }
}

/// Model, optimizer and keyframes of an online run.
#[derive(Clone, Debug)]
pub struct TrainState<T> {
    pub config: Config,
    pub model: SdfModel<T>,
    pub adam: Adam,
    pub keyframes: KeyframeStore,
    pub grads: GradBuffer,
    /// Optimizer steps taken.
    pub step: u64,
    /// Frames consumed from the stream, including skipped ones.
    pub frames_seen: u64,
}

impl<T: Real> TrainState<T> {
    pub fn new(config: Config) -> Result<Self> {
        let model = SdfModel::new(&config)?;
        Ok(Self::from_parts(config, model))
    }

    pub(crate) fn from_parts(config: Config, model: SdfModel<T>) -> Self {
        let adam = Adam::new(&model);
        let grads = match &model.net {
            Some(net) => GradBuffer::new(model.octree.params().len(), net),
            None => GradBuffer { octree: vec![0.0; model.octree.params().len()], hash: vec![], mlp: vec![] },
        };
        Self { config, model, adam, keyframes: KeyframeStore::new(), grads, step: 0, frames_seen: 0 }
    }

    fn sync_octree_len(&mut self) {
        let n = self.model.octree.params().len();
        self.grads.resize_octree(n);
        self.adam.resize_octree(n);
    }

    /// Zero gradients, accumulate all losses, one optimizer update, then the
    /// octree gradient clamp.
    pub fn train_step(&mut self, batch: &SampleBatch) -> Result<StepReport> {
        self.sync_octree_len();
        self.grads.zero();
        let cfg = &self.config;
        let losses = evaluate_losses(&self.model, batch, &cfg.losses, cfg.train.fd_step, Some(&mut self.grads))?;
        let report = StepReport {
            losses,
            grad_norm_octree: self.grads.norm_squared_octree().sqrt(),
            grad_norm_network: self.grads.norm_squared_network().sqrt(),
        };
        if !losses.total().is_finite() {
            return Err(Error::NonFiniteLoss {
                step: self.step,
                detail: format!("recon={} eik={} proj={}", losses.recon, losses.eik, losses.proj),
            });
        }
        self.adam.step(&mut self.model, &self.grads, &self.config.train);
        self.model.octree.clamp_gradients(GRADIENT_CLAMP);
        if !self.model.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: self.step,
                detail: format!(
                    "parameters became non-finite (gradient norms: octree {:e}, network {:e})",
                    report.grad_norm_octree, report.grad_norm_network
                ),
            });
        }
        self.step += 1;
        Ok(report)
    }

    /// Allocation, keyframe update, then the configured number of steps on
    /// batches drawn from the selected keyframes and this frame.
    pub fn process_frame(&mut self, frame: &Frame) -> Result<FrameLog> {
        let start = Instant::now();
        self.frames_seen += 1;
        let mut frame = frame.clone();
        let outside = frame.retain_inside(self.model.octree.root());
        if outside > 0 {
            log::debug!("frame {}: {outside} points outside the root dropped", frame.id);
        }
        if frame.points.is_empty() {
            log::warn!("frame {} has no points inside the root; skipped", frame.id);
            return Err(Error::EmptyFrame(frame.id));
        }
        let frame = Arc::new(frame);
        let alloc = self.model.octree.insert_points(&frame.points, &frame.points);
        self.sync_octree_len();
        let octants = self.model.octree.leaf_set(&frame.points);
        let inserted = self.keyframes.maybe_insert(frame.clone(), octants, self.config.sampling.keyframe_iou);

        let selected = self.keyframes.select(self.config.sampling.window);
        let mut training: Vec<Arc<Frame>> = selected.iter().map(|&i| self.keyframes.get(i).frame.clone()).collect();
        if !training.iter().any(|f| f.id == frame.id) {
            training.push(frame.clone());
        }
        let refs: Vec<&Frame> = training.iter().map(|f| &**f).collect();

        let mut log = FrameLog {
            frame_id: frame.id,
            octants_created: alloc.octants_created,
            vertices_created: alloc.vertices_created,
            keyframe_inserted: inserted,
            keyframes: self.keyframes.len(),
            ..Default::default()
        };
        let iters = self.config.train.iterations_per_frame;
        for _ in 0..iters {
            let batch = generate_batch(&refs, &self.config.sampling, mix_seed(self.config.train.seed, self.step))?;
            let r = self.train_step(&batch)?;
            log.recon += r.losses.recon / iters as f64;
            log.eik += r.losses.eik / iters as f64;
            log.proj += r.losses.proj / iters as f64;
            log.steps += 1;
        }
        log.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(log)
    }
}

/// Feeds `frames` in order, skipping empty ones; `on_frame` sees the state
/// after every processed frame and may stop the run early by returning an
/// error.
pub fn run_online<T: Real>(
    state: &mut TrainState<T>,
    frames: &[Frame],
    mut on_frame: impl FnMut(&TrainState<T>, &FrameLog) -> Result<()>,
) -> Result<Vec<FrameLog>> {
    let mut logs = Vec::new();
    for frame in frames {
        match state.process_frame(frame) {
            Ok(log) => {
                on_frame(state, &log)?;
                logs.push(log);
            }
            Err(Error::EmptyFrame(id)) => log::warn!("skipping empty frame {id}"),
            Err(e) => return Err(e),
        }
    }
    Ok(logs)
}
