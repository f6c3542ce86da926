//! Plain minibatch SGD on per-particle force error.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{Dataset, Sample};
use super::model::{squared_error, EdgeChannels, MessageMode, MpnnConfig, MpnnModel, Readout};
use super::net::Activation;
use crate::error::{Error, Result};
use crate::group::{sample_orthogonal, sample_permutation, sample_translation};
use crate::linalg::Vector;
use crate::physics::Particle;
use crate::rng::RngState;

/// Loss above which training is abandoned.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_particles: usize,
    pub n_samples: usize,
    /// Message passing layers.
    pub layers: usize,
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub edge_channels: EdgeChannels,
    pub mode: MessageMode,
    pub readout: Readout,
    /// Fraction of samples held out for validation.
    pub val_fraction: f64,
    pub output_scale: f64,
    /// Random group elements per epoch for the equivariance column.
    pub equivariance_trials: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let arch = MpnnConfig::default();
        Self {
            n_particles: arch.n_particles,
            n_samples: 2000,
            layers: arch.layers,
            widths: arch.widths,
            activation: arch.activation,
            lr: 1e-3,
            epochs: 200,
            batch: 32,
            seed: 0,
            edge_channels: arch.channels,
            mode: arch.mode,
            readout: arch.readout,
            val_fraction: 0.2,
            output_scale: arch.output_scale,
            equivariance_trials: 4,
        }
    }
}

impl TrainConfig {
    pub fn architecture(&self) -> MpnnConfig {
        MpnnConfig {
            mode: self.mode,
            n_particles: self.n_particles,
            channels: self.edge_channels.clone(),
            readout: self.readout,
            layers: self.layers,
            widths: self.widths.clone(),
            activation: self.activation,
            output_scale: self.output_scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::InvalidArgument("batch must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate must be finite and non-negative, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::InvalidArgument(format!("val_fraction must lie in [0, 1), got {}", self.val_fraction)));
        }
        Ok(())
    }
}

/// One row per epoch; epoch 0 is the untrained model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub equivariance_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingReport {
    pub rows: Vec<EpochRow>,
    pub diverged: bool,
}

impl TrainingReport {
    pub fn initial_val(&self) -> Option<f64> {
        self.rows.first().map(|r| r.val_mse)
    }

    pub fn final_val(&self) -> Option<f64> {
        self.rows.last().map(|r| r.val_mse)
    }

    pub fn best_val(&self) -> Option<f64> {
        self.rows.iter().map(|r| r.val_mse).min_by(f64::total_cmp)
    }
}

/// Mean over samples of the per-sample force error.
pub fn mean_squared_error(model: &MpnnModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let losses = data
        .samples
        .par_iter()
        .map(|s| Ok(squared_error(&model.predict(&s.particles)?, &s.forces).0))
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / data.len() as f64)
}

/// Worst relative deviation from `h_i(g x) = Q h_sigma(i)(x)` under jointly
/// sampled rotation/reflection, translation and relabelling.
pub fn equivariance_residual(model: &MpnnModel, samples: &[Sample], trials: usize, rng: &mut RngState) -> Result<f64> {
    let mut worst = 0.0f64;
    if samples.is_empty() {
        return Ok(0.0);
    }
    for _ in 0..trials {
        let sample = &samples[rng.index(samples.len())];
        let n = sample.particles.len();
        let q = sample_orthogonal(rng, 3)?;
        let q = q.linear().expect("orthogonal element").clone();
        let w = sample_translation(rng, 3).shift().expect("translation element").clone();
        let sigma = match sample_permutation(rng, n) {
            crate::group::GroupElement::Permutation { sigma } => sigma,
            _ => unreachable!("permutation sampler"),
        };
        let moved: Vec<Particle> = sigma
            .iter()
            .map(|&s| {
                let p = &sample.particles[s];
                Ok(Particle {
                    position: &q.mul_vec(&p.position)? + &w,
                    velocity: q.mul_vec(&p.velocity)?,
                    ..p.clone()
                })
            })
            .collect::<Result<_>>()?;
        let base = model.predict(&sample.particles)?;
        let after = model.predict(&moved)?;
        for (i, out) in after.iter().enumerate() {
            let expected = q.mul_vec(&base[sigma[i]])?;
            worst = worst.max((out - &expected).norm() / (1.0 + base[sigma[i]].norm()));
        }
    }
    Ok(worst)
}

fn batch_gradient(model: &MpnnModel, batch: &[&Sample]) -> Result<(MpnnModel, f64)> {
    let parts = batch
        .par_iter()
        .map(|s| {
            let trace = model.forward(&s.particles)?;
            let (loss, dout) = squared_error(&trace.outputs, &s.forces);
            Ok((model.backward(&trace, &dout)?, loss))
        })
        .collect::<Result<Vec<_>>>()?;
    // fixed-order reduction keeps runs reproducible across thread counts
    let mut total = model.zeros_like();
    let mut loss = 0.0;
    for (g, l) in &parts {
        total.axpy(1.0, g);
        loss += l;
    }
    Ok((total, loss / batch.len() as f64))
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub model: MpnnModel,
    pub report: TrainingReport,
}

/// SGD with a fixed learning rate on `train`, evaluating on `validation`
/// after every epoch. Deterministic for a given seed.
pub fn train(model: MpnnModel, train_set: &Dataset, validation: &Dataset, config: &TrainConfig) -> Result<TrainingOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let root = RngState::new(config.seed);
    let mut model = model;
    let mut report = TrainingReport::default();
    let mut eq_rng = root.split(1);
    let eval_set = if validation.is_empty() { train_set } else { validation };
    report.rows.push(EpochRow {
        epoch: 0,
        train_mse: mean_squared_error(&model, train_set)?,
        val_mse: mean_squared_error(&model, validation)?,
        equivariance_residual: equivariance_residual(&model, &eval_set.samples, config.equivariance_trials, &mut eq_rng)?,
    });

    for epoch in 1..=config.epochs {
        let mut shuffle = root.split(1000 + epoch as u64);
        let order = shuffle.permutation(train_set.len());
        for chunk in order.chunks(config.batch) {
            let batch: Vec<&Sample> = chunk.iter().map(|&k| &train_set.samples[k]).collect();
            let (grad, loss) = batch_gradient(&model, &batch)?;
            if !loss.is_finite() || loss > DIVERGENCE_LOSS {
                report.diverged = true;
                return Ok(TrainingOutcome { model, report });
            }
            model.axpy(-config.lr / batch.len() as f64, &grad);
        }
        let row = EpochRow {
            epoch,
            train_mse: mean_squared_error(&model, train_set)?,
            val_mse: mean_squared_error(&model, validation)?,
            equivariance_residual: equivariance_residual(&model, &eval_set.samples, config.equivariance_trials, &mut eq_rng)?,
        };
        report.rows.push(row);
        if !row.train_mse.is_finite() || row.train_mse > DIVERGENCE_LOSS {
            report.diverged = true;
            break;
        }
    }
    Ok(TrainingOutcome { model, report })
}

/// Builds the dataset and a fresh model from `config`, then trains.
pub fn run_experiment(config: &TrainConfig) -> Result<TrainingOutcome> {
    config.validate()?;
    let root = RngState::new(config.seed);
    let data = super::data::generate_dataset(&mut root.split(2), config.n_particles, config.n_samples, &Default::default())?;
    let train_count = ((1.0 - config.val_fraction) * data.len() as f64).round() as usize;
    let (train_set, validation) = data.split(train_count);
    let model = MpnnModel::random(&config.architecture(), &mut root.split(3))?;
    train(model, &train_set, &validation, config)
}

/// Writes `epoch,train_mse,val_mse,equivariance_residual` rows.
pub fn report_csv(report: &TrainingReport) -> String {
    let mut out = String::from("epoch,train_mse,val_mse,equivariance_residual\n");
    for r in &report.rows {
        out.push_str(&format!("{},{:e},{:e},{:e}\n", r.epoch, r.train_mse, r.val_mse, r.equivariance_residual));
    }
    out
}

/// Predicted forces for a batch of samples, for callers that only need
/// outputs.
pub fn predict_all(model: &MpnnModel, data: &Dataset) -> Result<Vec<Vec<Vector>>> {
    data.samples.par_iter().map(|s| model.predict(&s.particles)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpnn::data::generate_dataset;
    use crate::physics::PhysConstants;

    fn small_config() -> TrainConfig {
        TrainConfig { n_particles: 3, widths: vec![8], epochs: 5, batch: 4, equivariance_trials: 2, ..TrainConfig::default() }
    }

    fn setup(config: &TrainConfig, samples: usize) -> (MpnnModel, Dataset) {
        let data = generate_dataset(&mut RngState::new(1), config.n_particles, samples, &PhysConstants::default()).unwrap();
        let model = MpnnModel::random(&config.architecture(), &mut RngState::new(2)).unwrap();
        (model, data)
    }

    #[test]
    fn zero_learning_rate_keeps_loss_constant() {
        let config = TrainConfig { lr: 0.0, ..small_config() };
        let (model, data) = setup(&config, 12);
        let (train_set, val) = data.split(8);
        let out = train(model, &train_set, &val, &config).unwrap();
        let first = out.report.rows[0];
        assert!(out.report.rows.iter().all(|r| r.train_mse == first.train_mse && r.val_mse == first.val_mse));
    }

    #[test]
    fn memorizes_a_repeated_sample() {
        let config = TrainConfig { epochs: 50, lr: 1e-3, ..small_config() };
        let (model, data) = setup(&config, 1);
        let repeated = Dataset { samples: vec![data.samples[0].clone(); 8] };
        let out = train(model, &repeated, &Dataset::default(), &config).unwrap();
        let losses: Vec<f64> = out.report.rows.iter().map(|r| r.train_mse).collect();
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    }

    #[test]
    fn duplicated_example_doubles_gradient() {
        let config = small_config();
        let (model, data) = setup(&config, 1);
        let s = &data.samples[0];
        let (single, _) = batch_gradient(&model, &[s]).unwrap();
        let (double, _) = batch_gradient(&model, &[s, s]).unwrap();
        for (a, b) in single.params().iter().zip(double.params()) {
            assert!((2.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn training_is_deterministic() {
        let config = small_config();
        let (model, data) = setup(&config, 16);
        let (train_set, val) = data.split(12);
        let a = train(model.clone(), &train_set, &val, &config).unwrap();
        let b = train(model, &train_set, &val, &config).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let config = TrainConfig { lr: 1e4, output_scale: 1.0, ..small_config() };
        let (model, data) = setup(&config, 16);
        let out = train(model, &data, &Dataset::default(), &config).unwrap();
        assert!(out.report.diverged);
    }

    #[test]
    fn csv_header() {
        let csv = report_csv(&TrainingReport {
            rows: vec![EpochRow { epoch: 0, train_mse: 1.0, val_mse: 2.0, equivariance_residual: 0.0 }],
            diverged: false,
        });
        assert!(csv.starts_with("epoch,train_mse,val_mse,equivariance_residual\n0,"));
    }
}
