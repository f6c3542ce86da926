//! Message passing over particles with scalar-only networks.
//!
//! Each layer updates two hidden vectors per particle,
//!
//! ```text
//! m_r,i = sum_{j != i} (h_r,i - h_r,j) g_r + (h_v,i - h_v,j) g_v
//! m_v,i = sum_{j != i} (h_r,i - h_r,j) g~_r + (h_v,i - h_v,j) g~_v
//! h <- h + m
//! ```
//!
//! where the `g` are scalar networks of invariant edge features. In
//! [`MessageMode::Full`] each `g` sees all edges of node `i` at once (so it
//! is one scalar per node); in [`MessageMode::Anchored`] it sees the same
//! edges with `(i, j)` moved to the front (one scalar per ordered pair); in
//! [`MessageMode::Pooled`] it sees the edge `(i, j)` plus the sum of node
//! `i`'s edges.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::net::{Activation, NetTrace, ScalarNet};
use crate::error::{Error, Result};
use crate::features::centroid;
use crate::linalg::Vector;
use crate::physics::Particle;
use crate::rng::RngState;

/// Gaussian bumps `exp(-((|delta| - c) / width)^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialBasis {
    pub centers: Vec<f64>,
    pub width: f64,
}

impl RadialBasis {
    /// `count` centers spread evenly over `[0, max]`.
    pub fn evenly(count: usize, max: f64, width: f64) -> Self {
        let step = if count > 1 { max / (count - 1) as f64 } else { 0.0 };
        Self { centers: (0..count).map(|k| k as f64 * step).collect(), width }
    }
}

/// Which optional channels follow the three base invariants
/// `(q_i q_j, v_i.v_j, delta.delta)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EdgeChannels {
    /// `(delta.delta)^(-1/2)`; zero on the self edge.
    #[serde(default)]
    pub inverse_sqrt: bool,
    #[serde(default)]
    pub rbf: Option<RadialBasis>,
}

impl EdgeChannels {
    pub fn count(&self) -> usize {
        3 + usize::from(self.inverse_sqrt) + self.rbf.as_ref().map_or(0, |r| r.centers.len())
    }
}

/// Edge features for every ordered pair, including `i == j`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFeatures {
    pub n: usize,
    pub width: usize,
    data: Vec<f64>,
}

impl EdgeFeatures {
    pub fn get(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.n + j) * self.width;
        &self.data[start..start + self.width]
    }

    /// Node `i`'s full input: its self edge, then the other edges ordered by
    /// distance (ties broken by the remaining channels). The order depends
    /// only on invariants, so relabelling particles does not change it.
    pub fn node_input(&self, i: usize) -> Vec<f64> {
        let mut others: Vec<usize> = (0..self.n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| {
            let (ea, eb) = (self.get(i, a), self.get(i, b));
            ea[2].total_cmp(&eb[2])
                .then_with(|| ea.iter().zip(eb).map(|(x, y)| x.total_cmp(y)).find(|o| *o != Ordering::Equal).unwrap_or(Ordering::Equal))
        });
        let mut input = Vec::with_capacity(self.n * self.width);
        input.extend_from_slice(self.get(i, i));
        for j in others {
            input.extend_from_slice(self.get(i, j));
        }
        input
    }

    /// `e_ij`, the self edge, then node `i`'s remaining edges in the order
    /// of [`Self::node_input`].
    pub fn anchored_input(&self, i: usize, j: usize) -> Vec<f64> {
        let node = self.node_input(i);
        let w = self.width;
        let lead = self.get(i, j);
        let mut input = Vec::with_capacity(node.len());
        input.extend_from_slice(lead);
        let mut skipped = false;
        for chunk in node.chunks(w) {
            if !skipped && chunk == lead {
                skipped = true;
                continue;
            }
            input.extend_from_slice(chunk);
        }
        input
    }

    /// `(e_ij, sum_{k != i} e_ik)`.
    pub fn pair_input(&self, i: usize, j: usize) -> Vec<f64> {
        let mut pool = vec![0.0; self.width];
        for k in (0..self.n).filter(|&k| k != i) {
            for (p, e) in pool.iter_mut().zip(self.get(i, k)) {
                *p += e;
            }
        }
        let mut input = self.get(i, j).to_vec();
        input.extend(pool);
        input
    }
}

pub fn edge_features(particles: &[Particle], channels: &EdgeChannels) -> Result<EdgeFeatures> {
    let n = particles.len();
    if n < 2 {
        return Err(Error::TooFewVectors { need: 2, have: n });
    }
    let dim = particles[0].dim();
    if let Some(bad) = particles.iter().find(|p| p.dim() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, found: bad.dim() });
    }
    let width = channels.count();
    let mut data = Vec::with_capacity(n * n * width);
    for (i, a) in particles.iter().enumerate() {
        for (j, b) in particles.iter().enumerate() {
            let delta = &a.position - &b.position;
            let dd = delta.norm_squared();
            data.push(a.charge * b.charge);
            data.push(a.velocity.dot(&b.velocity));
            data.push(dd);
            if channels.inverse_sqrt {
                if i == j {
                    data.push(0.0);
                } else if dd == 0.0 {
                    return Err(Error::CoincidentPositions { i, j });
                } else {
                    data.push(1.0 / dd.sqrt());
                }
            }
            if let Some(rbf) = &channels.rbf {
                let dist = dd.sqrt();
                for c in &rbf.centers {
                    let z = (dist - c) / rbf.width;
                    data.push((-z * z).exp());
                }
            }
        }
    }
    Ok(EdgeFeatures { n, width, data })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageMode {
    /// Per-node networks over the concatenation of all of the node's edges.
    Full,
    /// Per-pair networks over `(e_ij, sum_k e_ik)`.
    Pooled,
    /// Per-pair networks over the same concatenation as `Full`, led by the
    /// edge to the sending neighbour.
    Anchored,
}

impl MessageMode {
    /// One network evaluation per ordered pair rather than per node.
    fn per_pair(self) -> bool {
        !matches!(self, MessageMode::Full)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    Position,
    Velocity,
}

/// The four coefficient networks of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpnnLayer {
    /// Position message, weight on position differences.
    pub g_r: ScalarNet,
    /// Position message, weight on velocity differences.
    pub g_v: ScalarNet,
    /// Velocity message, weight on position differences.
    pub g_tilde_r: ScalarNet,
    /// Velocity message, weight on velocity differences.
    pub g_tilde_v: ScalarNet,
}

impl MpnnLayer {
    fn nets(&self) -> [&ScalarNet; 4] {
        [&self.g_r, &self.g_v, &self.g_tilde_r, &self.g_tilde_v]
    }

    fn nets_mut(&mut self) -> [&mut ScalarNet; 4] {
        [&mut self.g_r, &mut self.g_v, &mut self.g_tilde_r, &mut self.g_tilde_v]
    }
}

/// Architecture choices for [`MpnnModel::random`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpnnConfig {
    pub mode: MessageMode,
    /// Particle count; fixes the input width in full mode.
    pub n_particles: usize,
    pub channels: EdgeChannels,
    pub readout: Readout,
    pub layers: usize,
    pub widths: Vec<usize>,
    pub activation: Activation,
    /// Scale of the random output-layer weights.
    pub output_scale: f64,
}

impl Default for MpnnConfig {
    fn default() -> Self {
        Self {
            mode: MessageMode::Full,
            n_particles: 4,
            channels: EdgeChannels { inverse_sqrt: true, rbf: None },
            readout: Readout::Position,
            layers: 2,
            widths: vec![16, 16],
            activation: Activation::Tanh,
            output_scale: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpnnModel {
    pub mode: MessageMode,
    pub n_particles: usize,
    pub channels: EdgeChannels,
    pub readout: Readout,
    pub layers: Vec<MpnnLayer>,
}

/// Cached intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    n: usize,
    layers: Vec<LayerTrace>,
    pub outputs: Vec<Vector>,
}

#[derive(Debug, Clone)]
struct LayerTrace {
    h_r: Vec<Vector>,
    h_v: Vec<Vector>,
    /// Per network: one trace per node (full) or per ordered pair `i*n+j`
    /// with `i != j` (pooled; diagonal entries unused).
    traces: [Vec<Option<NetTrace>>; 4],
    /// Per network: coefficient of the pair `(i, j)` at `i*n+j`.
    coeffs: [Vec<f64>; 4],
}

impl MpnnModel {
    pub fn input_width(mode: MessageMode, n_particles: usize, channels: &EdgeChannels) -> usize {
        match mode {
            MessageMode::Full | MessageMode::Anchored => channels.count() * n_particles,
            MessageMode::Pooled => 2 * channels.count(),
        }
    }

    pub fn random(config: &MpnnConfig, rng: &mut RngState) -> Result<Self> {
        Self::build(config, |input| {
            ScalarNet::random(input, &config.widths, config.activation, config.output_scale, rng)
        })
    }

    /// All weights and biases zero: every message vanishes.
    pub fn zeros(config: &MpnnConfig) -> Result<Self> {
        Self::build(config, |input| ScalarNet::zeros(input, &config.widths, config.activation))
    }

    fn build(config: &MpnnConfig, mut make: impl FnMut(usize) -> ScalarNet) -> Result<Self> {
        if config.n_particles < 2 {
            return Err(Error::TooFewVectors { need: 2, have: config.n_particles });
        }
        if config.layers == 0 {
            return Err(Error::InvalidArgument("at least one message passing layer is needed".into()));
        }
        let input = Self::input_width(config.mode, config.n_particles, &config.channels);
        let layers = (0..config.layers)
            .map(|_| MpnnLayer { g_r: make(input), g_v: make(input), g_tilde_r: make(input), g_tilde_v: make(input) })
            .collect();
        Ok(Self {
            mode: config.mode,
            n_particles: config.n_particles,
            channels: config.channels.clone(),
            readout: config.readout,
            layers,
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.for_each_param_mut(|p| *p = 0.0);
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().flat_map(|l| l.nets()).map(ScalarNet::param_count).sum()
    }

    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for layer in &mut self.layers {
            for net in layer.nets_mut() {
                net.for_each_param_mut(&mut f);
            }
        }
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.nets()).flat_map(|n| n.params()).collect()
    }

    /// `self += factor * other` over all parameters.
    pub fn axpy(&mut self, factor: f64, other: &MpnnModel) {
        for (mine, theirs) in self.layers.iter_mut().zip(&other.layers) {
            for (a, b) in mine.nets_mut().into_iter().zip(theirs.nets()) {
                a.axpy(factor, b);
            }
        }
    }

    pub fn predict(&self, particles: &[Particle]) -> Result<Vec<Vector>> {
        self.forward(particles).map(|t| t.outputs)
    }

    pub fn forward(&self, particles: &[Particle]) -> Result<ForwardTrace> {
        let n = particles.len();
        if self.mode != MessageMode::Pooled && n != self.n_particles {
            return Err(Error::WidthMismatch {
                expected: self.channels.count() * self.n_particles,
                found: self.channels.count() * n,
            });
        }
        let edges = edge_features(particles, &self.channels)?;
        let inputs: Vec<Vec<f64>> = match self.mode {
            MessageMode::Full => (0..n).map(|i| edges.node_input(i)).collect(),
            mode => (0..n * n)
                .map(|ij| {
                    let (i, j) = (ij / n, ij % n);
                    match mode {
                        _ if i == j => Vec::new(),
                        MessageMode::Anchored => edges.anchored_input(i, j),
                        _ => edges.pair_input(i, j),
                    }
                })
                .collect(),
        };

        let dim = particles[0].dim();
        let center = centroid(particles.iter().map(|p| &p.position), dim);
        let mut h_r: Vec<Vector> = particles.iter().map(|p| &p.position - &center).collect();
        let mut h_v: Vec<Vector> = particles.iter().map(|p| p.velocity.clone()).collect();
        let mut layers = Vec::with_capacity(self.layers.len());

        for layer in &self.layers {
            let mut traces: [Vec<Option<NetTrace>>; 4] = Default::default();
            let mut coeffs: [Vec<f64>; 4] = Default::default();
            for (k, net) in layer.nets().into_iter().enumerate() {
                let mut pair_coeffs = vec![0.0; n * n];
                let mut unit_traces = Vec::with_capacity(inputs.len());
                for (u, input) in inputs.iter().enumerate() {
                    if input.is_empty() {
                        unit_traces.push(None);
                        continue;
                    }
                    let trace = net.forward_trace(input)?;
                    let value = trace.output();
                    if self.mode.per_pair() {
                        pair_coeffs[u] = value;
                    } else {
                        pair_coeffs[u * n..(u + 1) * n].iter_mut().for_each(|c| *c = value);
                    }
                    unit_traces.push(Some(trace));
                }
                traces[k] = unit_traces;
                coeffs[k] = pair_coeffs;
            }

            let mut next_r = h_r.clone();
            let mut next_v = h_v.clone();
            for i in 0..n {
                for j in (0..n).filter(|&j| j != i) {
                    let dr = &h_r[i] - &h_r[j];
                    let dv = &h_v[i] - &h_v[j];
                    let ij = i * n + j;
                    next_r[i].axpy(coeffs[0][ij], &dr);
                    next_r[i].axpy(coeffs[1][ij], &dv);
                    next_v[i].axpy(coeffs[2][ij], &dr);
                    next_v[i].axpy(coeffs[3][ij], &dv);
                }
            }
            layers.push(LayerTrace { h_r: std::mem::replace(&mut h_r, next_r), h_v: std::mem::replace(&mut h_v, next_v), traces, coeffs });
        }

        let outputs = match self.readout {
            Readout::Position => h_r,
            Readout::Velocity => h_v,
        };
        Ok(ForwardTrace { n, layers, outputs })
    }

    /// Parameter gradient of a loss whose gradient with respect to each
    /// output vector is `output_grad[i]`.
    pub fn backward(&self, trace: &ForwardTrace, output_grad: &[Vector]) -> Result<MpnnModel> {
        let n = trace.n;
        if output_grad.len() != n {
            return Err(Error::WidthMismatch { expected: n, found: output_grad.len() });
        }
        let dim = trace.outputs[0].dim();
        let mut grad = self.zeros_like();
        let zero = || vec![Vector::zeros(dim); n];
        let (mut g_r, mut g_v) = match self.readout {
            Readout::Position => (output_grad.to_vec(), zero()),
            Readout::Velocity => (zero(), output_grad.to_vec()),
        };

        for (layer, (lt, lg)) in self.layers.iter().zip(trace.layers.iter().zip(grad.layers.iter_mut())).rev() {
            let mut d_coeff = [vec![0.0; n * n], vec![0.0; n * n], vec![0.0; n * n], vec![0.0; n * n]];
            let mut in_r = g_r.clone();
            let mut in_v = g_v.clone();
            for i in 0..n {
                for j in (0..n).filter(|&j| j != i) {
                    let ij = i * n + j;
                    let dr = &lt.h_r[i] - &lt.h_r[j];
                    let dv = &lt.h_v[i] - &lt.h_v[j];
                    d_coeff[0][ij] = g_r[i].dot(&dr);
                    d_coeff[1][ij] = g_r[i].dot(&dv);
                    d_coeff[2][ij] = g_v[i].dot(&dr);
                    d_coeff[3][ij] = g_v[i].dot(&dv);
                    // gradient flowing into the difference vectors
                    let mut d_dr = g_r[i].scale(lt.coeffs[0][ij]);
                    d_dr.axpy(lt.coeffs[2][ij], &g_v[i]);
                    let mut d_dv = g_r[i].scale(lt.coeffs[1][ij]);
                    d_dv.axpy(lt.coeffs[3][ij], &g_v[i]);
                    in_r[i].axpy(1.0, &d_dr);
                    in_r[j].axpy(-1.0, &d_dr);
                    in_v[i].axpy(1.0, &d_dv);
                    in_v[j].axpy(-1.0, &d_dv);
                }
            }
            for (k, (net, net_grad)) in layer.nets().into_iter().zip(lg.nets_mut()).enumerate() {
                for (u, t) in lt.traces[k].iter().enumerate() {
                    let Some(t) = t else { continue };
                    let d_out =
                        if self.mode.per_pair() { d_coeff[k][u] } else { d_coeff[k][u * n..(u + 1) * n].iter().sum() };
                    net.backward(t, d_out, net_grad);
                }
            }
            g_r = in_r;
            g_v = in_v;
        }
        Ok(grad)
    }
}

/// Mean over particles of `|prediction - target|^2` and its gradient with
/// respect to each prediction.
pub fn squared_error(predictions: &[Vector], targets: &[Vector]) -> (f64, Vec<Vector>) {
    let n = predictions.len() as f64;
    let mut loss = 0.0;
    let grads = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| {
            let diff = p - t;
            loss += diff.norm_squared() / n;
            diff.scale(2.0 / n)
        })
        .collect();
    (loss, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{sample_orthogonal, sample_translation};

    fn particle(q: f64, r: &[f64], v: &[f64]) -> Particle {
        Particle::new(1.0, q, Vector::new(r.to_vec()).unwrap(), Vector::new(v.to_vec()).unwrap()).unwrap()
    }

    fn random_particles(rng: &mut RngState, n: usize) -> Vec<Particle> {
        (0..n)
            .map(|_| {
                let q = if rng.coin() { 1.0 } else { -1.0 };
                Particle::new(1.0, q, Vector::new(rng.normals(3)).unwrap(), Vector::new(rng.normals(3)).unwrap())
                    .unwrap()
            })
            .collect()
    }

    fn config(mode: MessageMode, n: usize) -> MpnnConfig {
        MpnnConfig {
            mode,
            n_particles: n,
            channels: EdgeChannels { inverse_sqrt: true, rbf: Some(RadialBasis::evenly(3, 2.0, 0.5)) },
            widths: vec![8],
            output_scale: 1.0,
            ..MpnnConfig::default()
        }
    }

    #[test]
    fn edge_feature_examples() {
        let ps = [particle(1.0, &[0.0, 0.0, 0.0], &[0.0; 3]), particle(1.0, &[1.0, 0.0, 0.0], &[0.0; 3])];
        let e = edge_features(&ps, &EdgeChannels::default()).unwrap();
        assert_eq!(e.get(0, 1), &[1.0, 0.0, 1.0]);
        assert_eq!(e.get(1, 0), e.get(0, 1));

        let neutral = [particle(0.0, &[0.0; 3], &[1.0, 0.0, 0.0]), particle(0.0, &[0.0, 2.0, 0.0], &[0.0; 3])];
        let e = edge_features(&neutral, &EdgeChannels { inverse_sqrt: true, rbf: None }).unwrap();
        assert!((0..2).all(|i| (0..2).all(|j| e.get(i, j)[0] == 0.0)));
        assert_eq!(e.get(0, 1)[3], 0.5);

        let clash = [particle(1.0, &[0.0; 3], &[0.0; 3]), particle(1.0, &[0.0; 3], &[0.0; 3])];
        assert!(edge_features(&clash, &EdgeChannels { inverse_sqrt: true, rbf: None }).is_err());
    }

    #[test]
    fn edge_features_are_invariant() {
        let mut rng = RngState::new(4);
        let ps = random_particles(&mut rng, 4);
        let channels = EdgeChannels { inverse_sqrt: true, rbf: Some(RadialBasis::evenly(4, 3.0, 0.7)) };
        let base = edge_features(&ps, &channels).unwrap();
        let q = sample_orthogonal(&mut rng, 3).unwrap();
        let w = sample_translation(&mut rng, 3);
        let (q, w) = (q.linear().unwrap().clone(), w.shift().unwrap().clone());
        let moved: Vec<Particle> = ps
            .iter()
            .map(|p| Particle {
                position: &q.mul_vec(&p.position).unwrap() + &w,
                velocity: q.mul_vec(&p.velocity).unwrap(),
                ..p.clone()
            })
            .collect();
        let after = edge_features(&moved, &channels).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                for (a, b) in base.get(i, j).iter().zip(after.get(i, j)) {
                    assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
                }
            }
        }
    }

    #[test]
    fn zero_model_returns_initial_state() {
        let mut rng = RngState::new(1);
        let ps = random_particles(&mut rng, 3);
        let model = MpnnModel::zeros(&config(MessageMode::Full, 3)).unwrap();
        let out = model.predict(&ps).unwrap();
        let c = centroid(ps.iter().map(|p| &p.position), 3);
        for (o, p) in out.iter().zip(&ps) {
            assert_eq!(o, &(&p.position - &c));
        }
    }

    #[test]
    fn mirrored_pair_gives_opposite_outputs() {
        let mut rng = RngState::new(2);
        for mode in [MessageMode::Full, MessageMode::Pooled, MessageMode::Anchored] {
            let model = MpnnModel::random(&config(mode, 2), &mut rng).unwrap();
            let ps = [particle(1.0, &[0.3, -0.2, 0.5], &[0.1, 0.4, -0.3]), particle(1.0, &[-0.3, 0.2, -0.5], &[-0.1, -0.4, 0.3])];
            let out = model.predict(&ps).unwrap();
            assert!((&out[0] + &out[1]).max_abs() < 1e-12);
        }
    }

    #[test]
    fn full_mode_rejects_other_sizes() {
        let mut rng = RngState::new(3);
        let model = MpnnModel::random(&config(MessageMode::Full, 3), &mut rng).unwrap();
        let ps = random_particles(&mut rng, 4);
        assert!(matches!(model.predict(&ps), Err(Error::WidthMismatch { .. })));
        let pooled = MpnnModel::random(&config(MessageMode::Pooled, 3), &mut rng).unwrap();
        assert_eq!(pooled.predict(&ps).unwrap().len(), 4);
    }

    fn check_gradients(mode: MessageMode, readout: Readout) {
        let mut rng = RngState::new(5);
        let mut cfg = config(mode, 2);
        cfg.readout = readout;
        cfg.layers = 1;
        let model = MpnnModel::random(&cfg, &mut rng).unwrap();
        let ps = random_particles(&mut rng, 2);
        let targets: Vec<Vector> = (0..2).map(|_| Vector::new(rng.normals(3)).unwrap()).collect();
        let loss_of = |m: &MpnnModel| squared_error(&m.predict(&ps).unwrap(), &targets).0;
        let trace = model.forward(&ps).unwrap();
        let (_, dout) = squared_error(&trace.outputs, &targets);
        let analytic = model.backward(&trace, &dout).unwrap().params();
        for k in 0..model.param_count() {
            let shifted = |delta: f64| {
                let mut m = model.clone();
                let mut idx = 0;
                m.for_each_param_mut(|p| {
                    if idx == k {
                        *p += delta;
                    }
                    idx += 1;
                });
                loss_of(&m)
            };
            let h = 1e-5;
            let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
            let err = (numeric - analytic[k]).abs();
            assert!(err <= 1e-8 || err <= 1e-5 * numeric.abs(), "param {k}: {numeric} vs {}", analytic[k]);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        check_gradients(MessageMode::Full, Readout::Position);
        check_gradients(MessageMode::Full, Readout::Velocity);
        check_gradients(MessageMode::Pooled, Readout::Position);
        check_gradients(MessageMode::Anchored, Readout::Position);
        check_gradients(MessageMode::Anchored, Readout::Velocity);
    }

    #[test]
    fn anchored_input_reorders_the_node_input() {
        let mut rng = RngState::new(8);
        let ps = random_particles(&mut rng, 4);
        let channels = EdgeChannels { inverse_sqrt: true, rbf: None };
        let edges = edge_features(&ps, &channels).unwrap();
        let w = channels.count();
        for i in 0..4 {
            let sorted = |v: Vec<f64>| {
                let mut chunks: Vec<Vec<f64>> = v.chunks(w).map(<[f64]>::to_vec).collect();
                chunks.sort_by(|a, b| a.partial_cmp(b).unwrap());
                chunks
            };
            for j in (0..4).filter(|&j| j != i) {
                let anchored = edges.anchored_input(i, j);
                assert_eq!(&anchored[..w], edges.get(i, j));
                assert_eq!(&anchored[w..2 * w], edges.get(i, i));
                assert_eq!(sorted(anchored), sorted(edges.node_input(i)));
            }
        }
    }

    #[test]
    fn relabelling_particles_relabels_outputs() {
        let mut rng = RngState::new(9);
        for mode in [MessageMode::Full, MessageMode::Pooled, MessageMode::Anchored] {
            let model = MpnnModel::random(&config(mode, 4), &mut rng).unwrap();
            let ps = random_particles(&mut rng, 4);
            let sigma = [2, 0, 3, 1];
            let moved: Vec<Particle> = sigma.iter().map(|&k| ps[k].clone()).collect();
            let out = model.predict(&ps).unwrap();
            let got = model.predict(&moved).unwrap();
            for (slot, &k) in sigma.iter().enumerate() {
                assert!((&got[slot] - &out[k]).max_abs() <= 1e-12 * (1.0 + out[k].max_abs()), "{mode:?}");
            }
        }
    }

    #[test]
    fn zero_loss_gradient_gives_zero_gradient() {
        let mut rng = RngState::new(6);
        let model = MpnnModel::random(&config(MessageMode::Full, 3), &mut rng).unwrap();
        let ps = random_particles(&mut rng, 3);
        let trace = model.forward(&ps).unwrap();
        let grad = model.backward(&trace, &vec![Vector::zeros(3); 3]).unwrap();
        assert!(grad.params().iter().all(|&g| g == 0.0));
    }
}
