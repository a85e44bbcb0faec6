//! Small multilayer perceptrons with manual backpropagation and Adam,
//! in f64 throughout.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::NetError;

/// SELU constants (standard published values).
const SELU_ALPHA: f64 = 1.6733;
const SELU_LAMBDA: f64 = 1.0507;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Selu,
    Softplus,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Selu => {
                if z > 0.0 {
                    SELU_LAMBDA * z
                } else {
                    SELU_LAMBDA * SELU_ALPHA * (z.exp() - 1.0)
                }
            }
            Activation::Softplus => {
                // Stable softplus: ln(1 + e^z).
                if z > 30.0 {
                    z
                } else {
                    z.exp().ln_1p()
                }
            }
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Selu => {
                if z > 0.0 {
                    SELU_LAMBDA
                } else {
                    SELU_LAMBDA * SELU_ALPHA * z.exp()
                }
            }
            Activation::Softplus => 1.0 / (1.0 + (-z).exp()),
        }
    }
}

/// Network layout: 1-3 hidden layers with per-layer activation, linear output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_dim: usize,
    pub hidden_layers: Vec<(usize, Activation)>,
    pub output_dim: usize,
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(NetError::InvalidConfig("zero input or output dim".into()));
        }
        if self.hidden_layers.iter().any(|(w, _)| *w == 0) {
            return Err(NetError::InvalidConfig("zero-width hidden layer".into()));
        }
        Ok(())
    }
}

/// One affine layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// Row-major `out_dim x in_dim` weight matrix.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub activation: Option<Activation>,
}

impl Layer {
    fn in_dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    fn out_dim(&self) -> usize {
        self.biases.len()
    }
}

/// A feed-forward network with a linear output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub config: NetConfig,
    pub layers: Vec<Layer>,
}

/// Parameter-shaped gradient (or accumulator) container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrads {
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}

impl ParamGrads {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            weights: net
                .layers
                .iter()
                .map(|l| vec![vec![0.0; l.in_dim()]; l.out_dim()])
                .collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.out_dim()]).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .flatten()
            .flatten()
            .chain(self.biases.iter().flatten())
            .all(|v| v.is_finite())
    }
}

impl Network {
    /// Seed-deterministic initialization with uniform fan-in scaling.
    pub fn init(config: NetConfig, rng: &mut impl Rng) -> Result<Self, NetError> {
        config.validate()?;
        let mut dims = vec![config.input_dim];
        dims.extend(config.hidden_layers.iter().map(|(w, _)| *w));
        dims.push(config.output_dim);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for i in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[i], dims[i + 1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            let weights = (0..fan_out)
                .map(|_| (0..fan_in).map(|_| rng.gen_range(-bound..bound)).collect())
                .collect();
            let activation = config.hidden_layers.get(i).map(|(_, a)| *a);
            layers.push(Layer {
                weights,
                biases: vec![0.0; fan_out],
                activation,
            });
        }
        Ok(Self { config, layers })
    }

    /// Forward pass: affine + activation per hidden layer, linear output.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        if x.len() != self.config.input_dim {
            return Err(NetError::DimensionMismatch {
                expected: self.config.input_dim,
                got: x.len(),
            });
        }
        let mut activ = x.to_vec();
        for layer in &self.layers {
            let mut next = layer.biases.clone();
            for (o, row) in layer.weights.iter().enumerate() {
                next[o] += row.iter().zip(&activ).map(|(w, a)| w * a).sum::<f64>();
            }
            if let Some(act) = layer.activation {
                for z in &mut next {
                    *z = act.apply(*z);
                }
            }
            activ = next;
        }
        Ok(activ)
    }

    /// Backward pass: gradients of `output . upstream` with respect to all
    /// parameters, recomputing the forward pass to cache pre-activations.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<ParamGrads, NetError> {
        if x.len() != self.config.input_dim {
            return Err(NetError::DimensionMismatch {
                expected: self.config.input_dim,
                got: x.len(),
            });
        }
        if upstream.len() != self.config.output_dim {
            return Err(NetError::DimensionMismatch {
                expected: self.config.output_dim,
                got: upstream.len(),
            });
        }
        // Forward with caches.
        let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut preacts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut activ = x.to_vec();
        for layer in &self.layers {
            inputs.push(activ.clone());
            let mut z = layer.biases.clone();
            for (o, row) in layer.weights.iter().enumerate() {
                z[o] += row.iter().zip(&activ).map(|(w, a)| w * a).sum::<f64>();
            }
            preacts.push(z.clone());
            if let Some(act) = layer.activation {
                for v in &mut z {
                    *v = act.apply(*v);
                }
            }
            activ = z;
        }
        // Backward.
        let mut grads = ParamGrads::zeros_like(self);
        let mut delta = upstream.to_vec();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            if let Some(act) = layer.activation {
                for (d, &z) in delta.iter_mut().zip(&preacts[idx]) {
                    *d *= act.derivative(z);
                }
            }
            for (o, row) in layer.weights.iter().enumerate() {
                grads.biases[idx][o] = delta[o];
                for (i, _) in row.iter().enumerate() {
                    grads.weights[idx][o][i] = delta[o] * inputs[idx][i];
                }
            }
            if idx > 0 {
                let mut prev = vec![0.0; layer.in_dim()];
                for (o, row) in layer.weights.iter().enumerate() {
                    for (i, w) in row.iter().enumerate() {
                        prev[i] += w * delta[o];
                    }
                }
                delta = prev;
            }
        }
        Ok(grads)
    }

    pub fn params_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().flatten().all(|v| v.is_finite())
                && l.biases.iter().all(|v| v.is_finite())
        })
    }
}

/// Adam optimizer state with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub first_moment: ParamGrads,
    pub second_moment: ParamGrads,
}

impl AdamState {
    pub fn new(net: &Network, lr: f64) -> Self {
        Self {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            first_moment: ParamGrads::zeros_like(net),
            second_moment: ParamGrads::zeros_like(net),
        }
    }
}

/// One in-place Adam step along `-grads`.
pub fn adam_step(net: &mut Network, adam: &mut AdamState, grads: &ParamGrads) -> Result<(), NetError> {
    if !grads.is_finite() {
        return Err(NetError::NonFinite("gradient passed to adam_step".into()));
    }
    adam.step += 1;
    let t = adam.step as i32;
    let bc1 = 1.0 - adam.beta1.powi(t);
    let bc2 = 1.0 - adam.beta2.powi(t);
    let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
        *m = adam.beta1 * *m + (1.0 - adam.beta1) * g;
        *v = adam.beta2 * *v + (1.0 - adam.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= adam.lr * m_hat / (v_hat.sqrt() + adam.eps);
    };
    for (idx, layer) in net.layers.iter_mut().enumerate() {
        for (o, row) in layer.weights.iter_mut().enumerate() {
            for (i, w) in row.iter_mut().enumerate() {
                update(
                    w,
                    &mut adam.first_moment.weights[idx][o][i],
                    &mut adam.second_moment.weights[idx][o][i],
                    grads.weights[idx][o][i],
                );
            }
        }
        for (o, b) in layer.biases.iter_mut().enumerate() {
            update(
                b,
                &mut adam.first_moment.biases[idx][o],
                &mut adam.second_moment.biases[idx][o],
                grads.biases[idx][o],
            );
        }
    }
    Ok(())
}

/// Per-dimension affine map between a data range and [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub ranges: Vec<(f64, f64)>,
}

impl Scaler {
    pub fn new(ranges: Vec<(f64, f64)>) -> Result<Self, NetError> {
        if ranges.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(NetError::InvalidConfig("scaler needs min < max".into()));
        }
        Ok(Self { ranges })
    }

    pub fn scale(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.ranges)
            .map(|(v, (lo, hi))| 2.0 * (v - lo) / (hi - lo) - 1.0)
            .collect()
    }

    pub fn unscale(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(&self.ranges)
            .map(|(v, (lo, hi))| lo + (v + 1.0) * (hi - lo) / 2.0)
            .collect()
    }
}

/// Checkpoint IO: self-describing JSON, lossless for f64.
pub fn save_network(net: &Network, path: impl AsRef<std::path::Path>) -> Result<(), NetError> {
    let text = serde_json::to_string_pretty(net).map_err(|e| NetError::Checkpoint(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| NetError::Checkpoint(e.to_string()))
}

pub fn load_network(path: impl AsRef<std::path::Path>) -> Result<Network, NetError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| NetError::Checkpoint(e.to_string()))?;
    let net: Network =
        serde_json::from_str(&text).map_err(|e| NetError::Checkpoint(e.to_string()))?;
    net.config.validate()?;
    Ok(net)
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear_net(w: Vec<Vec<f64>>, b: Vec<f64>) -> Network {
        let out = b.len();
        let inp = w[0].len();
        Network {
            config: NetConfig {
                input_dim: inp,
                hidden_layers: vec![],
                output_dim: out,
            },
            layers: vec![Layer {
                weights: w,
                biases: b,
                activation: None,
            }],
        }
    }

    #[test]
    fn zero_net_outputs_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Network::init(
            NetConfig {
                input_dim: 3,
                hidden_layers: vec![(4, Activation::Relu)],
                output_dim: 2,
            },
            &mut rng,
        )
        .unwrap();
        for layer in &mut net.layers {
            for row in &mut layer.weights {
                row.fill(0.0);
            }
            layer.biases.fill(0.0);
        }
        assert_eq!(net.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_linear_layer() {
        let net = linear_net(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]);
        assert_eq!(net.forward(&[0.7, -0.3]).unwrap(), vec![0.7, -0.3]);
    }

    #[test]
    fn two_layer_relu_hand_example() {
        // Hidden: z1 = 1*x1 + 2*x2 + 0.5, z2 = -1*x1 + 1*x2 - 1; relu;
        // output = 2*h1 - 3*h2 + 0.25. For x = (1, 0.5):
        // z1 = 2.5 -> h1 = 2.5; z2 = -1.5 -> h2 = 0; y = 5.25.
        let net = Network {
            config: NetConfig {
                input_dim: 2,
                hidden_layers: vec![(2, Activation::Relu)],
                output_dim: 1,
            },
            layers: vec![
                Layer {
                    weights: vec![vec![1.0, 2.0], vec![-1.0, 1.0]],
                    biases: vec![0.5, -1.0],
                    activation: Some(Activation::Relu),
                },
                Layer {
                    weights: vec![vec![2.0, -3.0]],
                    biases: vec![0.25],
                    activation: None,
                },
            ],
        };
        let y = net.forward(&[1.0, 0.5]).unwrap();
        assert!((y[0] - 5.25).abs() < 1e-15);
    }

    /// Smallest |pre-activation| feeding a kinked activation (relu, selu);
    /// finite differences straddling such a kink are meaningless.
    pub(crate) fn min_kink_distance(net: &Network, x: &[f64]) -> f64 {
        let mut h = x.to_vec();
        let mut min_d = f64::INFINITY;
        for layer in &net.layers {
            let z: Vec<f64> = layer
                .weights
                .iter()
                .zip(&layer.biases)
                .map(|(row, b)| row.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>() + b)
                .collect();
            match layer.activation {
                Some(act) => {
                    if matches!(act, Activation::Relu | Activation::Selu) {
                        for &zi in &z {
                            min_d = min_d.min(zi.abs());
                        }
                    }
                    h = z.iter().map(|&zi| act.apply(zi)).collect();
                }
                None => h = z,
            }
        }
        min_d
    }

    #[test]
    fn backward_matches_finite_differences_fuzzed() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let mut checked = 0;
        while checked < 100 {
            let config = random_config(&mut rng);
            let net = Network::init(config.clone(), &mut rng).unwrap();
            let x: Vec<f64> = (0..config.input_dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            if min_kink_distance(&net, &x) < 1e-4 {
                continue;
            }
            let upstream: Vec<f64> = (0..config.output_dim)
                .map(|_| rng.gen_range(-2.0..2.0))
                .collect();
            let analytic = net.backward(&x, &upstream).unwrap();
            let numeric = finite_difference_grads(&net, &x, &upstream);
            let err = max_relative_error(&analytic, &numeric);
            assert!(err < 1e-5, "relative error {err} for {config:?}");
            checked += 1;
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Network::init(
            NetConfig {
                input_dim: 2,
                hidden_layers: vec![(3, Activation::Softplus)],
                output_dim: 2,
            },
            &mut rng,
        )
        .unwrap();
        let grads = net.backward(&[0.3, -0.8], &[0.0, 0.0]).unwrap();
        assert_eq!(grads, ParamGrads::zeros_like(&net));
    }

    #[test]
    fn softplus_gradient_asymptotics() {
        assert!(Activation::Softplus.derivative(-40.0) < 1e-15);
        assert!((Activation::Softplus.derivative(40.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut net = linear_net(vec![vec![0.5]], vec![0.1]);
        let mut adam = AdamState::new(&net, 0.001);
        let mut grads = ParamGrads::zeros_like(&net);
        grads.weights[0][0][0] = 1.0;
        grads.biases[0][0] = 1.0;
        adam_step(&mut net, &mut adam, &grads).unwrap();
        // Bias-corrected m_hat / sqrt(v_hat) = 1 on the first step.
        assert!((net.layers[0].weights[0][0] - (0.5 - 0.001)).abs() < 1e-9);
        assert!((net.layers[0].biases[0] - (0.1 - 0.001)).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_step_only_advances_counter() {
        let mut net = linear_net(vec![vec![0.5]], vec![0.1]);
        let before = net.clone();
        let mut adam = AdamState::new(&net, 0.01);
        let grads = ParamGrads::zeros_like(&net);
        adam_step(&mut net, &mut adam, &grads).unwrap();
        assert_eq!(net, before);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn adam_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let config = NetConfig {
            input_dim: 2,
            hidden_layers: vec![(3, Activation::Relu)],
            output_dim: 1,
        };
        let net0 = Network::init(config, &mut rng).unwrap();
        let grads = net0.backward(&[0.5, -0.5], &[1.0]).unwrap();
        let mut a = net0.clone();
        let mut b = net0.clone();
        let mut sa = AdamState::new(&a, 0.01);
        let mut sb = AdamState::new(&b, 0.01);
        adam_step(&mut a, &mut sa, &grads).unwrap();
        adam_step(&mut b, &mut sb, &grads).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut net = linear_net(vec![vec![0.5]], vec![0.1]);
        let mut adam = AdamState::new(&net, 0.01);
        let mut grads = ParamGrads::zeros_like(&net);
        grads.weights[0][0][0] = f64::NAN;
        assert!(adam_step(&mut net, &mut adam, &grads).is_err());
    }

    #[test]
    fn scaler_endpoints_and_round_trip() {
        let scaler = Scaler::new(vec![(-2.0, 4.0), (0.0, 1.0)]).unwrap();
        assert_eq!(scaler.scale(&[-2.0, 0.0]), vec![-1.0, -1.0]);
        assert_eq!(scaler.scale(&[4.0, 1.0]), vec![1.0, 1.0]);
        assert_eq!(scaler.scale(&[1.0, 0.5]), vec![0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let x = vec![rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let rt = scaler.unscale(&scaler.scale(&x));
            assert!((rt[0] - x[0]).abs() < 1e-12 && (rt[1] - x[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_fits_affine_function() {
        // y = 2x + 1 over 100 samples reaches MSE < 1e-3 within 5000 steps.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let xs: Vec<f64> = (0..100).map(|i| -1.0 + 2.0 * i as f64 / 99.0).collect();
        let mut net = Network::init(
            NetConfig {
                input_dim: 1,
                hidden_layers: vec![],
                output_dim: 1,
            },
            &mut rng,
        )
        .unwrap();
        let mut adam = AdamState::new(&net, 0.01);
        let mut mse = f64::INFINITY;
        for step in 0..5000 {
            let x = xs[step % xs.len()];
            let y = net.forward(&[x]).unwrap()[0];
            let target = 2.0 * x + 1.0;
            let grads = net.backward(&[x], &[y - target]).unwrap();
            adam_step(&mut net, &mut adam, &grads).unwrap();
            if step % 100 == 0 {
                mse = xs
                    .iter()
                    .map(|&x| (net.forward(&[x]).unwrap()[0] - (2.0 * x + 1.0)).powi(2))
                    .sum::<f64>()
                    / xs.len() as f64;
                if mse < 1e-3 {
                    break;
                }
            }
        }
        assert!(mse < 1e-3, "final MSE {mse}");
    }

    #[test]
    fn init_is_seed_deterministic() {
        let config = NetConfig {
            input_dim: 3,
            hidden_layers: vec![(5, Activation::Selu)],
            output_dim: 2,
        };
        let a = Network::init(config.clone(), &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = Network::init(config, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Network::init(
            NetConfig {
                input_dim: 2,
                hidden_layers: vec![(4, Activation::Softplus), (3, Activation::Relu)],
                output_dim: 2,
            },
            &mut rng,
        )
        .unwrap();
        save_network(&net, &path).unwrap();
        assert_eq!(load_network(&path).unwrap(), net);
    }
}
