use ndarray::{linalg::general_mat_mul, Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu { slope: f64 },
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub const fn leaky_relu() -> Self {
        Activation::LeakyRelu { slope: 0.2 }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative in terms of the pre-activation `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fully connected layer `y = act(x W + b)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
    #[serde(skip)]
    grad_weight: Option<Array2<f64>>,
    #[serde(skip)]
    grad_bias: Option<Array1<f64>>,
    #[serde(skip)]
    cache: Option<LayerCache>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Array2<f64>,
    pre: Array2<f64>,
    output: Array2<f64>,
}

impl PartialEq for Dense {
    fn eq(&self, other: &Self) -> bool {
        self.weight == other.weight
            && self.bias == other.bias
            && self.activation == other.activation
    }
}

impl Dense {
    pub fn new(weight: Array2<f64>, bias: Array1<f64>, activation: Activation) -> Result<Self> {
        if weight.ncols() != bias.len() {
            return Err(Error::Shape(format!(
                "weight {:?} and bias {} disagree",
                weight.dim(),
                bias.len()
            )));
        }
        Ok(Dense {
            weight,
            bias,
            activation,
            grad_weight: None,
            grad_bias: None,
            cache: None,
        })
    }

    /// Uniform init in ±1/√fan_in.
    pub fn random<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (inputs.max(1) as f64).sqrt();
        let weight = Array2::from_shape_fn((inputs, outputs), |_| rng.random_range(-bound..bound));
        let bias = Array1::from_shape_fn(outputs, |_| rng.random_range(-bound..bound));
        Dense::new(weight, bias, activation).expect("shapes agree by construction")
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    fn pre_activation(&self, input: &Array2<f64>) -> Array2<f64> {
        let mut pre = Array2::zeros((input.nrows(), self.outputs()));
        general_mat_mul(1.0, input, &self.weight, 0.0, &mut pre);
        pre += &self.bias;
        pre
    }
}

/// A stack of dense layers with cached activations for backprop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<Dense>,
}

impl DenseNet {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].outputs() != w[1].inputs() {
                return Err(Error::Shape(format!(
                    "layer output {} feeds layer input {}",
                    w[0].outputs(),
                    w[1].inputs()
                )));
            }
        }
        Ok(DenseNet { layers })
    }

    /// Builds `dims[0] -> dims[1] -> ... -> dims[last]` with `hidden` on every
    /// layer except the last, which uses `output`.
    pub fn mlp<R: Rng + ?Sized>(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Shape("need at least input and output dims".into()));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::random(w[0], w[1], if i == last { output } else { hidden }, rng))
            .collect();
        DenseNet::new(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, input: &Array2<f64>) -> Result<()> {
        if input.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, network expects {}",
                input.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Forward pass that keeps every layer's input and output for backprop.
    pub fn forward(&mut self, input: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(input)?;
        let mut x = input.clone();
        for layer in &mut self.layers {
            let pre = layer.pre_activation(&x);
            let act = layer.activation;
            let out = pre.mapv(|v| act.apply(v));
            layer.cache = Some(LayerCache {
                input: x,
                pre,
                output: out.clone(),
            });
            x = out;
        }
        ensure_finite(&x, "network output")?;
        Ok(x)
    }

    /// Forward pass without caching.
    pub fn infer(&self, input: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(input)?;
        let mut x = input.clone();
        for layer in &self.layers {
            let act = layer.activation;
            x = layer.pre_activation(&x).mapv(|v| act.apply(v));
        }
        ensure_finite(&x, "network output")?;
        Ok(x)
    }

    /// Forward pass without caching, stopping after layer `last`.
    pub fn infer_through(&self, input: &Array2<f64>, last: usize) -> Result<Array2<f64>> {
        self.check_input(input)?;
        if last >= self.layers.len() {
            return Err(Error::Shape(format!("no layer {last}")));
        }
        let mut x = input.clone();
        for layer in &self.layers[..=last] {
            let act = layer.activation;
            x = layer.pre_activation(&x).mapv(|v| act.apply(v));
        }
        ensure_finite(&x, "network activations")?;
        Ok(x)
    }

    /// Cached output of layer `index` from the last [`forward`](Self::forward).
    pub fn layer_output(&self, index: usize) -> Result<&Array2<f64>> {
        self.layers
            .get(index)
            .and_then(|l| l.cache.as_ref())
            .map(|c| &c.output)
            .ok_or(Error::NoForwardCache)
    }

    /// Backprop from the network output. Parameter gradients accumulate;
    /// returns the gradient with respect to the input.
    pub fn backward(&mut self, upstream: &Array2<f64>) -> Result<Array2<f64>> {
        self.backward_with(Some(upstream), &[])
    }

    /// Backprop with optional extra gradients injected at hidden-layer
    /// outputs (`(layer index, dL/d output)`).
    pub fn backward_with(
        &mut self,
        upstream: Option<&Array2<f64>>,
        injected: &[(usize, &Array2<f64>)],
    ) -> Result<Array2<f64>> {
        let n_layers = self.layers.len();
        let first = self.layers[n_layers - 1]
            .cache
            .as_ref()
            .ok_or(Error::NoForwardCache)?;
        let mut grad = match upstream {
            Some(g) => {
                if g.dim() != first.output.dim() {
                    return Err(Error::Shape(format!(
                        "upstream gradient {:?} vs output {:?}",
                        g.dim(),
                        first.output.dim()
                    )));
                }
                g.clone()
            }
            None => Array2::zeros(first.output.dim()),
        };
        for idx in (0..n_layers).rev() {
            for (at, g) in injected {
                if *at == idx {
                    grad += *g;
                }
            }
            let layer = &mut self.layers[idx];
            let cache = layer.cache.as_ref().ok_or(Error::NoForwardCache)?;
            let act = layer.activation;
            let mut delta = grad;
            ndarray::Zip::from(&mut delta)
                .and(&cache.pre)
                .and(&cache.output)
                .for_each(|d, &x, &y| *d *= act.derivative(x, y));
            let gw = layer
                .grad_weight
                .get_or_insert_with(|| Array2::zeros(layer.weight.dim()));
            general_mat_mul(1.0, &cache.input.t(), &delta, 1.0, gw);
            let gb = layer
                .grad_bias
                .get_or_insert_with(|| Array1::zeros(layer.bias.len()));
            *gb += &delta.sum_axis(Axis(0));
            let mut next = Array2::zeros(cache.input.dim());
            general_mat_mul(1.0, &delta, &layer.weight.t(), 0.0, &mut next);
            grad = next;
        }
        Ok(grad)
    }

    pub fn zero_grad(&mut self) {
        for l in &mut self.layers {
            if let Some(g) = l.grad_weight.as_mut() {
                g.fill(0.0);
            }
            if let Some(g) = l.grad_bias.as_mut() {
                g.fill(0.0);
            }
        }
    }

    /// Drops cached activations, e.g. before cloning a trained net for
    /// inference.
    pub fn clear_cache(&mut self) {
        for l in &mut self.layers {
            l.cache = None;
        }
    }

    /// Flattened parameters, layer by layer: weights row-major then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    /// Accumulated gradients in the same order as [`params`](Self::params).
    pub fn grads(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            match &l.grad_weight {
                Some(g) => out.extend(g.iter()),
                None => out.extend(std::iter::repeat(0.0).take(l.weight.len())),
            }
            match &l.grad_bias {
                Some(g) => out.extend(g.iter()),
                None => out.extend(std::iter::repeat(0.0).take(l.bias.len())),
            }
        }
        out
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                values.len(),
                self.n_params()
            )));
        }
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        Ok(())
    }

    /// Mutable views of every parameter tensor paired with its gradient.
    pub(crate) fn param_grad_pairs(&mut self) -> Vec<(&mut [f64], &[f64])> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            let gw = l
                .grad_weight
                .get_or_insert_with(|| Array2::zeros(l.weight.dim()));
            let gb = l
                .grad_bias
                .get_or_insert_with(|| Array1::zeros(l.bias.len()));
            out.push((
                l.weight.as_slice_mut().expect("standard layout"),
                gw.as_slice().expect("standard layout") as &[f64],
            ));
            out.push((
                l.bias.as_slice_mut().expect("standard layout"),
                gb.as_slice().expect("standard layout") as &[f64],
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let net: DenseNet = serde_json::from_str(text)?;
        DenseNet::new(net.layers)
    }
}

pub fn ensure_finite(values: &Array2<f64>, what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradcheck::{assert_close, numeric_gradient};
    use ndarray::{arr1, arr2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer_passes_through() {
        let layer = Dense::new(Array2::eye(3), Array1::zeros(3), Activation::Identity).unwrap();
        let mut net = DenseNet::new(vec![layer]).unwrap();
        let x = arr2(&[[1.0, -2.0, 3.5], [0.0, 4.0, -1.0]]);
        assert_eq!(net.forward(&x).unwrap(), x);
    }

    #[test]
    fn zero_input_zero_bias_relu() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net =
            DenseNet::mlp(&[4, 8, 3], Activation::Relu, Activation::Relu, &mut rng).unwrap();
        let zeroed: Vec<Dense> = net
            .layers()
            .iter()
            .map(|l| {
                Dense::new(l.weight.clone(), Array1::zeros(l.outputs()), l.activation).unwrap()
            })
            .collect();
        net = DenseNet::new(zeroed).unwrap();
        assert!(net
            .forward(&Array2::zeros((5, 4)))
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    /// Straightforward triple-loop forward pass, written independently of the
    /// matrix routines.
    fn reference_forward(net: &DenseNet, x: &Array2<f64>) -> Array2<f64> {
        let mut cur: Vec<Vec<f64>> = x.outer_iter().map(|r| r.to_vec()).collect();
        for l in net.layers() {
            cur = cur
                .iter()
                .map(|row| {
                    (0..l.outputs())
                        .map(|j| {
                            let mut s = l.bias[j];
                            for (i, v) in row.iter().enumerate() {
                                s += v * l.weight[[i, j]];
                            }
                            match l.activation {
                                Activation::LeakyRelu { slope } => {
                                    if s > 0.0 {
                                        s
                                    } else {
                                        slope * s
                                    }
                                }
                                Activation::Relu => s.max(0.0),
                                Activation::Tanh => s.tanh(),
                                Activation::Sigmoid => 1.0 / (1.0 + (-s).exp()),
                                Activation::Identity => s,
                            }
                        })
                        .collect()
                })
                .collect();
        }
        let cols = cur[0].len();
        Array2::from_shape_vec((cur.len(), cols), cur.concat()).unwrap()
    }

    #[test]
    fn matches_reference_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = DenseNet::new(vec![
            Dense::random(6, 9, Activation::leaky_relu(), &mut rng),
            Dense::random(9, 7, Activation::Tanh, &mut rng),
            Dense::random(7, 4, Activation::Sigmoid, &mut rng),
        ])
        .unwrap();
        let x = Array2::from_shape_fn((11, 6), |_| rng.random_range(-2.0..2.0));
        let a = net.infer(&x).unwrap();
        let b = reference_forward(&net, &x);
        for (u, v) in a.iter().zip(b.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    fn loss_of(net: &DenseNet, x: &Array2<f64>, weights: &Array2<f64>) -> f64 {
        (net.infer(x).unwrap() * weights).sum()
    }

    #[test]
    fn gradients_match_finite_differences_for_every_activation() {
        let acts = [
            Activation::leaky_relu(),
            Activation::Relu,
            Activation::Tanh,
            Activation::Sigmoid,
            Activation::Identity,
        ];
        for (k, act) in acts.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(10 + k as u64);
            let mut net = DenseNet::mlp(&[5, 6, 3], *act, Activation::Identity, &mut rng).unwrap();
            let x = Array2::from_shape_fn((7, 5), |_| rng.random_range(-1.5..1.5));
            let w = Array2::from_shape_fn((7, 3), |_| rng.random_range(-1.0..1.0));
            net.zero_grad();
            net.forward(&x).unwrap();
            let gin = net.backward(&w).unwrap();
            let analytic = net.grads();
            let base = net.params();
            let probes: Vec<usize> = (0..64).map(|_| rng.random_range(0..base.len())).collect();
            for &p in &probes {
                let fd = numeric_gradient(
                    |v| {
                        let mut params = base.clone();
                        params[p] = v;
                        let mut probe = net.clone();
                        probe.set_params(&params).unwrap();
                        loss_of(&probe, &x, &w)
                    },
                    base[p],
                );
                assert_close(analytic[p], fd, &format!("{act:?} param {p}"));
            }
            // input gradient too
            for (r, c) in [(0, 0), (3, 2), (6, 4)] {
                let fd = numeric_gradient(
                    |v| {
                        let mut xx = x.clone();
                        xx[[r, c]] = v;
                        loss_of(&net, &xx, &w)
                    },
                    x[[r, c]],
                );
                assert_close(gin[[r, c]], fd, &format!("{act:?} input"));
            }
        }
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net =
            DenseNet::mlp(&[3, 4, 2], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let x = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
        net.forward(&x).unwrap();
        net.backward(&Array2::zeros((4, 2))).unwrap();
        assert!(net.grads().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn tanh_slope_at_zero_is_one() {
        let layer = Dense::new(arr2(&[[1.0]]), arr1(&[0.0]), Activation::Tanh).unwrap();
        let mut net = DenseNet::new(vec![layer]).unwrap();
        net.forward(&arr2(&[[0.0]])).unwrap();
        let g = net.backward(&arr2(&[[0.7]])).unwrap();
        assert!((g[[0, 0]] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn backward_needs_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net =
            DenseNet::mlp(&[2, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        assert!(matches!(
            net.backward(&Array2::zeros((1, 2))),
            Err(Error::NoForwardCache)
        ));
    }

    #[test]
    fn shape_mismatch_is_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net =
            DenseNet::mlp(&[3, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        assert!(matches!(
            net.forward(&Array2::zeros((1, 4))),
            Err(Error::Shape(_))
        ));
        let bad = vec![
            Dense::random(3, 4, Activation::Relu, &mut rng),
            Dense::random(5, 1, Activation::Relu, &mut rng),
        ];
        assert!(DenseNet::new(bad).is_err());
    }

    #[test]
    fn nan_output_is_error() {
        let layer = Dense::new(arr2(&[[1.0]]), arr1(&[0.0]), Activation::Identity).unwrap();
        let net = DenseNet::new(vec![layer]).unwrap();
        assert!(matches!(
            net.infer(&arr2(&[[f64::NAN]])),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn checkpoint_reload_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = DenseNet::mlp(
            &[5, 16, 16, 3],
            Activation::leaky_relu(),
            Activation::Tanh,
            &mut rng,
        )
        .unwrap();
        let back = DenseNet::from_json(&net.to_json().unwrap()).unwrap();
        let x = Array2::from_shape_fn((9, 5), |_| rng.random_range(-3.0..3.0));
        let (a, b) = (net.infer(&x).unwrap(), back.infer(&x).unwrap());
        for (u, v) in a.iter().zip(b.iter()) {
            assert!((u - v).abs() <= 1e-12);
        }
        assert_eq!(net, back);
    }

    #[test]
    fn injected_hidden_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut net = DenseNet::mlp(
            &[3, 5, 4, 1],
            Activation::leaky_relu(),
            Activation::Identity,
            &mut rng,
        )
        .unwrap();
        let x = Array2::from_shape_fn((6, 3), |_| rng.random_range(-1.0..1.0));
        let w_hidden = Array2::from_shape_fn((6, 4), |_| rng.random_range(-1.0..1.0));
        // loss = sum(w_hidden * layer1 output)
        net.zero_grad();
        net.forward(&x).unwrap();
        net.backward_with(None, &[(1, &w_hidden)]).unwrap();
        let analytic = net.grads();
        let base = net.params();
        for p in (0..base.len()).step_by(3) {
            let fd = numeric_gradient(
                |v| {
                    let mut params = base.clone();
                    params[p] = v;
                    let mut probe = net.clone();
                    probe.set_params(&params).unwrap();
                    probe.forward(&x).unwrap();
                    (probe.layer_output(1).unwrap() * &w_hidden).sum()
                },
                base[p],
            );
            assert_close(analytic[p], fd, "hidden injection");
        }
    }
}
