use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::layers::{
    dropout_backward, dropout_forward, maxpool_backward, maxpool_forward, relu_backward, relu_forward,
    softmax_cross_entropy, Conv3x3, ConvCache, Dense,
};
use super::NetError;
use crate::augment::rng::{tags, RngStream};
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

/// conv(3x3)-relu-pool, conv(3x3)-relu-pool, dropout, dense.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub conv1: usize,
    pub conv2: usize,
    pub dropout: f64,
    pub classes: usize,
}

impl Architecture {
    /// The desk-scale default: 32 and 64 filters.
    pub fn desk(in_channels: usize, height: usize, width: usize, classes: usize, dropout: f64) -> Self {
        Self { in_channels, height, width, conv1: 32, conv2: 64, dropout, classes }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let dims = [self.in_channels, self.height, self.width, self.conv1, self.conv2, self.classes];
        if dims.contains(&0) {
            return Err(NetError::Architecture(format!("zero-sized dimension in {self:?}")));
        }
        if self.height % 4 != 0 || self.width % 4 != 0 {
            return Err(NetError::Architecture(format!(
                "input {}x{} must be divisible by 4 for two 2x2 pools",
                self.height, self.width
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NetError::Architecture(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn dense_inputs(&self) -> usize {
        self.conv2 * (self.height / 4) * (self.width / 4)
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        (self.in_channels, self.height, self.width)
    }
}

/// Activation taps exposed for analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Probe {
    Relu1,
    Relu2,
    /// Dense pre-activation.
    Logits,
}

impl Probe {
    pub const ALL: [Probe; 3] = [Probe::Relu1, Probe::Relu2, Probe::Logits];

    pub fn name(self) -> &'static str {
        match self {
            Probe::Relu1 => "relu1",
            Probe::Relu2 => "relu2",
            Probe::Logits => "logits",
        }
    }
}

impl fmt::Display for Probe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Probe {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Probe::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| NetError::Argument(format!("unknown layer '{s}' (expected relu1, relu2 or logits)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallCnn<T = f32> {
    pub arch: Architecture,
    pub conv1: Conv3x3<T>,
    pub conv2: Conv3x3<T>,
    pub dense: Dense<T>,
}

/// Parameter tensors in layer order: conv1 weight/bias, conv2 weight/bias,
/// dense weight/bias.
pub const PARAM_NAMES: [&str; 6] = ["conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias", "dense.weight", "dense.bias"];

/// Gradient buffers shaped like the parameters, in [`PARAM_NAMES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T = f32> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Scalar> SmallCnn<T> {
    pub fn zeros(arch: Architecture) -> Result<Self, NetError> {
        arch.validate()?;
        Ok(Self {
            arch,
            conv1: Conv3x3::zeros(arch.in_channels, arch.conv1),
            conv2: Conv3x3::zeros(arch.conv1, arch.conv2),
            dense: Dense::zeros(arch.dense_inputs(), arch.classes),
        })
    }

    /// Normal weights with `std = sqrt(1 / (3 * fan_in))`, the variance of the
    /// usual uniform `±1/sqrt(fan_in)` default, and zero biases. Without batch
    /// norm the ReLU gain of 2 starts the loss far above `ln(classes)` and the
    /// first momentum steps kill most second-layer channels.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self, NetError> {
        let mut net = Self::zeros(arch)?;
        let mut rng = RngStream::derive_tagged(tags::INIT, seed, 0, 0);
        let mut fill = |w: &mut [T], gain: f64, fan_in: usize| {
            let std = (gain / fan_in as f64).sqrt();
            for v in w {
                *v = T::from_f64_lossy(rng.normal() * std);
            }
        };
        fill(&mut net.conv1.weight, 1.0 / 3.0, arch.in_channels * 9);
        fill(&mut net.conv2.weight, 1.0 / 3.0, arch.conv1 * 9);
        fill(&mut net.dense.weight, 1.0 / 3.0, arch.dense_inputs());
        Ok(net)
    }

    pub fn params(&self) -> [&[T]; 6] {
        [&self.conv1.weight, &self.conv1.bias, &self.conv2.weight, &self.conv2.bias, &self.dense.weight, &self.dense.bias]
    }

    pub fn params_mut(&mut self) -> [&mut [T]; 6] {
        [
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
            &mut self.dense.weight,
            &mut self.dense.bias,
        ]
    }

    /// Weight tensors carry weight decay; biases do not.
    pub fn is_weight(param: usize) -> bool {
        param % 2 == 0
    }

    pub fn zero_grads(&self) -> Grads<T> {
        Grads { tensors: self.params().iter().map(|p| vec![T::zero(); p.len()]).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Scalar>(&self) -> SmallCnn<U> {
        let c = |v: &[T]| v.iter().map(|x| U::from_f64_lossy(x.to_f64_lossy())).collect::<Vec<U>>();
        let mut out = SmallCnn::<U>::zeros(self.arch).expect("architecture already validated");
        for (dst, src) in out.params_mut().into_iter().zip(self.params()) {
            dst.copy_from_slice(&c(src));
        }
        out
    }

    fn check_input(&self, batch: &Tensor4<T>) -> Result<(), NetError> {
        let (_, c, h, w) = batch.shape();
        if (c, h, w) != self.arch.input_shape() {
            return Err(NetError::Shape(format!(
                "batch samples are {c}x{h}x{w}, network expects {:?}",
                self.arch.input_shape()
            )));
        }
        if batch.n() == 0 {
            return Err(NetError::Shape("empty batch".into()));
        }
        Ok(())
    }

    fn trace(&self, batch: &Tensor4<T>, train_mode: bool, rng: &mut RngStream, keep_cache: bool) -> Trace<T> {
        let (c1, cache1) = self.conv1.forward(batch, keep_cache);
        let r1 = relu_forward(&c1);
        let (p1, arg1) = maxpool_forward(&r1);
        let (c2, cache2) = self.conv2.forward(&p1, keep_cache);
        let r2 = relu_forward(&c2);
        let (p2, arg2) = maxpool_forward(&r2);
        let (d, mask) = if train_mode && self.arch.dropout > 0.0 {
            let (d, m) = dropout_forward(&p2, self.arch.dropout, rng);
            (d, Some(m))
        } else {
            (p2.clone(), None)
        };
        let logits = self.dense.forward(&d);
        Trace { c1, cache1, r1, arg1, p1, c2, cache2, r2, arg2, p2, mask, d, logits }
    }

    /// Logits `(n, classes, 1, 1)` and the post-activation snapshots.
    /// Dropout runs only in `train_mode`, drawing from `rng`.
    pub fn forward(&self, batch: &Tensor4<T>, train_mode: bool, rng: &mut RngStream) -> Result<ForwardOutput<T>, NetError> {
        self.check_input(batch)?;
        let t = self.trace(batch, train_mode, rng, false);
        Ok(ForwardOutput {
            activations: vec![(Probe::Relu1, t.r1), (Probe::Relu2, t.r2), (Probe::Logits, t.logits.clone())],
            logits: t.logits,
        })
    }

    /// Evaluation-mode logits only.
    pub fn predict(&self, batch: &Tensor4<T>) -> Result<Tensor4<T>, NetError> {
        self.check_input(batch)?;
        Ok(self.trace(batch, false, &mut RngStream::from_seed(0), false).logits)
    }

    /// Mean cross-entropy plus `weight_decay / 2 * sum(w^2)` over weight
    /// tensors, with gradients from backpropagation.
    pub fn loss_and_grads(
        &self,
        batch: &Tensor4<T>,
        labels: &[usize],
        weight_decay: T,
        train_mode: bool,
        rng: &mut RngStream,
    ) -> Result<(T, Grads<T>), NetError> {
        self.loss_grads_logits(batch, labels, weight_decay, train_mode, rng).map(|(l, g, _)| (l, g))
    }

    /// [`Self::loss_and_grads`] that also hands back the forward logits.
    pub(crate) fn loss_grads_logits(
        &self,
        batch: &Tensor4<T>,
        labels: &[usize],
        weight_decay: T,
        train_mode: bool,
        rng: &mut RngStream,
    ) -> Result<(T, Grads<T>, Tensor4<T>), NetError> {
        self.check_input(batch)?;
        if labels.len() != batch.n() {
            return Err(NetError::Shape(format!("{} labels for {} samples", labels.len(), batch.n())));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= self.arch.classes) {
            return Err(NetError::Label { label: l, classes: self.arch.classes });
        }
        let t = self.trace(batch, train_mode, rng, true);
        let (data_loss, dlogits) = softmax_cross_entropy(&t.logits, labels);
        let half = T::from_f64_lossy(0.5);
        let mut decay = T::zero();
        for (i, p) in self.params().iter().enumerate() {
            if Self::is_weight(i) {
                decay += p.iter().map(|&w| w * w).sum::<T>();
            }
        }
        let loss = data_loss + half * weight_decay * decay;
        if !loss.is_finite() {
            return Err(NetError::NonFinite { layer: t.first_non_finite().to_string() });
        }

        let mut grads = self.zero_grads();
        let [g_c1w, g_c1b, g_c2w, g_c2b, g_dw, g_db] = &mut grads.tensors[..] else {
            unreachable!("six parameter tensors")
        };
        let dd = self.dense.backward(&t.d, &dlogits, g_dw, g_db);
        let dp2 = match &t.mask {
            Some(m) => dropout_backward(m, &dd),
            None => dd,
        };
        let dr2 = maxpool_backward(t.r2.shape(), &t.arg2, &dp2);
        let dc2 = relu_backward(&t.r2, &dr2);
        let dp1 = self.conv2.backward(t.cache2.as_ref().expect("cached"), &dc2, g_c2w, g_c2b);
        let dr1 = maxpool_backward(t.r1.shape(), &t.arg1, &dp1);
        let dc1 = relu_backward(&t.r1, &dr1);
        self.conv1.backward(t.cache1.as_ref().expect("cached"), &dc1, g_c1w, g_c1b);

        if weight_decay != T::zero() {
            for (i, (g, p)) in grads.tensors.iter_mut().zip(self.params()).enumerate() {
                if Self::is_weight(i) {
                    for (gv, &w) in g.iter_mut().zip(p) {
                        *gv += weight_decay * w;
                    }
                }
            }
        }
        Ok((loss, grads, t.logits))
    }
}

pub struct ForwardOutput<T> {
    pub logits: Tensor4<T>,
    pub activations: Vec<(Probe, Tensor4<T>)>,
}

impl<T> ForwardOutput<T> {
    pub fn activation(&self, probe: Probe) -> &Tensor4<T> {
        &self.activations.iter().find(|(p, _)| *p == probe).expect("every probe is recorded").1
    }
}

struct Trace<T> {
    c1: Tensor4<T>,
    cache1: Option<ConvCache<T>>,
    r1: Tensor4<T>,
    arg1: Vec<usize>,
    p1: Tensor4<T>,
    c2: Tensor4<T>,
    cache2: Option<ConvCache<T>>,
    r2: Tensor4<T>,
    arg2: Vec<usize>,
    p2: Tensor4<T>,
    mask: Option<Vec<T>>,
    d: Tensor4<T>,
    logits: Tensor4<T>,
}

impl<T: Scalar> Trace<T> {
    fn first_non_finite(&self) -> &'static str {
        let stages: [(&str, &Tensor4<T>); 8] = [
            ("conv1", &self.c1),
            ("relu1", &self.r1),
            ("pool1", &self.p1),
            ("conv2", &self.c2),
            ("relu2", &self.r2),
            ("pool2", &self.p2),
            ("dropout", &self.d),
            ("dense", &self.logits),
        ];
        stages.iter().find(|(_, t)| !t.all_finite()).map_or("loss", |(name, _)| name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Architecture {
        Architecture { in_channels: 3, height: 8, width: 8, conv1: 2, conv2: 3, dropout: 0.5, classes: 4 }
    }

    fn batch(n: usize, seed: u64) -> Tensor4<f64> {
        let mut rng = RngStream::from_seed(seed);
        Tensor4::new(n, 3, 8, 8, (0..n * 192).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn zero_network_gives_uniform_softmax() {
        let arch = Architecture { classes: 10, ..tiny() };
        let net = SmallCnn::<f64>::zeros(arch).unwrap();
        let x = batch(2, 1);
        let out = net.forward(&x, false, &mut RngStream::from_seed(0)).unwrap();
        assert!(out.logits.data().iter().all(|&v| v == 0.0));
        let (loss, _) = net.loss_and_grads(&x, &[3, 7], 0.0, false, &mut RngStream::from_seed(0)).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn dropout_only_in_train_mode() {
        let net = SmallCnn::<f64>::init(tiny(), 3).unwrap();
        let x = batch(3, 2);
        let a = net.forward(&x, false, &mut RngStream::from_seed(1)).unwrap();
        let b = net.forward(&x, false, &mut RngStream::from_seed(2)).unwrap();
        assert_eq!(a.logits, b.logits);
        let t1 = net.forward(&x, true, &mut RngStream::from_seed(1)).unwrap();
        let t2 = net.forward(&x, true, &mut RngStream::from_seed(2)).unwrap();
        assert_ne!(t1.logits, t2.logits);
        assert_eq!(net.predict(&x).unwrap(), a.logits);
        assert_eq!(a.activation(Probe::Relu1).shape(), (3, 2, 8, 8));
        assert_eq!(a.activation(Probe::Relu2).shape(), (3, 3, 4, 4));
        assert_eq!(a.activation(Probe::Logits).shape(), (3, 4, 1, 1));
    }

    #[test]
    fn duplicate_sample_has_same_mean_loss() {
        let net = SmallCnn::<f64>::init(tiny(), 4).unwrap();
        let one = batch(1, 3);
        let two = Tensor4::new(2, 3, 8, 8, [one.data(), one.data()].concat()).unwrap();
        let mut rng = RngStream::from_seed(0);
        let (l1, g1) = net.loss_and_grads(&one, &[2], 0.0, false, &mut rng).unwrap();
        let (l2, g2) = net.loss_and_grads(&two, &[2, 2], 0.0, false, &mut rng).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.tensors.iter().flatten().zip(g2.tensors.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_decay_adds_lambda_w_to_weights_only() {
        let net = SmallCnn::<f64>::init(tiny(), 5).unwrap();
        let x = batch(2, 4);
        let lambda = 5e-4;
        let (l0, g0) = net.loss_and_grads(&x, &[0, 1], 0.0, false, &mut RngStream::from_seed(0)).unwrap();
        let (l1, g1) = net.loss_and_grads(&x, &[0, 1], lambda, false, &mut RngStream::from_seed(0)).unwrap();
        let sq: f64 = [0, 2, 4].iter().flat_map(|&i| net.params()[i].iter()).map(|w| w * w).sum();
        assert!((l1 - l0 - 0.5 * lambda * sq).abs() < 1e-12);
        for (i, p) in net.params().iter().enumerate() {
            for ((a, b), w) in g0.tensors[i].iter().zip(&g1.tensors[i]).zip(p.iter()) {
                let expected = if SmallCnn::<f64>::is_weight(i) { lambda * w } else { 0.0 };
                assert!((b - a - expected).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn input_errors() {
        let net = SmallCnn::<f64>::init(tiny(), 0).unwrap();
        let mut rng = RngStream::from_seed(0);
        let wrong = Tensor4::<f64>::zeros(1, 3, 4, 4);
        assert!(matches!(net.forward(&wrong, false, &mut rng), Err(NetError::Shape(_))));
        let x = batch(2, 0);
        assert!(matches!(net.loss_and_grads(&x, &[0, 4], 0.0, false, &mut rng), Err(NetError::Label { .. })));
        assert!(matches!(net.loss_and_grads(&x, &[0], 0.0, false, &mut rng), Err(NetError::Shape(_))));
        assert!("relu3".parse::<Probe>().is_err());
        assert_eq!("relu2".parse::<Probe>().unwrap(), Probe::Relu2);
    }

    #[test]
    fn non_finite_loss_names_layer() {
        let mut net = SmallCnn::<f64>::init(tiny(), 0).unwrap();
        net.conv2.bias[0] = f64::INFINITY;
        let err = net.loss_and_grads(&batch(1, 0), &[0], 0.0, false, &mut RngStream::from_seed(0)).unwrap_err();
        assert_eq!(err, NetError::NonFinite { layer: "conv2".into() });
    }

    #[test]
    fn architecture_validation() {
        assert!(SmallCnn::<f32>::zeros(Architecture { height: 10, ..tiny() }).is_err());
        assert!(SmallCnn::<f32>::zeros(Architecture { dropout: 1.0, ..tiny() }).is_err());
        assert!(SmallCnn::<f32>::zeros(Architecture { classes: 0, ..tiny() }).is_err());
    }
}
