//! Oracles shared by the integration tests.

#![allow(dead_code)]

use cutout::augment::RngStream;
use cutout::smallnet::{Architecture, SmallCnn};
use cutout::tensor::Tensor4;

pub const STEP: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-3;
/// Re-check step for coordinates whose 1e-4 stencil straddles a ReLU or
/// max-pool kink.
pub const KINK_STEP: f64 = 1e-7;
/// Guards against a detector that flags everything.
pub const MAX_KINK_FRACTION: f64 = 0.25;

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

pub struct Outcome {
    pub worst: f64,
    pub kinks: usize,
    pub coords: usize,
}

impl Outcome {
    pub fn verdict(&self) -> Result<(), String> {
        if !(self.worst < TOLERANCE) {
            return Err(format!("worst relative error {}", self.worst));
        }
        if (self.kinks as f64) > MAX_KINK_FRACTION * self.coords as f64 {
            return Err(format!("{} of {} coordinates needed the kink re-check", self.kinks, self.coords));
        }
        Ok(())
    }

    pub fn assert_ok(&self, what: &str) {
        if let Err(e) = self.verdict() {
            panic!("{what}: {e}");
        }
    }
}

/// Worst relative error over every parameter coordinate.
pub fn check(arch: Architecture, seed: u64, train_mode: bool, weight_decay: f64) -> Outcome {
    let mut rng = RngStream::from_seed(seed);
    // Weights well away from zero keep pre-activations clear of the ReLU and
    // max-pool kinks, which a 1e-4 step could otherwise straddle. Biases are
    // non-zero so every bias path is exercised.
    let mut net = SmallCnn::<f64>::zeros(arch).unwrap();
    for (i, p) in net.params_mut().into_iter().enumerate() {
        let scale = if SmallCnn::<f64>::is_weight(i) { 0.5 } else { 0.1 };
        for v in p.iter_mut() {
            *v = scale * rng.normal();
        }
    }
    let n = 3;
    let len = arch.in_channels * arch.height * arch.width;
    let x = Tensor4::new(n, arch.in_channels, arch.height, arch.width, (0..n * len).map(|_| rng.normal()).collect())
        .unwrap();
    let labels: Vec<usize> = (0..n).map(|i| i % arch.classes).collect();
    let dropout_seed = seed ^ 0xD00D;
    let loss_of = |net: &SmallCnn<f64>| {
        net.loss_and_grads(&x, &labels, weight_decay, train_mode, &mut RngStream::from_seed(dropout_seed))
            .unwrap()
            .0
    };
    let (_, grads) = net
        .loss_and_grads(&x, &labels, weight_decay, train_mode, &mut RngStream::from_seed(dropout_seed))
        .unwrap();

    let center = loss_of(&net);
    let mut out = Outcome { worst: 0.0, kinks: 0, coords: 0 };
    for p in 0..6 {
        for j in 0..net.params()[p].len() {
            let orig = net.params()[p][j];
            let mut at = |h: f64| {
                net.params_mut()[p][j] = orig + h;
                let plus = loss_of(&net);
                net.params_mut()[p][j] = orig - h;
                let minus = loss_of(&net);
                net.params_mut()[p][j] = orig;
                (plus, minus)
            };
            let (plus, minus) = at(STEP);
            let forward = (plus - center) / STEP;
            let backward = (center - minus) / STEP;
            let mut numeric = (plus - minus) / (2.0 * STEP);
            // one-sided slopes of a smooth loss agree to O(step); a wrong
            // gradient on a smooth coordinate is never flagged here and still
            // fails the central comparison
            if relative_error(forward, backward) > TOLERANCE {
                out.kinks += 1;
                let (plus, minus) = at(KINK_STEP);
                numeric = (plus - minus) / (2.0 * KINK_STEP);
            }
            out.coords += 1;
            out.worst = out.worst.max(relative_error(grads.tensors[p][j], numeric));
        }
    }
    out
}

pub fn tiny(dropout: f64) -> Architecture {
    Architecture { in_channels: 3, height: 8, width: 8, conv1: 2, conv2: 2, dropout, classes: 3 }
}

pub fn single_channel() -> Architecture {
    Architecture { in_channels: 1, height: 4, width: 8, conv1: 3, conv2: 4, dropout: 0.0, classes: 5 }
}
