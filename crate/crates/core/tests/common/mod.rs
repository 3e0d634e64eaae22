#![allow(dead_code)]

pub mod oracle;
pub mod rational;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use oracle::{exists_input, Region};
use relucert::network::{Classification, Hyperbox, Network, Norm};

/// Random classifier with 2–3 weight layers, 4–12 ReLUs, weights in [−1, 1].
pub fn random_classifier(rng: &mut ChaCha8Rng, input_dim: usize) -> Network {
    let outputs = rng.random_range(2..=4);
    let sizes = if rng.random_bool(0.5) {
        vec![input_dim, rng.random_range(4..=12), outputs]
    } else {
        let a = rng.random_range(2..=6);
        let b = rng.random_range((4usize.saturating_sub(a)).max(2)..=(12 - a).min(6));
        vec![input_dim, a, b, outputs]
    };
    Network::random(rng, &sizes, 1.0).unwrap()
}

/// A point in [−1, 1]^d with a unique label.
pub fn labelled_point(rng: &mut ChaCha8Rng, net: &Network) -> (Vec<f64>, usize) {
    loop {
        let x: Vec<f64> = (0..net.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        if let Classification::Label(l) = net.classify(&x).unwrap() {
            return (x, l);
        }
    }
}

/// One local-label instance of the oracle-equivalence suite.
pub struct LocalCase {
    pub net: Network,
    pub x0: Vec<f64>,
    pub label: usize,
    pub delta: f64,
}

pub fn local_suite(seed: u64, count: usize) -> Vec<LocalCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let deltas = [0.05, 0.2, 1.0];
    (0..count)
        .map(|i| {
            let net = random_classifier(&mut rng, 2);
            let (x0, label) = labelled_point(&mut rng, &net);
            LocalCase { net, x0, label, delta: deltas[i % 3] }
        })
        .collect()
}

/// Exhaustive-oracle answer to "some other label reaches `y_ℓ ≥ y_label + margin` in the ball".
pub fn label_violated(net: &Network, x0: &[f64], label: usize, delta: f64, norm: Norm, margin: f64) -> bool {
    let region = Region::ball(x0, delta, norm);
    net.labels().filter(|&l| l != label).any(|l| exists_input(net, &region, &[(l, 1.0), (label, -1.0)], margin))
}

/// Exhaustive-oracle answer to "some confidence moves by at least `eps` in the ball".
pub fn confidence_violated(net: &Network, x0: &[f64], delta: f64, eps: f64, norm: Norm) -> bool {
    let region = Region::ball(x0, delta, norm);
    let y0 = net.evaluate(x0).unwrap();
    net.labels().any(|l| {
        exists_input(net, &region, &[(l, 1.0)], y0[l] + eps) || exists_input(net, &region, &[(l, -1.0)], -y0[l] + eps)
    })
}

/// Regular grid with `steps` intervals per axis, including both ends.
pub fn grid(b: &Hyperbox, steps: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for i in 0..b.dim() {
        let axis: Vec<f64> =
            (0..=steps).map(|k| b.lower()[i] + b.width(i) * k as f64 / steps as f64).collect();
        out = out.iter().flat_map(|p| axis.iter().map(move |&v| [p.as_slice(), &[v]].concat())).collect();
    }
    out
}
