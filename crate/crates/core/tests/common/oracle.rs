//! Exhaustive ReLU phase enumeration, independent of the solver.
//!
//! Under a fixed activation pattern every node is an affine function of the
//! input, so "some input in the region meets the goal" becomes one linear
//! feasibility question per pattern, decided here by Fourier–Motzkin
//! elimination over the (low-dimensional) input space.

use relucert::network::{Network, Norm};

/// `coeffs·x ≤ rhs`
pub type Halfspace = (Vec<f64>, f64);

/// Affine form `coeffs·x + constant`.
#[derive(Clone, Debug)]
struct Affine {
    coeffs: Vec<f64>,
    constant: f64,
}

pub fn fm_feasible(mut cons: Vec<Halfspace>, dim: usize) -> bool {
    const EPS: f64 = 1e-12;
    for k in 0..dim {
        let (mut pos, mut neg, mut rest) = (Vec::new(), Vec::new(), Vec::new());
        for c in cons {
            if c.0[k] > EPS {
                pos.push(c);
            } else if c.0[k] < -EPS {
                neg.push(c);
            } else {
                let mut c = c;
                c.0[k] = 0.0;
                rest.push(c);
            }
        }
        for p in &pos {
            for n in &neg {
                let (sp, sn) = (1.0 / p.0[k], -1.0 / n.0[k]);
                let mut a: Vec<f64> = p.0.iter().zip(&n.0).map(|(x, y)| sp * x + sn * y).collect();
                a[k] = 0.0;
                let mut b = sp * p.1 + sn * n.1;
                let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if scale > 1.0 {
                    a.iter_mut().for_each(|v| *v /= scale);
                    b /= scale;
                }
                rest.push((a, b));
            }
        }
        cons = rest;
    }
    cons.iter().all(|(_, b)| *b >= -1e-9)
}

fn pattern_forms(net: &Network, pattern: &[bool]) -> (Vec<Affine>, Vec<Affine>) {
    let d = net.input_dim();
    let mut prev: Vec<Affine> = (0..d)
        .map(|i| {
            let mut coeffs = vec![0.0; d];
            coeffs[i] = 1.0;
            Affine { coeffs, constant: 0.0 }
        })
        .collect();
    let mut pres = Vec::new();
    let mut idx = 0;
    let last = net.layers().len() - 1;
    for (k, layer) in net.layers().iter().enumerate() {
        let mut cur = Vec::new();
        for (row, b) in layer.weights().iter().zip(layer.biases()) {
            let mut f = Affine { coeffs: vec![0.0; d], constant: *b };
            for (w, p) in row.iter().zip(&prev) {
                for (c, pc) in f.coeffs.iter_mut().zip(&p.coeffs) {
                    *c += w * pc;
                }
                f.constant += w * p.constant;
            }
            if k == last {
                cur.push(f);
                continue;
            }
            pres.push(f.clone());
            let active = pattern[idx];
            idx += 1;
            cur.push(if active { f } else { Affine { coeffs: vec![0.0; d], constant: 0.0 } });
        }
        prev = cur;
    }
    (pres, prev)
}

/// Input region: an L∞ box, optionally intersected with an L1 ball.
pub struct Region {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub l1: Option<(Vec<f64>, f64)>,
}

impl Region {
    pub fn ball(center: &[f64], delta: f64, norm: Norm) -> Self {
        Region {
            lower: center.iter().map(|c| c - delta).collect(),
            upper: center.iter().map(|c| c + delta).collect(),
            l1: (norm == Norm::L1).then(|| (center.to_vec(), delta)),
        }
    }

    fn halfspaces(&self) -> Vec<Halfspace> {
        let d = self.lower.len();
        let mut out = Vec::new();
        for i in 0..d {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            out.push((e.clone(), self.upper[i]));
            e[i] = -1.0;
            out.push((e, -self.lower[i]));
        }
        if let Some((c, delta)) = &self.l1 {
            for signs in 0u32..(1 << d) {
                let s: Vec<f64> = (0..d).map(|i| if signs >> i & 1 == 1 { -1.0 } else { 1.0 }).collect();
                let rhs = delta + s.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
                out.push((s, rhs));
            }
        }
        out
    }
}

/// Whether some input in `region` has `Σ goal[o]·y[o] ≥ rhs`, by enumerating all 2ⁿ patterns.
pub fn exists_input(net: &Network, region: &Region, goal: &[(usize, f64)], rhs: f64) -> bool {
    exists_input_constrained(net, region, goal, rhs, &[])
}

/// As `exists_input`, with extra input halfspaces.
pub fn exists_input_constrained(
    net: &Network,
    region: &Region,
    goal: &[(usize, f64)],
    rhs: f64,
    extra: &[Halfspace],
) -> bool {
    let n = net.relu_count();
    let d = net.input_dim();
    let mut base = region.halfspaces();
    base.extend_from_slice(extra);
    (0u64..(1u64 << n)).any(|mask| {
        let pattern: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        let (pres, outs) = pattern_forms(net, &pattern);
        let mut cons = base.clone();
        for (f, &active) in pres.iter().zip(&pattern) {
            if active {
                // −pre ≤ 0
                cons.push((f.coeffs.iter().map(|c| -c).collect(), f.constant));
            } else {
                cons.push((f.coeffs.clone(), -f.constant));
            }
        }
        // −Σ g·y ≤ −rhs
        let mut a = vec![0.0; d];
        let mut constant = 0.0;
        for &(o, g) in goal {
            for (ai, c) in a.iter_mut().zip(&outs[o].coeffs) {
                *ai -= g * c;
            }
            constant += g * outs[o].constant;
        }
        cons.push((a, constant - rhs));
        fm_feasible(cons, d)
    })
}
