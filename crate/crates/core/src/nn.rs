//! Minimal dense layers with hand-written backpropagation, plus SGD and Adam.

use rand::Rng;

use crate::error::{GenexError, Result};

/// Fully connected layer `y = x W + b`, `W` stored row-major as
/// `input x output`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrad {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl DenseGrad {
    pub fn zeros_like(layer: &Dense) -> Self {
        DenseGrad {
            w: vec![0.0; layer.w.len()],
            b: vec![0.0; layer.b.len()],
        }
    }

    pub fn clear(&mut self) {
        self.w.iter_mut().for_each(|g| *g = 0.0);
        self.b.iter_mut().for_each(|g| *g = 0.0);
    }
}

impl Dense {
    /// Uniform in `±1/sqrt(fan_in)` for weights and biases.
    pub fn init(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len).map(|_| rng.random_range(-bound..bound)).collect()
        };
        let w = draw(input * output);
        let b = draw(output);
        Dense { input, output, w, b }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Dense {
            input,
            output,
            w: vec![0.0; input * output],
            b: vec![0.0; output],
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.output..(i + 1) * self.output]
    }

    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.input);
        out.copy_from_slice(&self.b);
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                let row = self.row(i);
                out.iter_mut().zip(row).for_each(|(o, w)| *o += xi * w);
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.output];
        self.forward(x, &mut out);
        out
    }

    /// Accumulates parameter gradients for upstream gradient `dout`, and
    /// writes the input gradient into `dx` when requested.
    pub fn backward(&self, x: &[f64], dout: &[f64], grad: &mut DenseGrad, dx: Option<&mut [f64]>) {
        for (gb, d) in grad.b.iter_mut().zip(dout) {
            *gb += d;
        }
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                let g = &mut grad.w[i * self.output..(i + 1) * self.output];
                g.iter_mut().zip(dout).for_each(|(g, d)| *g += xi * d);
            }
        }
        if let Some(dx) = dx {
            for (i, dxi) in dx.iter_mut().enumerate() {
                *dxi = self.row(i).iter().zip(dout).map(|(w, d)| w * d).sum();
            }
        }
    }
}

pub fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Sgd { lr: f64 },
    Adam { lr: f64 },
}

impl OptimizerKind {
    pub fn parse(name: &str, lr: f64) -> Result<Self> {
        match name {
            "sgd" => Ok(OptimizerKind::Sgd { lr }),
            "adam" => Ok(OptimizerKind::Adam { lr }),
            other => Err(GenexError::invalid(format!("unknown optimizer {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd { .. } => "sgd",
            OptimizerKind::Adam { .. } => "adam",
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerKind::Sgd { lr } | OptimizerKind::Adam { lr } => lr,
        }
    }
}

/// Stateful optimizer over an ordered list of parameter slices. The slice
/// layout must not change between steps.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    t: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Optimizer {
            kind,
            first: Vec::new(),
            second: Vec::new(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        debug_assert_eq!(params.len(), grads.len());
        match self.kind {
            OptimizerKind::Sgd { lr } => {
                for (p, g) in params.into_iter().zip(grads) {
                    p.iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g);
                }
            }
            OptimizerKind::Adam { lr } => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                if self.first.is_empty() {
                    self.first = grads.iter().map(|g| vec![0.0; g.len()]).collect();
                    self.second = grads.iter().map(|g| vec![0.0; g.len()]).collect();
                }
                self.t += 1;
                let c1 = 1.0 - B1.powi(self.t);
                let c2 = 1.0 - B2.powi(self.t);
                for (((p, g), m), v) in params
                    .into_iter()
                    .zip(grads)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    for i in 0..p.len() {
                        m[i] = B1 * m[i] + (1.0 - B1) * g[i];
                        v[i] = B2 * v[i] + (1.0 - B2) * g[i] * g[i];
                        p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
                    }
                }
            }
        }
    }
}

/// Text encoding of a layer: a header line, one line per weight row, then
/// the bias line. Values use shortest round-trip formatting.
pub(crate) fn write_dense(out: &mut String, name: &str, layer: &Dense) {
    out.push_str(&format!("layer {name} {} {}\n", layer.input, layer.output));
    let fmt_row = |row: &[f64]| row.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ");
    for i in 0..layer.input {
        out.push_str(&fmt_row(layer.row(i)));
        out.push('\n');
    }
    out.push_str(&fmt_row(&layer.b));
    out.push('\n');
}

pub(crate) fn read_dense<'a>(lines: &mut impl Iterator<Item = &'a str>, name: &str) -> Result<Dense> {
    let bad = |m: String| GenexError::format("checkpoint", m);
    let header = lines.next().ok_or_else(|| bad(format!("missing layer {name}")))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "layer" || parts[1] != name {
        return Err(bad(format!("expected layer {name}, found {header:?}")));
    }
    let input: usize = parts[2].parse().map_err(|_| bad(header.to_string()))?;
    let output: usize = parts[3].parse().map_err(|_| bad(header.to_string()))?;
    let mut parse_row = |expected: usize| -> Result<Vec<f64>> {
        let line = lines.next().ok_or_else(|| bad(format!("truncated layer {name}")))?;
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| bad(format!("bad value {t:?}"))))
            .collect::<Result<_>>()?;
        if row.len() != expected {
            return Err(bad(format!("layer {name}: row of {} values, expected {expected}", row.len())));
        }
        Ok(row)
    };
    let mut w = Vec::with_capacity(input * output);
    for _ in 0..input {
        w.extend(parse_row(output)?);
    }
    let b = parse_row(output)?;
    Ok(Dense { input, output, w, b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_forward_backward_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = Dense::init(3, 2, &mut rng);
        let x = [0.5, -1.0, 2.0];
        let y = layer.apply(&x);
        for o in 0..2 {
            let manual = layer.b[o] + (0..3).map(|i| x[i] * layer.w[i * 2 + o]).sum::<f64>();
            assert!((y[o] - manual).abs() < 1e-12);
        }
        let mut g = DenseGrad::zeros_like(&layer);
        let mut dx = [0.0; 3];
        layer.backward(&x, &[1.0, 0.0], &mut g, Some(&mut dx));
        assert_eq!(g.b, vec![1.0, 0.0]);
        assert_eq!(dx[1], layer.w[2]);
        assert!(layer.w.iter().all(|w| w.abs() <= 1.0 / 3f64.sqrt()));
    }

    #[test]
    fn softmax_is_normalized() {
        let p = softmax(&[1000.0, 1000.0, -5.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p[0] - 0.5).abs() < 1e-9);
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn optimizers_descend_a_quadratic() {
        for kind in [OptimizerKind::Sgd { lr: 0.1 }, OptimizerKind::Adam { lr: 0.1 }] {
            let mut opt = Optimizer::new(kind);
            let mut p = vec![3.0, -2.0];
            for _ in 0..500 {
                let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
                opt.step(vec![&mut p[..]], vec![&g[..]]);
            }
            assert!(p.iter().all(|x| x.abs() < 1e-2), "{kind:?}: {p:?}");
        }
    }

    #[test]
    fn dense_text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = Dense::init(4, 3, &mut rng);
        let mut s = String::new();
        write_dense(&mut s, "x", &layer);
        let back = read_dense(&mut s.lines(), "x").unwrap();
        assert_eq!(back, layer);
        assert!(read_dense(&mut s.lines(), "y").is_err());
    }
}
