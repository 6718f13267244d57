use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{GenexError, Result};
use crate::features::{FeatureSet, MaskedInput};
use crate::nn::{relu_in_place, Dense, DenseGrad};

/// Log-variance is clamped here before exponentiation.
const MAX_LOGVAR: f64 = 20.0;

/// Default KL weight for `n` features.
pub fn default_beta(n: usize) -> f64 {
    std::f64::consts::SQRT_2 / 100.0 * n as f64
}

/// Conditional β-VAE: the encoder reads a masked input `[values, mask]`,
/// the decoder maps a latent draw to unit-variance Gaussian means over all
/// `n` features.
#[derive(Clone, Debug, PartialEq)]
pub struct VaeGenerator {
    pub n: usize,
    pub hidden: usize,
    pub latent: usize,
    pub beta: f64,
    pub enc: Dense,
    pub enc_mu: Dense,
    pub enc_logvar: Dense,
    pub dec: Dense,
    pub dec_out: Dense,
}

#[derive(Clone, Debug)]
pub struct VaeGrad {
    pub enc: DenseGrad,
    pub enc_mu: DenseGrad,
    pub enc_logvar: DenseGrad,
    pub dec: DenseGrad,
    pub dec_out: DenseGrad,
}

impl VaeGrad {
    pub fn zeros_like(g: &VaeGenerator) -> Self {
        VaeGrad {
            enc: DenseGrad::zeros_like(&g.enc),
            enc_mu: DenseGrad::zeros_like(&g.enc_mu),
            enc_logvar: DenseGrad::zeros_like(&g.enc_logvar),
            dec: DenseGrad::zeros_like(&g.dec),
            dec_out: DenseGrad::zeros_like(&g.dec_out),
        }
    }

    pub fn clear(&mut self) {
        for g in [
            &mut self.enc,
            &mut self.enc_mu,
            &mut self.enc_logvar,
            &mut self.dec,
            &mut self.dec_out,
        ] {
            g.clear();
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(10);
        for g in [&self.enc, &self.enc_mu, &self.enc_logvar, &self.dec, &self.dec_out] {
            out.push(&g.w[..]);
            out.push(&g.b[..]);
        }
        out
    }
}

/// Intermediate values of one reparameterized pass, kept for backprop.
#[derive(Clone, Debug)]
pub struct SampleTrace {
    pub enc_pre: Vec<f64>,
    pub enc_act: Vec<f64>,
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
    pub eps: Vec<f64>,
    pub z: Vec<f64>,
    pub dec_pre: Vec<f64>,
    pub dec_act: Vec<f64>,
    pub out: Vec<f64>,
}

impl VaeGenerator {
    pub fn new(n: usize, hidden: usize, latent: usize, beta: f64, rng: &mut impl Rng) -> Self {
        VaeGenerator {
            n,
            hidden,
            latent,
            beta,
            enc: Dense::init(2 * n, hidden, rng),
            enc_mu: Dense::init(hidden, latent, rng),
            enc_logvar: Dense::init(hidden, latent, rng),
            dec: Dense::init(latent, hidden, rng),
            dec_out: Dense::init(hidden, n, rng),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(10);
        for l in [
            &mut self.enc,
            &mut self.enc_mu,
            &mut self.enc_logvar,
            &mut self.dec,
            &mut self.dec_out,
        ] {
            out.push(&mut l.w[..]);
            out.push(&mut l.b[..]);
        }
        out
    }

    pub fn draw_noise(&self, rng: &mut impl Rng) -> Vec<f64> {
        (0..self.latent).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// Reparameterized pass `z = μ + σ ⊙ eps` for an encoded condition.
    pub fn forward(&self, cond: &[f64], eps: &[f64]) -> SampleTrace {
        let enc_pre = self.enc.apply(cond);
        let mut enc_act = enc_pre.clone();
        relu_in_place(&mut enc_act);
        let mu = self.enc_mu.apply(&enc_act);
        let logvar = self.enc_logvar.apply(&enc_act);
        let z: Vec<f64> = mu
            .iter()
            .zip(&logvar)
            .zip(eps)
            .map(|((m, lv), e)| m + (0.5 * lv.min(MAX_LOGVAR)).exp() * e)
            .collect();
        let dec_pre = self.dec.apply(&z);
        let mut dec_act = dec_pre.clone();
        relu_in_place(&mut dec_act);
        let out = self.dec_out.apply(&dec_act);
        SampleTrace {
            enc_pre,
            enc_act,
            mu,
            logvar,
            eps: eps.to_vec(),
            z,
            dec_pre,
            dec_act,
            out,
        }
    }

    pub fn kl(&self, trace: &SampleTrace) -> f64 {
        0.5 * trace
            .mu
            .iter()
            .zip(&trace.logvar)
            .map(|(m, lv)| m * m + lv.min(MAX_LOGVAR).exp() - 1.0 - lv)
            .sum::<f64>()
    }

    /// Backpropagates `d out` (length `n`) plus `kl_weight` times the KL
    /// term into `grad`.
    pub fn backward(&self, cond: &[f64], trace: &SampleTrace, dout: &[f64], kl_weight: f64, grad: &mut VaeGrad) {
        let mut dact = vec![0.0; self.hidden];
        self.dec_out.backward(&trace.dec_act, dout, &mut grad.dec_out, Some(&mut dact));
        for (d, p) in dact.iter_mut().zip(&trace.dec_pre) {
            if *p <= 0.0 {
                *d = 0.0;
            }
        }
        let mut dz = vec![0.0; self.latent];
        self.dec.backward(&trace.z, &dact, &mut grad.dec, Some(&mut dz));
        let mut dmu = vec![0.0; self.latent];
        let mut dlv = vec![0.0; self.latent];
        for k in 0..self.latent {
            let lv = trace.logvar[k];
            let live = lv < MAX_LOGVAR;
            let var = lv.min(MAX_LOGVAR).exp();
            let sigma = var.sqrt();
            dmu[k] = dz[k] + kl_weight * trace.mu[k];
            let dsig = if live { dz[k] * trace.eps[k] * 0.5 * sigma } else { 0.0 };
            let dkl = 0.5 * (if live { var } else { 0.0 } - 1.0);
            dlv[k] = dsig + kl_weight * dkl;
        }
        let mut da = vec![0.0; self.hidden];
        let mut da2 = vec![0.0; self.hidden];
        self.enc_mu.backward(&trace.enc_act, &dmu, &mut grad.enc_mu, Some(&mut da));
        self.enc_logvar.backward(&trace.enc_act, &dlv, &mut grad.enc_logvar, Some(&mut da2));
        for ((d, d2), p) in da.iter_mut().zip(&da2).zip(&trace.enc_pre) {
            *d = if *p > 0.0 { *d + d2 } else { 0.0 };
        }
        self.enc.backward(cond, &da, &mut grad.enc, None);
    }

    /// Negative β-ELBO for one example with frozen noise: squared error over
    /// `target` coordinates plus `β·KL`. Accumulates `weight` times its
    /// gradient.
    pub fn elbo_loss_and_grad(
        &self,
        cond: &[f64],
        truth: &[f64],
        target: &FeatureSet,
        eps: &[f64],
        weight: f64,
        grad: Option<&mut VaeGrad>,
    ) -> f64 {
        let trace = self.forward(cond, eps);
        let mut dout = vec![0.0; self.n];
        let mut recon = 0.0;
        for j in target.iter() {
            let r = trace.out[j] - truth[j];
            recon += 0.5 * r * r;
            dout[j] = weight * r;
        }
        let loss = recon + self.beta * self.kl(&trace);
        if let Some(grad) = grad {
            self.backward(cond, &trace, &dout, weight * self.beta, grad);
        }
        loss
    }
}

/// Test-only stand-in that returns the true value for features in `exact`
/// and the true value plus Gaussian noise of scale `noise` elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct CopyGenerator {
    pub n: usize,
    pub exact: FeatureSet,
    pub noise: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Generator {
    Vae(VaeGenerator),
    Copy(CopyGenerator),
}

impl Generator {
    pub fn n(&self) -> usize {
        match self {
            Generator::Vae(g) => g.n,
            Generator::Copy(g) => g.n,
        }
    }

    /// Length of the noise vector one sample consumes.
    pub fn noise_len(&self) -> usize {
        match self {
            Generator::Vae(g) => g.latent,
            Generator::Copy(g) => g.n,
        }
    }

    pub fn draw_noise(&self, rng: &mut impl Rng) -> Vec<f64> {
        (0..self.noise_len()).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// One generated full-length vector for fixed noise. `truth` is only
    /// consulted by the copy generator.
    pub fn generate(&self, cond: &MaskedInput, truth: Option<&[f64]>, eps: &[f64]) -> Result<Vec<f64>> {
        match self {
            Generator::Vae(g) => Ok(g.forward(&cond.encoded(), eps).out),
            Generator::Copy(g) => {
                let truth = truth.ok_or_else(|| {
                    GenexError::invalid("copy generator needs ground-truth features")
                })?;
                Ok((0..g.n)
                    .map(|j| {
                        if g.exact.contains(j) {
                            truth[j]
                        } else {
                            truth[j] + g.noise * eps[j]
                        }
                    })
                    .collect())
            }
        }
    }

    /// `K` samples of the `target` coordinates conditioned on `cond`.
    pub fn sample_features(
        &self,
        cond: &MaskedInput,
        truth: Option<&[f64]>,
        target: &FeatureSet,
        k: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<Vec<f64>>> {
        if cond.n() != self.n() {
            return Err(GenexError::DimensionMismatch {
                expected: self.n(),
                actual: cond.n(),
            });
        }
        target.check_bounds(self.n())?;
        let overlap = target.intersection(&cond.support());
        if !overlap.is_empty() {
            return Err(GenexError::invalid(format!(
                "target features {overlap} are already part of the condition"
            )));
        }
        if target.is_empty() {
            return Ok(vec![Vec::new(); k]);
        }
        (0..k)
            .map(|_| {
                let eps = self.draw_noise(rng);
                let full = self.generate(cond, truth, &eps)?;
                Ok(target.iter().map(|j| full[j]).collect())
            })
            .collect()
    }
}
