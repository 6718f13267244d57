//! Per-bucket classifier and conditional generator, their training loops
//! and the text checkpoint format.

mod classifier;
mod generator;
mod train;

use std::path::Path;

pub use classifier::{Classifier, ClassifierGrad};
pub use generator::{default_beta, CopyGenerator, Generator, SampleTrace, VaeGenerator, VaeGrad};
pub use train::{accuracy, argmax, init_models, pretrain, train_f, ArchSpec, ReconTarget, TrainConfig};

use crate::error::{GenexError, Result};
use crate::features::FeatureSet;
use crate::nn::{read_dense, write_dense};

const CHECKPOINT_HEADER: &str = "genex-checkpoint v1";

/// The trained state owned by one bucket.
#[derive(Clone, Debug, PartialEq)]
pub struct BucketModels {
    pub classifier: Classifier,
    pub generator: Generator,
}

impl BucketModels {
    pub fn to_text(&self) -> String {
        let mut out = format!("{CHECKPOINT_HEADER}\n");
        let c = &self.classifier;
        out.push_str(&format!("classifier {} {} {}\n", c.n, c.hidden, c.classes));
        write_dense(&mut out, "c1", &c.l1);
        write_dense(&mut out, "c2", &c.l2);
        match &self.generator {
            Generator::Vae(g) => {
                out.push_str(&format!("generator vae {} {} {} {:?}\n", g.n, g.hidden, g.latent, g.beta));
                write_dense(&mut out, "enc", &g.enc);
                write_dense(&mut out, "enc_mu", &g.enc_mu);
                write_dense(&mut out, "enc_logvar", &g.enc_logvar);
                write_dense(&mut out, "dec", &g.dec);
                write_dense(&mut out, "dec_out", &g.dec_out);
            }
            Generator::Copy(g) => {
                out.push_str(&format!("generator copy {} {:?} {}\n", g.n, g.noise, g.exact.to_compact()));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| GenexError::format("checkpoint", m);
        let mut lines = text.lines();
        if lines.next() != Some(CHECKPOINT_HEADER) {
            return Err(bad("missing header".into()));
        }
        let head = lines.next().ok_or_else(|| bad("missing classifier".into()))?;
        let nums = |line: &str, skip: usize, count: usize| -> Result<Vec<usize>> {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() < skip + count {
                return Err(bad(format!("short line {line:?}")));
            }
            parts[skip..skip + count]
                .iter()
                .map(|t| t.parse().map_err(|_| bad(format!("bad integer {t:?}"))))
                .collect()
        };
        if !head.starts_with("classifier ") {
            return Err(bad(format!("expected classifier, found {head:?}")));
        }
        let dims = nums(head, 1, 3)?;
        let classifier = Classifier {
            n: dims[0],
            hidden: dims[1],
            classes: dims[2],
            l1: read_dense(&mut lines, "c1")?,
            l2: read_dense(&mut lines, "c2")?,
        };
        let ghead = lines.next().ok_or_else(|| bad("missing generator".into()))?;
        let parts: Vec<&str> = ghead.split_whitespace().collect();
        let generator = match parts.get(1).copied() {
            Some("vae") if parts.len() == 6 => {
                let dims = nums(ghead, 2, 3)?;
                let beta: f64 = parts[5].parse().map_err(|_| bad(format!("bad beta {:?}", parts[5])))?;
                Generator::Vae(VaeGenerator {
                    n: dims[0],
                    hidden: dims[1],
                    latent: dims[2],
                    beta,
                    enc: read_dense(&mut lines, "enc")?,
                    enc_mu: read_dense(&mut lines, "enc_mu")?,
                    enc_logvar: read_dense(&mut lines, "enc_logvar")?,
                    dec: read_dense(&mut lines, "dec")?,
                    dec_out: read_dense(&mut lines, "dec_out")?,
                })
            }
            Some("copy") if parts.len() == 5 => Generator::Copy(CopyGenerator {
                n: nums(ghead, 2, 1)?[0],
                noise: parts[3].parse().map_err(|_| bad(format!("bad noise {:?}", parts[3])))?,
                exact: FeatureSet::parse_compact(parts[4])?,
            }),
            _ => return Err(bad(format!("bad generator line {ghead:?}"))),
        };
        let models = BucketModels { classifier, generator };
        models.check_shapes()?;
        Ok(models)
    }

    fn check_shapes(&self) -> Result<()> {
        let c = &self.classifier;
        let ok_c = c.l1.input == 2 * c.n && c.l1.output == c.hidden && c.l2.input == c.hidden && c.l2.output == c.classes;
        let ok_g = match &self.generator {
            Generator::Vae(g) => {
                g.n == c.n
                    && g.enc.input == 2 * g.n
                    && g.enc.output == g.hidden
                    && g.enc_mu.output == g.latent
                    && g.enc_logvar.output == g.latent
                    && g.dec.input == g.latent
                    && g.dec_out.output == g.n
            }
            Generator::Copy(g) => g.n == c.n,
        };
        if ok_c && ok_g {
            Ok(())
        } else {
            Err(GenexError::format("checkpoint", "layer shapes are inconsistent"))
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| GenexError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GenexError::io(path, e))?;
        Self::from_text(&text)
    }
}
