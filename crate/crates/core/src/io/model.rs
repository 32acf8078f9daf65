//! Self-describing JSON documents for fitted models.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cn::{CnFitReport, CnParams, Kernel};
use crate::cnfa::{CnfaParams, FaFitReport};
use crate::config::FitConfig;
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::mcnfa::{McnfaParams, MixtureFitReport};
use crate::modelsel::{bic, FittedModel};
use crate::numerics::{log_sum_exp, SpdFactor};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Cn,
    Gaussian,
    Gfa,
    Cnfa,
    Mgfa,
    Mcnfa,
}

impl ModelFamily {
    pub fn is_contaminated(self) -> bool {
        matches!(self, ModelFamily::Cn | ModelFamily::Cnfa | ModelFamily::Mcnfa)
    }
}

/// One component; `sigma` for full-covariance families, `lambda`/`psi`
/// for factor families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDoc {
    pub mu: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<Vec<f64>>,
    pub alpha: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsDoc {
    pub pi: Vec<f64>,
    pub components: Vec<ComponentDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub loglik: f64,
    pub bic: f64,
    pub m: usize,
    pub n: usize,
    pub iterations: usize,
    pub converged: bool,
    pub epsilon: f64,
    pub alpha_min: f64,
    pub seed: u64,
    pub standardized: bool,
    #[serde(default)]
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub schema_version: u32,
    pub family: ModelFamily,
    pub params: ParamsDoc,
    pub metadata: FitMetadata,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_of(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::SchemaMismatch(format!("ragged matrix '{what}'")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn factor_doc(c: &CnfaParams) -> ComponentDoc {
    ComponentDoc {
        mu: c.mu.iter().copied().collect(),
        sigma: None,
        lambda: Some(rows_of(&c.lambda)),
        psi: Some(c.psi.iter().copied().collect()),
        alpha: c.alpha,
        eta: c.eta,
    }
}

fn metadata(
    x: &DataMatrix,
    cfg: &FitConfig,
    standardized: bool,
    (loglik, bic, m, iterations, converged): (f64, f64, usize, usize, bool),
) -> FitMetadata {
    FitMetadata {
        loglik,
        bic,
        m,
        n: x.n(),
        iterations,
        converged,
        epsilon: cfg.epsilon,
        alpha_min: cfg.alpha_min,
        seed: cfg.seed,
        standardized,
        columns: x.names().to_vec(),
    }
}

impl ModelDocument {
    pub fn from_cn(r: &CnFitReport, x: &DataMatrix, cfg: &FitConfig, standardized: bool) -> Result<Self> {
        let m = x.p() + x.p() * (x.p() + 1) / 2 + 2;
        let b = bic(r.loglik, m, x.n())?;
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            family: ModelFamily::Cn,
            params: ParamsDoc {
                pi: vec![1.0],
                components: vec![ComponentDoc {
                    mu: r.params.mu.iter().copied().collect(),
                    sigma: Some(rows_of(&r.params.sigma)),
                    lambda: None,
                    psi: None,
                    alpha: r.params.alpha,
                    eta: r.params.eta,
                }],
            },
            metadata: metadata(x, cfg, standardized, (r.loglik, b, m, r.iterations, r.converged)),
        })
    }

    pub fn from_fa(r: &FaFitReport, x: &DataMatrix, cfg: &FitConfig, standardized: bool) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            family: if r.contaminated { ModelFamily::Cnfa } else { ModelFamily::Gfa },
            params: ParamsDoc {
                pi: vec![1.0],
                components: vec![factor_doc(&r.params)],
            },
            metadata: metadata(x, cfg, standardized, (r.loglik, r.bic, r.m, r.iterations, r.converged)),
        }
    }

    pub fn from_mixture(r: &MixtureFitReport, x: &DataMatrix, cfg: &FitConfig, standardized: bool) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            family: if r.contaminated { ModelFamily::Mcnfa } else { ModelFamily::Mgfa },
            params: ParamsDoc {
                pi: r.params.pi.iter().copied().collect(),
                components: r.params.components.iter().map(factor_doc).collect(),
            },
            metadata: metadata(x, cfg, standardized, (r.loglik, r.bic, r.m, r.iterations, r.converged)),
        }
    }

    pub fn from_fitted(f: &FittedModel, x: &DataMatrix, cfg: &FitConfig, standardized: bool) -> Self {
        match f {
            FittedModel::Single(r) => Self::from_fa(r, x, cfg, standardized),
            FittedModel::Mixture(r) => Self::from_mixture(r, x, cfg, standardized),
        }
    }

    pub fn p(&self) -> usize {
        self.params.components.first().map_or(0, |c| c.mu.len())
    }

    pub fn g(&self) -> usize {
        self.params.components.len()
    }

    /// Checks that the parameter fields match the family tag.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaMismatch(format!(
                "schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let comps = &self.params.components;
        if comps.is_empty() || comps.len() != self.params.pi.len() {
            return Err(Error::SchemaMismatch("components and pi disagree".into()));
        }
        let mixture = matches!(self.family, ModelFamily::Mgfa | ModelFamily::Mcnfa);
        if !mixture && comps.len() != 1 {
            return Err(Error::SchemaMismatch("single-component family with several components".into()));
        }
        let full = matches!(self.family, ModelFamily::Cn | ModelFamily::Gaussian);
        for c in comps {
            let ok = if full {
                c.sigma.is_some()
            } else {
                c.lambda.is_some() && c.psi.is_some()
            };
            if !ok {
                return Err(Error::SchemaMismatch(format!(
                    "component lacks the parameters of family {:?}",
                    self.family
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model documents serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text).map_err(|e| Error::SchemaMismatch(e.to_string()))?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn to_cn(&self) -> Result<CnParams> {
        let c = &self.params.components[0];
        let sigma = c
            .sigma
            .as_ref()
            .ok_or_else(|| Error::SchemaMismatch("missing sigma".into()))?;
        Ok(CnParams {
            mu: DVector::from_vec(c.mu.clone()),
            sigma: matrix_of(sigma, "sigma")?,
            alpha: c.alpha,
            eta: c.eta,
        })
    }

    fn component(c: &ComponentDoc) -> Result<CnfaParams> {
        let (lambda, psi) = match (&c.lambda, &c.psi) {
            (Some(l), Some(p)) => (matrix_of(l, "lambda")?, DVector::from_vec(p.clone())),
            _ => return Err(Error::SchemaMismatch("missing lambda/psi".into())),
        };
        if lambda.nrows() != c.mu.len() || psi.len() != c.mu.len() {
            return Err(Error::SchemaMismatch("parameter dimensions disagree".into()));
        }
        Ok(CnfaParams {
            mu: DVector::from_vec(c.mu.clone()),
            lambda,
            psi,
            alpha: c.alpha,
            eta: c.eta,
        })
    }

    pub fn to_mixture(&self) -> Result<McnfaParams> {
        Ok(McnfaParams {
            pi: DVector::from_vec(self.params.pi.clone()),
            components: self.params.components.iter().map(Self::component).collect::<Result<_>>()?,
        })
    }

    /// Brings raw data onto the scale the model was fitted on.
    pub fn prepare(&self, x: &DataMatrix) -> Result<DataMatrix> {
        if x.p() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                found: x.p(),
            });
        }
        Ok(if self.metadata.standardized { x.standardized() } else { x.clone() })
    }

    /// Per-row log-density, MAP component and posterior probability of being
    /// good (under the MAP component) for data already on the model scale.
    pub fn evaluate(&self, x: &DataMatrix) -> Result<Evaluation> {
        if x.p() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                found: x.p(),
            });
        }
        let contaminated = self.family.is_contaminated();
        let kernels: Vec<(Kernel, f64, f64)> = match self.family {
            ModelFamily::Cn | ModelFamily::Gaussian => {
                let c = self.to_cn()?;
                vec![(Kernel::new(x.values(), &c.mu, &SpdFactor::new(&c.sigma)?), c.alpha, c.eta)]
            }
            _ => self
                .to_mixture()?
                .components
                .iter()
                .map(|c| Ok((c.kernel(x.values())?, c.alpha, c.eta)))
                .collect::<Result<_>>()?,
        };
        let mut log_density = Vec::with_capacity(x.n());
        let mut labels = Vec::with_capacity(x.n());
        let mut good_prob = Vec::with_capacity(x.n());
        let mut weights = Vec::with_capacity(x.n());
        let single = kernels.len() == 1;
        let gauss: Vec<Vec<f64>> = kernels.iter().map(|(k, _, _)| k.gaussian_log_density()).collect();
        for i in 0..x.n() {
            let joint: Vec<f64> = kernels
                .iter()
                .enumerate()
                .map(|(g, (k, a, e))| {
                    let lp = if single { 0.0 } else { self.params.pi[g].ln() };
                    lp + if contaminated { k.log_density_at(i, *a, *e) } else { gauss[g][i] }
                })
                .collect();
            log_density.push(if single { joint[0] } else { log_sum_exp(&joint) });
            let best = joint
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (g, v)| if *v > acc.1 { (g, *v) } else { acc })
                .0;
            labels.push(best);
            let (k, a, e) = &kernels[best];
            if contaminated {
                good_prob.push(k.good_prob_at(i, *a, *e));
                weights.push(k.weight_at(i, *a, *e));
            } else {
                good_prob.push(1.0);
                weights.push(1.0);
            }
        }
        Ok(Evaluation {
            log_density,
            labels,
            good_prob,
            weights,
        })
    }

    /// Log-likelihood and BIC of the stored parameters on `x` (model scale).
    pub fn rescore(&self, x: &DataMatrix) -> Result<(f64, f64)> {
        let loglik: f64 = match self.family {
            ModelFamily::Cn => self.to_cn()?.loglik(x)?,
            ModelFamily::Gaussian => self.evaluate(x)?.log_density.iter().sum(),
            ModelFamily::Gfa | ModelFamily::Cnfa => {
                let c = Self::component(&self.params.components[0])?;
                c.log_density_rows(x, self.family.is_contaminated())?.iter().sum()
            }
            ModelFamily::Mgfa | ModelFamily::Mcnfa => {
                self.to_mixture()?.loglik(x, self.family.is_contaminated())?
            }
        };
        Ok((loglik, bic(loglik, self.metadata.m, x.n())?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub log_density: Vec<f64>,
    pub labels: Vec<usize>,
    pub good_prob: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn save_model(doc: &ModelDocument, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, doc.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelDocument> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelDocument::from_json(&text)
}
