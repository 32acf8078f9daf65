use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cnfa::{fit_cnfa, fit_gfa, FaFitReport};
use crate::config::FitConfig;
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::mcnfa::{fit_mcnfa, fit_mgfa, MixtureFitReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gfa,
    Cnfa,
    Mgfa,
    Mcnfa,
}

impl Family {
    pub fn is_mixture(self) -> bool {
        matches!(self, Family::Mgfa | Family::Mcnfa)
    }

    pub fn is_contaminated(self) -> bool {
        matches!(self, Family::Cnfa | Family::Mcnfa)
    }

    pub fn tag(self) -> &'static str {
        match self {
            Family::Gfa => "gfa",
            Family::Cnfa => "cnfa",
            Family::Mgfa => "mgfa",
            Family::Mcnfa => "mcnfa",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelId {
    pub family: Family,
    pub g: usize,
    pub q: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FitStatus {
    Fitted,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub id: ModelId,
    pub loglik: f64,
    pub m: usize,
    pub n: usize,
    pub bic: f64,
    pub status: FitStatus,
}

impl ModelScore {
    pub fn is_fitted(&self) -> bool {
        self.status == FitStatus::Fitted
    }
}

#[derive(Debug, Clone)]
pub enum FittedModel {
    Single(FaFitReport),
    Mixture(MixtureFitReport),
}

impl FittedModel {
    pub fn loglik(&self) -> f64 {
        match self {
            FittedModel::Single(r) => r.loglik,
            FittedModel::Mixture(r) => r.loglik,
        }
    }

    pub fn bic(&self) -> f64 {
        match self {
            FittedModel::Single(r) => r.bic,
            FittedModel::Mixture(r) => r.bic,
        }
    }

    pub fn m(&self) -> usize {
        match self {
            FittedModel::Single(r) => r.m,
            FittedModel::Mixture(r) => r.m,
        }
    }
}

/// Fits one candidate.
pub fn fit_candidate(x: &DataMatrix, id: ModelId, cfg: &FitConfig) -> Result<FittedModel> {
    match id.family {
        Family::Gfa | Family::Cnfa if id.g != 1 => Err(Error::InvalidArgument(format!(
            "family {} has a single component, got G = {}",
            id.family.tag(),
            id.g
        ))),
        Family::Gfa => fit_gfa(x, id.q, cfg).map(FittedModel::Single),
        Family::Cnfa => fit_cnfa(x, id.q, cfg).map(FittedModel::Single),
        Family::Mgfa => fit_mgfa(x, id.g, id.q, cfg).map(FittedModel::Mixture),
        Family::Mcnfa => fit_mcnfa(x, id.g, id.q, cfg).map(FittedModel::Mixture),
    }
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub score: ModelScore,
    pub fit: Option<FittedModel>,
}

/// Every candidate of a grid, ordered by `(G, q)`, and the index of the
/// selected one.
#[derive(Debug, Clone)]
pub struct GridResult {
    pub candidates: Vec<Candidate>,
    pub best: usize,
}

impl GridResult {
    pub fn best(&self) -> &Candidate {
        &self.candidates[self.best]
    }

    pub fn best_fit(&self) -> &FittedModel {
        self.best()
            .fit
            .as_ref()
            .expect("the selected candidate is always fitted")
    }

    /// Fitted candidates from best to worst, then failures.
    pub fn ranked(&self) -> Vec<&ModelScore> {
        let mut out: Vec<&ModelScore> = self.candidates.iter().map(|c| &c.score).collect();
        out.sort_by(|a, b| rank(a, b));
        out
    }
}

/// Larger BIC first; ties go to fewer parameters, then fewer components,
/// then fewer factors. Failures sort last.
fn rank(a: &ModelScore, b: &ModelScore) -> Ordering {
    match (a.is_fitted(), b.is_fitted()) {
        (true, false) => return Ordering::Less,
        (false, true) => return Ordering::Greater,
        (false, false) => return (a.id.g, a.id.q).cmp(&(b.id.g, b.id.q)),
        (true, true) => {}
    }
    b.bic
        .total_cmp(&a.bic)
        .then(a.m.cmp(&b.m))
        .then(a.id.g.cmp(&b.id.g))
        .then(a.id.q.cmp(&b.id.q))
}

/// Fits every `(G, q)` candidate in parallel and selects the largest BIC.
/// Failed candidates are recorded, not fatal.
pub fn grid_search(
    x: &DataMatrix,
    family: Family,
    g_range: &[usize],
    q_range: &[usize],
    cfg: &FitConfig,
) -> Result<GridResult> {
    if g_range.is_empty() || q_range.is_empty() {
        return Err(Error::InvalidArgument("G and q ranges must be nonempty".into()));
    }
    let mut ids: Vec<ModelId> = g_range
        .iter()
        .flat_map(|&g| q_range.iter().map(move |&q| ModelId { family, g, q }))
        .collect();
    ids.sort_by_key(|id| (id.g, id.q));
    ids.dedup();

    let candidates: Vec<Candidate> = ids
        .par_iter()
        .map(|&id| match fit_candidate(x, id, cfg) {
            Ok(fit) => Candidate {
                score: ModelScore {
                    id,
                    loglik: fit.loglik(),
                    m: fit.m(),
                    n: x.n(),
                    bic: fit.bic(),
                    status: FitStatus::Fitted,
                },
                fit: Some(fit),
            },
            Err(e) => Candidate {
                score: ModelScore {
                    id,
                    loglik: f64::NAN,
                    m: 0,
                    n: x.n(),
                    bic: f64::NAN,
                    status: FitStatus::Failed(e.to_string()),
                },
                fit: None,
            },
        })
        .collect();

    let best = (0..candidates.len())
        .filter(|&i| candidates[i].score.is_fitted())
        .min_by(|&i, &j| rank(&candidates[i].score, &candidates[j].score))
        .ok_or(Error::AllCandidatesFailed(candidates.len()))?;
    Ok(GridResult { candidates, best })
}
