//! JSON model files, tagged by `"type"`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::HiddenMarkovModel;
use crate::latent_class::LatentClassModel;
use crate::nonparametric::{CdfComponent, NonparametricMixture};
use crate::random_graph::GraphMixtureModel;
use crate::tensor::{Matrix, ProbabilityVector, StochasticMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelFile {
    LatentClass {
        r: usize,
        kappas: Vec<usize>,
        pi: Vec<f64>,
        /// Indexed `[variable][class][state]`.
        emissions: Vec<Vec<Vec<f64>>>,
    },
    Hmm {
        r: usize,
        kappa: usize,
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        #[serde(rename = "B")]
        b: Vec<Vec<f64>>,
    },
    GraphMixture {
        r: usize,
        pi: Vec<f64>,
        #[serde(rename = "P")]
        p: Vec<Vec<f64>>,
    },
    Nonparametric {
        r: usize,
        p: usize,
        block_dims: Vec<usize>,
        pi: Vec<f64>,
        /// Indexed `[class][variate]`.
        components: Vec<Vec<CdfComponent>>,
    },
}

/// A validated model of any supported family.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    LatentClass(LatentClassModel),
    Hmm(HiddenMarkovModel),
    GraphMixture(GraphMixtureModel),
    Nonparametric(NonparametricMixture),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::LatentClass(_) => "latent_class",
            Model::Hmm(_) => "hmm",
            Model::GraphMixture(_) => "graph_mixture",
            Model::Nonparametric(_) => "nonparametric",
        }
    }
}

fn expect(what: &str, found: usize, declared: usize) -> Result<()> {
    if found != declared {
        return Err(Error::InvalidModel(format!("{what}: declared {declared}, found {found}")));
    }
    Ok(())
}

impl TryFrom<ModelFile> for Model {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        match f {
            ModelFile::LatentClass { r, kappas, pi, emissions } => {
                expect("r", pi.len(), r)?;
                expect("number of variables", emissions.len(), kappas.len())?;
                let emissions = emissions
                    .iter()
                    .zip(&kappas)
                    .map(|(e, &k)| {
                        expect("emission rows", e.len(), r)?;
                        if let Some(row) = e.first() {
                            expect("emission states", row.len(), k)?;
                        }
                        StochasticMatrix::from_rows(e)
                    })
                    .collect::<Result<_>>()?;
                Ok(Model::LatentClass(LatentClassModel::new(ProbabilityVector::new(pi)?, emissions)?))
            }
            ModelFile::Hmm { r, kappa, a, b } => {
                expect("rows of A", a.len(), r)?;
                expect("rows of B", b.len(), r)?;
                if let Some(row) = b.first() {
                    expect("columns of B", row.len(), kappa)?;
                }
                Ok(Model::Hmm(HiddenMarkovModel::new(StochasticMatrix::from_rows(&a)?, StochasticMatrix::from_rows(&b)?)?))
            }
            ModelFile::GraphMixture { r, pi, p } => {
                expect("r", pi.len(), r)?;
                Ok(Model::GraphMixture(GraphMixtureModel::new(ProbabilityVector::new(pi)?, Matrix::from_rows(&p)?)?))
            }
            ModelFile::Nonparametric { r, p, block_dims, pi, components } => {
                expect("r", pi.len(), r)?;
                expect("p", block_dims.len(), p)?;
                Ok(Model::Nonparametric(NonparametricMixture::new(ProbabilityVector::new(pi)?, block_dims, components)?))
            }
        }
    }
}

impl From<&Model> for ModelFile {
    fn from(m: &Model) -> Self {
        match m {
            Model::LatentClass(m) => ModelFile::LatentClass {
                r: m.r(),
                kappas: m.kappas(),
                pi: m.pi().to_vec(),
                emissions: m.emissions().iter().map(|e| e.to_rows()).collect(),
            },
            Model::Hmm(h) => ModelFile::Hmm { r: h.r(), kappa: h.kappa(), a: h.a.to_rows(), b: h.b.to_rows() },
            Model::GraphMixture(g) => ModelFile::GraphMixture { r: g.r(), pi: g.pi.to_vec(), p: g.p.to_rows() },
            Model::Nonparametric(n) => ModelFile::Nonparametric {
                r: n.r(),
                p: n.p(),
                block_dims: n.block_dims.clone(),
                pi: n.pi.to_vec(),
                components: n.components.clone(),
            },
        }
    }
}

/// Parses and validates a model file.
pub fn parse_model(text: &str) -> Result<Model> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    Model::try_from(file)
}

pub fn to_json(model: &Model) -> String {
    serde_json::to_string_pretty(&ModelFile::from(model)).expect("model files serialize")
}
