use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ColumnScale, Matrix, Scaling, Transform};
use crate::rng::rng_from_seed;

/// Where the rows of a dataset came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Model,
    Empirical,
    Mixed { x_real: usize, n_model: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub unit: String,
    pub transform: Transform,
    /// z-score after the transform; otherwise only the transform is applied.
    pub standardize: bool,
}

impl ColumnSpec {
    pub fn new(name: &str, unit: &str, transform: Transform, standardize: bool) -> Self {
        ColumnSpec { name: name.into(), unit: unit.into(), transform, standardize }
    }
}

/// Physical-scale features and targets with the recipe for normalizing them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Matrix,
    pub targets: Matrix,
    pub provenance: Provenance,
    pub feature_columns: Vec<ColumnSpec>,
    pub target_columns: Vec<ColumnSpec>,
}

/// Which statistics to normalize with.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a> {
    /// Fit on the dataset being normalized.
    Own,
    /// Reuse statistics fitted elsewhere, e.g. on the pre-training set.
    External(&'a Scaling),
    /// Feature statistics from elsewhere, target statistics fitted on the dataset.
    ExternalFeatures(&'a Scaling),
}

/// Normalized matrices ready for training, with the scaling that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub x: Matrix,
    pub y: Matrix,
    pub scaling: Scaling,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        targets: Matrix,
        provenance: Provenance,
        feature_columns: Vec<ColumnSpec>,
        target_columns: Vec<ColumnSpec>,
    ) -> Result<Self> {
        let d = Dataset { features, targets, provenance, feature_columns, target_columns };
        d.validate()?;
        Ok(d)
    }

    /// An empty dataset with the same columns and the given provenance.
    pub fn empty_like(&self, provenance: Provenance) -> Self {
        Dataset {
            features: Matrix::empty(self.features.cols()),
            targets: Matrix::empty(self.targets.cols()),
            provenance,
            feature_columns: self.feature_columns.clone(),
            target_columns: self.target_columns.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.rows() != self.targets.rows() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} target rows",
                self.features.rows(),
                self.targets.rows()
            )));
        }
        if self.features.cols() != self.feature_columns.len() || self.targets.cols() != self.target_columns.len() {
            return Err(Error::Shape("column specs do not match the matrices".into()));
        }
        if let Provenance::Mixed { x_real, n_model } = self.provenance {
            if x_real + n_model != self.len() {
                return Err(Error::invalid(format!(
                    "mixed provenance counts {x_real} + {n_model} do not sum to {} rows",
                    self.len()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of rows drawn from the empirical source.
    pub fn empirical_count(&self) -> usize {
        match self.provenance {
            Provenance::Model => 0,
            Provenance::Empirical => self.len(),
            Provenance::Mixed { x_real, .. } => x_real,
        }
    }

    /// The first `n` rows, keeping provenance kind.
    pub fn head(&self, n: usize) -> Result<Self> {
        if n > self.len() {
            return Err(Error::invalid(format!("requested {n} rows from a dataset of {}", self.len())));
        }
        let provenance = match self.provenance {
            Provenance::Mixed { .. } => return Err(Error::invalid("cannot take a prefix of a mixed dataset")),
            p => p,
        };
        Ok(Dataset {
            features: self.features.head(n),
            targets: self.targets.head(n),
            provenance,
            ..self.clone()
        })
    }

    /// Rows reordered by a seeded permutation.
    pub fn shuffled(&self, seed: u64) -> Self {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng_from_seed(seed));
        Dataset {
            features: self.features.select_rows(&idx),
            targets: self.targets.select_rows(&idx),
            ..self.clone()
        }
    }

    /// Fits per-column statistics on this dataset.
    pub fn fit_scaling(&self) -> Result<Scaling> {
        let fit = |m: &Matrix, specs: &[ColumnSpec]| -> Result<Vec<ColumnScale>> {
            specs
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    ColumnScale::fit(m.column(j), s.transform, s.standardize)
                        .map_err(|e| Error::invalid(format!("column {}: {e}", s.name)))
                })
                .collect()
        };
        Ok(Scaling {
            features: fit(&self.features, &self.feature_columns)?,
            targets: fit(&self.targets, &self.target_columns)?,
        })
    }

    pub fn normalize(&self, reference: Reference<'_>) -> Result<Normalized> {
        let scaling = match reference {
            Reference::Own => self.fit_scaling()?,
            Reference::External(s) => {
                self.check_compatible(s)?;
                s.clone()
            }
            Reference::ExternalFeatures(s) => {
                self.check_compatible(s)?;
                Scaling { features: s.features.clone(), targets: self.fit_scaling()?.targets }
            }
        };
        Ok(Normalized {
            x: scaling.scale_features(&self.features)?,
            y: scaling.scale_targets(&self.targets)?,
            scaling,
        })
    }

    fn check_compatible(&self, s: &Scaling) -> Result<()> {
        let same = |specs: &[ColumnSpec], cols: &[ColumnScale]| {
            specs.len() == cols.len() && specs.iter().zip(cols).all(|(a, b)| a.transform == b.transform)
        };
        if !same(&self.feature_columns, &s.features) || !same(&self.target_columns, &s.targets) {
            return Err(Error::invalid("external scaling does not match this dataset's columns"));
        }
        Ok(())
    }
}

/// Concatenates a model-generated and an empirical dataset for single-stage training.
pub fn mix(model_set: &Dataset, empirical_set: &Dataset) -> Result<Dataset> {
    if model_set.feature_columns != empirical_set.feature_columns || model_set.target_columns != empirical_set.target_columns {
        return Err(Error::invalid("cannot mix datasets with different columns"));
    }
    let n_model = match model_set.provenance {
        Provenance::Model => model_set.len(),
        _ => return Err(Error::invalid("first argument of mix must be model-generated")),
    };
    let x_real = match empirical_set.provenance {
        Provenance::Empirical => empirical_set.len(),
        _ => return Err(Error::invalid("second argument of mix must be empirical")),
    };
    Dataset::new(
        model_set.features.vstack(&empirical_set.features)?,
        model_set.targets.vstack(&empirical_set.targets)?,
        Provenance::Mixed { x_real, n_model },
        model_set.feature_columns.clone(),
        model_set.target_columns.clone(),
    )
}
