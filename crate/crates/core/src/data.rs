use crate::error::{Error, Result};
use crate::matrix::{self, Matrix};

/// Whether a label matrix is hard annotations or relabeled soft targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    /// Every entry is exactly 0.0 or 1.0.
    Binary,
    /// Entries are anywhere in [0, 1].
    Soft,
}

/// N x C label matrix with a validated kind tag.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    values: Matrix,
    kind: LabelKind,
}

impl LabelMatrix {
    pub fn binary(values: Matrix) -> Result<Self> {
        Self::check_range(&values)?;
        for i in 0..values.rows() {
            for j in 0..values.cols() {
                let v = values.get(i, j);
                if v != 0.0 && v != 1.0 {
                    return Err(Error::NotBinary(format!("entry ({i}, {j}) is {v}")));
                }
            }
        }
        Ok(LabelMatrix { values, kind: LabelKind::Binary })
    }

    pub fn soft(values: Matrix) -> Result<Self> {
        Self::check_range(&values)?;
        Ok(LabelMatrix { values, kind: LabelKind::Soft })
    }

    /// Tags as binary when every entry is exactly 0 or 1, soft otherwise.
    pub fn infer(values: Matrix) -> Result<Self> {
        let all_hard = values.data().iter().all(|&v| v == 0.0 || v == 1.0);
        if all_hard {
            Self::binary(values)
        } else {
            Self::soft(values)
        }
    }

    fn check_range(values: &Matrix) -> Result<()> {
        for i in 0..values.rows() {
            for j in 0..values.cols() {
                let v = values.get(i, j);
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::LabelOutOfRange { row: i, col: j, value: v });
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn n_samples(&self) -> usize {
        self.values.rows()
    }

    pub fn n_classes(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    /// Class indices annotated 1.0 in row `i`, ascending.
    pub fn positives(&self, i: usize) -> Vec<usize> {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1.0)
            .map(|(c, _)| c)
            .collect()
    }
}

/// C x Z class embedding matrix. Rows are unit-normalized on construction so
/// downstream similarity scores are plain dot products.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: Matrix,
}

impl EmbeddingMatrix {
    pub fn new(mut rows: Matrix) -> Result<Self> {
        if rows.rows() == 0 || rows.cols() == 0 {
            return Err(Error::EmptyInput("class embedding matrix".into()));
        }
        if !rows.all_finite() {
            return Err(Error::NonFinite("class embedding matrix".into()));
        }
        matrix::l2_normalize_rows(&mut rows)?;
        Ok(EmbeddingMatrix { rows })
    }

    pub fn n_classes(&self) -> usize {
        self.rows.rows()
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    pub fn row(&self, c: usize) -> &[f64] {
        self.rows.row(c)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.rows
    }
}

/// Feature matrix, label matrix, and class names that agree in shape.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: LabelMatrix,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: LabelMatrix, class_names: Vec<String>) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::EmptyInput("dataset with zero samples".into()));
        }
        if features.cols() == 0 {
            return Err(Error::EmptyInput("dataset with zero feature dimensions".into()));
        }
        if labels.n_classes() < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 classes, got {}",
                labels.n_classes()
            )));
        }
        if features.rows() != labels.n_samples() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows vs {} label rows",
                features.rows(),
                labels.n_samples()
            )));
        }
        if class_names.len() != labels.n_classes() {
            return Err(Error::DimensionMismatch(format!(
                "{} class names vs {} label columns",
                class_names.len(),
                labels.n_classes()
            )));
        }
        if class_names.iter().any(|n| n.is_empty()) {
            return Err(Error::Malformed("empty class name".into()));
        }
        if !features.all_finite() {
            return Err(Error::NonFinite("feature matrix".into()));
        }
        Ok(Dataset { features, labels, class_names })
    }

    pub fn n_samples(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.labels.n_classes()
    }

    /// Same dataset with the label matrix swapped out.
    pub fn with_labels(&self, labels: LabelMatrix) -> Result<Self> {
        Dataset::new(self.features.clone(), labels, self.class_names.clone())
    }
}

/// Full consistency check across a dataset and the class embeddings it will
/// be trained against.
pub fn validate_dataset(
    features: Matrix,
    labels: LabelMatrix,
    class_names: Vec<String>,
    embeddings: &EmbeddingMatrix,
) -> Result<Dataset> {
    let ds = Dataset::new(features, labels, class_names)?;
    if embeddings.n_classes() != ds.n_classes() {
        return Err(Error::DimensionMismatch(format!(
            "{} embedding rows vs {} classes",
            embeddings.n_classes(),
            ds.n_classes()
        )));
    }
    Ok(ds)
}
