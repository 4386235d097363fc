//! Task-specific dataset splits.
//!
//! Data collection: the training rows go 75/25 to the model owner (D1) and
//! the simulated respondents (D2), and the test rows are divided the same
//! way — the model owner's test share serves as the model validation set.
//! The respondent block is split 9:1 into classifier train/validation.
//!
//! Novel class: the model owner sees 8/9 of every ordinary class and never
//! class "nine"; the respondents hold the remaining 1/9 plus every nine,
//! relabeled to a balanced binary problem.
//!
//! Data joining: the split is column-wise by schema role and handled by the
//! experiment runner; rows here are only divided into train/validation/test.

use ldp_core::rng::RandomnessSource;
use ldp_core::tensor::Tensor;

use crate::error::{CliError, Result};

/// Features with 1-based labels and stable record ids.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub ids: Vec<u64>,
}

impl LabeledData {
    pub fn new(features: Tensor, labels: Vec<usize>, ids: Vec<u64>) -> Result<Self> {
        if features.rows() != labels.len() || labels.len() != ids.len() {
            return Err(CliError::validation(
                "features, labels and ids disagree on record count",
            ));
        }
        Ok(Self {
            features,
            labels,
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledData {
        let cols = self.features.cols();
        let mut values = Vec::with_capacity(indices.len() * cols);
        let mut labels = Vec::with_capacity(indices.len());
        let mut ids = Vec::with_capacity(indices.len());
        for &i in indices {
            values.extend_from_slice(self.features.row(i));
            labels.push(self.labels[i]);
            ids.push(self.ids[i]);
        }
        LabeledData {
            features: Tensor::matrix(indices.len(), cols, values).expect("subset shape"),
            labels,
            ids,
        }
    }

    /// Shuffled two-way split: the first part holds `fraction` of the rows.
    pub fn split_fraction(
        &self,
        fraction: f64,
        rng: &mut RandomnessSource,
    ) -> (LabeledData, LabeledData) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        rng.shuffle(&mut order);
        let cut = (self.len() as f64 * fraction).round() as usize;
        (self.subset(&order[..cut]), self.subset(&order[cut..]))
    }
}

#[derive(Debug, Clone)]
pub struct SplitDatasets {
    pub vlm_train: LabeledData,
    pub vlm_val: LabeledData,
    pub clf_train: LabeledData,
    pub clf_val: LabeledData,
    pub test: LabeledData,
}

/// Data-collection split; see the module docs for the layout.
pub fn split_data_collection(
    train: &LabeledData,
    test: &LabeledData,
    rng: &mut RandomnessSource,
) -> Result<SplitDatasets> {
    if train.is_empty() || test.is_empty() {
        return Err(CliError::validation("need nonempty train and test sets"));
    }
    let (vlm_train, clf_block) = train.split_fraction(0.75, rng);
    let (clf_train, clf_val) = clf_block.split_fraction(0.9, rng);
    let (vlm_val, test_rest) = test.split_fraction(0.75, rng);
    Ok(SplitDatasets {
        vlm_train,
        vlm_val,
        clf_train,
        clf_val,
        test: test_rest,
    })
}

/// Relabel a digit set to the binary novel-class problem: `novel_label`
/// becomes class 2, everything else class 1, balanced by downsampling.
fn to_balanced_binary(
    data: &LabeledData,
    novel_label: usize,
    rng: &mut RandomnessSource,
) -> Result<LabeledData> {
    let mut novel: Vec<usize> = Vec::new();
    let mut ordinary: Vec<usize> = Vec::new();
    for (i, &l) in data.labels.iter().enumerate() {
        if l == novel_label {
            novel.push(i);
        } else {
            ordinary.push(i);
        }
    }
    if novel.is_empty() || ordinary.is_empty() {
        return Err(CliError::validation(format!(
            "novel-class construction needs both class {novel_label} and others present"
        )));
    }
    rng.shuffle(&mut novel);
    rng.shuffle(&mut ordinary);
    let m = novel.len().min(ordinary.len());
    let mut indices: Vec<usize> = Vec::with_capacity(2 * m);
    indices.extend_from_slice(&novel[..m]);
    indices.extend_from_slice(&ordinary[..m]);
    indices.sort_unstable();
    let mut out = data.subset(&indices);
    for (label, &i) in out.labels.iter_mut().zip(&indices) {
        *label = if data.labels[i] == novel_label { 2 } else { 1 };
    }
    Ok(out)
}

/// Novel-class split over a 10-class digit set (labels 1..=10; label 10 is
/// the withheld class). The VLM never sees label 10.
pub fn split_novel_class(
    train: &LabeledData,
    test: &LabeledData,
    rng: &mut RandomnessSource,
) -> Result<SplitDatasets> {
    const NOVEL: usize = 10;
    let mut ordinary: Vec<usize> = Vec::new();
    let mut novel: Vec<usize> = Vec::new();
    for (i, &l) in train.labels.iter().enumerate() {
        if l == NOVEL {
            novel.push(i);
        } else {
            ordinary.push(i);
        }
    }
    if novel.is_empty() {
        return Err(CliError::validation("novel class absent from the training rows"));
    }
    // 8/9 of the ordinary classes to the VLM, 1/9 held out for respondents
    rng.shuffle(&mut ordinary);
    let cut = ordinary.len() * 8 / 9;
    let vlm_block = train.subset(&ordinary[..cut]);
    let mut held_out: Vec<usize> = ordinary[cut..].to_vec();
    held_out.extend_from_slice(&novel);
    held_out.sort_unstable();
    let respondents = train.subset(&held_out);

    let (vlm_train, vlm_val) = vlm_block.split_fraction(0.9, rng);
    let binary = to_balanced_binary(&respondents, NOVEL, rng)?;
    let (clf_train, clf_val) = binary.split_fraction(0.9, rng);
    let test_binary = to_balanced_binary(test, NOVEL, rng)?;
    Ok(SplitDatasets {
        vlm_train,
        vlm_val,
        clf_train,
        clf_val,
        test: test_binary,
    })
}

/// Row split for the data-joining task: 70/10/20 train/validation/test. The
/// column-wise clean/private partition comes from the schema roles.
pub fn split_data_join_rows(
    data: &LabeledData,
    rng: &mut RandomnessSource,
) -> Result<(LabeledData, LabeledData, LabeledData)> {
    if data.len() < 10 {
        return Err(CliError::validation("data-join split needs at least 10 rows"));
    }
    let (train_val, test) = data.split_fraction(0.8, rng);
    let (train, val) = train_val.split_fraction(0.875, rng);
    Ok((train, val, test))
}

/// Select a subset of feature columns, keeping labels and ids.
pub fn select_columns(data: &LabeledData, cols: &[usize]) -> Result<LabeledData> {
    let mut values = Vec::with_capacity(data.len() * cols.len());
    for r in 0..data.len() {
        let row = data.features.row(r);
        for &c in cols {
            if c >= row.len() {
                return Err(CliError::validation(format!(
                    "column {c} out of range for width {}",
                    row.len()
                )));
            }
            values.push(row[c]);
        }
    }
    Ok(LabeledData {
        features: Tensor::matrix(data.len(), cols.len(), values)?,
        labels: data.labels.clone(),
        ids: data.ids.clone(),
    })
}
