//! Image and table preprocessing.
//!
//! Table statistics (means, scales, observed ranges) are fitted exclusively
//! on the leading model-training portion of the chronologically ordered rows
//! and applied everywhere else; the fitted stats are carried on the schema so
//! downstream code can assert the provenance.

use ldp_core::mechanisms::FeatureKind;
use ldp_core::rng::RandomnessSource;
use ldp_core::tensor::Tensor;

use crate::error::{CliError, Result};
use crate::idx::IdxData;

/// Clamp margin for the pixel logit transform.
const LOGIT_ETA: f64 = 1e-4;

/// x <- logit(clamp(p/255, eta, 1-eta)) per pixel.
pub fn preprocess_images(images: &IdxData) -> Result<Tensor> {
    let n = images.items();
    let width = images.item_len();
    if width == 0 && n > 0 {
        return Err(CliError::validation("images have zero pixels"));
    }
    let mut values = Vec::with_capacity(n * width);
    for &byte in &images.data {
        let p = (byte as f64 / 255.0).clamp(LOGIT_ETA, 1.0 - LOGIT_ETA);
        values.push((p / (1.0 - p)).ln());
    }
    Ok(Tensor::matrix(n, width, values)?)
}

/// 1-based labels from an IDX label file holding classes 0..=9.
pub fn labels_from_idx(labels: &IdxData) -> Result<Vec<usize>> {
    if labels.dims.len() != 1 {
        return Err(CliError::validation(format!(
            "label file must be one-dimensional, got dims {:?}",
            labels.dims
        )));
    }
    Ok(labels.data.iter().map(|&b| b as usize + 1).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ColumnKind {
    Continuous,
    Categorical { cardinality: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ColumnRole {
    FeatureClean,
    FeaturePrivate,
    Label,
    SplitKey,
    Id,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub role: ColumnRole,
}

/// Per-continuous-feature statistics fitted on the training split.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FittedStats {
    /// Indexed like the feature columns (categorical slots unused).
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Observed (scaled-space) ranges on the fit split.
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// Fraction of chronologically leading rows the stats were fitted on.
    pub fit_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TableSchema {
    pub columns: Vec<ColumnSpec>,
    /// Present only after preprocessing; fitted on the training split.
    pub stats: Option<FittedStats>,
}

impl TableSchema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        let labels = columns
            .iter()
            .filter(|c| c.role == ColumnRole::Label)
            .count();
        if labels != 1 {
            return Err(CliError::validation(format!(
                "schema must have exactly one label column, found {labels}"
            )));
        }
        Ok(Self { columns, stats: None })
    }

    pub fn feature_columns(&self) -> impl Iterator<Item = (usize, &ColumnSpec)> {
        self.columns.iter().enumerate().filter(|(_, c)| {
            matches!(c.role, ColumnRole::FeatureClean | ColumnRole::FeaturePrivate)
        })
    }
}

/// One rejected row with the reason.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RowError {
    pub row: usize,
    pub message: String,
}

/// The preprocessed table, in both pre-one-hot form (what the per-feature
/// benchmark mechanisms consume) and one-hot form (what networks consume).
#[derive(Debug, Clone)]
pub struct PreprocessedTable {
    pub schema: TableSchema,
    /// Stable ids assigned at ingestion (or taken from an id column).
    pub ids: Vec<u64>,
    /// 1-based labels.
    pub labels: Vec<usize>,
    pub num_classes: usize,
    /// Scaled features with raw 1-based category indices; one column per
    /// pre-one-hot feature.
    pub pre_onehot: Tensor,
    /// Mechanism schema for the pre-one-hot columns (scaled-space ranges).
    pub feature_kinds: Vec<FeatureKind>,
    /// One-hot encoded features for network consumption.
    pub features: Tensor,
    /// Column indices (into `features`) covered by clean-role columns.
    pub clean_feature_cols: Vec<usize>,
    /// Column indices covered by private-role columns.
    pub private_feature_cols: Vec<usize>,
    /// Rows rejected during parsing or outlier filtering.
    pub row_errors: Vec<RowError>,
}

/// Preprocess raw string cells per the fixed pipeline: drop configured
/// columns, parse, order chronologically by the split key, fit stats on the
/// leading `fit_fraction`, mean-impute, standard-scale, drop >10-sigma rows,
/// balance classes by downsampling the majority, one-hot encode.
pub fn preprocess_table(
    rows: &[Vec<String>],
    schema: &TableSchema,
    drop_columns: &[String],
    fit_fraction: f64,
    rng: &mut RandomnessSource,
) -> Result<PreprocessedTable> {
    if !(0.0 < fit_fraction && fit_fraction <= 1.0) {
        return Err(CliError::validation("fit_fraction must be in (0, 1]"));
    }
    let keep: Vec<(usize, &ColumnSpec)> = schema
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| !drop_columns.contains(&c.name))
        .collect();
    if !keep.iter().any(|(_, c)| c.role == ColumnRole::Label) {
        return Err(CliError::validation("label column missing after drops"));
    }
    let feature_specs: Vec<(usize, &ColumnSpec)> = keep
        .iter()
        .filter(|(_, c)| {
            matches!(c.role, ColumnRole::FeatureClean | ColumnRole::FeaturePrivate)
        })
        .cloned()
        .collect();
    let label_col = keep
        .iter()
        .find(|(_, c)| c.role == ColumnRole::Label)
        .unwrap()
        .0;
    let split_col = keep
        .iter()
        .find(|(_, c)| c.role == ColumnRole::SplitKey)
        .map(|(i, _)| *i);
    let id_col = keep.iter().find(|(_, c)| c.role == ColumnRole::Id).map(|(i, _)| *i);

    // parse; missing continuous cells become None for imputation
    struct ParsedRow {
        id: u64,
        label: usize,
        split_key: f64,
        features: Vec<Option<f64>>,
    }
    let mut parsed: Vec<ParsedRow> = Vec::with_capacity(rows.len());
    let mut row_errors: Vec<RowError> = Vec::new();
    'rows: for (r, row) in rows.iter().enumerate() {
        if row.len() != schema.columns.len() {
            row_errors.push(RowError {
                row: r,
                message: format!(
                    "expected {} cells, found {}",
                    schema.columns.len(),
                    row.len()
                ),
            });
            continue;
        }
        let mut features = Vec::with_capacity(feature_specs.len());
        for &(col, spec) in &feature_specs {
            let cell = row[col].trim();
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                features.push(None);
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    if let ColumnKind::Categorical { cardinality } = spec.kind {
                        let cat = v as usize;
                        if v.fract() != 0.0 || cat < 1 || cat > cardinality {
                            row_errors.push(RowError {
                                row: r,
                                message: format!(
                                    "column {}: category {cell} outside 1..={cardinality}",
                                    spec.name
                                ),
                            });
                            continue 'rows;
                        }
                    }
                    features.push(Some(v));
                }
                _ => {
                    row_errors.push(RowError {
                        row: r,
                        message: format!("column {}: non-numeric cell {cell:?}", spec.name),
                    });
                    continue 'rows;
                }
            }
        }
        let label = match row[label_col].trim().parse::<usize>() {
            Ok(l) if l >= 1 => l,
            _ => {
                row_errors.push(RowError {
                    row: r,
                    message: format!("bad label cell {:?}", row[label_col]),
                });
                continue;
            }
        };
        let split_key = match split_col {
            Some(c) => match row[c].trim().parse::<f64>() {
                Ok(v) => v,
                Err(_) => {
                    row_errors.push(RowError {
                        row: r,
                        message: format!("bad split key cell {:?}", row[c]),
                    });
                    continue;
                }
            },
            None => r as f64,
        };
        let id = match id_col {
            Some(c) => match row[c].trim().parse::<u64>() {
                Ok(v) => v,
                Err(_) => {
                    row_errors.push(RowError {
                        row: r,
                        message: format!("bad id cell {:?}", row[c]),
                    });
                    continue;
                }
            },
            None => r as u64,
        };
        parsed.push(ParsedRow {
            id,
            label,
            split_key,
            features,
        });
    }

    // chronological order: all split decisions happen on this ordering
    parsed.sort_by(|a, b| a.split_key.partial_cmp(&b.split_key).unwrap());

    let n = parsed.len();
    if n == 0 {
        return Err(CliError::validation("no parseable rows"));
    }
    let width = feature_specs.len();
    let fit_n = ((n as f64 * fit_fraction).ceil() as usize).clamp(1, n);

    // fit means and scales on the leading split only
    let mut mean = vec![0.0; width];
    let mut std = vec![0.0; width];
    for j in 0..width {
        if matches!(feature_specs[j].1.kind, ColumnKind::Categorical { .. }) {
            continue;
        }
        let observed: Vec<f64> = parsed[..fit_n]
            .iter()
            .filter_map(|p| p.features[j])
            .collect();
        if observed.is_empty() {
            continue;
        }
        let m = observed.iter().sum::<f64>() / observed.len() as f64;
        let var = observed.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
            / observed.len() as f64;
        mean[j] = m;
        std[j] = var.sqrt();
    }

    // impute + scale, then drop outliers beyond 10 sigma (|scaled| > 10)
    let mut kept: Vec<(u64, usize, Vec<f64>)> = Vec::with_capacity(n);
    for (r, p) in parsed.iter().enumerate() {
        let mut vals = Vec::with_capacity(width);
        let mut outlier = false;
        for j in 0..width {
            match feature_specs[j].1.kind {
                ColumnKind::Categorical { cardinality } => {
                    // impute missing categories with category 1
                    let v = p.features[j].unwrap_or(1.0);
                    debug_assert!(v >= 1.0 && v <= cardinality as f64);
                    vals.push(v);
                }
                ColumnKind::Continuous => {
                    let raw = p.features[j].unwrap_or(mean[j]);
                    let scaled = (raw - mean[j]) / std[j].max(1e-12);
                    if scaled.abs() > 10.0 {
                        outlier = true;
                    }
                    vals.push(scaled);
                }
            }
        }
        if outlier {
            row_errors.push(RowError {
                row: r,
                message: "dropped: a feature lies more than 10 standard deviations out".into(),
            });
            continue;
        }
        kept.push((p.id, p.label, vals));
    }
    if kept.is_empty() {
        return Err(CliError::validation("all rows dropped during preprocessing"));
    }

    // balance classes by downsampling every class to the minority count
    let num_classes = kept.iter().map(|(_, l, _)| *l).max().unwrap();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, (_, l, _)) in kept.iter().enumerate() {
        by_class[*l - 1].push(i);
    }
    let minority = by_class
        .iter()
        .filter(|c| !c.is_empty())
        .map(|c| c.len())
        .min()
        .unwrap();
    let mut selected: Vec<usize> = Vec::new();
    for class in &mut by_class {
        if class.is_empty() {
            continue;
        }
        rng.shuffle(class);
        class.truncate(minority);
        selected.extend_from_slice(class);
    }
    selected.sort_unstable(); // restore chronological order

    // observed scaled-space ranges per continuous feature, from the fit rows
    // that survived
    let mut min = vec![f64::INFINITY; width];
    let mut max = vec![f64::NEG_INFINITY; width];
    let fit_ids: std::collections::HashSet<u64> =
        parsed[..fit_n].iter().map(|p| p.id).collect();
    for &i in &selected {
        let (id, _, vals) = &kept[i];
        if !fit_ids.contains(id) {
            continue;
        }
        for j in 0..width {
            if matches!(feature_specs[j].1.kind, ColumnKind::Continuous) {
                min[j] = min[j].min(vals[j]);
                max[j] = max[j].max(vals[j]);
            }
        }
    }
    for j in 0..width {
        if matches!(feature_specs[j].1.kind, ColumnKind::Continuous)
            && !(min[j] < max[j])
        {
            // degenerate fit split: fall back to a symmetric unit range
            min[j] = -1.0;
            max[j] = 1.0;
        }
    }

    let feature_kinds: Vec<FeatureKind> = feature_specs
        .iter()
        .enumerate()
        .map(|(j, (_, spec))| match spec.kind {
            ColumnKind::Continuous => FeatureKind::Continuous {
                min: min[j],
                max: max[j],
            },
            ColumnKind::Categorical { cardinality } => {
                FeatureKind::Categorical { cardinality }
            }
        })
        .collect();

    // assemble outputs
    let mut ids = Vec::with_capacity(selected.len());
    let mut labels = Vec::with_capacity(selected.len());
    let mut pre_values = Vec::with_capacity(selected.len() * width);
    for &i in &selected {
        let (id, label, vals) = &kept[i];
        ids.push(*id);
        labels.push(*label);
        pre_values.extend_from_slice(vals);
    }
    let pre_onehot = Tensor::matrix(selected.len(), width, pre_values)?;
    let (features, col_owner) = one_hot_encode(&pre_onehot, &feature_kinds)?;
    let mut clean_feature_cols = Vec::new();
    let mut private_feature_cols = Vec::new();
    for (col, &owner) in col_owner.iter().enumerate() {
        match feature_specs[owner].1.role {
            ColumnRole::FeatureClean => clean_feature_cols.push(col),
            ColumnRole::FeaturePrivate => private_feature_cols.push(col),
            _ => unreachable!(),
        }
    }

    let mut schema = schema.clone();
    schema.stats = Some(FittedStats {
        mean,
        std,
        min,
        max,
        fit_fraction,
    });
    Ok(PreprocessedTable {
        schema,
        ids,
        labels,
        num_classes,
        pre_onehot,
        feature_kinds,
        features,
        clean_feature_cols,
        private_feature_cols,
        row_errors,
    })
}

/// Expand categorical columns to one-hot indicator blocks; continuous columns
/// pass through. Returns the encoded matrix and, per output column, the index
/// of the pre-one-hot feature it came from.
pub fn one_hot_encode(
    pre_onehot: &Tensor,
    kinds: &[FeatureKind],
) -> Result<(Tensor, Vec<usize>)> {
    if pre_onehot.cols() != kinds.len() {
        return Err(CliError::validation(
            "feature kinds do not match pre-one-hot width",
        ));
    }
    let mut col_owner = Vec::new();
    for (j, kind) in kinds.iter().enumerate() {
        match kind {
            FeatureKind::Continuous { .. } => col_owner.push(j),
            FeatureKind::Categorical { cardinality } => {
                col_owner.extend(std::iter::repeat(j).take(*cardinality));
            }
        }
    }
    let width = col_owner.len();
    let mut values = Vec::with_capacity(pre_onehot.rows() * width);
    for r in 0..pre_onehot.rows() {
        let row = pre_onehot.row(r);
        for (j, kind) in kinds.iter().enumerate() {
            match kind {
                FeatureKind::Continuous { .. } => values.push(row[j]),
                FeatureKind::Categorical { cardinality } => {
                    let cat = row[j] as usize;
                    if row[j].fract() != 0.0 || cat < 1 || cat > *cardinality {
                        return Err(CliError::validation(format!(
                            "category {} outside 1..={cardinality} in column {j}",
                            row[j]
                        )));
                    }
                    for c in 1..=*cardinality {
                        values.push(if c == cat { 1.0 } else { 0.0 });
                    }
                }
            }
        }
    }
    Ok((Tensor::matrix(pre_onehot.rows(), width, values)?, col_owner))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_midpoint_maps_to_zero() {
        let images = IdxData {
            dims: vec![1, 1, 3],
            data: vec![0, 128, 255],
        };
        let t = preprocess_images(&images).unwrap();
        // pixel 0 -> logit(1e-4)
        assert!((t.values()[0] - (1e-4f64 / (1.0 - 1e-4)).ln()).abs() < 1e-12);
        assert!((t.values()[0] + 9.2102).abs() < 1e-3);
        // 128/255 is just above the midpoint
        assert!(t.values()[1] > 0.0 && t.values()[1] < 0.05);
        assert!((t.values()[2] + t.values()[0]).abs() < 1e-12); // symmetry
    }

    #[test]
    fn pixel_transform_is_monotone() {
        let images = IdxData {
            dims: vec![1, 1, 256],
            data: (0..=255).collect(),
        };
        let t = preprocess_images(&images).unwrap();
        for w in t.values().windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    fn schema_2cont_1cat() -> TableSchema {
        TableSchema::new(vec![
            ColumnSpec {
                name: "a".into(),
                kind: ColumnKind::Continuous,
                role: ColumnRole::FeaturePrivate,
            },
            ColumnSpec {
                name: "b".into(),
                kind: ColumnKind::Continuous,
                role: ColumnRole::FeatureClean,
            },
            ColumnSpec {
                name: "c".into(),
                kind: ColumnKind::Categorical { cardinality: 3 },
                role: ColumnRole::FeaturePrivate,
            },
            ColumnSpec {
                name: "y".into(),
                kind: ColumnKind::Continuous,
                role: ColumnRole::Label,
            },
        ])
        .unwrap()
    }

    fn to_rows(raw: &[[&str; 4]]) -> Vec<Vec<String>> {
        raw.iter()
            .map(|r| r.iter().map(|s| s.to_string()).collect())
            .collect()
    }

    #[test]
    fn constant_column_scales_to_zero() {
        let rows = to_rows(&[
            ["5", "1", "1", "1"],
            ["5", "2", "2", "2"],
            ["5", "3", "3", "1"],
            ["5", "4", "1", "2"],
        ]);
        let mut rng = RandomnessSource::from_seed(1);
        let out = preprocess_table(&rows, &schema_2cont_1cat(), &[], 1.0, &mut rng).unwrap();
        for r in 0..out.pre_onehot.rows() {
            assert_eq!(out.pre_onehot.row(r)[0], 0.0);
        }
        assert!(out.row_errors.is_empty());
    }

    #[test]
    fn eleven_sigma_row_is_removed() {
        // 100 tight rows and one far outlier on column b
        let mut raw: Vec<Vec<String>> = Vec::new();
        for i in 0..100 {
            let v = (i % 10) as f64 / 10.0;
            raw.push(vec![format!("{v}"), format!("{v}"), "1".into(), format!("{}", i % 2 + 1)]);
        }
        raw.push(vec!["0.5".into(), "1000".into(), "1".into(), "1".into()]);
        let mut rng = RandomnessSource::from_seed(2);
        // stats fitted on the leading half, which excludes the outlier; a
        // full-split fit would cap the outlier's own z-score near sqrt(n)
        let out = preprocess_table(&raw, &schema_2cont_1cat(), &[], 0.5, &mut rng).unwrap();
        assert!(out
            .row_errors
            .iter()
            .any(|e| e.message.contains("10 standard deviations")));
        assert_eq!(out.pre_onehot.rows(), 100);
    }

    #[test]
    fn balanced_labels_drop_no_rows() {
        let rows = to_rows(&[
            ["1", "1", "1", "1"],
            ["2", "2", "2", "2"],
            ["3", "3", "3", "1"],
            ["4", "4", "1", "2"],
        ]);
        let mut rng = RandomnessSource::from_seed(3);
        let out = preprocess_table(&rows, &schema_2cont_1cat(), &[], 1.0, &mut rng).unwrap();
        assert_eq!(out.pre_onehot.rows(), 4);
        assert_eq!(out.labels.iter().filter(|&&l| l == 1).count(), 2);
    }

    #[test]
    fn imbalanced_labels_downsample_majority() {
        let rows = to_rows(&[
            ["1", "1", "1", "1"],
            ["2", "2", "2", "1"],
            ["3", "3", "3", "1"],
            ["4", "4", "1", "2"],
        ]);
        let mut rng = RandomnessSource::from_seed(4);
        let out = preprocess_table(&rows, &schema_2cont_1cat(), &[], 1.0, &mut rng).unwrap();
        assert_eq!(out.pre_onehot.rows(), 2);
        assert_eq!(out.labels.iter().filter(|&&l| l == 1).count(), 1);
        assert_eq!(out.labels.iter().filter(|&&l| l == 2).count(), 1);
    }

    #[test]
    fn non_numeric_cell_reports_row_error() {
        let rows = to_rows(&[
            ["1", "oops", "1", "1"],
            ["2", "2", "2", "2"],
            ["2", "2", "2", "1"],
        ]);
        let mut rng = RandomnessSource::from_seed(5);
        let out = preprocess_table(&rows, &schema_2cont_1cat(), &[], 1.0, &mut rng).unwrap();
        assert!(out.row_errors.iter().any(|e| e.row == 0 && e.message.contains("non-numeric")));
        assert_eq!(out.pre_onehot.rows(), 2);
    }

    #[test]
    fn one_hot_layout_and_roles() {
        let rows = to_rows(&[
            ["1", "1", "3", "1"],
            ["2", "2", "1", "2"],
        ]);
        let mut rng = RandomnessSource::from_seed(6);
        let out = preprocess_table(&rows, &schema_2cont_1cat(), &[], 1.0, &mut rng).unwrap();
        // width = 2 continuous + 3 one-hot
        assert_eq!(out.features.cols(), 5);
        assert_eq!(out.features.row(0)[2..], [0.0, 0.0, 1.0]);
        assert_eq!(out.features.row(1)[2..], [1.0, 0.0, 0.0]);
        assert_eq!(out.clean_feature_cols, vec![1]);
        assert_eq!(out.private_feature_cols, vec![0, 2, 3, 4]);
    }

    #[test]
    fn dropping_the_label_column_is_rejected() {
        let rows = to_rows(&[["1", "1", "1", "1"]]);
        let mut rng = RandomnessSource::from_seed(7);
        let err =
            preprocess_table(&rows, &schema_2cont_1cat(), &["y".into()], 1.0, &mut rng)
                .unwrap_err();
        assert!(err.to_string().contains("label"));
    }

    #[test]
    fn mean_imputation_uses_fit_split_mean() {
        let rows = to_rows(&[
            ["1", "0", "1", "1"],
            ["3", "0", "1", "2"],
            ["", "0", "1", "1"],
            ["", "0", "1", "2"],
        ]);
        let mut rng = RandomnessSource::from_seed(8);
        // fit on the first half: mean of column a is 2, std 1
        let out = preprocess_table(&rows, &schema_2cont_1cat(), &[], 0.5, &mut rng).unwrap();
        // the imputed rows carry the fitted mean, which scales to 0
        assert_eq!(out.pre_onehot.row(2)[0], 0.0);
        assert_eq!(out.pre_onehot.row(3)[0], 0.0);
        let stats = out.schema.stats.as_ref().unwrap();
        assert_eq!(stats.mean[0], 2.0);
        assert_eq!(stats.fit_fraction, 0.5);
    }
}
