//! Synthetic desk-scale datasets.
//!
//! Real corpora are out of scope (no dataset downloading), so experiments run
//! on two generators with documented ground truth:
//!
//! * 8x8 digit-like images: ten fixed glyph templates with per-sample
//!   intensity jitter. Class identity is carried by the glyph shape.
//! * A loan-table generator: three latent risk factors drive a binary
//!   outcome; a small "clean" feature block sees the factors weakly and a
//!   larger "private" block sees them strongly, so joining privatized
//!   partner features onto the clean block adds real signal.

use ldp_core::rng::RandomnessSource;

use crate::idx::IdxData;
use crate::preprocess::{ColumnKind, ColumnRole, ColumnSpec, TableSchema};

/// 8x8 glyphs for digits 0-9; '#' marks ink.
const GLYPHS: [[&str; 8]; 10] = [
    [
        " ###### ", "##    ##", "##    ##", "##    ##", "##    ##", "##    ##", "##    ##",
        " ###### ",
    ],
    [
        "   ##   ", "  ###   ", "   ##   ", "   ##   ", "   ##   ", "   ##   ", "   ##   ",
        " ###### ",
    ],
    [
        " ###### ", "##    ##", "      ##", "    ### ", "  ###   ", " ##     ", "##      ",
        "########",
    ],
    [
        " ###### ", "##    ##", "      ##", "   #### ", "      ##", "      ##", "##    ##",
        " ###### ",
    ],
    [
        "##   ## ", "##   ## ", "##   ## ", "##   ## ", "########", "     ## ", "     ## ",
        "     ## ",
    ],
    [
        "########", "##      ", "##      ", "####### ", "      ##", "      ##", "##    ##",
        " ###### ",
    ],
    [
        " ###### ", "##      ", "##      ", "####### ", "##    ##", "##    ##", "##    ##",
        " ###### ",
    ],
    [
        "########", "      ##", "     ## ", "    ##  ", "   ##   ", "  ##    ", "  ##    ",
        "  ##    ",
    ],
    [
        " ###### ", "##    ##", "##    ##", " ###### ", "##    ##", "##    ##", "##    ##",
        " ###### ",
    ],
    [
        " ###### ", "##    ##", "##    ##", " #######", "      ##", "      ##", "      ##",
        " ###### ",
    ],
];

/// Generate `n` 8x8 digit images with balanced classes (round-robin over the
/// ten glyphs) and intensity jitter. Returns IDX-shaped images and 0-based
/// label bytes.
pub fn synth_digits(n: usize, rng: &mut RandomnessSource) -> (IdxData, IdxData) {
    let mut pixels = Vec::with_capacity(n * 64);
    let mut labels = Vec::with_capacity(n);
    let mut order: Vec<usize> = (0..n).map(|i| i % 10).collect();
    rng.shuffle(&mut order);
    for &digit in &order {
        labels.push(digit as u8);
        for row in &GLYPHS[digit] {
            for ch in row.chars() {
                let base = if ch == '#' { 210.0 } else { 25.0 };
                let value = base + 25.0 * rng.standard_normal();
                pixels.push(value.clamp(0.0, 255.0) as u8);
            }
        }
    }
    (
        IdxData {
            dims: vec![n, 8, 8],
            data: pixels,
        },
        IdxData {
            dims: vec![n],
            data: labels,
        },
    )
}

/// Schema of the synthetic loan table: 8 clean features (7 continuous + 1
/// categorical) and 15 private features (13 continuous + 2 categorical),
/// plus label, chronological split key, and record id.
pub fn loan_schema() -> TableSchema {
    let mut columns = Vec::new();
    for i in 0..7 {
        columns.push(ColumnSpec {
            name: format!("clean_c{i}"),
            kind: ColumnKind::Continuous,
            role: ColumnRole::FeatureClean,
        });
    }
    columns.push(ColumnSpec {
        name: "clean_grade".into(),
        kind: ColumnKind::Categorical { cardinality: 3 },
        role: ColumnRole::FeatureClean,
    });
    for i in 0..13 {
        columns.push(ColumnSpec {
            name: format!("priv_c{i}"),
            kind: ColumnKind::Continuous,
            role: ColumnRole::FeaturePrivate,
        });
    }
    for i in 0..2 {
        columns.push(ColumnSpec {
            name: format!("priv_g{i}"),
            kind: ColumnKind::Categorical { cardinality: 3 },
            role: ColumnRole::FeaturePrivate,
        });
    }
    columns.push(ColumnSpec {
        name: "outcome".into(),
        kind: ColumnKind::Continuous,
        role: ColumnRole::Label,
    });
    columns.push(ColumnSpec {
        name: "issue_date".into(),
        kind: ColumnKind::Continuous,
        role: ColumnRole::SplitKey,
    });
    columns.push(ColumnSpec {
        name: "id".into(),
        kind: ColumnKind::Continuous,
        role: ColumnRole::Id,
    });
    TableSchema::new(columns).expect("static schema is valid")
}

/// Ground truth: factors f0..f2 ~ N(0,1); the outcome is
/// 1 + [f0 + 0.8 f1 - 0.6 f2 > 0]. Clean continuous features see the factors
/// at signal-to-noise 0.35, private continuous features at 1.4; categorical
/// features are terciles of noisy factor views.
pub fn synth_loans(n: usize, rng: &mut RandomnessSource) -> Vec<Vec<String>> {
    let mut rows = Vec::with_capacity(n);
    for id in 0..n {
        let f = [
            rng.standard_normal(),
            rng.standard_normal(),
            rng.standard_normal(),
        ];
        let score = f[0] + 0.8 * f[1] - 0.6 * f[2];
        let label = if score > 0.0 { 2 } else { 1 };
        let mut row: Vec<String> = Vec::with_capacity(26);
        // clean block: weak views
        for i in 0..7 {
            let v = 0.35 * f[i % 3] + rng.standard_normal();
            row.push(format!("{v}"));
        }
        row.push(format!("{}", tercile(0.35 * f[0] + rng.standard_normal())));
        // private block: strong views
        for i in 0..13 {
            let v = 1.4 * f[i % 3] + rng.standard_normal();
            row.push(format!("{v}"));
        }
        for i in 0..2 {
            row.push(format!("{}", tercile(1.4 * f[i % 3] + rng.standard_normal())));
        }
        row.push(format!("{label}"));
        row.push(format!("{id}")); // issue date: generation order
        row.push(format!("{id}"));
        rows.push(row);
    }
    rows
}

/// 1-based tercile bucket of a roughly unit-scale value.
fn tercile(v: f64) -> usize {
    if v < -0.43 {
        1
    } else if v < 0.43 {
        2
    } else {
        3
    }
}
