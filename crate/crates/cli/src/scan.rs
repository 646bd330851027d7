use std::collections::BTreeMap;

use nesphere::{fit_hypersphere, EmbeddingSpace, FitConfig, NeDictionary, NeType, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ScanRow {
    pub ne_type: NeType,
    pub dim: usize,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DimensionScan {
    /// One row per (type, dimension), dimensions ascending.
    pub rows: Vec<ScanRow>,
    /// Best `(dim, f1)` per type; ties go to the smaller dimension.
    pub best: BTreeMap<NeType, (usize, f64)>,
}

/// Fits every type present in `dict` in every space and keeps the dimension
/// with the highest F1.
pub fn scan_dimensions(
    spaces: &BTreeMap<usize, EmbeddingSpace>,
    train: &NeDictionary,
    dict: &NeDictionary,
    config: &FitConfig,
) -> Result<DimensionScan> {
    let mut rows = Vec::new();
    let mut best: BTreeMap<NeType, (usize, f64)> = BTreeMap::new();
    for t in dict.types() {
        for (&dim, space) in spaces {
            let fit = fit_hypersphere(space, train.entries(t), dict.entries(t), config, t)?;
            let f1 = fit.report.f1;
            rows.push(ScanRow {
                ne_type: t,
                dim,
                f1,
            });
            match best.get(&t) {
                Some(&(_, b)) if f1 <= b => {}
                _ => {
                    best.insert(t, (dim, f1));
                }
            }
        }
    }
    Ok(DimensionScan { rows, best })
}
