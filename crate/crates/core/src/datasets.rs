//! Bundled example data.

use crate::model::Dataset;

/// CSV text of the combination drug study: 18 groups of 6 mice on a 3 x 6
/// factorial in centred doses of morphine sulfate (`x1`) and delta-9-THC
/// (`x2`). `y1` counts pain relief without toxicity, `y2` toxicity; the
/// remainder of each group is the reference category.
pub const GENNINGS1994_CSV: &str = include_str!("../../../data/gennings1994.csv");

pub fn gennings1994() -> Dataset {
    crate::csv::read_dataset(GENNINGS1994_CSV.as_bytes()).expect("bundled dataset is valid")
}
