//! Multinomial regression with parametric link families.
//!
//! The crate fits nominal multinomial models whose link generalizes the
//! multicategory logit through per-category generating families, tests the
//! link parameters, and builds joint confidence regions for the covariate
//! settings at which the model hits a target probability vector (joint
//! percentiles such as an ED75/LD20 dose combination).
//!
//! ```no_run
//! use multilink::prelude::*;
//!
//! let data = multilink::datasets::gennings1994();
//! let spec = ModelSpec::first_order(2, 2);
//! let link = MultinomialLink::new(
//!     vec![GeneratingFamily::czado([true, true]), GeneratingFamily::czado([false, false])],
//!     Standardization::AtIntercepts,
//! );
//! let fit = multilink::fitting::fit(&data, &spec, &link, &FitOptions::default()).unwrap();
//! println!("deviance {:.4}", fit.deviance);
//! ```

pub mod csv;
pub mod datasets;
pub mod error;
pub mod fitting;
pub mod link;
pub mod model;
pub mod percentile;
pub mod selection;
pub mod special;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::error::{Error, Result};
    pub use crate::fitting::{FitMethod, FitOptions, FitResult};
    pub use crate::link::{FamilyKind, GeneratingFamily, MultinomialLink, Standardization};
    pub use crate::model::{Dataset, ModelSpec, Observation, ParameterVector, Term};
    pub use crate::percentile::{ConfidenceRegion, PercentileQuery, RegionMethod, TraceGrid};
}
