pub mod cli;
pub mod coupling;
pub mod diagnostics;
pub mod dissipation;
pub mod error;
pub mod fem;
pub mod io;
pub mod material;
pub mod mech;
pub mod point;
pub mod state;
pub mod tensor;
pub mod thermal;

pub use error::{Error, Result};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
    #[doc = include_str!("../../../book/src/materials.md")]
    mod materials {}
    #[doc = include_str!("../../../book/src/flow_rule.md")]
    mod flow_rule {}
    #[doc = include_str!("../../../book/src/coupling.md")]
    mod coupling {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/outputs.md")]
    mod outputs {}
}
