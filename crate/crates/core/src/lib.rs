pub mod construct;
pub mod error;
pub mod generators;
pub mod interval;
pub mod recovery;
pub mod scenario;
pub mod signal;
pub mod topology;

pub use error::{Error, Result};
pub use interval::{IntervalSet, SetClass};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/intervals.md")]
    mod intervals {}
    #[doc = include_str!("../../../book/src/signals.md")]
    mod signals {}
    #[doc = include_str!("../../../book/src/topology.md")]
    mod topology {}
    #[doc = include_str!("../../../book/src/construction.md")]
    mod construction {}
    #[doc = include_str!("../../../book/src/recovery.md")]
    mod recovery {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
}
