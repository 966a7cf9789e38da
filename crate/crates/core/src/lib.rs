//! Build labeled chest X-ray datasets from hospital archive exports.
//!
//! The guide in `book/` walks through each stage; its code samples are
//! compiled and run as doc-tests of this crate.

pub mod artifacts;
pub mod his;
pub mod label_file;
pub mod labeler;
pub mod label_map;
pub mod labels;
pub mod matcher;
pub mod metrics;
pub mod pacs;
pub mod pipeline;
pub mod review;
pub mod splitter;

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/ingest.md")]
    mod ingest {}
    #[doc = include_str!("../../../book/src/matching.md")]
    mod matching {}
    #[doc = include_str!("../../../book/src/labeling.md")]
    mod labeling {}
    #[doc = include_str!("../../../book/src/review.md")]
    mod review {}
    #[doc = include_str!("../../../book/src/label-map.md")]
    mod label_map {}
    #[doc = include_str!("../../../book/src/splitting.md")]
    mod splitting {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
