//! mdbook cannot run snippets that depend on workspace crates, so each
//! chapter is included here as a module doc and run by `cargo test --doc`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}

#[doc = include_str!("../../../book/src/order.md")]
pub mod order {}

#[doc = include_str!("../../../book/src/conditions.md")]
pub mod conditions {}

#[doc = include_str!("../../../book/src/coupling.md")]
pub mod coupling {}

#[doc = include_str!("../../../book/src/analysis.md")]
pub mod analysis {}

#[doc = include_str!("../../../book/src/examples.md")]
pub mod examples {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
