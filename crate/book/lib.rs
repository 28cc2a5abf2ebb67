// mdbook cannot run listings that depend on workspace crates, so every
// chapter is pulled in as a module doc and `cargo test --doc` runs them.
// One module per chapter keeps failures traceable to a file.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/frames.md")]
pub mod frames {}
#[doc = include_str!("src/kinematics.md")]
pub mod kinematics {}
#[doc = include_str!("src/retargeting.md")]
pub mod retargeting {}
#[doc = include_str!("src/rendering.md")]
pub mod rendering {}
#[doc = include_str!("src/compositing.md")]
pub mod compositing {}
#[doc = include_str!("src/datasets.md")]
pub mod datasets {}
#[doc = include_str!("src/metric.md")]
pub mod metric {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
