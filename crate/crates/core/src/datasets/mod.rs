//! Loading and constructing two-view datasets.

mod idx;
mod synth;
mod text;
mod views;

pub use idx::*;
pub use synth::*;
pub use text::*;
pub use views::*;
