//! The shallow two-view model and its objective.

pub mod gradcheck;
mod objective;
mod params;

pub use objective::{
    grad, loss, loss_and_grad, single_view_loss_and_grad, CorrNetGrad, LossBreakdown, LossTermMask,
    Term, TwoViewBatch,
};
pub(crate) use objective::{Network, NetworkGrad};
pub use params::{glorot_uniform, CorrNetParams, Layer, ReconLoss};

use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::numerics::DenseMatrix;

/// Which view a single-view quantity belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ViewTag {
    X,
    Y,
}

impl ViewTag {
    pub fn other(self) -> Self {
        match self {
            ViewTag::X => ViewTag::Y,
            ViewTag::Y => ViewTag::X,
        }
    }
}

impl fmt::Display for ViewTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViewTag::X => "x",
            ViewTag::Y => "y",
        })
    }
}

impl FromStr for ViewTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "x" | "left" => Ok(ViewTag::X),
            "y" | "right" => Ok(ViewTag::Y),
            _ => Err(Error::InvalidArgument(format!(
                "unknown view `{s}` (expected x or y)"
            ))),
        }
    }
}

/// A learned map from either view into a shared code space.
pub trait TwoViewEncoder {
    /// Width of the shared code.
    fn code_dim(&self) -> usize;
    fn view_dim(&self, view: ViewTag) -> usize;
    /// Codes of one view's rows, computed without the other view.
    fn encode_view(&self, view: ViewTag, data: &DenseMatrix) -> crate::Result<DenseMatrix>;
}

impl TwoViewEncoder for CorrNetParams {
    fn code_dim(&self) -> usize {
        self.hidden_dim()
    }

    fn view_dim(&self, view: ViewTag) -> usize {
        match view {
            ViewTag::X => self.x_dim(),
            ViewTag::Y => self.y_dim(),
        }
    }

    fn encode_view(&self, view: ViewTag, data: &DenseMatrix) -> crate::Result<DenseMatrix> {
        match view {
            ViewTag::X => self.encode_x(data),
            ViewTag::Y => self.encode_y(data),
        }
    }
}
