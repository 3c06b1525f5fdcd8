//! Small numerical kernels shared by the rest of the crate.

mod linalg;
mod normal;
mod sum;

pub(crate) use linalg::mat_vec;
pub use linalg::Matrix;
pub use normal::{beta_quantile, normal_cdf, normal_pdf, normal_quantile, normal_sf};
pub use sum::KahanSum;
