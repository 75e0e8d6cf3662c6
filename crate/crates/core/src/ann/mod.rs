//! Solution network: dense kernels, the reverse-mode tape, the DGM architecture
//! and the composed price representation.

pub mod checkpoint;
pub mod dense;
pub mod network;
pub mod solution;
pub mod tape;

pub use dense::Mat;
pub use network::{Layout, NetworkParams, NetworkShape};
pub use solution::{parameter_gradient, solution_value, Adjoint, Evaluation, SolutionHead};
pub use tape::{Block, NodeId, Tape};
