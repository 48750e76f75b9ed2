pub mod belldiag;
pub mod engine;
pub mod netmodel;
pub mod protocol;
pub mod scenario;
pub mod sim;
