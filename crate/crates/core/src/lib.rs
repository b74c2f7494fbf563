//! Recursive neural networks over binary parse trees with an LSTM
//! composition function, trained by backpropagation through structure and
//! AdaGrad on sentiment treebank data.

pub mod cli;
pub mod embeddings;
pub mod evaluation;
pub mod model;
pub mod synthetic;
pub mod tensor;
pub mod training;
pub mod treebank;
