pub mod backend;
pub mod bench;
pub mod checkpoint;
pub mod golden;
pub mod models;
pub mod tensor;
pub mod tokenizer;

pub use backend::{Backend, BackendId};
pub use models::{EncoderConfig, EncoderInput, EncoderOutput, EncoderWeights, ModelFamily};
pub use tensor::{DType, Tensor, TensorError};
pub use tokenizer::{Encoding, SpecialTokens, Tokenizer, TokenizerError};
