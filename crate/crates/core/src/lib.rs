//! Face verification with autoencoder-initialized dense networks.
//!
//! An autoencoder is pretrained on unlabeled faces ([`pretrain`]), its
//! weights seed an identity classifier that is fine-tuned with cross-entropy
//! ([`transfer`]), and the classifier's penultimate layer serves as the
//! embedding for cosine-scored pair verification under k-fold threshold
//! selection ([`verify`]). [`viz`] has exact t-SNE and scatter plots,
//! [`dataio`] the image, manifest and pair formats plus a synthetic dataset.
//!
//! Runnable examples, one per capability:
//!
//! - `gradient_check`: backprop against finite differences
//! - `pretrain_autoencoder`: pretraining and reconstructions
//! - `transfer_init_modes`: encoder-only, full-autoencoder and random init
//! - `verify_pairs`: cosine scores, thresholds, k-fold accuracy
//! - `tsne_scatter`: 2-D maps of pixels and embeddings
//! - `persistence`: model file round trip
//! - `desk_pipeline`: every `aeface` subcommand in sequence
//!
//! ```text
//! cargo run --release --example desk_pipeline -- /tmp/desk
//! ```

pub mod dataio;
pub mod cli;
pub mod error;
pub mod nn;
pub mod pretrain;
pub mod tensor;
pub mod transfer;
pub mod verify;
pub mod viz;

pub use error::{Error, Result};
pub use tensor::Matrix;
