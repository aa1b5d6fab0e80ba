//! KG-Transformer: adjacency-masked Transformer over converted subgraphs,
//! trained so that restored triples have low translation energy.

mod encoder;
mod export;
mod loss;
mod params;
mod train;

pub use encoder::{
    encode, encode_sample, forward, forward_inputs, BoundParams, Encoded, Forward, HeadVars, LayerVars,
};
pub use export::{draw_seed, export_embeddings, Export, ExportMode};
pub use loss::{
    energy_pair, margin_loss, margin_loss_on, margin_term, restore_triples, rows_touched, NegativeMode,
};
pub use params::{Architecture, HeadParams, LayerParams, ModelParams};
pub use train::{train, train_with, KgfConfig, Training};
