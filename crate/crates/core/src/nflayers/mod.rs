//! Closed-form equivariant NF-Layers, invariant pooling, IO encoding, and the
//! assembled neural functional network.

mod checkpoint;
mod equivariant;
mod io;
mod mlp;
mod model;
mod pool;

pub use checkpoint::{Checkpoint, NFN_MAGIC};
pub use equivariant::{closed_form_param_count, Block, EquivariantLayer, LayerFamily, Term};
pub use io::{io_encode, position, EncodingMode, IoEncoder, IoEncodingConfig};
pub use mlp::{Mlp, MlpCache};
pub use model::{
    build_nfn, hnp_forward, nfn_forward, np_forward, pointwise_forward, HeadConfig, Nfn, NfnCache,
    NfnConfig, NfnOutput, TaskHead,
};
pub use pool::{
    invariant_pool, invariant_pool_backward, invariant_pool_hnp, invariant_pool_np, pooled_len,
    PoolKind,
};
