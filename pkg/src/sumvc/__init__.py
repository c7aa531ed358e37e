"""Variational multi-view clustering with exact self-verification.

Two trainable objectives over per-view Gaussian encoders: a
consistency objective (reconstruction plus a clustering prior) and a
sufficiency objective that aligns views by cross-view KL with an
optional contrastive bound. The infotheory module provides exact
discrete-joint computations used to certify the identities the
objectives rely on.
"""

from .data import (
    MultiViewDataset,
    from_csv,
    gen_synthetic_gmm,
    load_mvds,
    pair_by_class,
    save_mvds,
    standardize_views,
)
from .errors import (
    ConfigError,
    ContractError,
    DataError,
    DimensionError,
    FormatError,
    GraphError,
    NumericAbort,
    NumericError,
    OracleError,
    SumvcError,
)
from .losses import (
    LossBreakdown,
    cluster_kl_loss,
    cross_view_kl,
    infonce_mi,
    recon_loss,
    scmvc_loss,
    suf_loss,
    total_objective,
)
from .metrics import (
    KMeansResult,
    Partition,
    ari,
    clustering_accuracy,
    kmeans,
    nmi,
)
from .model import (
    MultiViewModel,
    ViewLatent,
    concat_latents,
    load_checkpoint,
    reparameterize,
    save_checkpoint,
)
from .tensor import (
    AdamState,
    Tape,
    Tensor,
    adam_step,
    dense_forward,
    finite_difference_check,
)
from .trainer import (
    AblationGrid,
    EvalResult,
    TrainConfig,
    TrainReport,
    ablate,
    evaluate,
    pretrain,
    train,
    train_scmvc,
    train_sumvc,
)

__version__ = "0.1.0"
