"""Cross-domain node classification by spectral mixing.

A labeled source graph and an unlabeled target graph are encoded with
shared weights: the source pass mixes both graphs' spectral filter
responses, the target pass fuses a local convolution branch with a global
co-occurrence branch, and a gradient-reversed domain head pushes the two
embeddings toward one distribution. A numerical harness checks the
first-order stability bound of the mixed layer on small graphs.
"""
from .autodiff import (
    AdamState,
    NumericError,
    ShapeError,
    Tape,
    Tensor,
    adam_step,
    backward,
    derive_seed,
    zero_grads,
)
from .graph import DomainPair, Graph, normalized_laplacian, permute_graph
from .spectral import (
    FilterBank,
    SpectralBasis,
    SpectralMixConfig,
    SpectralMixOperators,
    category_signature,
    cross_domain_signature_correlation,
    eig_sym,
    gft,
    inverse_gft,
    resample_signature,
    spectral_augment,
)
from .encoder import EncoderParams, PpmiCache, encode_source, encode_target, ppmi_matrix, transition_matrix
from .adversarial import (
    Heads,
    LossBreakdown,
    domain_loss,
    domain_scores,
    grl,
    label_logits,
    source_loss,
    target_entropy_loss,
    total_objective,
)
from .trainer import (
    VARIANTS,
    EpochRecord,
    TrainConfig,
    TrainedModel,
    TrainResult,
    evaluate,
    load_model,
    run_ablation,
    save_model,
    train,
    train_source_only_baseline,
)
from .stability import (
    BoundReport,
    SweepSummary,
    curved_filter_bank,
    operator_norm,
    optimal_permutation,
    run_perturbation_sweep,
    spectral_lipschitz,
    verify_bound,
)
from .dataio import (
    GraphFormatError,
    SbmDomainSpec,
    SbmSpec,
    default_sbm_spec,
    generate_sbm_pair,
    load_graph,
    load_pair,
    save_graph,
    save_pair,
)

__version__ = "0.1.0"
