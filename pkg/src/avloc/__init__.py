"""Audio-visual sound source localization toolkit.

Operates on pre-extracted features: spatial visual feature maps (c, h, w)
and audio embeddings (c,). Provides the multi-positive contrastive
alignment objective with analytic gradients, nearest-neighbor positive
mining, the full localization/segmentation/retrieval evaluation suite, a
synthetic benchmark generator, and a CLI (``avloc``).
"""

from .correspondence import (
    ProjectionParams,
    correspondence_map,
    identity_projection,
    init_projection,
    project,
    sim_align,
    sim_localize,
)
from .errors import AvlocError, ManifestError, TensorFormatError, ValidationError
from .gradcheck import finite_difference_gradients, gradient_check, make_toy_batch
from .kernels import (
    avg_pool,
    bilinear_resize,
    cosine,
    l2_normalize,
    top_count_mask,
    top_fraction_mask,
)
from .loss import (
    ContrastiveConfig,
    LossGradients,
    LossReport,
    PositiveTriple,
    SampleFeatures,
    SamplePositives,
    contrastive_pair_loss,
    info_nce,
    intra_modality_loss,
    multi_positive_gradients,
    multi_positive_loss,
)
from .metrics import (
    EvalSample,
    GroundTruth,
    MetricConfig,
    MetricReport,
    adaptive_ciou,
    auc,
    ciou,
    evaluate,
    extended_metrics,
    interactive_iou,
    iou,
    segmentation_metrics,
)
from .mining import (
    EmbeddingIndex,
    MiningConfig,
    PairBatch,
    assemble_pair_batch,
    audio_time_shift,
    build_index,
    sample_concept,
    top_k,
)
from .retrieval import (
    AlignmentReport,
    RetrievalPool,
    alignment_magnitude,
    compose,
    compositional_retrieve,
    recall_at_k,
    retrieve,
)

__version__ = "0.1.0"
