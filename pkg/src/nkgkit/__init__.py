"""Neural knowledge-graph models trained by weighted least squares, with
synthetic benchmarks, evaluation metrics and capacity-bound calculators."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BudgetExceededError,
    ConfigError,
    DataFormatError,
    InvalidTripleError,
    NkgError,
    ShapeError,
    TrainingDivergedError,
    UncorruptableError,
)
from .models import (  # noqa: E402
    CNkg,
    ConcatLinear,
    EmbeddingTable,
    IpNkg,
    Mip,
    TransE,
    Triple,
    TripleSet,
    batch_score,
    build_model,
    score,
    score_gradients,
)
from .nn import DenseLayer, FeedForwardNet, ffn_backward, ffn_forward, relu  # noqa: E402
from .training import (  # noqa: E402
    Adam,
    InitStrategy,
    Sgd,
    TrainConfig,
    WeightScheme,
    compute_weights,
    contrastive_loss,
    init_embeddings,
    train,
    weighted_risk,
)
