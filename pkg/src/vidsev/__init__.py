"""Two-stage video severity estimation.

Stage one learns severity-related features from thin slices of a video at
multiple spatio-temporal scales; stage two summarizes each video's slice
features into a length-independent graph (or a flat baseline) and regresses
a single severity score from it.
"""

from .backbone import MtbConfig, MultiScaleBackbone, MultiScaleFeatures, mtb_forward, temporal_downsample
from .config import RunConfig, config_from_dict, config_from_json, reference_preset
from .corpus import (
    Corpus,
    SeverityCategory,
    SliceFeatureMatrix,
    SynthConfig,
    ThinSlice,
    VideoSample,
    bucket_severity,
    generate_synthetic_corpus,
    impute_missing_frames,
    slice_video,
)
from .enhance import (
    DisentangledPair,
    LossBreakdown,
    LossWeights,
    MutualAttentionBlock,
    MutualAttentionStage,
    NoiseSeparator,
    NonLocalBlock,
    NsConfig,
    ShortTermModel,
    ShortTermOutputs,
    compute_losses,
    ns_forward,
)
from .errors import ConfigError, DomainError, NumericError, VidsevError
from .graphs import (
    SequentialGraph,
    SpectralGraph,
    SpectralHeatmap,
    aggregate_atp,
    aggregate_sph,
    aggregate_spv,
    aggregate_sta,
    build_seg,
    build_spg,
    spectral_encode_series,
)
from .metrics import MetricsReport, compute_metrics
from .pipeline import PipelineResult, cross_split_evaluate, run_pipeline
from .regressor import (
    Conv1dHead,
    GatConfig,
    GraphAttentionLayer,
    GraphBatchItem,
    GraphRegressor,
    HeadTrainConfig,
    MlpHead,
    gat_predict,
    readout_mean,
    train_graph_head,
)
from .report import emit_report, emit_scatter_plot, read_metrics_report, write_metrics_report
from .shortterm import ShortTrainConfig, extract_slice_features, extract_slice_outputs, train_short_term

__version__ = "0.1.0"
