"""Phase-less mmWave beam alignment at desk scale.

Uniform-linear-array codebooks (pencil, PN, sub-array multifinger, QPD),
multipath channel + RSS measurement simulation, model-based sparse-recovery
baselines, and small MLP/CNN angle-of-arrival classifiers, plus an
experiment harness that ties them together.
"""

from beamsense.arrays import (
    ArrayGeometry,
    Codebook,
    QpdParams,
    SaParams,
    array_response,
    beam_pattern,
    feature_correlation,
    mixed_codebook,
    pencil_codebook,
    pn_codebook,
    qpd_codebook,
    sa_codebook,
)
from beamsense.channel import (
    ChannelParams,
    ChannelRealization,
    MeasurementConfig,
    SampleSet,
    SimProtocol,
    best_beam_label,
    generate_sim_dataset,
    measure_rss,
    realize_channel,
)
from beamsense.sparse import (
    L1Config,
    RssDictionary,
    SparseSolution,
    build_rss_dictionary,
    exhaustive_predict,
    rss_mp_predict,
    solve_phaseless_l1,
)

__all__ = [
    "ArrayGeometry",
    "Codebook",
    "QpdParams",
    "SaParams",
    "array_response",
    "beam_pattern",
    "feature_correlation",
    "mixed_codebook",
    "pencil_codebook",
    "pn_codebook",
    "qpd_codebook",
    "sa_codebook",
    "ChannelParams",
    "ChannelRealization",
    "MeasurementConfig",
    "SampleSet",
    "SimProtocol",
    "best_beam_label",
    "generate_sim_dataset",
    "measure_rss",
    "realize_channel",
    "L1Config",
    "RssDictionary",
    "SparseSolution",
    "build_rss_dictionary",
    "exhaustive_predict",
    "rss_mp_predict",
    "solve_phaseless_l1",
]

__version__ = "0.1.0"
