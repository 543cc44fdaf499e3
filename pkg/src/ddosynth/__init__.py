"""ddosynth: packet-level DDoS traffic synthesis and fidelity evaluation."""

from .packets import (
    AttackType,
    IPv4Header,
    IcmpFields,
    PacketRecord,
    ProtocolKind,
    TcpFields,
    TraceDataset,
    UdpFields,
    ValidityVerdict,
    validate_packet,
)
from .ingest import export_csv, export_pcap, ingest_csv, ingest_pcap
from .codec import (
    LAYOUT_V1,
    BitImage,
    FieldLayout,
    decode_vector,
    encode_packet,
    pack_image,
    unpack_image,
)
from .colors import ColorTable, load_color_table, map_category, map_subnet
from .prompts import PromptSpec, ViewCatalog, generation_prompt, training_prompt
from .timeseries import TimeSeries, bin_timestamps, stl_decompose
from .distances import dtw_distance, fourier_distance
from .clustering import IFClustering, Metadata, if_cluster
from .segmentation import (
    GreedySegmenter,
    PatternLibrary,
    StateTriplet,
    reconstruct_segment,
    segment_series,
)
from .diffusion import PatternDiffusion, sample_pattern, train_pattern_diffusion
from .states import StateChainModel, evolve_states, fit_state_model
from .generator import ClusterGenerator, TemporalModel, generate_series
from .combine import (
    CombinationConfig,
    assemble_trace,
    combine_imitative,
    combine_markov,
    combine_random,
    series_to_timestamps,
)
from .surrogate import FieldSurrogate, fit_surrogate
from .fieldgen import export_training_pairs, import_generated_images
from .metrics import MetricReport, evaluate, feature_distribution, hellinger, jsd, tvd

__version__ = "0.1.0"
