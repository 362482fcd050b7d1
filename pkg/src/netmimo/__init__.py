"""Joint-transmission network MIMO precoding under unreliable backhaul.

Library layout:

- ``model``: equivalent channel, Wiener receiver, per-sub-stream MSEs.
- ``backhaul``: shifted-gamma latency, participation probabilities/draws.
- ``gp``: sum-power global precoder and its autonomous per-BS extraction.
- ``sip``: sequential-incremental per-BS min-max-MSE refinement.
- ``codebook``: random orthonormal codebooks, finite-rate selection.
- ``montecarlo``: seeded channel/QPSK experiment engine and SNR sweeps.
- ``cli`` / ``plots``: command-line front end, CSV and figure reports.
"""

from .backhaul import (
    BackhaulParams,
    Deadline,
    ParticipationProfile,
    delay_pdf,
    participation_probability,
    sample_participation,
)
from .codebook import (
    Codebook,
    generate_codebook,
    select_global_codeword,
    select_helper_codeword,
    select_serving_codeword,
)
from .gp import (
    DegenerateChannelError,
    WaterfillResult,
    agp_extract,
    equalizing_rotation,
    global_precoder,
    gram,
    waterfill,
)
from .model import (
    ChannelSet,
    MseReport,
    ParticipationState,
    PrecoderSet,
    ReceiverFilter,
    build_equivalent_channel,
    hermitian_eig,
    substream_mses,
    wiener_filter,
)
from .montecarlo import (
    RealizationResult,
    SimConfig,
    SweepRow,
    qpsk_demap,
    qpsk_map,
    run_realization,
    sample_channel,
    sweep,
)
from .sip import (
    SipConfig,
    SipState,
    SipTrace,
    kkt_column_update,
    power_transfer,
    serving_precoder,
    sip_optimize_bs,
    sip_run,
)

__version__ = "0.1.0"

__all__ = [
    "BackhaulParams",
    "ChannelSet",
    "Codebook",
    "Deadline",
    "DegenerateChannelError",
    "MseReport",
    "ParticipationProfile",
    "ParticipationState",
    "PrecoderSet",
    "RealizationResult",
    "ReceiverFilter",
    "SimConfig",
    "SipConfig",
    "SipState",
    "SipTrace",
    "SweepRow",
    "WaterfillResult",
    "agp_extract",
    "build_equivalent_channel",
    "delay_pdf",
    "equalizing_rotation",
    "generate_codebook",
    "global_precoder",
    "gram",
    "hermitian_eig",
    "kkt_column_update",
    "participation_probability",
    "power_transfer",
    "qpsk_demap",
    "qpsk_map",
    "run_realization",
    "sample_channel",
    "sample_participation",
    "select_global_codeword",
    "select_helper_codeword",
    "select_serving_codeword",
    "serving_precoder",
    "sip_optimize_bs",
    "sip_run",
    "substream_mses",
    "sweep",
    "waterfill",
    "wiener_filter",
]
