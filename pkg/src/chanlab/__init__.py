"""chanlab: wireless channel simulation and ML transfer evaluation.

Stochastic (tap / clustered / urban-macro style) and site-specific
(image-method ray tracing) channel data feeding two learning tasks - CSI
compression and temporal channel prediction - with in-domain, cross-test,
fine-tuning, pre-training-curve and horizon-sweep protocols.
"""

from .channel import (
    ArrayGeometry,
    ChannelGrid,
    ChannelSequence,
    Path,
    PathSet,
    array_response,
    fading_sample,
    merge_pathsets,
    synth_geometric,
    synth_tdl,
)
from .constants import SPEED_OF_LIGHT, max_doppler_hz, wavelength_m
from .metrics import batch_nmse_db, nmse_db, nmse_linear
from .raytrace import (
    Scene,
    Track,
    Wall,
    assign_doppler,
    import_paths,
    interpolate_track,
    trace_paths,
)
from .stochastic import (
    CdlProfile,
    GbsmConfig,
    MobilityDraw,
    TdlProfile,
    draw_mobility,
    evolve_sequence,
    gen_cdl,
    gen_tdl,
    gen_uma,
    load_profile,
)

__version__ = "0.1.0"
