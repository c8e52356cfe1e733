"""Near-field, spatially non-stationary channel synthesis, estimation and reconstruction."""

from .core import (
    FAR_FIELD,
    SPEED_OF_LIGHT,
    ArrayGeometry,
    ChannelTensor,
    FrequencyGrid,
    PathParams,
    build_uca,
    farfield_manifold,
    fraunhofer_distance,
    nearfield_manifold,
    source_point,
)
from .estimator import (
    EstimatorConfig,
    PathEstimate,
    ScanGrid,
    coarse_scan,
    estimate_paths,
    estimate_sns_vector,
    refine_path,
)
from .metrics import Gates, match_paths, nmse_db, vr_jaccard
from .synth import SynthesisMode, VrSpec, add_noise, make_vr_arc, synthesize_cfr
from .transform import cfr_to_cir, cir_heatmap, power_delay_profile

__version__ = "0.1.0"
