"""Quantitative MRI fingerprinting: simulation, matching, learning, analysis.

The package covers the full loop for (T1, T2) estimation from temporal
signal trajectories:

- ``epg`` / ``sequences``: Bloch response simulation of flip-angle trains
  via extended phase graphs, with an isochromat brute-force cross-check.
- ``dictionary``: simulation of dense (T1, T2) parameter grids into
  phase-aligned unit-norm fingerprint dictionaries with a binary format.
- ``subspace``: dominant principal subspace of a dictionary for
  compressing L-frame signals to a few coordinates.
- ``matcher``: exhaustive nearest-neighbor parameter lookup in the
  compressed domain, plus cost accounting against the network.
- ``mrfnet``: a compact ReLU regressor with a fixed compression layer,
  trained from scratch on noise-augmented relabeled atoms.
- ``spline``: exact piecewise-affine analysis of the trained network
  (per-region matched filters, segment clustering over the grid).
- ``recon``: numerical phantom, undersampled unitary Fourier sampling,
  back-projection and per-voxel map estimation with either engine.
- ``cli``: reproducible command-line pipelines over JSON configs.
"""

from .dictionary import (
    Dictionary,
    ParamGrid,
    align_rows,
    build_grid,
    load_dictionary,
    phase_align,
    save_dictionary,
    simulate_dictionary,
)
from .epg import (
    EpgState,
    epg_relax,
    epg_rf,
    epg_shift,
    isochromat_ensemble,
    rf_rotation,
    simulate_fingerprint,
    simulate_fingerprints,
)
from .errors import (
    ChecksumError,
    ConfigError,
    ConvergenceError,
    DegenerateSignalError,
    FormatError,
    MrfForgeError,
    TrainingDivergedError,
    VersionError,
)
from .estimators import DictionaryMatcher, MRFNetRegressor, SubspaceCompressor
from .matcher import (
    CompressedDictionary,
    CostReport,
    MatchResult,
    compress_dictionary,
    cost_report,
    match_image,
    nns_match,
)
from .mrfnet import (
    MlpModel,
    TrainConfig,
    TrainingPair,
    TrainingSet,
    forward,
    init_model,
    load_model,
    make_training_set,
    predict_compressed,
    predict_signals,
    save_model,
    train,
    weighted_output,
)
from .qmaps import QMaps, load_qmaps, save_qmaps, write_qmaps_csv
from .recon import (
    EllipseRegion,
    KSpaceData,
    Phantom,
    add_kspace_noise,
    back_project,
    default_regions,
    forward_acquire,
    make_phantom,
    map_error,
    reconstruct_maps,
    sampling_masks,
    synthesize_image,
)
from .sequences import (
    SequenceParams,
    default_flip_train,
    default_sequence,
    load_schedule,
    save_schedule,
)
from .spline import (
    ActivationPattern,
    MatchedFilterSet,
    SegmentMap,
    activation_pattern,
    cluster_segments,
    compressed_slopes,
    filter_report,
    input_gradient,
    matched_filters,
    segment_report,
)
from .subspace import Subspace, captured_energy, compute_subspace, lift, project

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "MrfForgeError", "ConfigError", "FormatError", "VersionError",
    "ChecksumError", "DegenerateSignalError", "ConvergenceError",
    "TrainingDivergedError",
    # sequences / simulation
    "SequenceParams", "default_flip_train", "default_sequence",
    "load_schedule", "save_schedule",
    "EpgState", "rf_rotation", "epg_rf", "epg_relax", "epg_shift",
    "simulate_fingerprint", "simulate_fingerprints", "isochromat_ensemble",
    # dictionary
    "ParamGrid", "Dictionary", "build_grid", "phase_align", "align_rows",
    "simulate_dictionary", "save_dictionary", "load_dictionary",
    # subspace
    "Subspace", "compute_subspace", "project", "lift", "captured_energy",
    # matching
    "CompressedDictionary", "MatchResult", "CostReport",
    "compress_dictionary", "nns_match", "match_image", "cost_report",
    # network
    "MlpModel", "TrainConfig", "TrainingPair", "TrainingSet",
    "init_model", "forward", "weighted_output", "predict_compressed",
    "predict_signals", "make_training_set", "train",
    "save_model", "load_model",
    # spline analysis
    "ActivationPattern", "MatchedFilterSet", "SegmentMap",
    "activation_pattern", "compressed_slopes", "input_gradient",
    "matched_filters", "cluster_segments", "segment_report", "filter_report",
    # reconstruction
    "EllipseRegion", "Phantom", "KSpaceData",
    "default_regions", "make_phantom", "synthesize_image", "sampling_masks",
    "forward_acquire", "back_project", "add_kspace_noise",
    "reconstruct_maps", "map_error",
    "QMaps", "save_qmaps", "load_qmaps", "write_qmaps_csv",
    # estimators
    "SubspaceCompressor", "DictionaryMatcher", "MRFNetRegressor",
]
