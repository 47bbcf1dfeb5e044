"""Online multi-object tracking from dual-source candidates.

The engine collects candidate boxes from both the detector and each track's
motion prediction, scores them jointly with position-sensitive score maps and
tracklet confidence, and associates hierarchically by appearance then IoU.
Neural-network outputs (score maps, appearance embeddings) enter through
pluggable providers, so the whole numeric pipeline is testable offline.
"""

from .appearance import (
    EmbeddingProvider,
    FeatureGallery,
    FileEmbeddingProvider,
    InMemoryEmbeddingProvider,
    OracleEmbeddingProvider,
    embedding_distance,
    gallery_distance,
    read_embedding_file,
    triplet_loss,
    write_embedding_file,
)
from .association import (
    Assignment,
    FrameResult,
    Track,
    Tracker,
    TrackState,
    min_cost_match,
    run_sequence,
    run_sequence_timed,
)
from .core import (
    BoundingBox,
    Candidate,
    CandidateSource,
    Detection,
    TrackerConfig,
    iou,
    load_config,
    parse_config,
    serialize_config,
)
from .errors import (
    ConfigError,
    DegenerateStateError,
    DuotrackError,
    EmptyBatchError,
    EmptyGalleryError,
    FixtureFormatError,
    MetricsInputError,
    MissingFeatureError,
    MotParseError,
    NumericalError,
    OutOfBoundsError,
    SequenceError,
)
from .metrics import MetricsReport, evaluate, format_report, report_from_json, report_to_json
from .motion import MotionNoise, MotionState, kf_init, kf_predict, kf_update, to_box
from .mot_files import (
    MotRecord,
    load_detections,
    load_ground_truth,
    parse_mot,
    results_from_records,
    write_mot,
)
from .scenario import ObjectPath, Scenario, ScenarioSpec, crossing_paths, gen_scenario
from .scoremaps import (
    FileScoreMapProvider,
    InMemoryScoreMapProvider,
    ScoreMapGrid,
    ScoreMapProvider,
    SynthScoreMapProvider,
    classify_roi,
    classify_roi_naive,
    classify_rois,
    read_score_map_file,
    synth_score_maps,
    write_score_map_file,
)
from .selection import (
    TrackletCounters,
    make_candidate,
    select_candidates,
    tracklet_confidence,
    unified_score,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
