"""Self-tuning geo-referencing of vehicle trajectories against lane-marking maps."""

from .association import AssociationResult, DcSacConfig, SearchArea, associate, tune_area
from .entropy import detection_entropy, pseudo_entropy
from .geometry import FrameDetections, LandmarkMap, Polyline, Pose2, Trajectory
from .graph import SolverConfig, SolverError
from .metrics import MetricReport, ate, entropy_error_correlation, evaluate, rpe
from .pipeline import MODES, FrameRecord, PipelineConfig, run_session
from .sim import NoiseModel, Scenario, generate_scenario

__version__ = "0.1.0"
