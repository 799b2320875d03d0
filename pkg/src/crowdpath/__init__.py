"""Example-based pedestrian trajectory prediction on a grid of passage weights."""

from .config import Config
from .core import (DatabaseStructure, FrameTransform, ObstaclePolygon, QueryStructure, Trajectory,
                   canonicalize, make_query, make_structure)
from .errors import (ConfigError, CrowdPathError, DataError, DomainError, FormatError,
                     InsufficientHistoryError, InvalidGeometryError, NoPathError, ParseError,
                     PredictionError, ShapeError)
from .evaluation import (ade, fde, linear_baseline, make_sample, run_benchmark, sim_k_baseline)
from .featuremap import FeatureMap, build_feature_map
from .ingest import (CrowdDatabase, Scene, build_database, extract_structures, load_db,
                     parse_obstacles, parse_scene, read_scene, save_db)
from .matching import MatchIndex, build_index, influence, query_top_k, similarity
from .personality import PersonalityVector, extract_personality
from .planner import PredictionResult, predict

__version__ = "0.1.0"
