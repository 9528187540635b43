"""Semi-supervised BEV motion prediction toolkit."""

from .augment import MixPair, bevmix, ground_remove, random_flip, temporal_sample
from .container import ContainerError, read_container, write_container
from .estimators import (MotionRegressor, PseudoLabelRefiner,
                         SemiSupervisedMotionRegressor)
from .grid import (BevMap, BevSequence, CellSet, GridSpec, MotionField,
                   PointCloud, cells_to_meters, meters_to_cells,
                   nonempty_cells, voxelize, warp_cells)
from .msrm import (RefineConfig, RefinedLabels, RegenConfig,
                   ReliabilityReport, refine, regenerate, score_reliability,
                   select)
from .synthworld import EvalReport, SceneConfig, SynthScene, evaluate, generate
from .training import SslConfig, ema_update, train_ssl, train_teacher
from .transport import (CostMatrix, SinkhornError, TransportPlan,
                        auxiliary_labels, build_cost, sinkhorn)

__version__ = "0.1.0"
