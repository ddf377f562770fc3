"""Neural path planning toolkit: batched bidirectional planning with a
point-cloud encoder, sampling-based baselines, dataset generation and a
benchmark CLI."""
from .datagen import (Dataset, PlanningTask, WorkspaceRecipe, build_dataset, dataset_read, dataset_write,
                      gen_task, gen_workspace, training_set)
from .errors import *  # noqa: F401,F403
from .geometry import (Aabb, Workspace, path_cost, path_in_collision, point_in_collision, segment_in_collision,
                       smooth)
from .planner import (NeuralModels, PlannerConfig, PlanResult, mpnet_config, neural_planner_ex, p3net_plan,
                      refine, replan)
from .pointcloud import PointCloud, cloud_read, cloud_write, sample_cloud
from .rrt import ground_truth, informed_rrt_star, rrt_star

__version__ = "0.1.0"
