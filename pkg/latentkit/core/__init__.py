from .trajectory import (
    Label, LabeledSample, LatentThought, Trajectory, TrajectorySet,
    mean_pool_tokens, pool_tokens, validate_set,
)
from .container import read_container, write_container, load_container, save_container
