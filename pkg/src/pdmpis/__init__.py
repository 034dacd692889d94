"""pdmpis: piecewise deterministic Markov process simulation with
boundary-aware importance sampling for rare failure events."""

from ._dispatch import HAVE_COMPILED
from .core import (
    BOUNDARY,
    HORIZON,
    SPONTANEOUS,
    ModelSpec,
    RngStream,
    Skeleton,
    SkeletonEntry,
    State,
    Transition,
    KernelAtom,
    boundary_hit_time,
    integrate_flow,
    sample_jump_time,
    sample_transition,
    simulate_trajectory,
)
from .bias import (
    BiasScheme,
    WeightedSkeleton,
    importance_intensity,
    importance_kernel,
    simulate_importance_trajectory,
)
from .models import (
    HeatedRoomModel,
    HeatedRoomParams,
    HeatedRoomScheme,
    TinyCtmcModel,
    heated_room_model,
    heated_room_scheme,
    tiny_ctmc_model,
)

__version__ = "0.1.0"
