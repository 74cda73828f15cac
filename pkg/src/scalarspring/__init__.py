"""Learning springy double-pendulum dynamics from invariant scalar features.

The package provides the exact Hamiltonian system (`physics`), fixed-step RK4
integration (`integrate`), a from-scratch reverse-mode autodiff tape
(`autodiff`), the invariant feature construction (`scalars`), equivariant and
baseline dynamics models (`models`), dataset generation and persistence
(`dataset`), training (`train`), rollout metrics (`evaluate`), and a CLI
(`cli`).
"""

__version__ = "0.1.0"

from .physics import PhaseState, SystemParams, equilibrium_state, hamiltonian, true_dynamics
from .integrate import IntegratorConfig, rk4_step, rollout
from .dataset import DatasetConfig, TrajectoryRecord, generate_dataset, load_dataset, save_dataset
from .models import make_model, load_model, save_model
from .train import TrainConfig, train
from .evaluate import angular_momentum_proj, evaluate, geometric_mean, state_rel_err

__all__ = [
    "PhaseState",
    "SystemParams",
    "equilibrium_state",
    "hamiltonian",
    "true_dynamics",
    "IntegratorConfig",
    "rk4_step",
    "rollout",
    "DatasetConfig",
    "TrajectoryRecord",
    "generate_dataset",
    "load_dataset",
    "save_dataset",
    "make_model",
    "load_model",
    "save_model",
    "TrainConfig",
    "train",
    "angular_momentum_proj",
    "evaluate",
    "geometric_mean",
    "state_rel_err",
    "__version__",
]
