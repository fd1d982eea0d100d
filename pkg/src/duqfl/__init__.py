"""Deep-unfolded quantum federated learning on a dense statevector simulator."""

from .experiment import ExperimentConfig, compare, run_experiment
from .fairness import FairnessReport, SelectionHistory, delta_accuracy, efs, feti, ffm
from .federation import PartitionConfig, RoundRecord, aggregate, FederationConfig, run_federation, select_best_client
from .model import Dataset, ModelSpec, batch_loss, parameter_shift_gradient, predict_proba
from .spsa import HyperState, UnfoldConfig, UnfoldTrace, unfold_client
from .statevector import Gate, ShotConfig, Statevector

__version__ = "0.1.0"
