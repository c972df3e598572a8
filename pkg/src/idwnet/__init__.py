"""Single-hidden-layer prototype networks with inverse-distance-weighting attention."""
from .attention import (GaussDist, InvDist, NegDist, NegLogDist, ScaledDot, ScoreKind,
                        attend, attend_backward, idw_weights, make_kind, score, softmax_rows)
from .augment import AugmentRequest, AugmentResult, compute_eta, inject, inject_many, sigma_weights
from .core import Rng, matmul, pairwise_sq_dist
from .data import Dataset, MoonsConfig, gen_moons, load_mnist, parse_idx, subset
from .model import (FcReluNet, PrototypeNet, accuracy, backward, forward, init_fc_relu,
                    init_prototype_net, load, predict, save)
from .optim import MNIST_CONFIG, MOONS_CONFIG, TrainConfig, TrainLog, cross_entropy, train

__version__ = "0.1.0"

__all__ = [
    "GaussDist", "InvDist", "NegDist", "NegLogDist", "ScaledDot", "ScoreKind",
    "attend", "attend_backward", "idw_weights", "make_kind", "score", "softmax_rows",
    "AugmentRequest", "AugmentResult", "compute_eta", "inject", "inject_many", "sigma_weights",
    "Rng", "matmul", "pairwise_sq_dist",
    "Dataset", "MoonsConfig", "gen_moons", "load_mnist", "parse_idx", "subset",
    "FcReluNet", "PrototypeNet", "accuracy", "backward", "forward", "init_fc_relu",
    "init_prototype_net", "load", "predict", "save",
    "MNIST_CONFIG", "MOONS_CONFIG", "TrainConfig", "TrainLog", "cross_entropy", "train",
]
