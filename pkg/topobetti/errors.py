"""
Error types raised across the toolkit.

Batch drivers catch the grouping parents (TopologyError, DatasetError,
NetworkError) per item; the CLI maps them to exit codes.
"""


class TopoBettiError(Exception):
    """Base class for every error raised by topobetti"""


class ConfigError(TopoBettiError):
    """Invalid run configuration; the message starts with the field path"""

    def __init__(self, field_path: str, message: str):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}")


# Point clouds and topology

class TopologyError(TopoBettiError):
    pass


class NonFiniteInput(TopologyError):
    pass


class InvalidCount(TopologyError):
    pass


class InvalidQuantile(TopologyError):
    pass


class TooFewPoints(TopologyError):
    pass


class SimplexBudgetExceeded(TopologyError):
    """Raised instead of truncating a complex; reduce eps_max, subsample or lower max_dim"""

    def __init__(self, budget: int, eps_max: float, max_dim: int):
        self.budget = budget
        self.eps_max = eps_max
        self.max_dim = max_dim
        super().__init__(
            f"Vietoris-Rips complex exceeds {budget} simplices at eps_max={eps_max:.6g}, "
            f"max_dim={max_dim}; reduce eps_max, subsample, or lower max_dim"
        )


class InvalidFiltration(TopologyError):
    pass


class TooLarge(TopologyError):
    pass


class InvalidDimension(TopologyError):
    pass


# Networks and training

class NetworkError(TopoBettiError):
    pass


class ShapeMismatch(NetworkError):
    pass


class DivergedLoss(NetworkError):
    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"Loss became NaN at epoch {epoch}")


class WouldEmptyLayer(NetworkError):
    def __init__(self, layer: int):
        self.layer = layer
        super().__init__(f"Pruning would remove every filter of layer {layer}; nothing was pruned")


# Dataset files

class DatasetError(TopoBettiError):
    pass


class BadMagic(DatasetError):
    pass


class TruncatedFile(DatasetError):
    pass


class CountMismatch(DatasetError):
    pass


class BadLabel(DatasetError):
    pass


class InvalidTensor(DatasetError):
    pass
