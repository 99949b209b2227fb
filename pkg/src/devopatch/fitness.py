"""Decision-based fitness: distance measures, targeted/untargeted success
predicates, and the infeasible sentinel score."""

import enum
import functools
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .images import Image


class Norm(str, enum.Enum):
    """Distance measure between the source image and a patched image."""

    L0_PIXELS = "l0"  # pixel positions where any channel differs
    L1 = "l1"  # sum of absolute element differences
    L2 = "l2"  # Euclidean norm over all elements


def distance(x: Image, x_adv: Image, norm: Norm = Norm.L0_PIXELS) -> float:
    if x.shape != x_adv.shape:
        raise DimensionMismatch(f"images {x.shape} and {x_adv.shape} differ")
    diff = x_adv.data - x.data
    norm = Norm(norm)
    if norm is Norm.L0_PIXELS:
        return float(np.count_nonzero(np.any(diff != 0.0, axis=0)))
    if norm is Norm.L1:
        return float(np.abs(diff).sum())
    return float(np.sqrt((diff * diff).sum()))


@functools.total_ordering
@dataclass(frozen=True)
class FitnessScore:
    """A finite distance when the attack condition held, else the infeasible
    sentinel (value None), which orders strictly above every finite score."""

    value: float | None = None

    @classmethod
    def feasible(cls, value: float) -> "FitnessScore":
        value = float(value)
        if not np.isfinite(value) or value < 0.0:
            raise ValueError(f"feasible scores must be finite and >= 0, got {value}")
        return cls(value)

    @property
    def is_feasible(self) -> bool:
        return self.value is not None

    def __lt__(self, other):
        if not isinstance(other, FitnessScore):
            return NotImplemented
        if self.value is None:
            return False
        if other.value is None:
            return True
        return self.value < other.value

    def __repr__(self):
        return "Infeasible" if self.value is None else f"FitnessScore({self.value})"


INFEASIBLE = FitnessScore(None)


@dataclass(frozen=True)
class SuccessPredicate:
    """Attack success condition on a predicted label.

    Targeted mode succeeds when the prediction equals the target label;
    untargeted mode succeeds when it differs from the ground-truth label.
    """

    mode: str  # "targeted" | "untargeted"
    label: int

    def __post_init__(self):
        if self.mode not in ("targeted", "untargeted"):
            raise ValueError(f"unknown predicate mode {self.mode!r}")

    @classmethod
    def targeted(cls, target_label: int) -> "SuccessPredicate":
        return cls("targeted", int(target_label))

    @classmethod
    def untargeted(cls, ground_truth_label: int) -> "SuccessPredicate":
        return cls("untargeted", int(ground_truth_label))

    def holds(self, predicted: int) -> bool:
        if self.mode == "targeted":
            return predicted == self.label
        return predicted != self.label


def fitness(
    x: Image,
    x_adv: Image,
    predicted: int,
    pred: SuccessPredicate,
    norm: Norm = Norm.L0_PIXELS,
) -> FitnessScore:
    """Distance from the source when the predicate holds on the predicted
    label, the infeasible sentinel otherwise."""
    if x.shape != x_adv.shape:
        raise DimensionMismatch(f"images {x.shape} and {x_adv.shape} differ")
    if not pred.holds(predicted):
        return INFEASIBLE
    return FitnessScore.feasible(distance(x, x_adv, norm))
