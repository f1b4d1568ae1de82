"""Three-way attempt classification from dual labels or dual probabilities.

An attempt at a construct is judged on the (original, corrected) sentence
pair: present in both means the learner used it successfully; present only
in the corrected version means they tried and missed; anything else counts
as no attempt (including the construct vanishing under correction, which
signals an unrelated error).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class AttemptClass(Enum):
    SUCCESSFUL = "successful"
    UNSUCCESSFUL = "unsuccessful"
    NO_ATTEMPT = "no_attempt"  # also covers "other error"


class Task(Enum):
    """The three one-vs-rest views of the attempt classes."""

    GENERAL = "general"  # successful or unsuccessful vs. no attempt
    SUCCESSFUL = "successful"
    UNSUCCESSFUL = "unsuccessful"


@dataclass(frozen=True)
class ThresholdPair:
    """Decision thresholds for the original and corrected sides.

    Values above 1 occur as sentinels during threshold enumeration and are
    deliberately not rejected here.
    """

    tau_original: float
    tau_corrected: float


def class_from_labels(y_original: int, y_corrected: int) -> AttemptClass:
    """Map a pair of binary presence labels to an attempt class."""
    if y_original not in (0, 1) or y_corrected not in (0, 1):
        raise ValueError(f"labels must be 0 or 1, got ({y_original}, {y_corrected})")
    if y_corrected == 1:
        return AttemptClass.SUCCESSFUL if y_original == 1 else AttemptClass.UNSUCCESSFUL
    return AttemptClass.NO_ATTEMPT


def class_from_probs(
    p_original: float, p_corrected: float, thresholds: ThresholdPair
) -> AttemptClass:
    """Threshold a pair of presence probabilities into an attempt class.

    Comparison is >= on both sides.
    """
    if p_corrected >= thresholds.tau_corrected:
        if p_original >= thresholds.tau_original:
            return AttemptClass.SUCCESSFUL
        return AttemptClass.UNSUCCESSFUL
    return AttemptClass.NO_ATTEMPT


def one_vs_rest(cls: AttemptClass, task: Task) -> int:
    """Project an attempt class onto one binary task."""
    if task is Task.GENERAL:
        return int(cls is not AttemptClass.NO_ATTEMPT)
    if task is Task.SUCCESSFUL:
        return int(cls is AttemptClass.SUCCESSFUL)
    return int(cls is AttemptClass.UNSUCCESSFUL)
