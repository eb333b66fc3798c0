"""Score modulation layer that blends graph structure with numeric edge values.

During training, raw triple scores are squashed through a softplus and then
scaled by a modulation factor derived from the triple's numeric weight. The
``structure_weight`` knob controls how much the numeric values matter: at 1
the layer is inert and training is indistinguishable from a conventional
embedding model, at 0 the numeric values fully drive the loss. A linear
per-epoch decay schedule moves the knob from 1 towards 0 over a configurable
horizon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Beyond this threshold ln(1 + e^x) equals x to double precision, and e^x
# would be large enough to make the naive formula overflow-prone.
SOFTPLUS_EXACT_THRESHOLD = 34.0


def _as_float_array(x) -> np.ndarray:
    arr = np.asarray(x)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    return arr


def softplus(x):
    """Overflow-safe ln(1 + e^x), elementwise; the result is always >= 0.

    Large arguments take the rearranged branch x + ln(1 + e^-x) so the
    result never overflows to infinity; very negative arguments underflow
    cleanly to 0.
    """
    arr = _as_float_array(x)
    small = np.log1p(np.exp(np.minimum(arr, SOFTPLUS_EXACT_THRESHOLD)))
    big = arr + np.log1p(np.exp(-np.maximum(arr, SOFTPLUS_EXACT_THRESHOLD)))
    return np.where(arr > SOFTPLUS_EXACT_THRESHOLD, big, small)[()]


def sigmoid(x):
    """Numerically stable logistic function 1 / (1 + e^-x), elementwise."""
    arr = _as_float_array(x)
    z = np.exp(-np.abs(arr))
    return np.where(arr >= 0, 1.0 / (1.0 + z), z / (1.0 + z))[()]


def modulation_factor(weight, structure_weight, positive):
    """Factor applied to the softplus score of one triple during training.

    ``weight`` is always the numeric value of the *positive* triple, also
    when computing the factor for its corruptions (``positive=False``).
    With ``structure_weight`` = 1 the factor is 1 for both polarities and
    numeric values are ignored; at 0 the positive branch returns ``1 -
    weight`` and the negative branch ``weight``, so a heavily weighted
    positive keeps a deliberately small achievable pair margin. That keeps
    its loss high, which concentrates the optimizer on strongly weighted
    triples.

    The negative branch is evaluated as ``(1 + structure_weight)`` minus the
    positive branch, which is the same expression rearranged so that the two
    polarities sum to ``1 + structure_weight`` exactly in floating point.

    ``weight`` may be an array; ``structure_weight`` must be a scalar in
    [0, 1]. Out-of-range inputs raise ``ValueError``.
    """
    w = np.asarray(weight, dtype=np.float64)
    if not np.all(np.isfinite(w)) or np.any(w < 0.0) or np.any(w > 1.0):
        raise ValueError(f"triple weight outside [0, 1]: {weight!r}")
    sw = float(structure_weight)
    if not 0.0 <= sw <= 1.0:
        raise ValueError(f"structure weight outside [0, 1]: {structure_weight!r}")
    positive_factor = sw + (1.0 - w) * (1.0 - sw)
    if positive:
        return positive_factor[()]
    return ((1.0 + sw) - positive_factor)[()]


def focus_score(raw_score, weight, structure_weight, positive):
    """Modulated non-negative score fed to the loss.

    Equals ``modulation_factor(...) * softplus(raw_score)`` and is therefore
    always >= 0; with ``structure_weight`` = 1 it reduces to the plain
    softplus of the raw score.
    """
    return modulation_factor(weight, structure_weight, positive) * softplus(raw_score)


def decayed_structure_weight(epoch, decay_epochs, constant=1.0):
    """Structure weight at ``epoch`` under the linear decay schedule.

    With ``decay_epochs`` > 0 the weight starts at 1, reaches 0 at epoch
    ``decay_epochs`` and stays there. ``decay_epochs`` = 0 disables the
    schedule: the configured ``constant`` is used for the whole run, which
    with the default of 1.0 reproduces a conventional, numeric-unaware
    model.
    """
    if decay_epochs == 0:
        return float(constant)
    return max(0.0, 1.0 - epoch / decay_epochs)


@dataclass(frozen=True)
class FocusEParams:
    """Modulation schedule inputs: constant structure weight and decay horizon.

    ``decay_epochs`` = 0 holds ``structure_weight`` fixed; any positive
    value enables the linear 1-to-0 decay over that many epochs (and makes
    ``structure_weight`` irrelevant).
    """

    structure_weight: float = 1.0
    decay_epochs: int = 0

    def __post_init__(self):
        if not 0.0 <= self.structure_weight <= 1.0:
            raise ValueError(
                f"structure_weight must be in [0, 1], got {self.structure_weight!r}"
            )
        if self.decay_epochs < 0:
            raise ValueError(f"decay_epochs must be >= 0, got {self.decay_epochs!r}")

    def at_epoch(self, epoch: int) -> float:
        return decayed_structure_weight(epoch, self.decay_epochs, self.structure_weight)
