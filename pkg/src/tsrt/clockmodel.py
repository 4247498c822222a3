"""Local clock model and the Gaussian estimation-error model.

A node's clock reads ``t + offset + skew * (t - epoch_true)`` at true time
``t``. Every correction restarts the linear drift at a new epoch, so a clock
that is resynchronized periodically is piecewise linear.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

MAX_SKEW = 1e-2


class ClockModelError(ValueError):
    pass


class Scaling(enum.Enum):
    INVERSE_N = "inverse_n"
    CONSTANT = "constant"

    @classmethod
    def parse(cls, value: "Scaling | str") -> "Scaling":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"inversen": "inverse_n", "1/n": "inverse_n"}
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class LocalClock:
    offset: float = 0.0
    skew: float = 0.0
    epoch_true: float = 0.0

    def __post_init__(self):
        if not abs(self.skew) < MAX_SKEW:
            raise ClockModelError(f"skew {self.skew!r} outside |skew| < {MAX_SKEW}")

    def corrected(self, t_true: float, adjustment: float, skew_adjustment: float = 0.0) -> "LocalClock":
        """Clock that reads ``adjustment`` more than this one at ``t_true`` and
        drifts at ``skew + skew_adjustment`` from then on."""
        reading = local_time(self, t_true)
        return LocalClock(
            offset=reading + adjustment - t_true,
            skew=self.skew + skew_adjustment,
            epoch_true=t_true,
        )


@dataclass(frozen=True)
class ErrorModel:
    sigma_o1: float
    sigma_s1: float
    offset_scaling: Scaling = Scaling.INVERSE_N
    skew_scaling: Scaling = Scaling.INVERSE_N

    def __post_init__(self):
        if self.sigma_o1 < 0 or self.sigma_s1 < 0:
            raise ClockModelError("error standard deviations must be non-negative")
        object.__setattr__(self, "offset_scaling", Scaling.parse(self.offset_scaling))
        object.__setattr__(self, "skew_scaling", Scaling.parse(self.skew_scaling))

    def offset_variance(self, n_beacons: int) -> float:
        return _scaled_variance(self.sigma_o1, self.offset_scaling, n_beacons)

    def skew_variance(self, n_beacons: int) -> float:
        return _scaled_variance(self.sigma_s1, self.skew_scaling, n_beacons)

    def sigma_o(self, n_beacons: int) -> float:
        return float(np.sqrt(self.offset_variance(n_beacons)))

    def sigma_s(self, n_beacons: int) -> float:
        return float(np.sqrt(self.skew_variance(n_beacons)))

    def without_skew_estimation(self) -> "ErrorModel":
        """Same model with the skew error frozen at its single-exchange value
        (an offset-only protocol never improves its skew estimate)."""
        return replace(self, skew_scaling=Scaling.CONSTANT)


def _scaled_variance(sigma1: float, scaling: Scaling, n_beacons: int) -> float:
    if n_beacons < 1:
        raise ClockModelError(f"n_beacons must be >= 1, got {n_beacons}")
    var1 = sigma1 * sigma1
    if scaling is Scaling.CONSTANT:
        return var1
    return var1 / n_beacons


def local_time(clock: LocalClock, t_true: float) -> float:
    if t_true < clock.epoch_true:
        raise ClockModelError(
            f"true time {t_true!r} precedes the clock's last correction at {clock.epoch_true!r}"
        )
    return t_true + clock.offset + clock.skew * (t_true - clock.epoch_true)


def true_time(clock: LocalClock, t_local: float) -> float:
    # local = t + o + s (t - e)  =>  t = (local - o + s e) / (1 + s)
    return (t_local - clock.offset + clock.skew * clock.epoch_true) / (1.0 + clock.skew)


def mismatch(eps_o: float, eps_s: float, t: float) -> float:
    return eps_o + eps_s * t


def sample_estimation_errors(model: ErrorModel, n_beacons: int, rng_seed=None, size=None):
    """Draw (offset error, skew error) after ``n_beacons`` exchanges.

    ``rng_seed`` may be an int, ``None`` or a ``numpy.random.Generator``.
    With ``size`` set, two arrays of that shape are returned instead of floats.
    """
    sigma_o = np.sqrt(model.offset_variance(n_beacons))
    sigma_s = np.sqrt(model.skew_variance(n_beacons))
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    eps_o = rng.normal(0.0, 1.0, size) * sigma_o
    eps_s = rng.normal(0.0, 1.0, size) * sigma_s
    if size is None:
        return float(eps_o), float(eps_s)
    return eps_o, eps_s
