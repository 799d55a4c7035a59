"""Integer powers of an irrational rotation approaching an arbitrary angle."""
import math
from fractions import Fraction
from typing import Iterator

import numpy as np

from dfsblock import config
from dfsblock.errors import CapacityError, ModelError, SynthesisDegeneracyError
from dfsblock.logger import get_logger
from dfsblock.models.gates import SynthesisResult, wrap_angle

logger = get_logger("Synthesis")

RATIONAL_TOL = 1e-12
SEARCH_CHUNK = 1_000_000
MAX_TERMS = 64


def continued_fraction(x: float, max_terms: int = MAX_TERMS) -> Iterator[int]:
    """Euclidean algorithm on a real number, yielding partial quotients."""
    for _ in range(max_terms):
        n, rem = divmod(x, 1.0)
        yield int(n)
        if rem < 1e-15:
            return
        x = 1.0 / rem


def convergents(x: float, max_terms: int = MAX_TERMS) -> Iterator[tuple[int, int]]:
    """(p_k, q_k) with p_k / q_k -> x."""
    p_prev, q_prev, p, q = 1, 0, 0, 1
    for a in continued_fraction(x, max_terms):
        p_prev, p = p, a * p + p_prev
        q_prev, q = q, a * q + q_prev
        yield p, q


def check_irrational(theta: float) -> None:
    ratio = theta / math.pi
    r = Fraction(ratio).limit_denominator(config.RATIONAL_DENOMINATOR)
    if abs(ratio - float(r)) < RATIONAL_TOL:
        raise SynthesisDegeneracyError(f"theta/pi = {ratio!r} is numerically the rational {r}; "
                                       "its powers only reach finitely many angles")


def circle_distance(a: float, b: float) -> float:
    return abs(wrap_angle(a - b))


def search_bound(theta: float, epsilon: float, cap: int) -> int:
    """Power count N such that n*theta, n = 1..N, covers the circle with gaps below 2*epsilon.

    With alpha = theta / 2pi, N = q_k + q_{k-1} points split the circle into
    gaps no longer than ||q_{k-1} alpha|| + ||q_k alpha|| turns.
    """
    alpha = (theta / (2 * math.pi)) % 1.0
    q_prev, err_prev = 1, alpha if alpha < 0.5 else 1 - alpha
    for p, q in convergents(alpha):
        if q <= 1:
            continue
        err = abs(q * alpha - p)
        if (err_prev + err) * math.pi < epsilon:
            return q + q_prev
        if q + q_prev > cap:
            break
        q_prev, err_prev = q, err
    raise CapacityError(f"Resolution {epsilon:.3e} needs more than {cap} powers of theta={theta!r}")


def synthesize_z_power(target: float, theta: float, epsilon: float) -> SynthesisResult:
    """Smallest n >= 1 with |n*theta - target| < epsilon on the circle."""
    if not epsilon > 0:
        raise ModelError(f"epsilon must be positive, got {epsilon}")
    if not (math.isfinite(target) and math.isfinite(theta)):
        raise ModelError("Synthesis angles must be finite")
    check_irrational(theta)

    cap = config.SYNTHESIS_POWER_CAP
    bound = search_bound(theta, epsilon, cap)
    if bound > cap:
        raise CapacityError(f"Search bound {bound} exceeds the power cap {cap}")

    for start in range(1, bound + 1, SEARCH_CHUNK):
        n = np.arange(start, min(bound, start + SEARCH_CHUNK - 1) + 1, dtype=np.int64)
        dist = np.abs(np.remainder(n * theta - target + np.pi, 2 * np.pi) - np.pi)
        hits = np.nonzero(dist < epsilon)[0]
        if hits.size:
            power = int(n[hits[0]])
            achieved = wrap_angle(power * theta)
            result = SynthesisResult(power=power, achieved_angle=achieved,
                                     error=circle_distance(power * theta, target),
                                     evaluations=power, search_bound=bound)
            logger.info(f"[SYNTH] target={target:.6f} -> n={power} error={result.error:.3e} (bound {bound})")
            return result

    raise CapacityError(f"No power up to {bound} reaches {target} within {epsilon}")
