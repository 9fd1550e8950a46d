"""
Truncated-Gaussian moment matching for learner-vs-content games.

The performance difference t ~ N(delta, c^2) is conditioned on one of
t > margin (win), t < -margin (loss) or |t| <= margin (draw). The additive
corrections v and w are in units of c, so a skill with variance s2 moves by
s2 / c * v and its variance shrinks by the factor 1 - s2 / c^2 * w.

The v and w functions and the draw margin come from the trueskill package,
run on its scipy backend.
"""

import enum
import logging
import math
from typing import NamedTuple

import trueskill
from scipy.special import log_ndtr

from ..skills import VARIANCE_FLOOR

logger = logging.getLogger(__name__)

BACKEND = "scipy"

# skill moments are supplied per game, only the env's normal functions are used
_ENV = trueskill.TrueSkill(backend=BACKEND)

# raised by trueskill when a truncation leaves no mass to normalise
UPDATE_ERRORS = (FloatingPointError, OverflowError, ValueError, ZeroDivisionError)


class Outcome(enum.StrEnum):
    WIN = "win"
    LOSS = "loss"
    DRAW = "draw"


class Corrections(NamedTuple):
    v: float
    w: float


class TruncatedUpdate(NamedTuple):
    mean: float
    variance: float
    underflow: bool = False


def environment(
    beta: float, draw_probability: float, *, mu: float = 0.0, sigma: float = 1.0
) -> trueskill.TrueSkill:
    """A trueskill env without dynamics: tau is applied by the caller."""
    return trueskill.TrueSkill(
        mu=mu,
        sigma=sigma,
        beta=beta,
        tau=0.0,
        draw_probability=draw_probability,
        backend=BACKEND,
    )


def draw_margin(draw_probability: float, beta: float, n_performances: int) -> float:
    if not 0.0 < draw_probability < 1.0:
        msg = f"draw probability must be in (0, 1), got {draw_probability}"
        raise ValueError(msg)
    env = environment(beta, draw_probability)
    return float(trueskill.calc_draw_margin(draw_probability, n_performances, env))


def log_cdf(x: float) -> float:
    return float(log_ndtr(x))


def log_interval_mass(a: float, b: float) -> float:
    """log(Phi(b) - Phi(a)) for a < b, accurate in both tails."""
    if a > 0.0:
        # mirror into the lower tail where log_ndtr keeps precision
        a, b = -b, -a
    lb, la = log_cdf(b), log_cdf(a)
    return lb + math.log1p(-math.exp(la - lb))


def corrections(delta: float, c: float, outcome: Outcome, margin: float) -> Corrections:
    """Signed v and w for a game whose difference has mean delta and sd c."""
    x, e = delta / c, margin / c
    if outcome is Outcome.DRAW:
        return Corrections(float(_ENV.v_draw(x, e)), float(_ENV.w_draw(x, e)))
    sign = 1.0 if outcome is Outcome.WIN else -1.0
    v = float(_ENV.v_win(sign * x, e))
    return Corrections(sign * v, float(_ENV.w_win(sign * x, e)))


def truncated_gaussian_update(
    prior_mean: float,
    prior_var: float,
    perf_var: float,
    outcome: Outcome,
    margin: float,
) -> TruncatedUpdate:
    if prior_var <= 0.0 or perf_var <= 0.0:
        msg = f"variances must be positive, got {prior_var} and {perf_var}"
        raise ValueError(msg)
    c2 = prior_var + perf_var
    c = math.sqrt(c2)
    try:
        v, w = corrections(prior_mean, c, outcome, margin)
    except UPDATE_ERRORS:
        v = w = math.nan
    mean = prior_mean + prior_var / c * v
    variance = prior_var * (1.0 - prior_var / c2 * w)
    if not (math.isfinite(mean) and math.isfinite(variance)):
        logger.warning(
            "%s update underflowed at mean=%g var=%g margin=%g, prior kept",
            outcome,
            prior_mean,
            prior_var,
            margin,
        )
        return TruncatedUpdate(prior_mean, prior_var, underflow=True)
    return TruncatedUpdate(mean, max(variance, VARIANCE_FLOOR))


def win_probability(delta: float, c: float, margin: float = 0.0) -> float:
    return math.exp(log_cdf((delta - margin) / c))


def draw_probability(delta: float, c: float, margin: float) -> float:
    try:
        return math.exp(log_interval_mass((-margin - delta) / c, (margin - delta) / c))
    except ValueError:
        # interval mass rounds to zero in the far tail
        return 0.0
