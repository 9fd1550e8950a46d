import math
from collections.abc import Sequence

from scipy import integrate

from kcengage.events import EngagementEvent, FragmentId, KcAnnotationSlot
from kcengage.learners.gaussian import Outcome


def make_event(
    user_id: int = 0,
    kcs: Sequence[tuple[int, float]] = ((1, 0.5),),
    label: int = 1,
    timestamp: int = 0,
    fragment: tuple[int, int, int] = (1, 1, 1),
) -> EngagementEvent:
    return EngagementEvent(
        fragment=FragmentId(*fragment),
        timestamp=timestamp,
        user_id=user_id,
        kcs=tuple(KcAnnotationSlot(k, c) for k, c in kcs),
        label=label,
    )


def peekc_row(
    user_id: int,
    timestamp: int,
    label: int,
    kcs: Sequence[tuple[int, float]] = ((3, 0.5),),
    fragment: tuple[int, int, int] = (1, 1, 1),
) -> str:
    fields = [str(v) for v in (*fragment, timestamp, user_id)]
    for kc_id, coverage in kcs:
        fields += [str(kc_id), str(coverage)]
    fields += ["-1", "0"] * (5 - len(kcs))
    fields.append(str(label))
    return ",".join(fields)


def _phi(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def _likelihood(s: float, perf_sd: float, outcome: Outcome, margin: float) -> float:
    match outcome:
        case Outcome.WIN:
            return _phi((s - margin) / perf_sd)
        case Outcome.LOSS:
            return _phi((-margin - s) / perf_sd)
    return _phi((margin - s) / perf_sd) - _phi((-margin - s) / perf_sd)


def posterior_moments(
    mean: float, var: float, perf_var: float, outcome: Outcome, margin: float
) -> tuple[float, float]:
    """Mean and variance of a skill after one game, by numerical integration."""
    sd, perf_sd = math.sqrt(var), math.sqrt(perf_var)
    lo, hi = mean - 12.0 * sd, mean + 12.0 * sd
    points = sorted({p for p in (-margin, margin) if lo < p < hi})

    def moment(k: int) -> float:
        def f(s: float) -> float:
            prior = math.exp(-0.5 * ((s - mean) / sd) ** 2)
            return s**k * prior * _likelihood(s, perf_sd, outcome, margin)

        value, _ = integrate.quad(
            f, lo, hi, points=points or None, limit=500, epsabs=0.0, epsrel=1e-10
        )
        return value

    z = moment(0)
    m1 = moment(1) / z
    return m1, moment(2) / z - m1 * m1
