import math
import time

import numpy as np
import pytest
from scipy.special import ndtr, ndtri

from kcengage.learners.gaussian import (
    Outcome,
    corrections,
    draw_margin,
    draw_probability,
    log_interval_mass,
    truncated_gaussian_update,
    win_probability,
)

from .factories import posterior_moments

Game = tuple[float, float, float, Outcome, float]


def _random_games(n: int, seed: int = 11) -> list[Game]:
    rng = np.random.default_rng(seed)
    games: list[Game] = []
    outcomes = list(Outcome)
    while len(games) < n:
        mean = float(rng.uniform(-3.0, 3.0))
        var = float(np.exp(rng.uniform(math.log(0.05), math.log(300.0))))
        perf_var = float(rng.uniform(0.05, 1.0))
        margin = float(rng.uniform(0.01, 3.0))
        outcome = outcomes[len(games) % 3]
        c = math.sqrt(var + perf_var)
        sign = -1.0 if outcome is Outcome.LOSS else 1.0
        # the quadrature cannot resolve conditioning events in the far tail
        if outcome is Outcome.DRAW:
            if draw_probability(mean, c, margin) < 1e-6:
                continue
        elif abs((sign * mean - margin) / c) > 5.0:
            continue
        games.append((mean, var, perf_var, outcome, margin))
    return games


def test_update_matches_numerical_posterior() -> None:
    started = time.perf_counter()
    for mean, var, perf_var, outcome, margin in _random_games(200):
        update = truncated_gaussian_update(mean, var, perf_var, outcome, margin)
        want_mean, want_var = posterior_moments(mean, var, perf_var, outcome, margin)
        assert not update.underflow
        assert update.mean == pytest.approx(want_mean, abs=1e-3)
        assert update.variance == pytest.approx(want_var, abs=1e-3)
    assert time.perf_counter() - started < 5.0


def test_win_and_loss_corrections_mirror() -> None:
    win = corrections(0.7, 1.3, Outcome.WIN, 0.2)
    loss = corrections(-0.7, 1.3, Outcome.LOSS, 0.2)
    assert win.v == pytest.approx(-loss.v)
    assert win.w == pytest.approx(loss.w)
    assert 0.0 < win.w < 1.0


def test_draw_corrections_are_symmetric_at_zero() -> None:
    v, w = corrections(0.0, 1.0, Outcome.DRAW, 0.5)
    assert v == pytest.approx(0.0, abs=1e-15)
    assert 0.0 < w < 1.0


def test_draw_margin() -> None:
    expected = float(ndtri(0.76)) * math.sqrt(2) * 0.42
    assert draw_margin(0.52, 0.42, 2) == pytest.approx(expected)
    with pytest.raises(ValueError, match="draw probability"):
        draw_margin(1.0, 0.42, 2)


def test_log_interval_mass_in_both_tails() -> None:
    assert log_interval_mass(-1.0, 1.0) == pytest.approx(math.log(ndtr(1) - ndtr(-1)))
    # mirrored branch keeps precision where 1 - Phi underflows
    upper = log_interval_mass(40.0, 41.0)
    lower = log_interval_mass(-41.0, -40.0)
    assert math.isfinite(upper)
    assert upper == pytest.approx(lower)


def test_variance_shrinks_and_stays_positive() -> None:
    for outcome in Outcome:
        update = truncated_gaussian_update(0.3, 0.25, 0.35, outcome, 0.4)
        assert 0.0 < update.variance < 0.25


def test_non_finite_update_keeps_prior() -> None:
    update = truncated_gaussian_update(1e200, 1.0, 1.0, Outcome.DRAW, 0.5)
    assert update.underflow
    assert (update.mean, update.variance) == (1e200, 1.0)


def test_update_rejects_non_positive_variance() -> None:
    with pytest.raises(ValueError, match="positive"):
        truncated_gaussian_update(0.0, 0.0, 1.0, Outcome.WIN, 0.1)


def test_probabilities() -> None:
    assert win_probability(0.0, 1.0) == pytest.approx(0.5)
    assert win_probability(0.5, 1.0, margin=0.5) == pytest.approx(0.5)
    assert draw_probability(0.0, 1.0, 1.0) == pytest.approx(ndtr(1) - ndtr(-1))
    assert draw_probability(1e3, 1.0, 0.5) == pytest.approx(0.0)
