import math

import numpy as np
import pytest

from kcengage.config import ModelConfig
from kcengage.events import EngagementEvent
from kcengage.learners import (
    InkLearner,
    InterestLearner,
    KnowledgeTracingLearner,
    LearnerContext,
    NoveltyLearner,
    UnknownModelError,
    build_learner,
    build_user_jaccard_table,
    learner_names,
    lookup_learner,
    register_learner,
)
from kcengage.learners.baselines import coverage_cosine, jaccard
from kcengage.learners.gaussian import (
    Outcome,
    draw_margin,
    draw_probability,
    win_probability,
)
from kcengage.learners.kt import kt_posterior
from kcengage.learners.trueskill import TrueSkillLearner
from kcengage.models import UsageError, group_sessions

from .factories import make_event, posterior_moments


def test_registry_lists_every_model() -> None:
    assert learner_names() == [
        "cosine",
        "ink",
        "interest",
        "jaccard-c",
        "jaccard-u",
        "kt",
        "novelty",
        "tf-binary",
        "tf-cosine",
    ]
    assert lookup_learner("ink") is InkLearner


def test_unknown_model_lists_choices() -> None:
    with pytest.raises(UnknownModelError, match="choose from: cosine, ink"):
        lookup_learner("trueskill")


def test_register_twice_fails() -> None:
    with pytest.raises(RuntimeError, match="registered twice"):
        register_learner("kt")(KnowledgeTracingLearner)


def test_interest_first_prediction() -> None:
    model = build_learner("interest")
    assert isinstance(model, InterestLearner)
    event = make_event(kcs=[(1, 0.5), (2, 0.25)])
    p = ModelConfig().interest
    c = math.sqrt(2 * p.init_variance + 4 * p.beta**2)
    assert model.predict_proba(event) == pytest.approx(win_probability(-0.75, c))


def test_interest_engagement_raises_skills() -> None:
    model = build_learner("interest")
    model.fit(make_event(kcs=[(1, 0.5), (2, 0.25)], label=1))
    skills = model.state.skills
    assert all(s.mean > 0.0 for s in skills.values())
    assert all(s.variance < 300.0 for s in skills.values())


def test_novelty_probability_uses_draw_margin() -> None:
    model = build_learner("novelty")
    event = make_event(kcs=[(1, 0.5), (2, 0.25)])
    p = ModelConfig().novelty
    c = math.sqrt(2 * p.init_variance + 4 * p.beta**2)
    margin = draw_margin(p.draw_probability, p.beta, 4)
    assert model.predict_proba(event) == pytest.approx(
        draw_probability(-0.75, c, margin)
    )


def test_novelty_draw_pulls_skill_towards_content() -> None:
    model = build_learner("novelty")
    model.fit(make_event(kcs=[(1, 0.8)], label=1))
    skill = model.state.skills[1]
    assert 0.0 < skill.mean < 0.8
    assert skill.variance < 0.25


def test_novelty_disengagement_with_content_ahead_lowers_skill() -> None:
    model = build_learner("novelty")
    model.fit(make_event(kcs=[(1, 0.8)], label=0))
    assert model.state.skills[1].mean < 0.0


@pytest.mark.parametrize(
    ("name", "tau", "coverage", "label", "outcome"),
    [
        ("interest", 0.0, 0.5, 1, Outcome.WIN),
        ("interest", 0.0, 0.5, 0, Outcome.LOSS),
        ("interest", 2.0, 0.9, 1, Outcome.WIN),
        ("novelty", 0.0, 0.8, 1, Outcome.DRAW),
        ("novelty", 0.0, 0.8, 0, Outcome.LOSS),
        ("novelty", 0.1, 0.3, 1, Outcome.DRAW),
    ],
)
def test_single_kc_fit_matches_numerical_posterior(
    name: str, tau: float, coverage: float, label: int, outcome: Outcome
) -> None:
    config = ModelConfig().with_overrides({f"{name}.tau": tau})
    model = build_learner(name, config)
    assert isinstance(model, TrueSkillLearner)
    p = model.params
    model.fit(make_event(kcs=[(1, coverage)], label=label))
    # the game is played on skill minus content, one performance per team
    offset = coverage * p.scale
    margin = draw_margin(p.draw_probability, p.beta, 2) if name == "novelty" else 0.0
    mean, var = posterior_moments(
        p.init_mean - offset, p.init_variance + tau**2, 2 * p.beta**2, outcome, margin
    )
    skill = model.state.skills[1]
    assert skill.mean == pytest.approx(mean + offset, abs=1e-3)
    assert skill.variance == pytest.approx(var, abs=1e-3)
    assert model.underflows == 0


def test_hopeless_game_keeps_prior() -> None:
    config = ModelConfig().with_overrides({"interest.scale": 1e6})
    model = build_learner("interest", config)
    assert isinstance(model, TrueSkillLearner)
    model.fit(make_event(kcs=[(1, 1.0)], label=1))
    assert model.underflows == 1
    assert model.state.skills[1].mean == 0.0
    assert model.state.skills[1].variance == 300.0
    assert model.state.event_count == 1


def test_tau_inflates_variance_before_update() -> None:
    config = ModelConfig().with_overrides({"novelty.tau": 0.1})
    plain, dynamic = build_learner("novelty"), build_learner("novelty", config)
    event = make_event(kcs=[(1, 0.3)], label=1)
    plain.fit(event)
    dynamic.fit(event)
    assert dynamic.state.skills[1].variance > plain.state.skills[1].variance


@pytest.mark.parametrize("name", ["interest", "novelty", "ink", "kt", "tf-cosine"])
def test_kc_order_does_not_matter(name: str) -> None:
    forward, backward = build_learner(name), build_learner(name)
    kcs = [(3, 0.9), (1, 0.2), (7, 0.5)]
    history = [(0, 1), (1, 0), (2, 1)]
    for t, label in history:
        forward.fit(make_event(kcs=kcs, label=label, timestamp=t))
        backward.fit(make_event(kcs=kcs[::-1], label=label, timestamp=t))
    query = make_event(kcs=[(7, 0.4), (3, 0.1)])
    query_reversed = make_event(kcs=[(3, 0.1), (7, 0.4)])
    assert forward.predict_proba(query) == backward.predict_proba(query_reversed)
    assert forward.snapshot() == backward.snapshot()


def test_ink_weight_recurrence() -> None:
    config = ModelConfig().with_overrides({"ink.greedy": False, "ink.tau": 0.5})
    ink = build_learner("ink", config)
    assert isinstance(ink, InkLearner)
    interest = InterestLearner.from_config(config, LearnerContext())
    novelty = NoveltyLearner.from_config(config, LearnerContext())
    w_i = w_n = 1.0
    events = [
        make_event(kcs=[(1, 0.4)], label=1, timestamp=0),
        make_event(kcs=[(1, 0.6), (2, 0.2)], label=0, timestamp=1),
        make_event(kcs=[(2, 0.3)], label=1, timestamp=2),
    ]
    for event in events:
        p_i, p_n = interest.predict_proba(event), novelty.predict_proba(event)
        expected = (w_i * p_i + w_n * p_n) / (w_i + w_n)
        assert ink.predict_proba(event) == pytest.approx(expected)
        ink.fit(event)
        interest.fit(event)
        novelty.fit(event)
        w_i *= math.exp(-0.5 * abs(p_i - event.label))
        w_n *= math.exp(-0.5 * abs(p_n - event.label))
        assert ink.weights == pytest.approx((w_i, w_n))
    assert ink.weight_updates == 3


def test_ink_greedy_keeps_weights_after_correct_prediction() -> None:
    ink = build_learner("ink")
    assert isinstance(ink, InkLearner)
    event = make_event(kcs=[(1, 0.9)], label=0)
    assert ink.predict(event) == 0
    ink.fit(event)
    assert ink.weights == (1.0, 1.0)
    assert ink.weight_updates == 0
    assert ink.snapshot()["ink_weights"] == [1.0, 1.0]


def test_kt_recurrence() -> None:
    model = build_learner("kt")
    assert isinstance(model, KnowledgeTracingLearner)
    event = make_event(kcs=[(4, 0.5)], label=1)
    # prior mastery 0: only a guess can produce engagement
    assert model.predict_proba(event) == pytest.approx(0.2)
    assert model.predict(event) == 0
    model.fit(event)
    assert model.mastery(4) == pytest.approx(0.05)
    model.fit(event)
    posterior = 0.05 * 0.9 / (0.05 * 0.9 + 0.95 * 0.2)
    assert model.mastery(4) == pytest.approx(posterior + (1 - posterior) * 0.05)


def test_kt_posterior_on_disengagement() -> None:
    params = ModelConfig().kt
    posterior = 0.5 * 0.1 / (1 - (0.5 * 0.9 + 0.5 * 0.2))
    assert kt_posterior(0.5, 0, params) == pytest.approx(
        posterior + (1 - posterior) * 0.05
    )


def test_kt_snapshot_has_null_variance() -> None:
    model = build_learner("kt")
    model.fit(make_event(kcs=[(4, 0.5)], label=1))
    snapshot = model.snapshot()
    assert snapshot is not None
    assert snapshot["kind"] == "bernoulli"
    assert snapshot["skills"][0]["variance"] is None


def test_similarity_helpers() -> None:
    assert coverage_cosine({1: 1.0}, {1: 2.0}) == pytest.approx(1.0)
    assert coverage_cosine({1: 1.0}, {2: 1.0}) == 0.0
    assert coverage_cosine({1: 0.0}, {1: 1.0}) == 0.0
    assert jaccard({1, 2}, {2, 3}) == pytest.approx(1 / 3)
    assert jaccard(set(), set()) == 0.0


def _random_coverage(rng: np.random.Generator) -> dict[int, float]:
    n = int(rng.integers(1, 6))
    kcs = rng.choice(20, size=n, replace=False)
    coverage = rng.uniform(0.0, 1.0, n)
    return {int(k): float(c) for k, c in zip(kcs, coverage, strict=True)}


def test_similarity_helpers_agree_with_dense_vectors() -> None:
    rng = np.random.default_rng(17)
    for _ in range(1000):
        a, b = _random_coverage(rng), _random_coverage(rng)
        dense_a, dense_b = np.zeros(20), np.zeros(20)
        dense_a[list(a)] = list(a.values())
        dense_b[list(b)] = list(b.values())
        norms = np.linalg.norm(dense_a) * np.linalg.norm(dense_b)
        expected = float(dense_a @ dense_b / norms)
        assert coverage_cosine(a, b) == pytest.approx(expected, abs=1e-12)
        assert coverage_cosine(b, a) == pytest.approx(coverage_cosine(a, b), abs=1e-12)
        assert coverage_cosine(a, a) == pytest.approx(1.0, abs=1e-12)

        ids_a, ids_b = np.array(list(a)), np.array(list(b))
        overlap = len(np.intersect1d(ids_a, ids_b)) / len(np.union1d(ids_a, ids_b))
        assert jaccard(set(a), set(b)) == pytest.approx(overlap, abs=1e-12)
        assert jaccard(set(b), set(a)) == jaccard(set(a), set(b))
        assert jaccard(set(a), set(a)) == 1.0


def _random_events(rng: np.random.Generator, n: int) -> list[EngagementEvent]:
    events = []
    for t in range(n):
        kcs = list(_random_coverage(rng).items())
        events.append(make_event(kcs=kcs, label=int(rng.integers(0, 2)), timestamp=t))
    return events


@pytest.mark.parametrize("greedy", [True, False])
def test_ink_stays_between_its_parts(greedy: bool) -> None:
    rng = np.random.default_rng(23)
    config = ModelConfig().with_overrides({"ink.greedy": greedy})
    for _ in range(20):
        ink = build_learner("ink", config)
        assert isinstance(ink, InkLearner)
        for event in _random_events(rng, 30):
            p_i = ink.interest.predict_proba(event)
            p_n = ink.novelty.predict_proba(event)
            p = ink.predict_proba(event)
            assert min(p_i, p_n) - 1e-12 <= p <= max(p_i, p_n) + 1e-12
            ink.fit(event)


def test_kt_mastery_stays_a_probability() -> None:
    rng = np.random.default_rng(29)
    for _ in range(50):
        slip, guess = rng.uniform(0.0, 0.5, 2)
        config = ModelConfig().with_overrides({
            "kt.p_learn": float(rng.uniform(0.0, 1.0)),
            "kt.p_slip": float(slip),
            "kt.p_guess": float(guess),
            "kt.init_mastery": float(rng.uniform(0.0, 1.0)),
        })
        model = build_learner("kt", config)
        assert isinstance(model, KnowledgeTracingLearner)
        for event in _random_events(rng, 40):
            assert 0.0 <= model.predict_proba(event) <= 1.0
            model.fit(event)
            for kc_id in event.kc_ids:
                assert 0.0 <= model.mastery(kc_id) <= 1.0



def test_pairwise_baseline_falls_back_on_first_event() -> None:
    model = build_learner("cosine")
    first = make_event(kcs=[(1, 0.5), (2, 0.5)])
    assert model.predict(first) == 1
    assert model.predict_proba(first) == 0.75
    model.fit(first)
    assert model.predict(first) == 1
    assert model.predict_proba(first) == pytest.approx(1.0 / 1.5)


def test_fallback_label_zero() -> None:
    config = ModelConfig().with_overrides({"baseline.fallback_label": 0})
    model = build_learner("jaccard-c", config)
    first = make_event()
    assert model.predict(first) == 0
    assert model.predict_proba(first) == 0.25


def test_concept_jaccard_below_threshold() -> None:
    model = build_learner("jaccard-c")
    model.fit(make_event(kcs=[(1, 0.5), (2, 0.5)]))
    assert model.predict(make_event(kcs=[(2, 0.5), (3, 0.5)])) == 0


def test_user_jaccard_needs_training_table() -> None:
    with pytest.raises(UsageError, match="jaccard-u"):
        build_learner("jaccard-u")
    train = group_sessions([
        make_event(user_id=1, fragment=(1, 1, 1)),
        make_event(user_id=1, fragment=(1, 1, 2), timestamp=1),
        make_event(user_id=2, fragment=(1, 1, 1)),
    ])
    table = build_user_jaccard_table(train)
    assert table.similarity((1, 1, 1), (1, 1, 2)) == 0.5
    assert table.similarity((1, 1, 1), (9, 9, 9)) == 0.0
    assert sorted(table.pairs()) == [
        ((1, 1, 1), (1, 1, 2), 0.5),
        ((1, 1, 2), (1, 1, 1), 0.5),
    ]
    model = build_learner("jaccard-u", context=LearnerContext(user_jaccard=table))
    model.fit(make_event(user_id=5, fragment=(1, 1, 1)))
    assert model.predict(make_event(user_id=5, fragment=(1, 1, 2))) == 1


def test_term_frequency_counts_only_engaged_events() -> None:
    binary, weighted = build_learner("tf-binary"), build_learner("tf-cosine")
    for event in (
        make_event(kcs=[(1, 0.4)], label=1),
        make_event(kcs=[(1, 0.4)], label=1, timestamp=1),
        make_event(kcs=[(2, 0.9)], label=0, timestamp=2),
    ):
        binary.fit(event)
        weighted.fit(event)
    query = make_event(kcs=[(1, 0.5), (2, 0.5)])
    assert binary.score(query) == pytest.approx(1.0)
    assert weighted.score(query) == pytest.approx(0.4)
    assert binary.predict(query) == 1
    assert weighted.predict(query) == 0


def test_zero_threshold_and_zero_score_is_even() -> None:
    config = ModelConfig().with_overrides({"baseline.threshold": 0.0})
    model = build_learner("tf-binary", config)
    assert model.predict_proba(make_event()) == 0.5
