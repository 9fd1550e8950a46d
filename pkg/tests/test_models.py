import pytest

from kcengage.models import (
    EmptyDatasetError,
    OverlappingSplitsError,
    dataset_stats,
    group_sessions,
    merge_datasets,
    positive_rate,
    session_histogram,
    split_dataset,
)

from .factories import make_event


def test_group_sessions_orders_by_timestamp_keeping_ties() -> None:
    events = [
        make_event(user_id=2, timestamp=30, fragment=(1, 1, 1)),
        make_event(user_id=1, timestamp=20, fragment=(1, 1, 2)),
        make_event(user_id=2, timestamp=10, fragment=(1, 1, 3)),
        make_event(user_id=2, timestamp=30, fragment=(1, 1, 4)),
    ]
    ds = group_sessions(events)
    assert ds.user_ids == [1, 2]
    parts = [e.fragment.part_id for e in ds.sessions[2].events]
    assert parts == [3, 1, 4]
    assert ds.n_events == 4
    assert ds.kc_vocabulary == frozenset({1})


def test_positive_rate() -> None:
    ds = group_sessions([make_event(label=1), make_event(label=0, timestamp=1)])
    assert positive_rate(ds) == 0.5
    with pytest.raises(EmptyDatasetError):
        positive_rate(group_sessions([]))


def test_split_dataset_is_seeded_and_disjoint() -> None:
    ds = group_sessions(make_event(user_id=u) for u in range(100))
    train, test = split_dataset(ds, 0.7, seed=3)
    again, _ = split_dataset(ds, 0.7, seed=3)
    assert len(train.sessions) == 70
    assert len(test.sessions) == 30
    assert not set(train.user_ids) & set(test.user_ids)
    assert train.user_ids == again.user_ids


def test_split_dataset_rejects_bad_fraction() -> None:
    ds = group_sessions([make_event()])
    with pytest.raises(ValueError, match="train_fraction"):
        split_dataset(ds, 1.0)


def test_merge_datasets_rejects_overlap() -> None:
    a = group_sessions([make_event(user_id=1)])
    b = group_sessions([make_event(user_id=1, timestamp=5)])
    with pytest.raises(OverlappingSplitsError):
        merge_datasets(a, b)
    c = group_sessions([make_event(user_id=2)])
    assert merge_datasets(a, c).user_ids == [1, 2]


def test_dataset_stats() -> None:
    events = [
        make_event(user_id=1, fragment=(1, 1, 1), label=1),
        make_event(user_id=1, fragment=(1, 1, 2), label=0, timestamp=1),
        make_event(user_id=2, fragment=(1, 2, 1), label=1),
        make_event(user_id=2, fragment=(2, 1, 1), label=1, timestamp=1),
    ]
    stats = dataset_stats(group_sessions(events))
    assert stats.n_events == 4
    assert stats.n_learners == 2
    assert stats.n_lectures == 2
    assert stats.n_videos == 3
    assert stats.n_fragments == 4
    assert stats.fragments_per_video == pytest.approx(4 / 3)
    assert stats.positive_rate == 0.75
    assert stats.session_histogram["1-10"] == 2


def test_session_histogram_bins() -> None:
    hist = session_histogram([1, 10, 11, 80, 81, 500])
    assert list(hist) == [
        "1-10",
        "11-20",
        "21-30",
        "31-40",
        "41-50",
        "51-60",
        "61-70",
        "71-80",
        ">80",
    ]
    assert hist["1-10"] == 2
    assert hist["11-20"] == 1
    assert hist["71-80"] == 1
    assert hist[">80"] == 2
