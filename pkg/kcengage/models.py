import bisect
import dataclasses
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

if TYPE_CHECKING:
    from .events import EngagementEvent

# session lengths are bucketed by tens up to this value, then lumped together
SESSION_HISTOGRAM_MAX = 80


class KcEngageError(Exception):
    pass


class UsageError(KcEngageError):
    pass


class DataError(KcEngageError):
    pass


class MalformedRowError(DataError):
    def __init__(self, row: int, reason: str) -> None:
        super().__init__(f"row {row}: {reason}")
        self.row = row
        self.reason = reason


class CoverageOutOfRangeError(MalformedRowError):
    pass


class LabelNotBinaryError(MalformedRowError):
    pass


class EmptyDatasetError(DataError):
    pass


class OverlappingSplitsError(DataError):
    def __init__(self, user_ids: set[int]) -> None:
        sample = sorted(user_ids)[:10]
        super().__init__(f"{len(user_ids)} users in both splits, e.g. {sample}")
        self.user_ids = user_ids


class ChecksumMismatchError(DataError):
    pass


class NetworkError(DataError):
    pass


@dataclasses.dataclass(slots=True)
class Session:
    user_id: int
    events: list["EngagementEvent"] = dataclasses.field(default_factory=list)

    @property
    def engagement_count(self) -> int:
        return sum(e.label for e in self.events)

    def __len__(self) -> int:
        return len(self.events)


@dataclasses.dataclass(frozen=True, slots=True)
class Dataset:
    sessions: Mapping[int, Session]
    kc_vocabulary: frozenset[int]
    kc_titles: Mapping[int, str] | None = None

    @property
    def user_ids(self) -> list[int]:
        return sorted(self.sessions)

    @property
    def n_events(self) -> int:
        return sum(len(s) for s in self.sessions.values())

    def events(self) -> Iterable["EngagementEvent"]:
        for user_id in self.user_ids:
            yield from self.sessions[user_id].events

    def subset(self, user_ids: Iterable[int]) -> "Dataset":
        return group_sessions(
            [e for u in sorted(set(user_ids)) for e in self.sessions[u].events],
            kc_titles=self.kc_titles,
        )

    def with_titles(self, kc_titles: Mapping[int, str]) -> "Dataset":
        return dataclasses.replace(self, kc_titles=dict(kc_titles))

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__qualname__}(sessions={len(self.sessions)}, "
            f"events={self.n_events}, kcs={len(self.kc_vocabulary)})"
        )


class DatasetStats(NamedTuple):
    n_events: int
    n_learners: int
    n_lectures: int
    n_videos: int
    n_fragments: int
    fragments_per_video: float
    positive_rate: float
    session_histogram: dict[str, int]


def group_sessions(
    events: Iterable["EngagementEvent"], kc_titles: Mapping[int, str] | None = None
) -> Dataset:
    by_user: dict[int, list[EngagementEvent]] = defaultdict(list)
    vocabulary: set[int] = set()
    for event in events:
        by_user[event.user_id].append(event)
        vocabulary.update(slot.kc_id for slot in event.kcs)
    sessions = {
        # sort is stable so ties keep file order
        user_id: Session(user_id, sorted(user_events, key=_timestamp_key))
        for user_id, user_events in sorted(by_user.items())
    }
    return Dataset(
        sessions=sessions,
        kc_vocabulary=frozenset(vocabulary),
        kc_titles=dict(kc_titles) if kc_titles is not None else None,
    )


def positive_rate(ds: Dataset) -> float:
    if not (total := ds.n_events):
        msg = "positive rate of an empty dataset"
        raise EmptyDatasetError(msg)
    return sum(s.engagement_count for s in ds.sessions.values()) / total


def merge_datasets(*datasets: Dataset) -> Dataset:
    if overlap := _overlapping_users(datasets):
        raise OverlappingSplitsError(overlap)
    titles: dict[int, str] = {}
    for ds in datasets:
        titles.update(ds.kc_titles or {})
    return group_sessions(
        (e for ds in datasets for e in ds.events()), kc_titles=titles or None
    )


def check_disjoint(train: Dataset, test: Dataset) -> None:
    if overlap := _overlapping_users((train, test)):
        raise OverlappingSplitsError(overlap)


def split_dataset(
    ds: Dataset, train_fraction: float = 0.7, seed: int = 0
) -> tuple[Dataset, Dataset]:
    if not 0.0 < train_fraction < 1.0:
        msg = f"train_fraction must be in (0, 1), got {train_fraction}"
        raise ValueError(msg)
    users = np.array(ds.user_ids, dtype=np.int64)
    np.random.default_rng(seed).shuffle(users)
    cut = round(len(users) * train_fraction)
    train_users = [int(u) for u in users[:cut]]
    test_users = [int(u) for u in users[cut:]]
    return ds.subset(train_users), ds.subset(test_users)


def dataset_stats(ds: Dataset) -> DatasetStats:
    if not ds.sessions:
        msg = "no sessions to describe"
        raise EmptyDatasetError(msg)
    lectures: set[int] = set()
    videos: set[tuple[int, int]] = set()
    fragments: set[tuple[int, int, int]] = set()
    for e in ds.events():
        lectures.add(e.fragment.lecture_id)
        videos.add((e.fragment.lecture_id, e.fragment.video_id))
        fragments.add(e.fragment.key)
    return DatasetStats(
        n_events=ds.n_events,
        n_learners=len(ds.sessions),
        n_lectures=len(lectures),
        n_videos=len(videos),
        n_fragments=len(fragments),
        fragments_per_video=len(fragments) / len(videos),
        positive_rate=positive_rate(ds),
        session_histogram=session_histogram([len(s) for s in ds.sessions.values()]),
    )


def session_histogram(lengths: Sequence[int]) -> dict[str, int]:
    edges = list(range(10, SESSION_HISTOGRAM_MAX + 1, 10))
    labels = [f"{lo + 1}-{hi}" for lo, hi in zip([0, *edges], edges, strict=False)]
    labels.append(f">{SESSION_HISTOGRAM_MAX}")
    counts = dict.fromkeys(labels, 0)
    for n in lengths:
        counts[labels[bisect.bisect_left(edges, n)]] += 1
    return counts


def _overlapping_users(datasets: Sequence[Dataset]) -> set[int]:
    seen: set[int] = set()
    overlap: set[int] = set()
    for ds in datasets:
        users = set(ds.sessions)
        overlap |= seen & users
        seen |= users
    return overlap


def _timestamp_key(e: "EngagementEvent") -> int:
    return e.timestamp
