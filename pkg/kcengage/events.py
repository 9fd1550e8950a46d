import csv
import dataclasses
import io
import logging
import math
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import BinaryIO, NamedTuple, Self

from . import settings
from .models import (
    CoverageOutOfRangeError,
    DataError,
    Dataset,
    LabelNotBinaryError,
    MalformedRowError,
    check_disjoint,
    group_sessions,
)

logger = logging.getLogger(__name__)

# kc_id of an unused annotation slot, always written with coverage 0
SENTINEL_KC = -1
KC_TITLES_FILE = "kc_titles.csv"

FRAGMENT_COLUMNS = ("lecture_id", "video_id", "part_id", "timestamp", "user_id")


class KcAnnotationSlot(NamedTuple):
    kc_id: int
    coverage: float


@dataclasses.dataclass(frozen=True, slots=True, order=True)
class FragmentId:
    lecture_id: int
    video_id: int
    part_id: int

    @property
    def key(self) -> tuple[int, int, int]:
        return self.lecture_id, self.video_id, self.part_id

    def __str__(self) -> str:
        return f"{self.lecture_id}/{self.video_id}/{self.part_id}"


class ColumnLayout(NamedTuple):
    """Shape of a PEEKC file.

    ``kc_slots`` (kc_id, coverage) pairs sit between the user id and the label.
    ``max_kcs`` keeps only the first N annotated KCs of each row, the slots
    being stored in rank order.
    """

    header: bool = False
    kc_slots: int = 5
    max_kcs: int | None = None

    @property
    def n_columns(self) -> int:
        return len(FRAGMENT_COLUMNS) + 2 * self.kc_slots + 1

    def column_names(self) -> list[str]:
        names = list(FRAGMENT_COLUMNS)
        for i in range(1, self.kc_slots + 1):
            names += [f"kc{i}_id", f"kc{i}_coverage"]
        names.append("label")
        return names


@dataclasses.dataclass(frozen=True, slots=True)
class EngagementEvent:
    fragment: FragmentId
    timestamp: int
    user_id: int
    kcs: tuple[KcAnnotationSlot, ...]
    label: int

    @property
    def kc_ids(self) -> tuple[int, ...]:
        return tuple(slot.kc_id for slot in self.kcs)

    def with_timestamp(self, timestamp: int) -> Self:
        return dataclasses.replace(self, timestamp=timestamp)

    def with_label(self, label: int) -> Self:
        return dataclasses.replace(self, label=label)

    @classmethod
    def from_row(cls, row_no: int, fields: Sequence[str], layout: ColumnLayout) -> Self:
        if len(fields) != layout.n_columns:
            reason = f"expected {layout.n_columns} columns, got {len(fields)}"
            raise MalformedRowError(row_no, reason)
        lecture_id, video_id, part_id, timestamp, user_id = (
            _parse_int(row_no, name, value)
            for name, value in zip(FRAGMENT_COLUMNS, fields, strict=False)
        )
        if lecture_id < 0 or video_id < 1 or part_id < 1:
            reason = f"invalid fragment id {lecture_id}/{video_id}/{part_id}"
            raise MalformedRowError(row_no, reason)
        if timestamp < 0 or user_id < 0:
            reason = f"negative timestamp or user id ({timestamp}, {user_id})"
            raise MalformedRowError(row_no, reason)
        slot_fields = fields[len(FRAGMENT_COLUMNS) : -1]
        kcs = _parse_slots(row_no, slot_fields)
        if layout.max_kcs is not None:
            kcs = kcs[: layout.max_kcs]
        return cls(
            fragment=FragmentId(lecture_id, video_id, part_id),
            timestamp=timestamp,
            user_id=user_id,
            kcs=kcs,
            label=_parse_label(row_no, fields[-1]),
        )

    def to_row(self, layout: ColumnLayout) -> list[str]:
        if len(self.kcs) > layout.kc_slots:
            msg = f"{len(self.kcs)} KCs do not fit in {layout.kc_slots} slots"
            raise ValueError(msg)
        row = [str(v) for v in (*self.fragment.key, self.timestamp, self.user_id)]
        for slot in self.kcs:
            row += [str(slot.kc_id), repr(slot.coverage)]
        row += [str(SENTINEL_KC), "0"] * (layout.kc_slots - len(self.kcs))
        row.append(str(self.label))
        return row


def parse_events(
    source: BinaryIO, layout: ColumnLayout | None = None
) -> list[EngagementEvent]:
    """Parse a PEEKC-format CSV byte stream.

    Row numbers in errors are 1-based physical lines, header included.
    """
    layout = layout or ColumnLayout()
    text = io.TextIOWrapper(source, encoding="utf-8", newline="")
    events: list[EngagementEvent] = []
    try:
        for row_no, fields in enumerate(csv.reader(text), start=1):
            if layout.header and row_no == 1:
                continue
            if not fields or all(not f.strip() for f in fields):
                continue
            events.append(EngagementEvent.from_row(row_no, fields, layout))
    except UnicodeDecodeError as e:
        msg = f"not UTF-8 text: {e}"
        raise DataError(msg) from e
    finally:
        text.detach()
    return events


def serialize_events(
    events: Iterable[EngagementEvent], layout: ColumnLayout | None = None
) -> str:
    layout = layout or ColumnLayout()
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if layout.header:
        writer.writerow(layout.column_names())
    writer.writerows(e.to_row(layout) for e in events)
    return buf.getvalue()


def load_events(
    path: Path, layout: ColumnLayout | None = None
) -> list[EngagementEvent]:
    try:
        with path.open("rb") as f:
            events = parse_events(f, layout)
    except OSError as e:
        msg = f"cannot read {path}: {e.strerror}"
        raise DataError(msg) from e
    except MalformedRowError as e:
        raise type(e)(e.row, f"{path.name}: {e.reason}") from e
    logger.info("%d events read from %s", len(events), path)
    return events


def load_dataset(path: Path, layout: ColumnLayout | None = None) -> Dataset:
    return group_sessions(load_events(path, layout))


def load_kc_titles(path: Path) -> dict[int, str]:
    titles: dict[int, str] = {}
    try:
        with path.open(encoding="utf-8", newline="") as f:
            for row_no, fields in enumerate(csv.reader(f), start=1):
                if not fields:
                    continue
                if len(fields) != 2:  # noqa: PLR2004
                    reason = f"expected kc_id,title, got {len(fields)} columns"
                    raise MalformedRowError(row_no, reason)
                titles[_parse_int(row_no, "kc_id", fields[0])] = fields[1].strip()
    except OSError as e:
        msg = f"cannot read {path}: {e.strerror}"
        raise DataError(msg) from e
    return titles


def load_splits(
    data_dir: Path | None = None, layout: ColumnLayout | None = None
) -> tuple[Dataset, Dataset]:
    data_dir = data_dir or settings.app.data_dir
    train = load_dataset(data_dir / settings.fetch.train_file, layout)
    test = load_dataset(data_dir / settings.fetch.test_file, layout)
    check_disjoint(train, test)
    if (titles_path := data_dir / KC_TITLES_FILE).exists():
        titles = load_kc_titles(titles_path)
        train, test = train.with_titles(titles), test.with_titles(titles)
    return train, test


def _parse_int(row_no: int, name: str, value: str) -> int:
    try:
        return int(value.strip())
    except ValueError:
        reason = f"{name} is not an integer: {value!r}"
        raise MalformedRowError(row_no, reason) from None


def _parse_float(row_no: int, name: str, value: str) -> float:
    try:
        result = float(value.strip())
    except ValueError:
        reason = f"{name} is not a number: {value!r}"
        raise MalformedRowError(row_no, reason) from None
    if not math.isfinite(result):
        reason = f"{name} is not finite: {value!r}"
        raise MalformedRowError(row_no, reason)
    return result


def _parse_slots(row_no: int, fields: Sequence[str]) -> tuple[KcAnnotationSlot, ...]:
    slots: list[KcAnnotationSlot] = []
    seen: set[int] = set()
    for i in range(0, len(fields), 2):
        kc_id = _parse_int(row_no, f"kc{i // 2 + 1}_id", fields[i])
        coverage = _parse_float(row_no, f"kc{i // 2 + 1}_coverage", fields[i + 1])
        if kc_id == SENTINEL_KC:
            continue
        if kc_id < 0:
            raise MalformedRowError(row_no, f"negative kc id {kc_id}")
        if not 0.0 <= coverage <= 1.0:
            reason = f"coverage {coverage} of kc {kc_id} outside [0, 1]"
            raise CoverageOutOfRangeError(row_no, reason)
        if kc_id in seen:
            raise MalformedRowError(row_no, f"kc {kc_id} annotated twice")
        seen.add(kc_id)
        slots.append(KcAnnotationSlot(kc_id, coverage))
    if not slots:
        raise MalformedRowError(row_no, "no knowledge components annotated")
    return tuple(slots)


def _parse_label(row_no: int, value: str) -> int:
    match value.strip():
        case "0" | "0.0":
            return 0
        case "1" | "1.0":
            return 1
        case other:
            raise LabelNotBinaryError(row_no, f"label must be 0 or 1, got {other!r}")
