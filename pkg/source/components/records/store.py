import json
import logging
from pathlib import Path
from typing import Iterable, Iterator, Union

from ..errors import MalformedRecordError, PatientNotFoundError
from .checker import check_record
from .record import RawRecord, RecordKind

log = logging.getLogger(__name__)


def _timeline_key(record: RawRecord) -> tuple:
    # Demographics first, then ascending day; sorted() keeps ingestion order on ties
    if record.kind == RecordKind.DEMOGRAPHIC:
        return (0, 0)
    return (1, record.day)


class RecordStore(object):
    """
    Immutable collection of EHR records grouped by patient, each group ordered as a timeline.
    """

    def __init__(self, records: Iterable[RawRecord], accepted: int = None, rejected: int = 0) -> None:
        """
        Groups, deduplicates and sorts the given records.

        Parameters:
            records (Iterable[RawRecord]): Records in ingestion order.
            accepted (int, optional): Number of accepted source lines (defaults to the record count).
            rejected (int): Number of rejected source lines.
        """
        groups: dict[str, list[RawRecord]] = {}
        seen = set()
        count = 0
        duplicates = 0
        for record in records:
            count += 1
            if record.dedup_key in seen:
                duplicates += 1
                continue
            seen.add(record.dedup_key)
            groups.setdefault(record.patient_id, []).append(record)

        self._groups = {
            patient_id: tuple(sorted(group, key=_timeline_key))
            for patient_id, group in groups.items()
        }
        self._accepted = count if accepted is None else accepted
        self._rejected = rejected
        self._duplicates = duplicates

    @property
    def patient_ids(self) -> list[str]:
        """
        Patient identifiers in order of first appearance.
        """
        return list(self._groups.keys())

    @property
    def accepted(self) -> int:
        return self._accepted

    @property
    def rejected(self) -> int:
        return self._rejected

    @property
    def duplicates(self) -> int:
        return self._duplicates

    def __len__(self) -> int:
        return len(self._groups)

    def __contains__(self, patient_id: str) -> bool:
        return patient_id in self._groups

    def __eq__(self, other) -> bool:
        return isinstance(other, RecordStore) and self._groups == other._groups

    def __iter__(self) -> Iterator[RawRecord]:
        for group in self._groups.values():
            yield from group

    def timeline(self, patient_id: str) -> tuple[RawRecord, ...]:
        """
        Returns the events of a patient, demographics first, then ascending by day with
        same-day events in ingestion order.

        Parameters:
            patient_id (str): Patient identifier.

        Returns:
            tuple[RawRecord, ...]: Ordered events.

        Raises:
            PatientNotFoundError: If the patient is not in the store.
        """
        try:
            return self._groups[patient_id]
        except KeyError:
            raise PatientNotFoundError(patient_id) from None


def patient_timeline(store: RecordStore, patient_id: str) -> tuple[RawRecord, ...]:
    return store.timeline(patient_id)


def ingest_records(path: Union[str, Path]) -> RecordStore:
    """
    Reads a newline-delimited record file. Malformed lines are skipped and logged with their line number.

    Parameters:
        path (str | Path): Record file.

    Returns:
        RecordStore: Store with every valid record.

    Raises:
        OSError: If the file cannot be read.
    """
    records = []
    rejected = 0
    with open(path, "rb") as f:
        for line_number, raw in enumerate(f, start=1):
            if not raw.strip():
                continue
            try:
                records.append(check_record(json.loads(raw.decode("utf-8"))))
            except UnicodeDecodeError as err:
                rejected += 1
                log.warning("%s:%d: skipped, not UTF-8 (byte %d)", path, line_number, err.start)
            except json.JSONDecodeError as err:
                rejected += 1
                log.warning("%s:%d: skipped, invalid JSON (%s)", path, line_number, err.msg)
            except MalformedRecordError as err:
                rejected += 1
                log.warning("%s:%d: skipped, %s", path, line_number, err)

    store = RecordStore(records, accepted=len(records), rejected=rejected)
    log.info(
        "Ingested %s: %d lines accepted, %d rejected, %d duplicates dropped, %d patients",
        path, store.accepted, store.rejected, store.duplicates, len(store),
    )
    return store


def record_line(record: RawRecord) -> str:
    """
    Serializes a record as one canonical interchange line (without the newline).
    """
    return json.dumps(record.as_dict(), ensure_ascii=False, separators=(",", ":"))


def write_records(records: Iterable[RawRecord], path: Union[str, Path]) -> None:
    """
    Writes records in the canonical interchange form. A RecordStore is written patient by
    patient in timeline order.

    Parameters:
        records (Iterable[RawRecord]): Records or a RecordStore.
        path (str | Path): Destination file.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(record_line(record))
            f.write("\n")
