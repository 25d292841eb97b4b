"""
Delimited-text corpus files.

A file starts with ``# key: value`` header lines, followed by one row per
week (``person_id,age,occupation,c0..c1007``) or per diary day
(``person_id,age,occupation,weekday,c0..c143``). UTF-8, LF line endings,
every line terminated.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from schedule_domain import (
    RESOLUTION_MINUTES,
    STEPS_PER_DAY,
    STEPS_PER_WEEK,
    DiaryDay,
    DiarySample,
    PersonAttributes,
    StateAlphabet,
    WeeklySchedule,
    diary_days_to_array,
    schedules_to_array,
    validate_diary,
    validate_schedule,
)

logger = logging.getLogger(__name__)

FORMAT_NAME = "occupancy-schedules-corpus"
FORMAT_VERSION = 1
KINDS = ("week", "day")
HEADER_KEYS = ("format", "version", "kind", "resolution_min", "alphabet", "kind_of_alphabet", "states", "rows")


class CorpusFormatError(ValueError):
    """Malformed corpus file; ``line`` is the 1-based line number, if known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class CorpusEOFError(CorpusFormatError):
    pass


class CorpusVersionError(CorpusFormatError):
    pass


class AlphabetMismatchError(ValueError):
    pass


@dataclass
class Corpus:
    """Contents of a corpus file: weekly schedules or diary samples."""

    kind: str
    alphabet: StateAlphabet
    items: list

    def __len__(self) -> int:
        return len(self.items)

    def states(self) -> np.ndarray:
        """Rows as an integer array (N x 1008 weeks or N_days x 144 days)."""
        if self.kind == "week":
            return schedules_to_array(self.items)
        return diary_days_to_array(self.items)


def _kind_of(items: Sequence) -> str:
    if all(isinstance(i, WeeklySchedule) for i in items):
        return "week"
    if all(isinstance(i, DiarySample) for i in items):
        return "day"
    raise ValueError("corpus must hold only WeeklySchedule or only DiarySample items")


def write_corpus(items: Sequence, path: Union[str, Path], alphabet: Optional[StateAlphabet] = None) -> Path:
    """
    Write schedules or diary samples. Output bytes depend only on the items.

    :param alphabet: defaults to the alphabet of the first item
    """
    items = list(items)
    if not items and alphabet is None:
        raise ValueError("an empty corpus needs an explicit alphabet")
    kind = _kind_of(items) if items else "week"
    alphabet = alphabet or items[0].alphabet
    for item in items:
        if item.alphabet != alphabet:
            raise AlphabetMismatchError(f"person {item.person_id!r} uses alphabet {item.alphabet.name!r}")
        violations = validate_schedule(item) if kind == "week" else validate_diary(item)
        if violations:
            raise ValueError(f"invalid item for person {item.person_id!r}: {violations[0]}")
        if "," in item.person_id or "\n" in item.person_id:
            raise ValueError(f"person id {item.person_id!r} must not contain ',' or newlines")
    for label in alphabet.labels:
        if "|" in label or "\n" in label:
            raise ValueError(f"state label {label!r} must not contain '|' or newlines")

    rows: List[str] = []
    for item in items:
        a = item.attributes
        prefix = f"{a.person_id},{a.age_class},{a.occupation_class}"
        if kind == "week":
            rows.append(prefix + "," + ",".join(map(str, item.states.tolist())))
        else:
            for day in item.days:
                rows.append(f"{prefix},{day.weekday}," + ",".join(map(str, day.states.tolist())))

    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "kind": kind,
        "resolution_min": RESOLUTION_MINUTES,
        "alphabet": alphabet.name,
        "kind_of_alphabet": alphabet.kind,
        "states": "|".join(alphabet.labels),
        "rows": len(rows),
    }
    lines = [f"# {key}: {header[key]}" for key in HEADER_KEYS] + rows
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    logger.debug("wrote %d %s rows to %s", len(rows), kind, path)
    return path


def _parse_header(lines: List[str]) -> Tuple[dict, int]:
    """Header mapping and the number of header lines; the ``rows`` key closes the header."""
    header = {}
    consumed = 0
    for number, line in enumerate(lines, start=1):
        if not line.startswith("#"):
            break
        key, sep, value = line[1:].partition(":")
        if not sep:
            raise CorpusFormatError(f"header line without ':' ({line!r})", number)
        header[key.strip()] = value.strip()
        consumed = number
        if key.strip() == HEADER_KEYS[-1]:
            break
    missing = [k for k in HEADER_KEYS if k not in header]
    if missing:
        raise CorpusFormatError(f"missing header keys {missing}")
    if header["format"] != FORMAT_NAME:
        raise CorpusFormatError(f"unknown format {header['format']!r}", 1)
    if header["version"] != str(FORMAT_VERSION):
        raise CorpusVersionError(f"unsupported corpus version {header['version']!r} (expected {FORMAT_VERSION})")
    if header["kind"] not in KINDS:
        raise CorpusFormatError(f"kind must be one of {KINDS}, got {header['kind']!r}")
    if header["resolution_min"] != str(RESOLUTION_MINUTES):
        raise CorpusFormatError(f"resolution must be {RESOLUTION_MINUTES} minutes, got {header['resolution_min']}")
    return header, consumed


def _parse_int(text: str, what: str, number: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise CorpusFormatError(f"{what} is not an integer: {text!r}", number) from None


def read_corpus(path: Union[str, Path], alphabet: Optional[StateAlphabet] = None) -> Corpus:
    """
    Parse a corpus file.

    :param alphabet: expected alphabet; a different header alphabet raises
        AlphabetMismatchError
    :raises CorpusFormatError: malformed rows, naming the line
    :raises CorpusEOFError: fewer rows than declared or a missing final newline
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        text = fh.read()
    if "\r" in text:
        raise CorpusFormatError("line endings must be LF")
    if text and not text.endswith("\n"):
        raise CorpusEOFError("file ends without a final newline (truncated?)")
    lines = text.split("\n")[:-1] if text else []
    header, n_header = _parse_header(lines)

    try:
        file_alphabet = StateAlphabet(header["alphabet"], tuple(header["states"].split("|")), header["kind_of_alphabet"])
    except ValueError as err:
        raise CorpusFormatError(f"invalid alphabet in header: {err}") from None
    if alphabet is not None and alphabet != file_alphabet:
        raise AlphabetMismatchError(
            f"file alphabet {file_alphabet.name!r} {list(file_alphabet.labels)} does not match "
            f"{alphabet.name!r} {list(alphabet.labels)}"
        )

    kind = header["kind"]
    length = STEPS_PER_WEEK if kind == "week" else STEPS_PER_DAY
    lead = 3 if kind == "week" else 4
    declared = _parse_int(header["rows"], "rows", None)
    body = lines[n_header:]
    if len(body) < declared:
        raise CorpusEOFError(f"expected {declared} rows, found {len(body)} (truncated file)")
    if len(body) > declared:
        raise CorpusFormatError(f"expected {declared} rows, found {len(body)}", n_header + declared + 1)

    weeks: List[WeeklySchedule] = []
    days_by_person = {}
    for offset, line in enumerate(body):
        number = n_header + offset + 1
        fields = line.split(",")
        if len(fields) != lead + length:
            raise CorpusFormatError(f"expected {length} state codes, got {len(fields) - lead}", number)
        try:
            attrs = PersonAttributes(
                _parse_int(fields[1], "age class", number), _parse_int(fields[2], "occupation class", number), fields[0]
            )
        except ValueError as err:
            if isinstance(err, CorpusFormatError):
                raise
            raise CorpusFormatError(str(err), number) from None
        try:
            codes = np.array(fields[lead:], dtype=np.int64)
        except ValueError:
            raise CorpusFormatError("state codes must be integers", number) from None
        if codes.min() < 0 or codes.max() >= file_alphabet.size:
            raise CorpusFormatError(f"state code outside 0..{file_alphabet.size - 1}", number)
        if kind == "week":
            weeks.append(WeeklySchedule(codes, attrs, file_alphabet))
        else:
            weekday = _parse_int(fields[3], "weekday", number)
            if not 0 <= weekday < 7:
                raise CorpusFormatError(f"weekday must be in 0..6, got {weekday}", number)
            entry = days_by_person.setdefault(attrs.person_id, (attrs, [], number))
            if entry[0] != attrs:
                raise CorpusFormatError(f"attributes of person {attrs.person_id!r} change between rows", number)
            entry[1].append(DiaryDay(weekday, codes))

    if kind == "week":
        items = weeks
    else:
        items = []
        for attrs, days, number in days_by_person.values():
            sample = DiarySample(tuple(days), attrs, file_alphabet)
            violations = validate_diary(sample)
            if violations:
                raise CorpusFormatError(f"person {attrs.person_id!r}: {violations[0]}", number)
            items.append(sample)
    logger.debug("read %d %s items from %s", len(items), kind, path)
    return Corpus(kind=kind, alphabet=file_alphabet, items=items)


def read_schedules(path, alphabet: Optional[StateAlphabet] = None) -> List[WeeklySchedule]:
    corpus = read_corpus(path, alphabet)
    if corpus.kind != "week":
        raise CorpusFormatError(f"{path} holds diary days, expected weekly schedules")
    return corpus.items


def read_diaries(path, alphabet: Optional[StateAlphabet] = None) -> List[DiarySample]:
    corpus = read_corpus(path, alphabet)
    if corpus.kind != "day":
        raise CorpusFormatError(f"{path} holds weekly schedules, expected diary days")
    return corpus.items
