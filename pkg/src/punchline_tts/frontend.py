"""Phoneme frontend: symbol inventory, personal-filler registries, special tokens.

Phoneme labels are Mandarin pinyin initials and finals, finals carrying a tone
digit 1-5 (5 = neutral), plus the shared pause symbol ``sp`` and per-speaker
special tokens of the form ``<spcN>``. A special token stands for one speaker's
personal filler, a short phoneme sequence the speaker habitually inserts; two
speakers with the same filler text still get distinct tokens because they
pronounce it differently.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ConfigError, InputError

PAUSE_SYMBOL = "sp"

SPECIAL_TOKEN_RE = re.compile(r"^<spc([1-9][0-9]*)>$")

# Pinyin initials, plus the bare nasal coda that shows up when a final like
# "ang" is split into "a3 ng" by the aligner.
INITIALS = [
    "b", "p", "m", "f", "d", "t", "n", "l", "g", "k", "h",
    "zh", "ch", "sh", "r", "z", "c", "s", "j", "q", "x",
]
CODAS = ["ng"]

# Toneless finals; "ii"/"iii" are the apical vowels after z/c/s and zh/ch/sh/r,
# "v" stands for the umlaut u.
FINALS = [
    "a", "ai", "ao", "an", "ang", "e", "er", "ei", "en", "eng", "o", "ou",
    "ong", "ii", "iii", "i", "ia", "iao", "ian", "iang", "ie", "io", "iou",
    "iong", "in", "ing", "u", "ua", "uai", "uan", "uang", "uei", "uo", "uen",
    "ueng", "v", "ve", "van", "vn",
]
TONES = ["1", "2", "3", "4", "5"]


def mandarin_inventory() -> list[str]:
    """Base phoneme label inventory: initials, codas, toned finals, pause."""
    labels = list(INITIALS) + list(CODAS)
    labels += [f + t for f in FINALS for t in TONES]
    labels.append(PAUSE_SYMBOL)
    return labels


def is_special_token(label: str) -> bool:
    return SPECIAL_TOKEN_RE.match(label) is not None


@dataclass(frozen=True)
class PhonemeSymbol:
    text: str
    id: int
    kind: str  # "base" | "pause" | "special_token"


@dataclass(frozen=True)
class FillerEntry:
    """One registered personal filler: a speaker, its phonemes, its token."""

    speaker_id: str
    token: str
    phonemes: tuple[str, ...]


class FillerRegistry:
    """Per-speaker mapping from filler phoneme sequences to special tokens.

    Invariants enforced at construction:
      * every token matches ``<spcN>`` and is unique across the registry,
      * filler phoneme sequences are non-empty and contain no special tokens,
      * within one speaker, no filler is a prefix of another (this is what
        makes left-to-right longest-match replacement deterministic).
    """

    def __init__(self, entries: Iterable[FillerEntry]):
        self.entries: tuple[FillerEntry, ...] = tuple(entries)
        self._validate()
        self._by_speaker: dict[str, list[FillerEntry]] = {}
        for entry in self.entries:
            self._by_speaker.setdefault(entry.speaker_id, []).append(entry)
        # longest first so the scan can take the first hit at each position
        for speaker_entries in self._by_speaker.values():
            speaker_entries.sort(key=lambda e: (-len(e.phonemes), e.token))
        self._by_token = {entry.token: entry for entry in self.entries}

    def _validate(self) -> None:
        seen_tokens: set[str] = set()
        for entry in self.entries:
            if not is_special_token(entry.token):
                raise ConfigError(
                    f"registry token {entry.token!r} does not match <spcN>"
                )
            if entry.token in seen_tokens:
                raise ConfigError(f"registry token {entry.token!r} used twice")
            seen_tokens.add(entry.token)
            if not entry.phonemes:
                raise ConfigError(
                    f"registry entry for token {entry.token!r} has no phonemes"
                )
            for label in entry.phonemes:
                if "<" in label or ">" in label:
                    raise ConfigError(
                        f"filler phoneme {label!r} in {entry.token!r} is not a "
                        "base/pause label"
                    )
        by_speaker: dict[str, list[FillerEntry]] = {}
        for entry in self.entries:
            by_speaker.setdefault(entry.speaker_id, []).append(entry)
        for speaker, entries in by_speaker.items():
            for a in entries:
                for b in entries:
                    if a is b:
                        continue
                    if a.phonemes == b.phonemes[: len(a.phonemes)]:
                        raise ConfigError(
                            f"speaker {speaker!r}: filler {a.token!r} is a prefix "
                            f"of filler {b.token!r}; matching would be ambiguous"
                        )

    def for_speaker(self, speaker_id: str) -> list[FillerEntry]:
        """Entries for one speaker, longest filler first. Empty list is valid."""
        return list(self._by_speaker.get(speaker_id, []))

    def lookup_token(self, token: str) -> FillerEntry | None:
        return self._by_token.get(token)

    @property
    def tokens(self) -> list[str]:
        return [entry.token for entry in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, FillerRegistry) and self.entries == other.entries

    @classmethod
    def empty(cls) -> "FillerRegistry":
        return cls(())

    @classmethod
    def load(cls, path) -> "FillerRegistry":
        """Read the line-oriented registry file.

        One entry per line: ``speaker_id<TAB>token<TAB>phonemes`` with the
        phonemes space-separated; ``#`` starts a comment line; UTF-8.
        """
        entries = []
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise ConfigError(
                        f"{path}:{lineno}: expected 3 tab-separated fields, "
                        f"got {len(parts)}"
                    )
                speaker_id, token, phonemes = parts
                entries.append(
                    FillerEntry(speaker_id, token, tuple(phonemes.split()))
                )
        return cls(entries)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# speaker_id\ttoken\tfiller phonemes\n")
            for entry in self.entries:
                fh.write(
                    f"{entry.speaker_id}\t{entry.token}\t{' '.join(entry.phonemes)}\n"
                )


def replace_fillers(
    phonemes: Sequence[str],
    speaker_id: str,
    registry: FillerRegistry,
    known_labels: Iterable[str] | None = None,
) -> list[str]:
    """Replace this speaker's registered fillers with their special tokens.

    Scans left to right; at each position the longest matching filler wins and
    the scan resumes after it. Labels that are not part of any filler pass
    through unchanged. When ``known_labels`` is given, any label outside it is
    rejected with its position; labels that look like special tokens are always
    rejected, since the input is expected to be raw phonemes.
    """
    known = set(known_labels) if known_labels is not None else None
    for position, label in enumerate(phonemes):
        if "<" in label or ">" in label:
            raise InputError(
                f"label {label!r} at position {position} is not a base/pause symbol"
            )
        if known is not None and label not in known:
            raise InputError(f"unknown label {label!r} at position {position}")

    entries = registry.for_speaker(speaker_id)
    if not entries:
        return list(phonemes)

    out: list[str] = []
    i = 0
    n = len(phonemes)
    while i < n:
        matched = None
        for entry in entries:  # longest first
            span = len(entry.phonemes)
            if i + span <= n and tuple(phonemes[i : i + span]) == entry.phonemes:
                matched = entry
                break
        if matched is None:
            out.append(phonemes[i])
            i += 1
        else:
            out.append(matched.token)
            i += len(matched.phonemes)
    return out


def expand_special_tokens(
    phonemes: Sequence[str], registry: FillerRegistry
) -> list[str]:
    """Inverse view of :func:`replace_fillers`: tokens back to their phonemes."""
    out: list[str] = []
    for position, label in enumerate(phonemes):
        if is_special_token(label):
            entry = registry.lookup_token(label)
            if entry is None:
                raise InputError(
                    f"special token {label!r} at position {position} is not registered"
                )
            out.extend(entry.phonemes)
        else:
            out.append(label)
    return out


class SymbolTable:
    """Immutable label <-> id mapping covering base, pause, and token symbols."""

    def __init__(self, symbols: Sequence[PhonemeSymbol]):
        self.symbols: tuple[PhonemeSymbol, ...] = tuple(symbols)
        for expected, symbol in enumerate(self.symbols):
            if symbol.id != expected:
                raise ConfigError(
                    f"symbol ids must be contiguous from 0, got {symbol.id} "
                    f"at slot {expected}"
                )
        self.lookup: dict[str, int] = {s.text: s.id for s in self.symbols}
        if len(self.lookup) != len(self.symbols):
            raise ConfigError("duplicate labels in symbol table")

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, label: str) -> bool:
        return label in self.lookup

    def id_of(self, label: str) -> int:
        try:
            return self.lookup[label]
        except KeyError:
            raise InputError(f"label {label!r} is not in the symbol table") from None

    def label_of(self, idx: int) -> str:
        if not 0 <= idx < len(self.symbols):
            raise InputError(f"symbol id {idx} out of range 0..{len(self.symbols) - 1}")
        return self.symbols[idx].text

    def encode(self, labels: Sequence[str]) -> list[int]:
        return [self.id_of(label) for label in labels]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.label_of(i) for i in ids]

    @property
    def special_tokens(self) -> list[str]:
        return [s.text for s in self.symbols if s.kind == "special_token"]

    def to_dict(self) -> dict:
        return {"symbols": [[s.text, s.kind] for s in self.symbols]}

    @classmethod
    def from_dict(cls, payload: dict) -> "SymbolTable":
        symbols = [
            PhonemeSymbol(text, i, kind)
            for i, (text, kind) in enumerate(payload["symbols"])
        ]
        return cls(symbols)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, separators=(",", ":"))

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()

    def is_superset_of(self, other: "SymbolTable") -> bool:
        """True when this table is ``other`` plus appended special tokens."""
        if len(self) < len(other):
            return False
        for mine, theirs in zip(self.symbols, other.symbols):
            if (mine.text, mine.kind) != (theirs.text, theirs.kind):
                return False
        return all(
            s.kind == "special_token" for s in self.symbols[len(other) :]
        )


def build_symbol_table(
    base_inventory: Sequence[str], registry: FillerRegistry
) -> SymbolTable:
    """Assemble the symbol table: base labels, the pause symbol, then tokens.

    Ordering is deterministic (base order, pause, tokens sorted by label) so
    two builds from the same inputs serialize identically.
    """
    if not base_inventory:
        raise ConfigError("base inventory is empty")
    if len(set(base_inventory)) != len(base_inventory):
        raise ConfigError("base inventory contains duplicate labels")
    for label in base_inventory:
        if is_special_token(label):
            raise ConfigError(
                f"base inventory label {label!r} collides with the special-token "
                "namespace"
            )

    symbols: list[PhonemeSymbol] = []
    for label in base_inventory:
        kind = "pause" if label == PAUSE_SYMBOL else "base"
        symbols.append(PhonemeSymbol(label, len(symbols), kind))
    if PAUSE_SYMBOL not in base_inventory:
        symbols.append(PhonemeSymbol(PAUSE_SYMBOL, len(symbols), "pause"))

    known = {s.text for s in symbols}
    for token in sorted(registry.tokens):
        if token in known:
            raise ConfigError(f"token {token!r} duplicates an existing label")
        symbols.append(PhonemeSymbol(token, len(symbols), "special_token"))
    return SymbolTable(symbols)
