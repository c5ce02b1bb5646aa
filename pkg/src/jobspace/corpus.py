"""Corpus ingestion, vocabularies, curated skill fallbacks, and synthetic data.

Records arrive as one JSON object per line with fields id, title, skills,
lat, lon, kind. Titles and skills are interned into append-only
vocabularies after lowercasing and whitespace normalization. The synthetic
generator plants track/metro structure so that recommendation quality has
computable ground truth.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import DataError, UnresolvableSkillsError
from .geo import MILES_PER_DEGREE, validate_lat_lon


class RecordKind(str, Enum):
    POSTING = "posting"
    RESUME = "resume"


def normalize_token(token: str) -> str:
    """Lowercase and collapse internal whitespace."""
    return " ".join(token.lower().split())


class Vocabulary:
    """Ordered set of normalized tokens with stable integer ids."""

    def __init__(self, entries: Iterable[str] = (), frozen: bool = False):
        self.entries: list[str] = []
        self._lookup: dict[str, int] = {}
        self.frozen = False
        for token in entries:
            self.intern(token)
        self.frozen = frozen

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, token: str) -> bool:
        return normalize_token(token) in self._lookup

    def intern(self, token: str) -> int:
        """Return the id for `token`, adding it unless the vocabulary is frozen."""
        norm = normalize_token(token)
        if not norm:
            raise DataError("empty token cannot be interned")
        idx = self._lookup.get(norm)
        if idx is not None:
            return idx
        if self.frozen:
            raise DataError(f"unknown token {norm!r} (vocabulary is frozen)")
        idx = len(self.entries)
        self.entries.append(norm)
        self._lookup[norm] = idx
        return idx

    def index_of(self, token: str) -> int:
        norm = normalize_token(token)
        if norm not in self._lookup:
            raise KeyError(norm)
        return self._lookup[norm]

    def token(self, idx: int) -> str:
        return self.entries[idx]


@dataclass(frozen=True)
class JobPosting:
    """One posting or resume: normalized title id, skill ids, coordinates."""

    id: str
    title_id: int
    skill_ids: tuple[int, ...]
    lat_deg: float
    lon_deg: float
    kind: RecordKind = RecordKind.POSTING

    def __post_init__(self):
        validate_lat_lon(self.lat_deg, self.lon_deg)
        if len(set(self.skill_ids)) != len(self.skill_ids):
            raise ValueError(f"record {self.id}: duplicate skill ids")


@dataclass(frozen=True)
class CareerSequence:
    """Chronological job-title history for one person."""

    person_id: str
    title_ids: tuple[int, ...]

    def __post_init__(self):
        if len(self.title_ids) < 1:
            raise ValueError(f"sequence {self.person_id}: empty title history")


@dataclass
class CuratedSkillTable:
    """Fallback skill lists per title, used when a record carries no skills."""

    table: dict[int, tuple[int, ...]] = field(default_factory=dict)

    def add(self, title_id: int, skill_ids: Sequence[int]) -> None:
        if not skill_ids:
            raise ValueError("curated skill list must be non-empty")
        self.table[title_id] = tuple(skill_ids)

    def get(self, title_id: int) -> tuple[int, ...] | None:
        return self.table.get(title_id)

    def __len__(self) -> int:
        return len(self.table)


def fallback_skills(posting: JobPosting, table: CuratedSkillTable | None) -> tuple[int, ...]:
    """Resolve the skill list for a posting, consulting the curated table if empty."""
    if posting.skill_ids:
        return posting.skill_ids
    if table is not None:
        curated = table.get(posting.title_id)
        if curated:
            return curated
    raise UnresolvableSkillsError(
        f"record {posting.id}: no skills listed and no curated entry for its title"
    )


@dataclass
class RecordError:
    line_no: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line_no}: {self.message}"


def _parse_record(line_no: int, line: str, titles: Vocabulary, skills: Vocabulary) -> JobPosting:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise DataError("record is not a JSON object")
    rec_id = obj.get("id")
    if not isinstance(rec_id, str) or not rec_id:
        raise DataError("missing or invalid 'id' field")
    title = obj.get("title")
    if not isinstance(title, str) or not title.strip():
        raise DataError(f"record {rec_id!r}: missing title")
    raw_skills = obj.get("skills", [])
    if not isinstance(raw_skills, list) or not all(isinstance(s, str) for s in raw_skills):
        raise DataError(f"record {rec_id!r}: 'skills' must be an array of strings")
    lat, lon = obj.get("lat"), obj.get("lon")
    if not isinstance(lat, (int, float)) or not isinstance(lon, (int, float)):
        raise DataError(f"record {rec_id!r}: missing or non-numeric coordinates")
    try:
        validate_lat_lon(float(lat), float(lon))
    except ValueError as exc:
        raise DataError(f"record {rec_id!r}: {exc}") from exc
    kind_raw = obj.get("kind", "posting")
    try:
        kind = RecordKind(kind_raw)
    except ValueError as exc:
        raise DataError(f"record {rec_id!r}: unknown kind {kind_raw!r}") from exc
    title_id = titles.intern(title)
    skill_ids: list[int] = []
    for s in raw_skills:
        sid = skills.intern(s)
        if sid not in skill_ids:
            skill_ids.append(sid)
    return JobPosting(
        id=rec_id,
        title_id=title_id,
        skill_ids=tuple(skill_ids),
        lat_deg=float(lat),
        lon_deg=float(lon),
        kind=kind,
    )


def parse_postings(
    lines: Iterable[str],
    titles: Vocabulary,
    skills: Vocabulary,
    strict: bool = True,
) -> tuple[list[JobPosting], list[RecordError]]:
    """Parse line-oriented records, interning titles and skills.

    In strict mode the first malformed record raises DataError with its line
    number; otherwise bad records are collected and skipped.
    """
    postings: list[JobPosting] = []
    errors: list[RecordError] = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            postings.append(_parse_record(line_no, line, titles, skills))
        except DataError as exc:
            if strict:
                raise DataError(f"line {line_no}: {exc}") from exc
            errors.append(RecordError(line_no, str(exc)))
    return postings, errors


def posting_to_json(posting: JobPosting, titles: Vocabulary, skills: Vocabulary) -> str:
    obj = {
        "id": posting.id,
        "title": titles.token(posting.title_id),
        "skills": [skills.token(s) for s in posting.skill_ids],
        "lat": posting.lat_deg,
        "lon": posting.lon_deg,
        "kind": posting.kind.value,
    }
    return json.dumps(obj)


def write_postings(path, postings: Sequence[JobPosting], titles: Vocabulary, skills: Vocabulary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in postings:
            fh.write(posting_to_json(p, titles, skills) + "\n")


def read_postings(path, titles: Vocabulary, skills: Vocabulary, strict: bool = True):
    with open(path, encoding="utf-8") as fh:
        return parse_postings(fh, titles, skills, strict=strict)


def parse_sequences(lines: Iterable[str], titles: Vocabulary, strict: bool = True) -> list[CareerSequence]:
    """Parse `person_id<TAB>title1|title2|...` lines."""
    sequences = []
    for line_no, line in enumerate(lines, start=1):
        stripped = line.rstrip("\n")
        if not stripped.strip() or stripped.startswith("#"):
            continue
        parts = stripped.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            if strict:
                raise DataError(f"line {line_no}: expected 'person_id<TAB>title1|title2|...'")
            continue
        try:
            title_ids = tuple(titles.intern(t) for t in parts[1].split("|") if t.strip())
        except DataError as exc:
            if strict:
                raise DataError(f"line {line_no}: {exc}") from exc
            continue
        if title_ids:
            sequences.append(CareerSequence(person_id=parts[0], title_ids=title_ids))
    return sequences


def write_sequences(path, sequences: Sequence[CareerSequence], titles: Vocabulary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for seq in sequences:
            fh.write(seq.person_id + "\t" + "|".join(titles.token(t) for t in seq.title_ids) + "\n")


def read_sequences(path, titles: Vocabulary, strict: bool = True) -> list[CareerSequence]:
    with open(path, encoding="utf-8") as fh:
        return parse_sequences(fh, titles, strict=strict)


def parse_curated(lines: Iterable[str], titles: Vocabulary, skills: Vocabulary) -> CuratedSkillTable:
    """Parse `title<TAB>skill1,skill2,...` lines.

    With frozen vocabularies, titles or skills absent from them are dropped
    (the table can only help records that map into the embedding space).
    """
    table = CuratedSkillTable()
    for line_no, line in enumerate(lines, start=1):
        stripped = line.rstrip("\n")
        if not stripped.strip() or stripped.startswith("#"):
            continue
        parts = stripped.split("\t")
        if len(parts) != 2:
            raise DataError(f"line {line_no}: expected 'title<TAB>skill1,skill2,...'")
        title_tok, skills_part = parts
        try:
            title_id = titles.intern(title_tok)
        except DataError:
            continue
        skill_ids: list[int] = []
        for tok in skills_part.split(","):
            if not tok.strip():
                continue
            try:
                sid = skills.intern(tok)
            except DataError:
                continue
            if sid not in skill_ids:
                skill_ids.append(sid)
        if skill_ids:
            table.add(title_id, skill_ids)
    return table


def write_curated(path, table: CuratedSkillTable, titles: Vocabulary, skills: Vocabulary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for title_id in sorted(table.table):
            skill_toks = ",".join(skills.token(s) for s in table.table[title_id])
            fh.write(f"{titles.token(title_id)}\t{skill_toks}\n")


def read_curated(path, titles: Vocabulary, skills: Vocabulary) -> CuratedSkillTable:
    with open(path, encoding="utf-8") as fh:
        return parse_curated(fh, titles, skills)


# ---------------------------------------------------------------------------
# Synthetic corpora with planted structure
# ---------------------------------------------------------------------------

@dataclass
class SynthConfig:
    """Parameters for the planted-structure generator.

    Each track owns a disjoint pool of titles and skills. A posting samples
    a track, one of its titles, a skill subset from its pool (plus noise-rate
    contamination from other tracks), and coordinates jittered around one of
    the metro centers. Career sequences walk within their home track with
    probability 1 - noise per transition.
    """

    num_postings: int
    num_tracks: int = 20
    titles_per_track: int = 5
    skills_per_track: int = 10
    skills_per_posting: int = 4
    num_metros: int = 3
    jitter_miles: float = 10.0
    noise: float = 0.05
    num_sequences: int | None = None
    min_seq_len: int = 3
    max_seq_len: int = 8
    resume_fraction: float = 0.0
    metro_centers: tuple[tuple[float, float], ...] | None = None

    def validate(self) -> None:
        if self.num_postings < 1:
            raise ValueError("num_postings must be >= 1")
        if self.num_tracks < 1:
            raise ValueError("num_tracks must be >= 1")
        if self.titles_per_track < 1 or self.skills_per_track < 1:
            raise ValueError("titles_per_track and skills_per_track must be >= 1")
        if not 1 <= self.skills_per_posting:
            raise ValueError("skills_per_posting must be >= 1")
        if self.num_metros < 1:
            raise ValueError("num_metros must be >= 1")
        if self.jitter_miles < 0:
            raise ValueError("jitter_miles must be >= 0")
        if not 0.0 <= self.noise < 1.0:
            raise ValueError("noise must be in [0, 1)")
        if not 1 <= self.min_seq_len <= self.max_seq_len:
            raise ValueError("sequence length bounds must satisfy 1 <= min <= max")
        if not 0.0 <= self.resume_fraction <= 1.0:
            raise ValueError("resume_fraction must be in [0, 1]")
        if self.metro_centers is not None:
            if len(self.metro_centers) != self.num_metros:
                raise ValueError("metro_centers length must equal num_metros")
            for lat, lon in self.metro_centers:
                validate_lat_lon(lat, lon)

    def resolved_metro_centers(self) -> list[tuple[float, float]]:
        if self.metro_centers is not None:
            return list(self.metro_centers)
        # default placement: evenly spaced around the equator, which keeps
        # pairwise separation maximal for small metro counts
        step = 360.0 / self.num_metros
        return [(0.0, -180.0 + step * (i + 0.5)) for i in range(self.num_metros)]


@dataclass
class TruthLabel:
    track: int
    metro: int


@dataclass
class SyntheticData:
    postings: list[JobPosting]
    sequences: list[CareerSequence]
    truth: dict[str, TruthLabel]
    titles: Vocabulary
    skills: Vocabulary
    curated: CuratedSkillTable
    track_titles: list[tuple[int, ...]]
    track_skills: list[tuple[int, ...]]


def _jitter_coords(rng: np.random.Generator, center: tuple[float, float], sigma_miles: float) -> tuple[float, float]:
    lat_c, lon_c = center
    dlat = rng.normal(0.0, sigma_miles) / MILES_PER_DEGREE if sigma_miles > 0 else 0.0
    coslat = max(math.cos(math.radians(lat_c)), 0.01)
    dlon = rng.normal(0.0, sigma_miles) / (MILES_PER_DEGREE * coslat) if sigma_miles > 0 else 0.0
    lat = min(90.0, max(-90.0, lat_c + dlat))
    lon = ((lon_c + dlon + 180.0) % 360.0) - 180.0
    return lat, lon


def generate_synthetic(cfg: SynthConfig, seed: int) -> SyntheticData:
    """Generate a corpus, career sequences, and truth labels. Pure in (cfg, seed)."""
    cfg.validate()
    rng = np.random.default_rng(seed)

    titles = Vocabulary()
    skills = Vocabulary()
    track_titles: list[tuple[int, ...]] = []
    track_skills: list[tuple[int, ...]] = []
    for t in range(cfg.num_tracks):
        track_titles.append(
            tuple(titles.intern(f"track{t:02d} role{j:02d}") for j in range(cfg.titles_per_track))
        )
        track_skills.append(
            tuple(skills.intern(f"track{t:02d} skill{j:02d}") for j in range(cfg.skills_per_track))
        )

    curated = CuratedSkillTable()
    for t in range(cfg.num_tracks):
        for title_id in track_titles[t]:
            curated.add(title_id, track_skills[t])

    centers = cfg.resolved_metro_centers()
    postings: list[JobPosting] = []
    truth: dict[str, TruthLabel] = {}
    n_per_posting = min(cfg.skills_per_posting, cfg.skills_per_track)
    for i in range(cfg.num_postings):
        track = int(rng.integers(cfg.num_tracks))
        title_id = track_titles[track][int(rng.integers(cfg.titles_per_track))]
        pool = track_skills[track]
        if n_per_posting >= len(pool):
            skill_ids = list(pool)
        else:
            skill_ids = sorted(int(s) for s in rng.choice(pool, size=n_per_posting, replace=False))
        if cfg.noise > 0 and cfg.num_tracks > 1 and rng.random() < cfg.noise:
            other = int(rng.integers(cfg.num_tracks - 1))
            if other >= track:
                other += 1
            extra = int(rng.choice(track_skills[other]))
            if extra not in skill_ids:
                skill_ids.append(extra)
        metro = int(rng.integers(cfg.num_metros))
        lat, lon = _jitter_coords(rng, centers[metro], cfg.jitter_miles)
        kind = RecordKind.RESUME if rng.random() < cfg.resume_fraction else RecordKind.POSTING
        rec_id = f"p{i:06d}"
        postings.append(
            JobPosting(
                id=rec_id,
                title_id=title_id,
                skill_ids=tuple(skill_ids),
                lat_deg=lat,
                lon_deg=lon,
                kind=kind,
            )
        )
        truth[rec_id] = TruthLabel(track=track, metro=metro)

    num_sequences = cfg.num_sequences if cfg.num_sequences is not None else max(1, cfg.num_postings // 10)
    sequences: list[CareerSequence] = []
    all_tracks = list(range(cfg.num_tracks))
    for s in range(num_sequences):
        home = int(rng.integers(cfg.num_tracks))
        length = int(rng.integers(cfg.min_seq_len, cfg.max_seq_len + 1))
        seq = [int(rng.choice(track_titles[home]))]
        for _ in range(length - 1):
            if cfg.noise > 0 and cfg.num_tracks > 1 and rng.random() < cfg.noise:
                other = int(rng.integers(cfg.num_tracks - 1))
                if other >= home:
                    other += 1
                seq.append(int(rng.choice(track_titles[other])))
            else:
                choices = [t for t in track_titles[home] if t != seq[-1]] or list(track_titles[home])
                seq.append(int(rng.choice(choices)))
        sequences.append(CareerSequence(person_id=f"u{s:05d}", title_ids=tuple(seq)))

    return SyntheticData(
        postings=postings,
        sequences=sequences,
        truth=truth,
        titles=titles,
        skills=skills,
        curated=curated,
        track_titles=track_titles,
        track_skills=track_skills,
    )


def write_truth(path, truth: Mapping[str, TruthLabel]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# id\ttrack\tmetro\n")
        for rec_id in truth:
            lbl = truth[rec_id]
            fh.write(f"{rec_id}\t{lbl.track}\t{lbl.metro}\n")


def read_truth(path) -> dict[str, TruthLabel]:
    truth: dict[str, TruthLabel] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip() or line.startswith("#"):
                continue
            rec_id, track, metro = line.rstrip("\n").split("\t")
            truth[rec_id] = TruthLabel(track=int(track), metro=int(metro))
    return truth
