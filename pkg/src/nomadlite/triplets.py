"""Triplet construction from NSIM-annotated sample sets.

The positive is always the entry with NSIM closest to the anchor. Negatives
come from one of two strategies: "easy" draws uniformly among entries whose
NSIM distance to the anchor exceeds the positive's by at least a margin s;
"hard" takes the closest entry strictly beyond the positive's distance.
"""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .degrade import ManifestRow
from .errors import (
    DataError,
    EmptyNegativeSetError,
    ExhaustedSamplerError,
    TooFewEntriesError,
)

TRIPLET_HEADER = [
    "source_id", "anchor_path", "positive_path", "negative_path",
    "q_a", "q_p", "q_n", "strategy",
]


@dataclass
class SampleEntry:
    clip_ref: str
    q: float


@dataclass
class SampleSet:
    source_id: str
    entries: list[SampleEntry] = field(default_factory=list)


@dataclass
class TripletRecord:
    source_id: str
    anchor_ref: str
    positive_ref: str
    negative_ref: str
    q_a: float
    q_p: float
    q_n: float
    strategy: str


@dataclass
class SamplerConfig:
    s: float = 0.05          # easy-negative margin in NSIM units
    strategy_mix: float = 0.5  # fraction of easy triplets
    rng_seed: int = 0

    def __post_init__(self):
        if self.s < 0:
            raise ValueError("s must be >= 0")
        if not 0.0 <= self.strategy_mix <= 1.0:
            raise ValueError("strategy_mix must be in [0, 1]")


def build_sample_sets(manifest: list[ManifestRow], min_entries: int = 3) -> list[SampleSet]:
    """Group degraded manifest rows per source; clean rows are excluded from
    triplet pools. Sources with fewer than min_entries rows are skipped."""
    by_source: dict[str, SampleSet] = {}
    for row in manifest:
        if row.family == "clean":
            continue
        by_source.setdefault(row.source_id, SampleSet(row.source_id)).entries.append(
            SampleEntry(row.clip_path, row.nsim)
        )
    sets = []
    for source_id in sorted(by_source):
        st = by_source[source_id]
        if len(st.entries) < min_entries:
            logging.getLogger(__name__).warning(
                "source %s has only %d degraded rows; skipped", source_id, len(st.entries)
            )
            continue
        sets.append(st)
    return sets


def pick_positive(sample_set: SampleSet, anchor_idx: int) -> int:
    """Index of the entry with NSIM closest to the anchor's; ties go to the
    lower index."""
    q_a = sample_set.entries[anchor_idx].q
    best = None
    best_d = None
    for i, e in enumerate(sample_set.entries):
        if i == anchor_idx:
            continue
        d = abs(e.q - q_a)
        if best_d is None or d < best_d:
            best, best_d = i, d
    if best is None:
        raise TooFewEntriesError("sample set needs at least 2 entries")
    return best


def _distances(sample_set: SampleSet, anchor_idx: int) -> np.ndarray:
    q_a = sample_set.entries[anchor_idx].q
    return np.array([abs(e.q - q_a) for e in sample_set.entries])


def sample_easy_negative(
    sample_set: SampleSet, anchor_idx: int, positive_idx: int, s: float,
    rng: np.random.Generator,
) -> int:
    d = _distances(sample_set, anchor_idx)
    d_p = d[positive_idx]
    candidates = [i for i in range(len(d)) if i != anchor_idx and d[i] > d_p + s]
    if not candidates:
        raise EmptyNegativeSetError("no entry beyond the easy margin")
    return candidates[rng.integers(len(candidates))]


def sample_hard_negative(sample_set: SampleSet, anchor_idx: int, positive_idx: int) -> int:
    d = _distances(sample_set, anchor_idx)
    d_p = d[positive_idx]
    best = None
    best_d = None
    for i in range(len(d)):
        if i == anchor_idx or d[i] <= d_p:
            continue
        if best_d is None or d[i] < best_d:
            best, best_d = i, d[i]
    if best is None:
        raise EmptyNegativeSetError("no entry strictly beyond the positive's distance")
    return best


def generate_triplets(
    sets: list[SampleSet], cfg: SamplerConfig, count: int,
    max_attempts_per_triplet: int = 100,
) -> list[TripletRecord]:
    """Draw count triplets: source uniform, anchor uniform within its set,
    strategy Bernoulli(strategy_mix). Deterministic for a fixed rng_seed."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if not sets:
        raise DataError("no sample sets available")
    rng = np.random.default_rng(cfg.rng_seed)
    records: list[TripletRecord] = []
    for _ in range(count):
        for attempt in range(max_attempts_per_triplet):
            st = sets[rng.integers(len(sets))]
            anchor_idx = int(rng.integers(len(st.entries)))
            strategy = "easy" if rng.random() < cfg.strategy_mix else "hard"
            try:
                positive_idx = pick_positive(st, anchor_idx)
                if strategy == "easy":
                    negative_idx = sample_easy_negative(st, anchor_idx, positive_idx, cfg.s, rng)
                else:
                    negative_idx = sample_hard_negative(st, anchor_idx, positive_idx)
            except (EmptyNegativeSetError, TooFewEntriesError):
                continue
            a, p, n = st.entries[anchor_idx], st.entries[positive_idx], st.entries[negative_idx]
            records.append(
                TripletRecord(st.source_id, a.clip_ref, p.clip_ref, n.clip_ref,
                              a.q, p.q, n.q, strategy)
            )
            break
        else:
            raise ExhaustedSamplerError(
                f"gave up after {max_attempts_per_triplet} attempts "
                f"({len(records)}/{count} triplets found)"
            )
    return records


def split_by_source(
    records: list[TripletRecord], train_fraction: float, rng_seed: int = 0,
) -> tuple[list[TripletRecord], list[TripletRecord]]:
    """Source-disjoint train/validation split (no clean source appears in both)."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    sources = sorted({r.source_id for r in records})
    if len(sources) < 2:
        raise DataError("need at least 2 sources for a source-disjoint split")
    rng = np.random.default_rng(rng_seed)
    order = [sources[i] for i in rng.permutation(len(sources))]
    n_train = max(1, min(len(order) - 1, int(round(train_fraction * len(order)))))
    train_sources = set(order[:n_train])
    train = [r for r in records if r.source_id in train_sources]
    val = [r for r in records if r.source_id not in train_sources]
    return train, val


def write_triplets(records: list[TripletRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TRIPLET_HEADER)
        for r in records:
            writer.writerow(
                [r.source_id, r.anchor_ref, r.positive_ref, r.negative_ref,
                 f"{r.q_a:.17g}", f"{r.q_p:.17g}", f"{r.q_n:.17g}", r.strategy]
            )


def read_triplets(path) -> list[TripletRecord]:
    records = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != TRIPLET_HEADER:
            raise ValueError(f"bad triplet header: {reader.fieldnames}")
        for rec in reader:
            records.append(
                TripletRecord(
                    rec["source_id"], rec["anchor_path"], rec["positive_path"],
                    rec["negative_path"], float(rec["q_a"]), float(rec["q_p"]),
                    float(rec["q_n"]), rec["strategy"],
                )
            )
    return records
