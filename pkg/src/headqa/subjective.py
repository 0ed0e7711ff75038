"""Raw rating tables to mean opinion scores.

Pipeline: screen unreliable subjects (BT.500-13 Annex 2 style, single
pass, whole subjects only), z-score each retained subject's ratings,
rescale the full z population linearly onto [0, 100], average per
stimulus.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SQRT20 = float(np.sqrt(20.0))


class RatingError(ValueError):
    """Rating table violates a precondition."""


@dataclass(frozen=True)
class RatingRecord:
    subject_id: str
    stimulus_id: str
    score: float
    session_id: str = "s0"
    timestamp: str = ""


@dataclass
class RatingTable:
    records: list[RatingRecord]
    scale_min: float = 0.0
    scale_max: float = 100.0

    def __post_init__(self):
        seen = set()
        for r in self.records:
            key = (r.subject_id, r.stimulus_id)
            if key in seen:
                raise RatingError(f"duplicate rating for {key}")
            seen.add(key)
            if not self.scale_min <= r.score <= self.scale_max:
                raise RatingError(
                    f"score {r.score} outside scale "
                    f"[{self.scale_min}, {self.scale_max}] for {key}"
                )

    def subjects(self) -> list[str]:
        return sorted({r.subject_id for r in self.records})

    def stimuli(self) -> list[str]:
        return sorted({r.stimulus_id for r in self.records})

    def by_subject(self) -> dict[str, list[RatingRecord]]:
        out: dict[str, list[RatingRecord]] = {}
        for r in self.records:
            out.setdefault(r.subject_id, []).append(r)
        return out

    def by_stimulus(self) -> dict[str, list[RatingRecord]]:
        out: dict[str, list[RatingRecord]] = {}
        for r in self.records:
            out.setdefault(r.stimulus_id, []).append(r)
        return out

    def without_subjects(self, drop: set[str]) -> "RatingTable":
        kept = [r for r in self.records if r.subject_id not in drop]
        return RatingTable(kept, self.scale_min, self.scale_max)


@dataclass
class MosRow:
    stimulus_id: str
    mos: float
    count: int
    stddev: float


@dataclass
class MosTable:
    rows: list[MosRow]

    def as_dict(self) -> dict[str, float]:
        return {r.stimulus_id: r.mos for r in self.rows}


# ---------------------------------------------------------------------------
# z-scores
# ---------------------------------------------------------------------------

def zscore(table: RatingTable) -> tuple[list[tuple[str, str, float]], dict[str, str]]:
    """Per-subject standardization: (r - subject mean) / subject sample std.

    Subjects with fewer than two ratings or zero rating variance cannot be
    standardized; they are excluded and reported, never silently kept.
    Returns (records as (subject, stimulus, z), excluded subject -> reason).
    """
    excluded: dict[str, str] = {}
    out: list[tuple[str, str, float]] = []
    for subject, recs in sorted(table.by_subject().items()):
        scores = np.array([r.score for r in recs], dtype=np.float64)
        if len(scores) < 2:
            excluded[subject] = "fewer than 2 ratings"
            continue
        mu = scores.mean()
        sigma = scores.std(ddof=1)
        if sigma == 0.0:
            excluded[subject] = "constant ratings (zero variance)"
            continue
        for r in recs:
            out.append((subject, r.stimulus_id, (r.score - mu) / sigma))
    return out, excluded


# ---------------------------------------------------------------------------
# BT.500-style screening
# ---------------------------------------------------------------------------

@dataclass
class ScreeningReport:
    kept: list[str]
    rejected: list[str]
    counts: dict[str, dict] = field(default_factory=dict)  # subject -> P,Q,N


def screen_subjects(table: RatingTable, min_subjects: int = 3) -> ScreeningReport:
    """Single-pass outlier-subject screening.

    Per stimulus: mean, sample std and kurtosis over subjects. A rating
    strictly above mean + t*std counts as P, strictly below mean - t*std
    as Q, with t = 2 for roughly normal score distributions (kurtosis in
    [2, 4]) and sqrt(20) otherwise. A subject is rejected when
    (P+Q)/N > 0.05 and |P-Q|/(P+Q) < 0.3.
    """
    by_stim = table.by_stimulus()
    for stim, recs in by_stim.items():
        if len(recs) < min_subjects:
            raise RatingError(
                f"stimulus {stim} has {len(recs)} subjects; need >= {min_subjects}"
            )

    p_count: dict[str, int] = {s: 0 for s in table.subjects()}
    q_count: dict[str, int] = {s: 0 for s in table.subjects()}
    n_count: dict[str, int] = {s: 0 for s in table.subjects()}

    for stim, recs in sorted(by_stim.items()):
        scores = np.array([r.score for r in recs], dtype=np.float64)
        mu = scores.mean()
        std = scores.std(ddof=1)
        m2 = np.mean((scores - mu) ** 2)
        kurt = np.mean((scores - mu) ** 4) / (m2**2) if m2 > 0 else 3.0
        t = 2.0 if 2.0 <= kurt <= 4.0 else SQRT20
        hi = mu + t * std
        lo = mu - t * std
        for r in recs:
            n_count[r.subject_id] += 1
            if r.score > hi:
                p_count[r.subject_id] += 1
            elif r.score < lo:
                q_count[r.subject_id] += 1

    kept, rejected, counts = [], [], {}
    for subject in table.subjects():
        p, q, n = p_count[subject], q_count[subject], n_count[subject]
        pq = p + q
        reject = pq / n > 0.05 and (abs(p - q) / pq < 0.3 if pq > 0 else False)
        counts[subject] = {"P": p, "Q": q, "N": n, "rejected": reject}
        (rejected if reject else kept).append(subject)
    return ScreeningReport(kept=kept, rejected=rejected, counts=counts)


# ---------------------------------------------------------------------------
# MOS
# ---------------------------------------------------------------------------

def compute_mos(table: RatingTable, screen: bool = True,
                ) -> tuple[MosTable, dict]:
    """Full pipeline: screening, z-scores, global [0,100] rescale, averaging.

    The rescale is one global linear map over all retained z values (min
    goes to 0, max to 100), preserving relative stimulus ordering.
    Returns (mos table, processing report).
    """
    report: dict = {}
    working = table
    if screen:
        screening = screen_subjects(table)
        report["screening"] = screening.counts
        report["rejected_subjects"] = screening.rejected
        working = table.without_subjects(set(screening.rejected))
        if not working.records:
            raise RatingError("screening rejected every subject")

    zrecords, excluded = zscore(working)
    report["zscore_excluded"] = excluded
    if not zrecords:
        raise RatingError("no subjects left after z-score exclusions")

    z = np.array([r[2] for r in zrecords])
    zmin, zmax = float(z.min()), float(z.max())
    if zmax == zmin:
        raise RatingError("all z-scores identical; rescale to [0,100] undefined")
    rescaled = (z - zmin) / (zmax - zmin) * 100.0

    per_stim: dict[str, list[float]] = {}
    for (subject, stim, _), v in zip(zrecords, rescaled):
        per_stim.setdefault(stim, []).append(float(v))

    rows = []
    for stim in sorted(per_stim):
        vals = np.array(per_stim[stim])
        std = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        rows.append(MosRow(stim, float(vals.mean()), len(vals), std))
    return MosTable(rows), report


# ---------------------------------------------------------------------------
# CSV interchange
# ---------------------------------------------------------------------------

RATINGS_HEADER = ["subject_id", "stimulus_id", "score", "session_id", "timestamp_iso8601"]
MOS_HEADER = ["stimulus_id", "mos", "count", "stddev"]


def write_ratings_csv(table: RatingTable, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RATINGS_HEADER)
        for r in table.records:
            w.writerow([r.subject_id, r.stimulus_id, r.score, r.session_id, r.timestamp])


def read_ratings_csv(path: str | Path, scale_min: float = 0.0,
                     scale_max: float = 100.0) -> RatingTable:
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(RATINGS_HEADER) - set(reader.fieldnames or [])
        if missing:
            raise RatingError(f"ratings csv missing columns: {sorted(missing)}")
        for row in reader:
            records.append(RatingRecord(
                subject_id=row["subject_id"],
                stimulus_id=row["stimulus_id"],
                score=float(row["score"]),
                session_id=row["session_id"],
                timestamp=row["timestamp_iso8601"],
            ))
    return RatingTable(records, scale_min, scale_max)


def write_mos_csv(mos: MosTable, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MOS_HEADER)
        for r in mos.rows:
            w.writerow([r.stimulus_id, f"{r.mos:.6f}", r.count, f"{r.stddev:.6f}"])


def read_mos_csv(path: str | Path) -> MosTable:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rows.append(MosRow(row["stimulus_id"], float(row["mos"]),
                               int(row["count"]), float(row["stddev"])))
    return MosTable(rows)
