"""Correlation harness: logistic score mapping, rank statistics, k-fold
content-disjoint evaluation.

Objective scores are mapped onto the subjective scale with a 5-parameter
logistic (fitted on training folds only), then SRCC/PLCC/KRCC/RMSE are
reported per fold and averaged.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares


class EvalError(ValueError):
    """Evaluation input violates a precondition."""


# ---------------------------------------------------------------------------
# folds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FoldSplit:
    fold_index: int
    train_contents: tuple[str, ...]
    test_contents: tuple[str, ...]


def make_folds(contents: list[str], k: int = 5, seed: int = 0) -> list[FoldSplit]:
    """Shuffle contents and partition into k near-equal disjoint test groups."""
    if len(contents) < k:
        raise EvalError(f"need at least {k} contents for {k} folds, got {len(contents)}")
    rng = np.random.default_rng(seed)
    order = list(contents)
    rng.shuffle(order)
    groups = np.array_split(np.array(order, dtype=object), k)
    folds = []
    for i, group in enumerate(groups):
        test = tuple(str(c) for c in group)
        train = tuple(str(c) for c in order if str(c) not in set(test))
        folds.append(FoldSplit(i, train, test))
    return folds


# ---------------------------------------------------------------------------
# 5-parameter logistic mapping
# ---------------------------------------------------------------------------

def logistic_5p(x: np.ndarray, beta: np.ndarray) -> np.ndarray:
    b1, b2, b3, b4, b5 = beta
    t = np.clip(b2 * (np.asarray(x, dtype=np.float64) - b3), -500.0, 500.0)
    return b1 * (0.5 - 1.0 / (1.0 + np.exp(t))) + b4 * x + b5


@dataclass
class LogisticFit:
    beta: np.ndarray
    mapped: np.ndarray
    converged: bool

    def apply(self, x) -> np.ndarray:
        return logistic_5p(np.asarray(x, dtype=np.float64), self.beta)


def logistic_fit(objective: np.ndarray, mos: np.ndarray) -> LogisticFit:
    """Least-squares fit of the 5-parameter logistic from objective to MOS.

    Initialization: b1 = MOS range, b2 = 4/std(x) carrying the sign of the
    rank correlation, b3 = mean(x), b4 = 0, b5 = mean(MOS). If the first
    solve cannot beat a plain affine fit (which the family contains via
    b4, b5), the solver is restarted from the affine solution and the
    better of the two is returned.
    """
    x = np.asarray(objective, dtype=np.float64)
    y = np.asarray(mos, dtype=np.float64)
    if len(x) != len(y):
        raise EvalError("objective and mos lengths differ")
    if len(x) < 5:
        raise EvalError(f"logistic fit needs >= 5 points, got {len(x)}")
    if np.ptp(x) == 0.0:
        raise EvalError("constant objective scores cannot be fitted")

    sign = np.sign(srcc(x, y)) if np.ptp(y) > 0 else 1.0
    if sign == 0.0:
        sign = 1.0
    std_x = x.std()
    init = np.array([np.ptp(y), sign * 4.0 / std_x, x.mean(), 0.0, y.mean()])

    def residuals(beta):
        return logistic_5p(x, beta) - y

    best = _solve(residuals, init)

    # affine fallback start: the family reduces to b4*x + b5 when b1 = 0
    slope, intercept = np.polyfit(x, y, 1)
    affine = np.array([0.0, sign * 4.0 / std_x, x.mean(), slope, intercept])
    if _sse(residuals, affine) < _sse(residuals, best.x):
        retry = _solve(residuals, affine)
        if _sse(residuals, retry.x) < _sse(residuals, best.x):
            best = retry

    converged = bool(best.status > 0)
    if not converged:
        warnings.warn("logistic fit did not converge; returning best parameters so far",
                      stacklevel=2)
    return LogisticFit(beta=best.x, mapped=logistic_5p(x, best.x), converged=converged)


def _solve(residuals, init):
    return least_squares(residuals, init, method="lm", xtol=1e-10, ftol=1e-10,
                         gtol=1e-10, max_nfev=3000)


def _sse(residuals, beta) -> float:
    return float(np.sum(residuals(beta) ** 2))


# ---------------------------------------------------------------------------
# correlation statistics
# ---------------------------------------------------------------------------

def _rank_average(x: np.ndarray) -> np.ndarray:
    """Average ranks (1-based); tied values share the mean of their ranks."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def plcc(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y) or len(x) < 2:
        raise EvalError("plcc needs two equal-length vectors of >= 2 points")
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        raise EvalError("plcc undefined for a constant vector")
    xc = x - x.mean()
    yc = y - y.mean()
    return float(np.sum(xc * yc) / np.sqrt(np.sum(xc**2) * np.sum(yc**2)))


def srcc(x, y) -> float:
    """Pearson correlation of average ranks."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y) or len(x) < 2:
        raise EvalError("srcc needs two equal-length vectors of >= 2 points")
    return plcc(_rank_average(x), _rank_average(y))


def krcc(x, y) -> float:
    """Kendall tau-b by pair enumeration (tie corrected)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y) or len(x) < 2:
        raise EvalError("krcc needs two equal-length vectors of >= 2 points")
    sx = np.sign(x[:, None] - x[None, :])
    sy = np.sign(y[:, None] - y[None, :])
    iu = np.triu_indices(len(x), k=1)
    concordance = float(np.sum(sx[iu] * sy[iu]))
    n0 = len(iu[0])
    ties_x = n0 - float(np.sum(np.abs(sx[iu])))
    ties_y = n0 - float(np.sum(np.abs(sy[iu])))
    denom = np.sqrt((n0 - ties_x) * (n0 - ties_y))
    if denom == 0.0:
        raise EvalError("krcc undefined when one vector is all ties")
    return concordance / denom


def rmse(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y) or len(x) < 1:
        raise EvalError("rmse needs two equal-length nonempty vectors")
    return float(np.sqrt(np.mean((x - y) ** 2)))


# ---------------------------------------------------------------------------
# fold evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    per_fold: list[dict]
    mean: dict
    betas: list[list[float]] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {"per_fold": self.per_fold, "mean": self.mean, "betas": self.betas},
            indent=2,
        )

    def format_table(self, name: str = "method") -> str:
        header = f"{'fold':>6}  {'SRCC':>8}  {'PLCC':>8}  {'KRCC':>8}  {'RMSE':>9}"
        lines = [f"# {name}", header]
        for row in self.per_fold:
            lines.append(
                f"{row['fold']:>6}  {row['srcc']:>8.4f}  {row['plcc']:>8.4f}  "
                f"{row['krcc']:>8.4f}  {row['rmse']:>9.4f}"
            )
        m = self.mean
        lines.append(
            f"{'mean':>6}  {m['srcc']:>8.4f}  {m['plcc']:>8.4f}  "
            f"{m['krcc']:>8.4f}  {m['rmse']:>9.4f}"
        )
        return "\n".join(lines)


def default_content_of(stimulus_id: str) -> str:
    """Grid naming convention: '<content>__<family>_<level>'."""
    return stimulus_id.split("__")[0]


def evaluate_method(scores: dict[str, float], mos: dict[str, float],
                    folds: list[FoldSplit],
                    content_of=default_content_of) -> EvalReport:
    """Per fold: fit the logistic on train stimuli, score the test stimuli.

    SRCC/KRCC are computed on raw objective scores (rank statistics are
    invariant to the monotone mapping); PLCC/RMSE on mapped scores. The
    fit never sees test MOS values.
    """
    stimuli = sorted(scores)
    missing = [s for s in stimuli if s not in mos]
    if missing:
        raise EvalError(f"stimuli missing MOS values: {missing[:5]}")

    per_fold = []
    betas = []
    for fold in folds:
        train_ids = [s for s in stimuli if content_of(s) in fold.train_contents]
        test_ids = [s for s in stimuli if content_of(s) in fold.test_contents]
        if len(train_ids) < 5 or len(test_ids) < 2:
            raise EvalError(
                f"fold {fold.fold_index} degenerate: "
                f"{len(train_ids)} train / {len(test_ids)} test stimuli"
            )
        fit = logistic_fit(
            np.array([scores[s] for s in train_ids]),
            np.array([mos[s] for s in train_ids]),
        )
        x_test = np.array([scores[s] for s in test_ids])
        y_test = np.array([mos[s] for s in test_ids])
        mapped = fit.apply(x_test)
        per_fold.append({
            "fold": fold.fold_index,
            "srcc": srcc(x_test, y_test),
            "plcc": plcc(mapped, y_test),
            "krcc": krcc(x_test, y_test),
            "rmse": rmse(mapped, y_test),
            "n_test": len(test_ids),
        })
        betas.append([float(b) for b in fit.beta])

    mean = {
        key: float(np.mean([row[key] for row in per_fold]))
        for key in ("srcc", "plcc", "krcc", "rmse")
    }
    return EvalReport(per_fold=per_fold, mean=mean, betas=betas)
