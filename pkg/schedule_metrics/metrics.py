"""
Comparison metrics between a generated and a reference corpus.

Every function takes an N x L integer array of state codes (one row per
person or day). Errors are reported as in the hyperparameter tables:
sp and sd in percentage points, ac unitless, na in episodes per sequence,
hd in pair counts per bin.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from schedule_domain import STEPS_PER_DAY, STEPS_PER_WEEK

logger = logging.getLogger(__name__)

DEFAULT_MAX_LAG = 3 * STEPS_PER_DAY
DAY_MAX_LAG = STEPS_PER_DAY // 2
MAX_DURATION_BIN = 3 * STEPS_PER_DAY
WORKING_DAYS = 5
HAMMING_BINS = STEPS_PER_DAY + 1


def _as_corpus(states, name: str = "corpus") -> np.ndarray:
    arr = np.asarray(states)
    if arr.dtype == object:
        raise ValueError(f"{name} has sequences of mixed length")
    if arr.ndim != 2:
        raise ValueError(f"{name} must be N x L, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"{name} is empty")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"{name} must hold integer state codes")
    if arr.min() < 0:
        raise ValueError(f"{name} holds negative state codes")
    return arr.astype(np.int64, copy=False)


def _n_states(n_states: Optional[int], *corpora) -> int:
    top = max(int(c.max()) for c in corpora) + 1
    if n_states is None:
        return top
    if top > n_states:
        raise ValueError(f"state code {top - 1} outside 0..{n_states - 1}")
    return int(n_states)


def state_probability_curves(states, n_states: Optional[int] = None) -> np.ndarray:
    """
    Share of sequences in each state at each step.

    :return: K x L array whose columns sum to one
    """
    states = _as_corpus(states)
    k = _n_states(n_states, states)
    curves = np.stack([(states == s).mean(axis=0) for s in range(k)])
    return curves


def run_lengths(sequence) -> Tuple[np.ndarray, np.ndarray]:
    """(state, length) of every maximal run in a 1-d sequence."""
    seq = np.asarray(sequence).reshape(-1)
    if seq.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    starts = np.concatenate([[0], np.flatnonzero(np.diff(seq)) + 1])
    ends = np.concatenate([starts[1:], [seq.size]])
    return seq[starts].astype(np.int64), (ends - starts).astype(np.int64)


def _all_runs(states: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Runs of every row: (row index, state, length)."""
    n, length = states.shape
    change = np.ones(states.shape, dtype=bool)
    change[:, 1:] = states[:, 1:] != states[:, :-1]
    rows, starts = np.nonzero(change)
    flat_starts = rows * length + starts
    flat_ends = np.concatenate([flat_starts[1:], [n * length]])
    # a run never continues into the next row
    row_ends = (rows + 1) * length
    lengths = np.minimum(flat_ends, row_ends) - flat_starts
    return rows, states[rows, starts], lengths


def duration_histograms(states, n_states: Optional[int] = None, max_bin: int = MAX_DURATION_BIN) -> np.ndarray:
    """
    Normalised run-length histogram per state. Bin d-1 holds runs of length
    d; runs longer than ``max_bin`` are pooled into the last bin. States that
    never occur have an all-zero row.

    :return: K x max_bin array
    """
    states = _as_corpus(states)
    k = _n_states(n_states, states)
    _, codes, lengths = _all_runs(states)
    hist = np.zeros((k, max_bin))
    np.add.at(hist, (codes, np.minimum(lengths, max_bin) - 1), 1.0)
    totals = hist.sum(axis=1, keepdims=True)
    return np.divide(hist, totals, out=np.zeros_like(hist), where=totals > 0)


@dataclass
class AutocorrelationCurve:
    """Mean and quartile curves over lags 1..max_lag."""

    state: int
    lags: np.ndarray
    mean: np.ndarray
    q25: np.ndarray
    q75: np.ndarray
    persons: int
    excluded: int


def _lag_correlations(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Pearson coefficient between x[:, :L-k] and x[:, k:] for k = 1..max_lag."""
    n, length = x.shape
    out = np.zeros((n, max_lag))
    for k in range(1, max_lag + 1):
        a, b = x[:, : length - k], x[:, k:]
        da = a - a.mean(axis=1, keepdims=True)
        db = b - b.mean(axis=1, keepdims=True)
        denom = np.sqrt((da * da).sum(axis=1) * (db * db).sum(axis=1))
        num = (da * db).sum(axis=1)
        out[:, k - 1] = np.divide(num, denom, out=np.zeros(n), where=denom > 0)
    return out


def state_autocorrelation(states, state: int, max_lag: int = DEFAULT_MAX_LAG) -> AutocorrelationCurve:
    """
    Autocorrelation of the indicator of ``state`` per person, aggregated as
    mean and 25/75 % quantiles. Persons whose indicator is constant are
    excluded and counted.
    """
    states = _as_corpus(states)
    if not 1 <= max_lag < states.shape[1]:
        raise ValueError(f"max_lag must be in 1..{states.shape[1] - 1}, got {max_lag}")
    x = (states == int(state)).astype(np.float64)
    varying = x.min(axis=1) != x.max(axis=1)
    if not np.any(varying):
        raise ValueError(f"state {state}: every sequence has a constant indicator")
    corr = _lag_correlations(x[varying], max_lag)
    return AutocorrelationCurve(
        state=int(state),
        lags=np.arange(1, max_lag + 1),
        mean=corr.mean(axis=0),
        q25=np.quantile(corr, 0.25, axis=0),
        q75=np.quantile(corr, 0.75, axis=0),
        persons=int(varying.sum()),
        excluded=int((~varying).sum()),
    )


def weekly_activity_counts(states, n_states: Optional[int] = None) -> np.ndarray:
    """Mean number of episodes (maximal runs) per sequence for each state."""
    states = _as_corpus(states)
    k = _n_states(n_states, states)
    _, codes, _ = _all_runs(states)
    return np.bincount(codes, minlength=k).astype(np.float64) / states.shape[0]


def working_day_pairs(states) -> np.ndarray:
    """Hamming distance of all Monday..Friday day pairs, N x 10."""
    states = _as_corpus(states)
    if states.shape[1] != STEPS_PER_WEEK:
        raise ValueError(f"Hamming distances need week-length sequences ({STEPS_PER_WEEK}), got {states.shape[1]}")
    days = states[:, : WORKING_DAYS * STEPS_PER_DAY].reshape(-1, WORKING_DAYS, STEPS_PER_DAY)
    pairs = list(combinations(range(WORKING_DAYS), 2))
    return np.stack([(days[:, i] != days[:, j]).sum(axis=1) for i, j in pairs], axis=1)


def hamming_distribution(states) -> np.ndarray:
    """Counts of pairwise working-day Hamming distances, bins 0..144."""
    distances = working_day_pairs(states)
    return np.bincount(distances.ravel(), minlength=HAMMING_BINS).astype(np.int64)


def resample_corpus(states, n: int, seed: int) -> np.ndarray:
    """``n`` rows drawn with replacement, for size-matched Hamming comparisons."""
    states = _as_corpus(states)
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    rng = np.random.default_rng(int(seed))
    return states[rng.integers(0, states.shape[0], size=n)]


@dataclass
class MetricsReport:
    """Errors of a generated corpus against a reference; zero for identical corpora."""

    sp_rmse: float
    sd_rmse: float
    ac_rmse: float
    na_mae: float
    hd_mae: Optional[float] = None
    sp_by_state: List[float] = field(default_factory=list)
    sd_by_state: List[float] = field(default_factory=list)
    ac_by_state: Dict[int, float] = field(default_factory=dict)
    na_by_state: List[float] = field(default_factory=list)
    n_generated: int = 0
    n_reference: int = 0
    max_lag: int = DEFAULT_MAX_LAG

    def to_dict(self) -> dict:
        data = asdict(self)
        data["ac_by_state"] = {str(k): v for k, v in self.ac_by_state.items()}
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        data = dict(data)
        data["ac_by_state"] = {int(k): v for k, v in data.get("ac_by_state", {}).items()}
        return cls(**data)


def _rmse(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sqrt(np.mean((a - b) ** 2)))


def _varies(states: np.ndarray, state: int) -> bool:
    x = states == state
    return bool(np.any(x.any(axis=1) & ~x.all(axis=1)))


def _mean_autocorrelation(states: np.ndarray, state: int, max_lag: int) -> np.ndarray:
    if not _varies(states, state):
        return np.zeros(max_lag)
    return state_autocorrelation(states, state, max_lag).mean


def compare(
    generated,
    reference,
    n_states: Optional[int] = None,
    include_hd: Optional[bool] = None,
    max_lag: Optional[int] = None,
    ac_states: Optional[Sequence[int]] = None,
) -> MetricsReport:
    """
    Compute the five errors.

    :param include_hd: defaults to True for week-length corpora; needs equal
        person counts (see ``resample_corpus``)
    :param max_lag: defaults to 432 for weeks and 72 for days
    :param ac_states: states for the autocorrelation error; defaults to the
        states whose indicator varies for some reference sequence. A corpus
        whose indicator is constant in every sequence scores a zero curve.
    """
    gen = _as_corpus(generated, "generated")
    ref = _as_corpus(reference, "reference")
    if gen.shape[1] != ref.shape[1]:
        raise ValueError(f"sequence lengths differ: {gen.shape[1]} vs {ref.shape[1]}")
    k = _n_states(n_states, gen, ref)
    is_week = gen.shape[1] == STEPS_PER_WEEK
    if include_hd is None:
        include_hd = is_week
    if max_lag is None:
        max_lag = DEFAULT_MAX_LAG if is_week else DAY_MAX_LAG

    sp_diff = state_probability_curves(gen, k) - state_probability_curves(ref, k)
    sd_diff = duration_histograms(gen, k) - duration_histograms(ref, k)
    na_diff = weekly_activity_counts(gen, k) - weekly_activity_counts(ref, k)

    if ac_states is None:
        ac_states = [s for s in range(k) if _varies(ref, s)]
    ac_by_state = {}
    squared = []
    for s in ac_states:
        diff = _mean_autocorrelation(gen, s, max_lag) - _mean_autocorrelation(ref, s, max_lag)
        ac_by_state[int(s)] = float(np.sqrt(np.mean(diff**2)))
        squared.append(diff**2)
    ac_rmse = float(np.sqrt(np.mean(np.concatenate(squared)))) if squared else 0.0

    hd_mae = None
    if include_hd:
        if gen.shape[0] != ref.shape[0]:
            raise ValueError(
                f"hd_mae needs equal person counts, got {gen.shape[0]} and {ref.shape[0]}; "
                "use resample_corpus"
            )
        hd_mae = float(np.mean(np.abs(hamming_distribution(gen) - hamming_distribution(ref))))

    return MetricsReport(
        sp_rmse=100.0 * _rmse(sp_diff, 0.0),
        sd_rmse=100.0 * _rmse(sd_diff, 0.0),
        ac_rmse=ac_rmse,
        na_mae=float(np.mean(np.abs(na_diff))),
        hd_mae=hd_mae,
        sp_by_state=(100.0 * np.sqrt(np.mean(sp_diff**2, axis=1))).tolist(),
        sd_by_state=(100.0 * np.sqrt(np.mean(sd_diff**2, axis=1))).tolist(),
        ac_by_state=ac_by_state,
        na_by_state=np.abs(na_diff).tolist(),
        n_generated=int(gen.shape[0]),
        n_reference=int(ref.shape[0]),
        max_lag=int(max_lag),
    )


def grouped_state_probability(states, groups, n_states: Optional[int] = None) -> Dict[int, np.ndarray]:
    """State probability curves per group label (e.g. age class)."""
    states = _as_corpus(states)
    groups = np.asarray(groups).reshape(-1)
    if groups.size != states.shape[0]:
        raise ValueError(f"got {groups.size} group labels for {states.shape[0]} sequences")
    k = _n_states(n_states, states)
    return {int(g): state_probability_curves(states[groups == g], k) for g in np.unique(groups)}


def compare_grouped(generated, reference, generated_groups, reference_groups, **kwargs) -> Dict[int, MetricsReport]:
    """One report per group present in both corpora; hd is left out."""
    gen, ref = _as_corpus(generated, "generated"), _as_corpus(reference, "reference")
    gg, rg = np.asarray(generated_groups).reshape(-1), np.asarray(reference_groups).reshape(-1)
    if gg.size != gen.shape[0] or rg.size != ref.shape[0]:
        raise ValueError("group labels must match the corpus sizes")
    kwargs.setdefault("n_states", _n_states(None, gen, ref))
    kwargs["include_hd"] = False
    reports = {}
    for g in sorted(set(gg.tolist()) & set(rg.tolist())):
        reports[int(g)] = compare(gen[gg == g], ref[rg == g], **kwargs)
    return reports


def format_metrics_table(rows: Sequence[Tuple[str, MetricsReport, Optional[dict]]]) -> str:
    """
    Tabulate reports as rows of sp, sd, ac, na, hd, loss, acc. and epoch.

    :param rows: (name, report, training summary or None); the summary keys
        are ``best_loss``, ``best_accuracy`` and ``best_epoch``, plus
        ``imputation_accuracy``, which adds an "imp. acc." column
    """
    records = []
    for name, report, training in rows:
        training = training or {}
        records.append(
            {
                "model": name,
                "sp": report.sp_rmse,
                "sd": report.sd_rmse,
                "ac": report.ac_rmse,
                "na": report.na_mae,
                "hd": np.nan if report.hd_mae is None else report.hd_mae,
                "loss": training.get("best_loss", np.nan),
                "acc.": training.get("best_accuracy", np.nan),
                "epoch": training.get("best_epoch", np.nan),
            }
        )
        if "imputation_accuracy" in training:
            records[-1]["imp. acc."] = training["imputation_accuracy"]
    frame = pd.DataFrame.from_records(records).set_index("model")
    return frame.to_string(float_format=lambda v: f"{v:.4f}", na_rep="-")


def curve_tables(states, labels: Sequence[str], max_lag: Optional[int] = None) -> Dict[str, pd.DataFrame]:
    """
    Plot-ready tables: ``sp`` (step x state), ``ac`` (lag x state mean and
    quartiles) and, for weeks, ``hd`` (distance x count).
    """
    states = _as_corpus(states)
    k = len(labels)
    is_week = states.shape[1] == STEPS_PER_WEEK
    max_lag = max_lag or (DEFAULT_MAX_LAG if is_week else DAY_MAX_LAG)
    tables = {}
    sp = state_probability_curves(states, k)
    tables["sp"] = pd.DataFrame(sp.T, columns=list(labels)).rename_axis("step")

    ac_columns = {}
    for s, label in enumerate(labels):
        x = states == s
        if not np.any(x.any(axis=1) & ~x.all(axis=1)):
            continue
        curve = state_autocorrelation(states, s, max_lag)
        ac_columns[f"{label}:mean"] = curve.mean
        ac_columns[f"{label}:q25"] = curve.q25
        ac_columns[f"{label}:q75"] = curve.q75
    tables["ac"] = pd.DataFrame(ac_columns, index=pd.Index(np.arange(1, max_lag + 1), name="lag"))
    if is_week:
        tables["hd"] = pd.DataFrame(
            {"count": hamming_distribution(states)}, index=pd.Index(np.arange(HAMMING_BINS), name="distance")
        )
    return tables
