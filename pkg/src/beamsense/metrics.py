"""Dataset validation/splitting and the alignment performance metrics:
exact-match accuracy, percentile gain loss, and the minimal number of
sounding measurements meeting a gain-loss threshold."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from beamsense.arrays import Codebook, mixed_codebook
from beamsense.channel import SampleSet


@dataclass(frozen=True)
class SplitSpec:
    """Per-label training quota; labels without enough samples are dropped."""

    train_per_label: int = 144
    split_seed: int = 0

    def __post_init__(self):
        if self.train_per_label < 1:
            raise ValueError("train_per_label must be >= 1")

    @property
    def min_per_label(self) -> int:
        return self.train_per_label


def validate_and_split(samples: SampleSet, spec: SplitSpec):
    """Drop labels with fewer than the required training samples, draw the
    training quota per kept label (seeded), put the rest in the test set,
    and re-index kept labels densely.

    Returns (train, test, kept_label_map) where kept_label_map maps the
    original label to its dense index.
    """
    labels = samples.labels
    kept = sorted(
        int(v) for v, c in zip(*np.unique(labels, return_counts=True))
        if c >= spec.min_per_label
    )
    if not kept:
        raise ValueError("no label has enough samples; nothing to keep")
    kept_map = {old: new for new, old in enumerate(kept)}

    rng = np.random.default_rng(spec.split_seed)
    train_idx, test_idx = [], []
    for old in kept:
        idx = np.flatnonzero(labels == old)
        chosen = rng.choice(idx, size=spec.train_per_label, replace=False)
        chosen_set = set(chosen.tolist())
        train_idx.extend(sorted(chosen_set))
        test_idx.extend(i for i in idx if i not in chosen_set)

    def _relabel(ss: SampleSet) -> SampleSet:
        return ss.with_labels([kept_map[int(l)] for l in ss.labels])

    train = _relabel(samples.subset(np.array(sorted(train_idx))))
    test = _relabel(samples.subset(np.array(sorted(test_idx))))
    return train, test, kept_map


def accuracy(true_labels, predictions) -> float:
    """Fraction of exact label matches."""
    t = np.asarray(true_labels)
    p = np.asarray(predictions)
    if t.shape != p.shape:
        raise ValueError("length mismatch")
    if t.size == 0:
        raise ValueError("empty inputs")
    return float(np.mean(t == p))


def gain_loss_db(directional_powers, true_labels, predictions) -> np.ndarray:
    """Per-sample dB loss of the selected beam relative to the optimal beam.

    directional_powers is the noise-free N x K power matrix whose row-wise
    argmax defines the true labels.  Zero selected power records +inf.
    """
    P = np.asarray(directional_powers, dtype=float)
    t = np.asarray(true_labels, dtype=int)
    p = np.asarray(predictions, dtype=int)
    if not (len(P) == len(t) == len(p)):
        raise ValueError("length mismatch")
    rows = np.arange(len(P))
    opt = P[rows, t]
    sel = P[rows, p]
    with np.errstate(divide="ignore"):
        loss = 10 * np.log10(opt / np.where(sel > 0, sel, np.nan))
    loss = np.where(sel > 0, loss, np.inf)
    return loss


def percentile_loss(losses, percentile: float) -> float:
    """Percentile of gain losses, linear interpolation between order stats."""
    losses = np.asarray(losses, dtype=float)
    finite = losses[np.isfinite(losses)]
    if finite.size < losses.size:
        # infinite losses dominate the top of the distribution
        sorted_all = np.sort(losses)
        k = percentile / 100 * (losses.size - 1)
        lo, hi = int(np.floor(k)), int(np.ceil(k))
        if np.isinf(sorted_all[lo]) or np.isinf(sorted_all[hi]):
            return np.inf
        return float(np.percentile(np.nan_to_num(losses, posinf=1e30), percentile))
    return float(np.percentile(losses, percentile))


@dataclass(frozen=True)
class EvalReport:
    """One algorithm's showing on one test set."""

    algorithm: str
    accuracy: float
    gain_loss_db_percentiles: dict
    n_test: int
    kept_labels: int
    true_labels: np.ndarray
    predictions: np.ndarray
    losses_db: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "accuracy": self.accuracy,
            "gain_loss_db_percentiles": {
                str(k): (v if np.isfinite(v) else "inf")
                for k, v in self.gain_loss_db_percentiles.items()
            },
            "n_test": self.n_test,
            "kept_labels": self.kept_labels,
            "diagnostics": self.diagnostics,
        }

    def save_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, indent=1, sort_keys=True)

    def save_records_csv(self, path):
        with open(path, "w") as f:
            f.write("true_label,predicted_label,loss_db\n")
            for t, p, l in zip(self.true_labels, self.predictions, self.losses_db):
                f.write(f"{t},{p},{l:.17g}\n")


def make_eval_report(
    algorithm: str,
    directional_powers,
    true_labels,
    predictions,
    kept_labels: int,
    percentiles=(50, 90, 99),
    diagnostics=None,
) -> EvalReport:
    losses = gain_loss_db(directional_powers, true_labels, predictions)
    return EvalReport(
        algorithm=algorithm,
        accuracy=accuracy(true_labels, predictions),
        gain_loss_db_percentiles={
            float(q): percentile_loss(losses, q) for q in percentiles
        },
        n_test=len(losses),
        kept_labels=kept_labels,
        true_labels=np.asarray(true_labels, dtype=int),
        predictions=np.asarray(predictions, dtype=int),
        losses_db=losses,
        diagnostics=diagnostics or {},
    )


def required_measurements(curves: dict, threshold_db: float, percentile: float) -> dict:
    """Minimal M per algorithm whose percentile gain loss meets the threshold.

    `curves` maps algorithm -> {M: losses or precomputed percentile value}.
    Algorithms whose whole grid misses the threshold map to None ("unmet").
    """
    out = {}
    for alg, by_m in curves.items():
        if not by_m:
            raise ValueError(f"empty measurement grid for {alg!r}")
        best = None
        for m in sorted(by_m):
            v = by_m[m]
            p = float(v) if np.isscalar(v) else percentile_loss(v, percentile)
            if p <= threshold_db:
                best = int(m)
                break
        out[alg] = best
    return out


def _center_out_order(codebook: Codebook) -> list:
    """Beam ordering for directional families: closest to broadside first."""
    keys = []
    for i, meta in enumerate(codebook.beam_meta):
        angle = meta.get("center_deg", meta.get("angle_deg", 0.0))
        keys.append((abs(angle), angle, i))
    return [i for _, _, i in sorted(keys)]


def subset_codebook_sweep(pools: dict, m_values, mix: dict) -> list:
    """Deterministic nested sensing codebooks over a grid of sizes M.

    `pools` maps a family name to its full codebook; `mix` maps family name
    to a fixed beam count, with exactly one family mapped to None taking
    all remaining beams.  PN beams are taken in column order, directional
    families center-out, so smaller codebooks are prefixes of larger ones.
    """
    fill = [k for k, v in mix.items() if v is None]
    if len(fill) != 1:
        raise ValueError("exactly one mix entry must be None (the filler)")
    fill = fill[0]
    orders = {}
    for name, cb in pools.items():
        if cb.kind in ("SA", "QPD", "Pencil"):
            orders[name] = _center_out_order(cb)
        else:
            orders[name] = list(range(cb.n_beams))

    out = []
    for m in sorted(int(m) for m in m_values):
        fixed_total = sum(v for k, v in mix.items() if v is not None)
        n_fill = m - fixed_total
        if n_fill < 0:
            raise ValueError(f"M={m} smaller than the fixed beam counts")
        parts = []
        for name in mix:
            count = mix[name] if mix[name] is not None else n_fill
            if count > pools[name].n_beams:
                raise ValueError(
                    f"M={m}: {name} pool has only {pools[name].n_beams} beams"
                )
            if count > 0:
                parts.append(pools[name].subset(orders[name][:count]))
        out.append(parts[0] if len(parts) == 1 else mixed_codebook(*parts))
    return out
