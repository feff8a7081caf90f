"""Multipath channel realization, phase-less RSS measurement, and labeled
dataset generation.

The channel is a sum of L plane-wave paths with geometrically decaying
gains e^{-alpha*l}; measurements are magnitudes of the sensing codebook's
combiner outputs plus combined receiver noise.  Labels come from a
noise-free exhaustive search over the directional (pencil) codebook.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from beamsense.arrays import ArrayGeometry, Codebook, array_response

DEFAULT_MIN_SEPARATION_DEG = 2.0


@dataclass(frozen=True)
class ChannelParams:
    """L path angles with gains e^{-alpha*l} (l = 1..L) and the pilot symbol."""

    n_paths: int
    alpha: float
    aoa_deg: tuple
    pilot: complex = 1.0
    min_separation: float = DEFAULT_MIN_SEPARATION_DEG

    def __post_init__(self):
        object.__setattr__(self, "aoa_deg", tuple(float(a) for a in self.aoa_deg))
        if self.n_paths < 1:
            raise ValueError("need at least one path")
        if len(self.aoa_deg) != self.n_paths:
            raise ValueError("aoa_deg length must equal n_paths")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        angles = np.asarray(self.aoa_deg)
        for i in range(len(angles)):
            for j in range(i + 1, len(angles)):
                if abs(angles[i] - angles[j]) < self.min_separation:
                    raise ValueError(
                        f"paths {i} and {j} closer than {self.min_separation} deg"
                    )

    @property
    def path_gains(self) -> np.ndarray:
        return np.exp(-self.alpha * np.arange(1, self.n_paths + 1))


@dataclass(frozen=True)
class ChannelRealization:
    params: ChannelParams
    h: np.ndarray


@dataclass(frozen=True)
class MeasurementConfig:
    """Noise settings for RSS sounding.  snr_db=None disables noise.

    The per-element SNR is referenced to the strongest path:
    sigma^2 = e^{-2 alpha} |s|^2 / 10^(snr_db/10).
    """

    snr_db: float | None = None
    noise_seed: int = 0
    rss_floor_db: float = -60.0

    def __post_init__(self):
        if not np.isfinite(self.rss_floor_db):
            raise ValueError("rss_floor_db must be finite")

    def noise_sigma(self, alpha: float, pilot: complex = 1.0) -> float:
        if self.snr_db is None or np.isinf(self.snr_db):
            return 0.0
        snr_lin = 10 ** (self.snr_db / 10)
        return float(np.sqrt(np.exp(-2 * alpha) * abs(pilot) ** 2 / snr_lin))


def realize_channel(geom: ArrayGeometry, params: ChannelParams) -> ChannelRealization:
    """h = sum_l e^{-alpha*l} a_R(phi_l)."""
    h = np.zeros(geom.n_elements, dtype=complex)
    for l, phi in enumerate(params.aoa_deg, start=1):
        h += np.exp(-params.alpha * l) * array_response(geom, phi)
    return ChannelRealization(params=params, h=h)


def measure_rss(
    codebook: Codebook,
    h: np.ndarray,
    cfg: MeasurementConfig,
    alpha: float = 0.0,
    pilot: complex = 1.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """y = |W^H h s + W^H n|, with n i.i.d. circular complex Gaussian.

    Deterministic given cfg.noise_seed (or a caller-supplied generator).
    """
    h = np.asarray(h)
    if h.shape[0] != codebook.n_elements:
        raise ValueError("channel length does not match codebook")
    sigma = cfg.noise_sigma(alpha, pilot)
    signal = codebook.weights.conj().T @ (h * pilot)
    if sigma > 0:
        if rng is None:
            rng = np.random.default_rng(cfg.noise_seed)
        n = (rng.standard_normal(len(h)) + 1j * rng.standard_normal(len(h))) * (
            sigma / np.sqrt(2)
        )
        signal = signal + codebook.weights.conj().T @ n
    return np.abs(signal)


def directional_powers(directional: Codebook, h: np.ndarray) -> np.ndarray:
    """Noise-free |w_i^H h|^2 for every directional beam."""
    return np.abs(directional.weights.conj().T @ h) ** 2


def best_beam_label(directional: Codebook, h: np.ndarray) -> int:
    """Index of the noise-free power-maximizing directional beam (genie
    exhaustive search); ties break to the lowest index."""
    p = directional_powers(directional, h)
    if not np.any(p > 0):
        raise ValueError("channel carries no signal; no best beam exists")
    return int(np.argmax(p))


@dataclass(frozen=True)
class SimProtocol:
    """Dataset-generation recipe: per alpha, n_angle_draws channel geometries
    each measured under n_noise_reps independent noise realizations."""

    alphas: tuple = tuple(round(0.1 * k, 1) for k in range(1, 10))
    n_paths: int = 3
    n_angle_draws: int = 400
    n_noise_reps: int = 10
    master_seed: int = 0
    snr_db: float | None = 20.0
    angle_limit_deg: float = 45.0
    offset_min_deg: float = 2.0
    offset_max_deg: float = 30.0
    min_separation_deg: float = DEFAULT_MIN_SEPARATION_DEG
    max_retries: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))

    @property
    def n_samples(self) -> int:
        return len(self.alphas) * self.n_angle_draws * self.n_noise_reps


def draw_aoas(protocol: SimProtocol, rng: np.random.Generator) -> np.ndarray:
    """Strongest path uniform in +/-angle_limit; each extra path offsets from
    it by a signed draw in [offset_min, offset_max], redrawn while it lands
    outside the limit or within min separation of an earlier path."""
    lim = protocol.angle_limit_deg
    phis = [rng.uniform(-lim, lim)]
    for _ in range(1, protocol.n_paths):
        for _ in range(protocol.max_retries):
            mag = rng.uniform(protocol.offset_min_deg, protocol.offset_max_deg)
            sign = 1.0 if rng.random() < 0.5 else -1.0
            cand = phis[0] + sign * mag
            if abs(cand) <= lim and all(
                abs(cand - p) >= protocol.min_separation_deg for p in phis
            ):
                phis.append(cand)
                break
        else:
            raise RuntimeError("could not draw a valid AoA within retry budget")
    return np.array(phis)


@dataclass(frozen=True)
class SampleSet:
    """Labeled RSS dataset: linear-RSS features, best-beam labels, and the
    per-sample channel parameters plus generation provenance in `meta`."""

    features: np.ndarray
    labels: np.ndarray
    alphas: np.ndarray
    aoas: np.ndarray  # n_samples x Lmax, NaN for absent paths
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels, dtype=int)
        if feats.shape[0] != labels.shape[0]:
            raise ValueError("features/labels length mismatch")
        if np.any(feats < 0):
            raise ValueError("RSS features must be nonnegative")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "alphas", np.asarray(self.alphas, dtype=float))
        object.__setattr__(self, "aoas", np.asarray(self.aoas, dtype=float))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def label_histogram(self) -> dict:
        vals, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, counts)}

    def subset(self, idx) -> "SampleSet":
        idx = np.asarray(idx)
        return SampleSet(
            features=self.features[idx],
            labels=self.labels[idx],
            alphas=self.alphas[idx],
            aoas=self.aoas[idx],
            meta=dict(self.meta),
        )

    def with_labels(self, labels) -> "SampleSet":
        return SampleSet(
            features=self.features,
            labels=np.asarray(labels, dtype=int),
            alphas=self.alphas,
            aoas=self.aoas,
            meta=dict(self.meta),
        )

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for arr in (self.features, self.labels, self.alphas, self.aoas):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]

    def save_csv(self, path, sidecar_path=None):
        lmax = self.aoas.shape[1]
        m = self.n_features
        cols = (
            ["sample_id", "alpha", "L"]
            + [f"phi_{l}" for l in range(1, lmax + 1)]
            + ["label"]
            + [f"m_{i}" for i in range(1, m + 1)]
        )
        with open(path, "w") as f:
            f.write(",".join(cols) + "\n")
            for i in range(self.n_samples):
                phis = self.aoas[i]
                n_paths = int(np.sum(~np.isnan(phis)))
                row = [str(i), f"{self.alphas[i]:.17g}", str(n_paths)]
                row += ["" if np.isnan(p) else f"{p:.17g}" for p in phis]
                row.append(str(int(self.labels[i])))
                row += [f"{v:.17g}" for v in self.features[i]]
                f.write(",".join(row) + "\n")
        if sidecar_path is not None:
            with open(sidecar_path, "w") as f:
                json.dump(self.meta, f, indent=1, sort_keys=True)

    @classmethod
    def load_csv(cls, path, sidecar_path=None) -> "SampleSet":
        with open(path) as f:
            header = f.readline().rstrip("\n").split(",")
            lmax = sum(1 for c in header if c.startswith("phi_"))
            m = sum(1 for c in header if c.startswith("m_"))
            feats, labels, alphas, aoas = [], [], [], []
            for line in f:
                parts = line.rstrip("\n").split(",")
                alphas.append(float(parts[1]))
                phis = [float(p) if p else np.nan for p in parts[3:3 + lmax]]
                aoas.append(phis)
                labels.append(int(parts[3 + lmax]))
                feats.append([float(v) for v in parts[4 + lmax:4 + lmax + m]])
        meta = {}
        if sidecar_path is not None:
            with open(sidecar_path) as f:
                meta = json.load(f)
        return cls(
            features=np.array(feats),
            labels=np.array(labels),
            alphas=np.array(alphas),
            aoas=np.array(aoas),
            meta=meta,
        )


def generate_sim_dataset(
    geom: ArrayGeometry,
    sensing: Codebook,
    directional: Codebook,
    protocol: SimProtocol,
) -> SampleSet:
    """Simulated dataset per the protocol: features from the sensing codebook
    under noise, labels from a noise-free directional exhaustive search.

    Every sample derives its own RNG stream from (master seed, alpha index,
    draw index, rep index), so output is independent of evaluation order.
    """
    n = protocol.n_samples
    feats = np.empty((n, sensing.n_beams))
    labels = np.empty(n, dtype=int)
    alphas = np.empty(n)
    aoas = np.full((n, protocol.n_paths), np.nan)
    cfg = MeasurementConfig(snr_db=protocol.snr_db)
    i = 0
    for ai, alpha in enumerate(protocol.alphas):
        for d in range(protocol.n_angle_draws):
            geo_rng = np.random.default_rng((protocol.master_seed, ai, d))
            phis = draw_aoas(protocol, geo_rng)
            params = ChannelParams(
                n_paths=protocol.n_paths,
                alpha=alpha,
                aoa_deg=phis,
                min_separation=protocol.min_separation_deg,
            )
            h = realize_channel(geom, params).h
            label = best_beam_label(directional, h)
            for r in range(protocol.n_noise_reps):
                noise_rng = np.random.default_rng((protocol.master_seed, ai, d, r))
                feats[i] = measure_rss(
                    sensing, h, cfg, alpha=alpha, rng=noise_rng
                )
                labels[i] = label
                alphas[i] = alpha
                aoas[i, : len(phis)] = phis
                i += 1
    meta = {
        "master_seed": protocol.master_seed,
        "snr_db": protocol.snr_db,
        "alphas": list(protocol.alphas),
        "n_paths": protocol.n_paths,
        "n_angle_draws": protocol.n_angle_draws,
        "n_noise_reps": protocol.n_noise_reps,
        "sensing_codebook": sensing.content_hash(),
        "directional_codebook": directional.content_hash(),
        "n_elements": geom.n_elements,
        "element_spacing": geom.element_spacing,
        "n_directional_beams": directional.n_beams,
    }
    return SampleSet(features=feats, labels=labels, alphas=alphas, aoas=aoas, meta=meta)
