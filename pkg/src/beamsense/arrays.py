"""Uniform linear array geometry and sounding-beam codebook generation.

All antenna weight vectors (AWVs) are phase-only: every entry has unit
magnitude.  Four beam families are supported:

- pencil: conjugate-match steering of the full array (maximum gain),
- PN: pseudo-noise quasi-omni beams with random 2-bit phases,
- SA: multifinger beams built from independently steered sub-array pencils,
- QPD: pencil beams widened by a quadratic phase profile.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

# 2-bit PN phase alphabet
PN_PHASES = np.array([0.0, np.pi / 2, np.pi, 3 * np.pi / 2])


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array: element count, spacing in wavelengths, and a
    per-element complex impairment coefficient (all-ones when ideal)."""

    n_elements: int
    element_spacing: float = 0.5
    impairment: np.ndarray | None = None

    def __post_init__(self):
        if self.n_elements < 2:
            raise ValueError("array needs at least 2 elements")
        if self.element_spacing <= 0:
            raise ValueError("element spacing must be positive")
        if self.impairment is None:
            object.__setattr__(
                self, "impairment", np.ones(self.n_elements, dtype=complex)
            )
        else:
            imp = np.asarray(self.impairment, dtype=complex)
            if imp.shape != (self.n_elements,):
                raise ValueError(
                    f"impairment must have {self.n_elements} entries, got {imp.shape}"
                )
            object.__setattr__(self, "impairment", imp)

    @property
    def is_ideal(self) -> bool:
        return bool(np.all(self.impairment == 1.0))


@dataclass(frozen=True)
class QpdParams:
    """Quadratic-phase beam design: maximum added phase (radians) and the
    steering angle in degrees."""

    phi_max: float
    steer_angle: float

    def __post_init__(self):
        if self.phi_max <= 0:
            raise ValueError("phi_max must be positive")


@dataclass(frozen=True)
class SaParams:
    """Sub-array multifinger design: how many sub-arrays, the angular
    separation between fingers (degrees), and the nominal center angle."""

    n_subarrays: int
    finger_separation: float
    center_angle: float = 0.0

    def __post_init__(self):
        if self.n_subarrays < 1:
            raise ValueError("need at least 1 sub-array")


@dataclass(frozen=True)
class Codebook:
    """Phase-only codebook: columns of `weights` are AWVs.

    `beam_meta` carries one record per beam (steering angles, design
    parameters, PN seed) so a codebook can be re-generated or serialized.
    """

    weights: np.ndarray
    kind: str
    n_elements: int
    element_spacing: float
    beam_meta: tuple = field(default=())

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=complex)
        if w.ndim != 2 or w.shape[0] != self.n_elements:
            raise ValueError(f"weights must be {self.n_elements} x n_beams")
        if w.shape[1] < 1:
            raise ValueError("codebook needs at least one beam")
        if np.max(np.abs(np.abs(w) - 1.0)) > 1e-12:
            raise ValueError("AWV entries must be unit modulus")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "beam_meta", tuple(self.beam_meta))

    @property
    def n_beams(self) -> int:
        return self.weights.shape[1]

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.weights).tobytes())
        h.update(self.kind.encode())
        return h.hexdigest()[:16]

    def subset(self, indices) -> "Codebook":
        """Column subset, preserving per-beam metadata."""
        idx = list(indices)
        return Codebook(
            weights=self.weights[:, idx],
            kind=self.kind,
            n_elements=self.n_elements,
            element_spacing=self.element_spacing,
            beam_meta=tuple(self.beam_meta[i] for i in idx),
        )

    def to_json_dict(self) -> dict:
        return {
            "n_elements": self.n_elements,
            "spacing": self.element_spacing,
            "kind": self.kind,
            "beams": [
                {
                    **meta,
                    "phases": np.angle(self.weights[:, i]).tolist(),
                }
                for i, meta in enumerate(self.beam_meta)
            ],
        }

    def save_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, indent=1)

    @classmethod
    def from_json_dict(cls, d: dict) -> "Codebook":
        phases = np.array([b["phases"] for b in d["beams"]]).T
        meta = tuple(
            {k: v for k, v in b.items() if k != "phases"} for b in d["beams"]
        )
        return cls(
            weights=np.exp(1j * phases),
            kind=d["kind"],
            n_elements=d["n_elements"],
            element_spacing=d["spacing"],
            beam_meta=meta,
        )

    @classmethod
    def load_json(cls, path) -> "Codebook":
        with open(path) as f:
            return cls.from_json_dict(json.load(f))


def _check_angle(angle_deg: float):
    if not np.all(np.abs(angle_deg) < 90.0):
        raise ValueError(f"angle must lie strictly inside (-90, 90) deg: {angle_deg}")


def array_response(geom: ArrayGeometry, angle_deg: float) -> np.ndarray:
    """Response of the array to a plane wave from `angle_deg` (broadside = 0).

    Entry n (1-based) is a_n * exp(j 2 pi (n-1) sin(angle) d/lambda).
    """
    _check_angle(angle_deg)
    n = np.arange(geom.n_elements)
    phase = 2 * np.pi * n * np.sin(np.deg2rad(angle_deg)) * geom.element_spacing
    return geom.impairment * np.exp(1j * phase)


def _steer_phases(n_elements: int, spacing: float, angle_deg: float) -> np.ndarray:
    # Conjugate match: w equals the ideal array response, so w^H a_R(theta)
    # adds coherently at the steering angle.
    n = np.arange(n_elements)
    return 2 * np.pi * n * np.sin(np.deg2rad(angle_deg)) * spacing


def pencil_codebook(geom: ArrayGeometry, angles_deg) -> Codebook:
    """One maximum-gain steered beam per angle."""
    angles = np.atleast_1d(np.asarray(angles_deg, dtype=float))
    if angles.size == 0:
        raise ValueError("pencil codebook needs at least one steering angle")
    _check_angle(angles)
    cols = [np.exp(1j * _steer_phases(geom.n_elements, geom.element_spacing, a))
            for a in angles]
    meta = tuple({"type": "pencil", "angle_deg": float(a)} for a in angles)
    return Codebook(
        weights=np.column_stack(cols),
        kind="Pencil",
        n_elements=geom.n_elements,
        element_spacing=geom.element_spacing,
        beam_meta=meta,
    )


def pn_codebook(geom: ArrayGeometry, n_beams: int, seed: int) -> Codebook:
    """Quasi-omni beams with per-element phases drawn uniformly from the
    2-bit set {0, pi/2, pi, 3pi/2}; deterministic for a fixed seed."""
    if n_beams < 1:
        raise ValueError("need at least one PN beam")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, 4, size=(geom.n_elements, n_beams))
    meta = tuple({"type": "pn", "seed": int(seed), "column": i} for i in range(n_beams))
    return Codebook(
        weights=np.exp(1j * PN_PHASES[idx]),
        kind="PN",
        n_elements=geom.n_elements,
        element_spacing=geom.element_spacing,
        beam_meta=meta,
    )


def sa_finger_angles(params: SaParams, center_deg: float) -> np.ndarray:
    """Finger steering angles: center +/- multiples of the separation."""
    i = np.arange(params.n_subarrays)
    return center_deg + (i - (params.n_subarrays - 1) / 2) * params.finger_separation


def sa_codebook(geom: ArrayGeometry, params: SaParams, centers_deg) -> Codebook:
    """Multifinger beams: the array is split into equal sub-arrays, and
    sub-array i is phase-steered to its own finger angle."""
    if geom.n_elements % params.n_subarrays != 0:
        raise ValueError(
            f"{params.n_subarrays} sub-arrays do not divide {geom.n_elements} elements"
        )
    n_sub = geom.n_elements // params.n_subarrays
    centers = np.atleast_1d(np.asarray(centers_deg, dtype=float))
    if centers.size == 0:
        raise ValueError("need at least one beam center")
    cols, meta = [], []
    for c in centers:
        fingers = sa_finger_angles(params, c)
        _check_angle(fingers)
        blocks = [
            np.exp(1j * _steer_phases(n_sub, geom.element_spacing, th))
            for th in fingers
        ]
        cols.append(np.concatenate(blocks))
        meta.append({
            "type": "sa",
            "center_deg": float(c),
            "finger_angles_deg": [float(t) for t in fingers],
            "n_subarrays": params.n_subarrays,
        })
    return Codebook(
        weights=np.column_stack(cols),
        kind="SA",
        n_elements=geom.n_elements,
        element_spacing=geom.element_spacing,
        beam_meta=tuple(meta),
    )


def qpd_quadratic_phase(n_elements: int, phi_max: float) -> np.ndarray:
    """Quadratic phase profile 4*Phi*((2n-(N+1))/(2(N+1)))^2, n = 1..N."""
    n = np.arange(1, n_elements + 1)
    return 4 * phi_max * ((2 * n - (n_elements + 1)) / (2 * (n_elements + 1))) ** 2


def qpd_codebook(geom: ArrayGeometry, params_list) -> Codebook:
    """Widened single-lobe beams: steering phase plus a quadratic term."""
    if isinstance(params_list, QpdParams):
        params_list = [params_list]
    params_list = list(params_list)
    if not params_list:
        raise ValueError("need at least one QPD beam")
    cols, meta = [], []
    for p in params_list:
        _check_angle(p.steer_angle)
        phase = (
            _steer_phases(geom.n_elements, geom.element_spacing, p.steer_angle)
            + qpd_quadratic_phase(geom.n_elements, p.phi_max)
        )
        cols.append(np.exp(1j * phase))
        meta.append({
            "type": "qpd",
            "angle_deg": float(p.steer_angle),
            "phi_max": float(p.phi_max),
        })
    return Codebook(
        weights=np.column_stack(cols),
        kind="QPD",
        n_elements=geom.n_elements,
        element_spacing=geom.element_spacing,
        beam_meta=tuple(meta),
    )


def mixed_codebook(*codebooks: Codebook) -> Codebook:
    """Column concatenation of compatible codebooks; beam_meta records the
    source kind per column."""
    if not codebooks:
        raise ValueError("need at least one codebook")
    first = codebooks[0]
    for cb in codebooks[1:]:
        if (cb.n_elements, cb.element_spacing) != (first.n_elements, first.element_spacing):
            raise ValueError("codebooks must share array geometry")
    meta = tuple(
        {**m, "source_kind": cb.kind} for cb in codebooks for m in cb.beam_meta
    )
    return Codebook(
        weights=np.hstack([cb.weights for cb in codebooks]),
        kind="Mixed",
        n_elements=first.n_elements,
        element_spacing=first.element_spacing,
        beam_meta=meta,
    )


def beam_pattern(
    codebook: Codebook,
    beam_index: int,
    angle_grid_deg,
    impairment: np.ndarray | None = None,
) -> np.ndarray:
    """Gain pattern 20*log10 |w^H a_R(phi)| over a grid of angles (dB).

    Uses the ideal array unless an impairment vector is supplied.
    """
    if not 0 <= beam_index < codebook.n_beams:
        raise IndexError(f"beam index {beam_index} out of range")
    geom = ArrayGeometry(
        codebook.n_elements, codebook.element_spacing, impairment=impairment
    )
    w = codebook.weights[:, beam_index]
    grid = np.atleast_1d(np.asarray(angle_grid_deg, dtype=float))
    gains = np.array([np.abs(w.conj() @ array_response(geom, a)) for a in grid])
    with np.errstate(divide="ignore"):
        return 20 * np.log10(gains)


def export_pattern_csv(path, angle_grid_deg, gain_db):
    with open(path, "w") as f:
        f.write("angle_deg,gain_db\n")
        for a, g in zip(angle_grid_deg, gain_db):
            f.write(f"{a},{g}\n")


def feature_correlation(samples) -> np.ndarray:
    """Pearson correlation matrix of RSS features (M x M).

    Accepts a SampleSet or a raw (N x M) feature matrix.  Constant feature
    columns yield undefined correlations; those entries are reported as 0
    and a warning carries the count.
    """
    feats = getattr(samples, "features", samples)
    feats = np.asarray(feats, dtype=float)
    if feats.shape[0] < 2:
        raise ValueError("need at least 2 samples for correlation")
    std = feats.std(axis=0)
    constant = std == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = np.corrcoef(feats, rowvar=False)
    if constant.any():
        n_bad = int(np.isnan(corr).sum())
        warnings.warn(
            f"{int(constant.sum())} constant feature column(s): "
            f"{n_bad} undefined correlation entries reported as 0"
        )
        corr = np.nan_to_num(corr, nan=0.0)
        # a constant column is perfectly 'correlated' with itself by convention
        np.fill_diagonal(corr, 1.0)
    return corr
