"""Polarity-invariant microstate segmentation.

Topographies are compared through the squared spatial correlation, so a
map and its negation are the same microstate. Clustering follows the
modified k-means scheme: samples are assigned to the map maximizing the
squared normalized projection, and each cluster's map is re-estimated as
the dominant eigenvector of its spatial outer-product sum, found by
power iteration started at the previous map. Both half-steps can only
increase the global explained variance, so the objective trace is
non-decreasing up to float rounding.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (
    AmbiguousLabels,
    DegenerateMap,
    DegenerateSample,
    EmptyCluster,
    MontageMismatch,
    NonFiniteData,
    NoPeaks,
    ShapeMismatch,
    TooFewSamples,
    ZeroGfp,
)
from .io import Recording, _freeze


@dataclass(frozen=True)
class GfpSeries:
    """Global field power: per-sample population std across channels."""

    values: np.ndarray
    fs: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size < 1:
            raise ShapeMismatch("GFP series must be a non-empty 1-D array")
        if not np.all(np.isfinite(v)):
            raise NonFiniteData("GFP series contains non-finite values")
        if np.any(v < 0):
            raise ShapeMismatch("GFP values cannot be negative")
        object.__setattr__(self, "values", _freeze(v))
        object.__setattr__(self, "fs", float(self.fs))

    @property
    def n_samples(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class MicrostateMaps:
    """A set of unit-norm, average-referenced template topographies.

    Attributes:
        channels: Channel names defining the column order of `maps`.
        maps: (k, K) float64 matrix, one topography per row.
        labels: One display label per map, unique.
        gev_total: Global explained variance achieved on the data the
            maps were fit to, if known.
    """

    channels: tuple[str, ...]
    maps: np.ndarray
    labels: tuple[str, ...]
    gev_total: Optional[float] = None

    def __post_init__(self):
        m = np.asarray(self.maps, dtype=np.float64)
        channels = tuple(str(c) for c in self.channels)
        labels = tuple(str(l) for l in self.labels)
        if m.ndim != 2 or m.shape[0] < 1:
            raise ShapeMismatch("maps must be a non-empty (k, K) matrix")
        if m.shape[1] != len(channels):
            raise ShapeMismatch(
                f"maps have {m.shape[1]} columns but {len(channels)} channel names"
            )
        if len(labels) != m.shape[0]:
            raise ShapeMismatch(f"{m.shape[0]} maps but {len(labels)} labels")
        if len(set(labels)) != len(labels):
            raise AmbiguousLabels(f"duplicate map labels: {labels}")
        if not np.all(np.isfinite(m)):
            raise NonFiniteData("maps contain non-finite values")
        if np.max(np.abs(m.mean(axis=1))) > 1e-9:
            raise ShapeMismatch("maps must be average-referenced (zero spatial mean)")
        if np.max(np.abs(np.linalg.norm(m, axis=1) - 1.0)) > 1e-9:
            raise ShapeMismatch("maps must have unit norm")
        object.__setattr__(self, "maps", _freeze(m))
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "labels", labels)
        if self.gev_total is not None:
            object.__setattr__(self, "gev_total", float(self.gev_total))

    @property
    def k(self) -> int:
        return self.maps.shape[0]

    @property
    def n_channels(self) -> int:
        return self.maps.shape[1]

    def relabeled(self, labels: Sequence[str]) -> "MicrostateMaps":
        return MicrostateMaps(
            channels=self.channels,
            maps=self.maps,
            labels=tuple(labels),
            gev_total=self.gev_total,
        )

    def to_json_dict(self) -> dict:
        return {
            "k": self.k,
            "labels": list(self.labels),
            "channels": list(self.channels),
            "maps": [[float(v) for v in row] for row in self.maps],
            "gev_total": (None if self.gev_total is None else float(self.gev_total)),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "MicrostateMaps":
        return cls(
            channels=tuple(d["channels"]),
            maps=np.asarray(d["maps"], dtype=np.float64),
            labels=tuple(d["labels"]),
            gev_total=d.get("gev_total"),
        )


@dataclass(frozen=True)
class Segmentation:
    """Per-sample state assignment of a recording.

    Attributes:
        states: (T,) int array of map indices.
        corr: (T,) absolute spatial correlation with the assigned map,
            0 for spatially degenerate samples.
        gfp: Global field power of the segmented recording.
        fs: Sampling rate in Hz.
        maps: The maps the recording was fit against.
    """

    states: np.ndarray
    corr: np.ndarray
    gfp: GfpSeries
    fs: float
    maps: MicrostateMaps

    def __post_init__(self):
        s = np.asarray(self.states, dtype=np.int64)
        c = np.asarray(self.corr, dtype=np.float64)
        if s.ndim != 1 or s.size < 1:
            raise ShapeMismatch("states must be a non-empty 1-D array")
        if not (s.size == c.size == self.gfp.n_samples):
            raise ShapeMismatch(
                f"states ({s.size}), corr ({c.size}) and gfp "
                f"({self.gfp.n_samples}) lengths disagree"
            )
        if s.min() < 0 or s.max() >= self.maps.k:
            raise ShapeMismatch("state index out of range")
        if not np.all(np.isfinite(c)) or c.min() < 0 or c.max() > 1.0 + 1e-12:
            raise ShapeMismatch("corr values must lie in [0, 1]")
        object.__setattr__(self, "states", _freeze(s))
        object.__setattr__(self, "corr", _freeze(np.minimum(c, 1.0)))
        object.__setattr__(self, "fs", float(self.fs))

    @property
    def n_samples(self) -> int:
        return self.states.size

    def to_json_dict(self) -> dict:
        return {
            "fs": self.fs,
            "states": [int(v) for v in self.states],
            "corr": [float(v) for v in self.corr],
            "gfp": [float(v) for v in self.gfp.values],
            "maps": self.maps.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Segmentation":
        return cls(
            states=np.asarray(d["states"], dtype=np.int64),
            corr=np.asarray(d["corr"], dtype=np.float64),
            gfp=GfpSeries(values=np.asarray(d["gfp"], dtype=np.float64), fs=float(d["fs"])),
            fs=float(d["fs"]),
            maps=MicrostateMaps.from_json_dict(d["maps"]),
        )


def gfp(rec: Recording) -> GfpSeries:
    """Global field power: population std across channels per sample."""
    return GfpSeries(values=rec.data.std(axis=0), fs=rec.fs)


def find_gfp_peaks(series: GfpSeries, min_distance_ms: float = 0.0) -> np.ndarray:
    """Indices of strict local maxima of the GFP curve.

    Plateaus produce no peak. With min_distance_ms > 0, peaks are kept
    greedily by descending GFP value (ties to the earlier sample) and
    any candidate closer than the distance to a kept peak is dropped.

    Raises:
        NoPeaks: if the series has no strict local maximum.
    """
    v = series.values
    if v.size < 3:
        raise NoPeaks(f"series of {v.size} samples cannot contain a local maximum")
    inner = (v[1:-1] > v[:-2]) & (v[1:-1] > v[2:])
    idx = np.nonzero(inner)[0] + 1
    if idx.size == 0:
        raise NoPeaks("GFP series has no strict local maxima")
    d_min = int(round(min_distance_ms / 1000.0 * series.fs))
    if d_min > 1:
        order = sorted(range(idx.size), key=lambda i: (-v[idx[i]], idx[i]))
        kept: list[int] = []
        for i in order:
            if all(abs(int(idx[i]) - j) >= d_min for j in kept):
                kept.append(int(idx[i]))
        idx = np.array(sorted(kept), dtype=np.int64)
    return idx.astype(np.int64)


def _spatial_scale(x: np.ndarray) -> float:
    return max(1.0, float(np.max(np.abs(x))) if x.size else 1.0)


def spatial_correlation(a, b) -> float:
    """Pearson correlation between two topographies (channel vectors).

    Raises:
        DegenerateMap: if either map is spatially constant.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise MontageMismatch(f"maps have {a.size} and {b.size} channels")
    ac = a - a.mean()
    bc = b - b.mean()
    na, nb = np.linalg.norm(ac), np.linalg.norm(bc)
    if na <= 1e-12 * _spatial_scale(a) or nb <= 1e-12 * _spatial_scale(b):
        raise DegenerateMap("spatially constant map has undefined correlation")
    r = float(ac @ bc / (na * nb))
    return min(1.0, max(-1.0, r))


def _power_iteration(
    s: np.ndarray, start: np.ndarray, tol: float = 1e-10, max_iter: int = 1000
) -> np.ndarray:
    """Dominant eigenvector of a PSD matrix, monotone in Rayleigh quotient."""
    v = start / np.linalg.norm(start)
    for _ in range(max_iter):
        w = s @ v
        norm = np.linalg.norm(w)
        if norm <= 1e-300:
            return v
        w /= norm
        if np.linalg.norm(w - v) <= tol:
            return w
        v = w
    return v


def _prepare_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Center each row spatially, return (centered, row norms)."""
    xc = x - x.mean(axis=1, keepdims=True)
    return xc, np.linalg.norm(xc, axis=1)


def modified_kmeans(
    peak_maps: np.ndarray,
    k: int,
    n_inits: int = 20,
    max_iter: int = 200,
    tol: float = 1e-8,
    seed: int = 0,
    channels: Optional[Sequence[str]] = None,
    trace_sink: Optional[list] = None,
) -> MicrostateMaps:
    """Cluster topographies into k polarity-invariant maps.

    Args:
        peak_maps: (n, K) matrix of topographies (typically GFP peaks).
        k: Number of microstate maps.
        n_inits: Independent restarts; the best final objective wins,
            ties going to the earlier restart.
        max_iter: Iteration cap per restart.
        tol: Stop a restart when the objective improves by less.
        seed: Master seed; restart r uses the child seed (seed, r).
        channels: Channel names for the result. Defaults to ch00, ch01...
        trace_sink: Optional list; receives one dict per accepted
            iterate with keys restart, iteration, gev.

    Returns:
        MicrostateMaps with default labels "1".."k" and the achieved
        objective in gev_total. Each map's polarity is normalized so its
        largest-magnitude channel is positive.
    """
    x = np.asarray(peak_maps, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeMismatch("peak maps must form an (n, K) matrix")
    if k < 1:
        raise ShapeMismatch(f"k must be >= 1, got {k}")
    if n_inits < 1 or max_iter < 1:
        raise ShapeMismatch("n_inits and max_iter must be >= 1")
    xc, norms = _prepare_rows(x)
    total_power = float(norms @ norms)
    if total_power <= 0.0:
        raise ZeroGfp("all samples are spatially constant")
    valid = np.nonzero(norms > 1e-12 * _spatial_scale(x))[0]
    if valid.size < k:
        raise TooFewSamples(f"{valid.size} usable samples cannot seed {k} clusters")

    best_maps = None
    best_gev = -np.inf
    for restart in range(n_inits):
        rng = np.random.default_rng([seed, restart])
        init = rng.choice(valid, size=k, replace=False)
        maps = xc[init] / norms[init, np.newaxis]
        prev = -np.inf
        for iteration in range(1, max_iter + 1):
            proj = xc @ maps.T
            states = np.argmax(proj * proj, axis=1)
            for attempt in range(k + 1):
                counts = np.bincount(states, minlength=k)
                empties = np.nonzero(counts == 0)[0]
                if empties.size == 0:
                    break
                if attempt == k:
                    raise EmptyCluster(
                        f"cluster went empty and {k} reseeds did not recover"
                    )
                # reseed from the worst-explained usable sample
                explained = np.full(x.shape[0], np.inf)
                assigned = proj[np.arange(x.shape[0]), states] ** 2
                explained[valid] = assigned[valid] / (norms[valid] ** 2)
                maps[empties[0]] = xc[explained.argmin()] / norms[explained.argmin()]
                proj = xc @ maps.T
                states = np.argmax(proj * proj, axis=1)
            for c in range(k):
                members = xc[states == c]
                maps[c] = _power_iteration(members.T @ members, start=maps[c])
            proj = xc @ maps.T
            gev_now = float(np.max(proj * proj, axis=1).sum() / total_power)
            if trace_sink is not None:
                trace_sink.append(
                    {"restart": restart, "iteration": iteration, "gev": gev_now}
                )
            if gev_now - prev < tol:
                break
            prev = gev_now
        if gev_now > best_gev:
            best_gev = gev_now
            best_maps = maps.copy()

    # canonical polarity, then re-enforce invariants exactly
    for row in best_maps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    best_maps -= best_maps.mean(axis=1, keepdims=True)
    best_maps /= np.linalg.norm(best_maps, axis=1, keepdims=True)
    if channels is None:
        channels = tuple(f"ch{i:02d}" for i in range(x.shape[1]))
    return MicrostateMaps(
        channels=tuple(channels),
        maps=best_maps,
        labels=tuple(str(i + 1) for i in range(k)),
        gev_total=best_gev,
    )


def gev(data, assignment, maps: Optional[MicrostateMaps] = None):
    """Global explained variance, total and per state.

    Args:
        data: Recording or (T, K) array of samples.
        assignment: Segmentation, or (T,) array of state indices.
        maps: Required when assignment is a plain index array.

    Returns:
        (total, per_state) where per_state has one entry per map and
        sums to the total. Samples with zero GFP contribute nothing.

    Raises:
        ZeroGfp: if the data has no GFP power at all.
    """
    if isinstance(data, Recording):
        x = data.data.T
    else:
        x = np.asarray(data, dtype=np.float64)
    if isinstance(assignment, Segmentation):
        states = assignment.states
        if maps is None:
            maps = assignment.maps
    else:
        states = np.asarray(assignment, dtype=np.int64)
        if maps is None:
            raise ShapeMismatch("maps are required with a plain state array")
    if x.shape[0] != states.size:
        raise ShapeMismatch(f"{x.shape[0]} samples but {states.size} assignments")
    if x.shape[1] != maps.n_channels:
        raise MontageMismatch(
            f"data has {x.shape[1]} channels, maps have {maps.n_channels}"
        )
    xc, norms = _prepare_rows(x)
    gfp_sq = (norms * norms) / x.shape[1]
    denom = float(gfp_sq.sum())
    if denom <= 0.0:
        raise ZeroGfp("zero total GFP power, explained variance undefined")
    mc, mnorms = _prepare_rows(maps.maps)
    live = norms > 0
    r = np.zeros(x.shape[0])
    dots = np.einsum("ij,ij->i", xc[live], mc[states[live]])
    r[live] = dots / (norms[live] * mnorms[states[live]])
    weighted = gfp_sq * r * r
    per_state = np.array(
        [float(weighted[states == c].sum()) / denom for c in range(maps.k)]
    )
    return float(per_state.sum()), per_state


def select_k(
    peak_maps: np.ndarray,
    k_range: Sequence[int],
    threshold: float = 0.01,
    **kmeans_kwargs,
) -> tuple[int, dict[int, float]]:
    """Pick k by the explained-variance elbow.

    Scans k_range in ascending order and returns the last k before the
    marginal GEV gain first drops below the threshold; if the gain never
    drops, returns the largest k. Also returns the full GEV curve.
    """
    ks = sorted(set(int(k) for k in k_range))
    if not ks or ks[0] < 1:
        raise ShapeMismatch(f"invalid k range {k_range!r}")
    curve: dict[int, float] = {}
    for k in ks:
        curve[k] = float(modified_kmeans(peak_maps, k, **kmeans_kwargs).gev_total)
    chosen = ks[-1]
    for i in range(1, len(ks)):
        if curve[ks[i]] - curve[ks[i - 1]] < threshold:
            chosen = ks[i - 1]
            break
    return chosen, curve


def group_cluster(
    subject_maps: Sequence[MicrostateMaps], k: int, **kmeans_kwargs
) -> MicrostateMaps:
    """Cluster the pooled per-subject maps into k group-level maps.

    Every subject contributes its maps as unit-norm rows, so subjects
    are weighted equally regardless of recording length.
    """
    if not subject_maps:
        raise TooFewSamples("no subject maps to cluster")
    channels = subject_maps[0].channels
    for m in subject_maps[1:]:
        if m.channels != channels:
            raise MontageMismatch("subject maps disagree on channel set or order")
    stacked = np.vstack([m.maps for m in subject_maps])
    if stacked.shape[0] < k:
        raise TooFewSamples(f"{stacked.shape[0]} subject maps cannot form {k} clusters")
    return modified_kmeans(stacked, k, channels=channels, **kmeans_kwargs)


def backfit(
    rec: Recording, maps: MicrostateMaps, min_segment_ms: float = 0.0
) -> Segmentation:
    """Assign every sample to the map with the highest |correlation|.

    Spatially degenerate samples inherit the previous sample's state
    with correlation 0 (a degenerate first sample is an error). With
    min_segment_ms > 0, runs shorter than that duration are absorbed in
    a single left-to-right pass: each sample of a short run moves to
    whichever neighboring run's state correlates better at that sample,
    and correlations are recomputed afterwards.
    """
    if tuple(rec.montage.names) != maps.channels:
        raise MontageMismatch("recording channels do not match the maps' channels")
    x = rec.data.T
    xc, norms = _prepare_rows(x)
    mc, mnorms = _prepare_rows(maps.maps)
    live = norms > 1e-12 * _spatial_scale(x)
    if not live[0]:
        raise DegenerateSample("first sample is spatially constant, cannot backfit")
    c = np.zeros((x.shape[0], maps.k))
    c[live] = np.abs(xc[live] @ mc.T) / np.outer(norms[live], mnorms)
    c = np.minimum(c, 1.0)
    states = np.argmax(c, axis=1)
    for t in np.nonzero(~live)[0]:
        states[t] = states[t - 1]

    min_len = int(round(min_segment_ms / 1000.0 * rec.fs))
    if min_len > 1:
        runs = _run_lengths(states)
        if len(runs) > 1:
            for r, (start, stop, state) in enumerate(runs):
                if stop - start >= min_len:
                    continue
                left = runs[r - 1][2] if r > 0 else None
                right = runs[r + 1][2] if r + 1 < len(runs) else None
                for t in range(start, stop):
                    if left is None:
                        states[t] = right
                    elif right is None or c[t, left] >= c[t, right]:
                        states[t] = left
                    else:
                        states[t] = right
    corr = c[np.arange(x.shape[0]), states]
    corr[~live] = 0.0
    return Segmentation(
        states=states,
        corr=corr,
        gfp=GfpSeries(values=x.T.std(axis=0), fs=rec.fs),
        fs=rec.fs,
        maps=maps,
    )


def _run_lengths(states: np.ndarray) -> list[tuple[int, int, int]]:
    """Run-length encode: list of (start, stop, state), stop exclusive."""
    out = []
    start = 0
    for t in range(1, states.size + 1):
        if t == states.size or states[t] != states[start]:
            out.append((start, t, int(states[start])))
            start = t
    return out


def label_maps(
    maps: MicrostateMaps,
    templates: Optional[MicrostateMaps] = None,
    mapping: Optional[dict] = None,
) -> MicrostateMaps:
    """Attach meaningful labels to maps.

    Either provide `mapping` (map index -> label, covering every index
    exactly once) or `templates`, in which case each map is matched to a
    distinct template by maximizing total |spatial correlation| over all
    one-to-one assignments. Map values and order are never changed.

    Raises:
        AmbiguousLabels: mapping not a bijection, or fewer templates
            than maps.
    """
    if (templates is None) == (mapping is None):
        raise AmbiguousLabels("provide exactly one of templates or mapping")
    if mapping is not None:
        idx = {int(i): str(l) for i, l in mapping.items()}
        if sorted(idx) != list(range(maps.k)):
            raise AmbiguousLabels(
                f"mapping must cover map indices 0..{maps.k - 1} exactly"
            )
        labels = [idx[i] for i in range(maps.k)]
        if len(set(labels)) != len(labels):
            raise AmbiguousLabels(f"mapping labels are not unique: {labels}")
        return maps.relabeled(labels)
    if templates.channels != maps.channels:
        raise MontageMismatch("templates do not match the maps' channel set")
    if templates.k < maps.k:
        raise AmbiguousLabels(
            f"{templates.k} templates cannot label {maps.k} maps uniquely"
        )
    cost = np.empty((maps.k, templates.k))
    for i in range(maps.k):
        for j in range(templates.k):
            cost[i, j] = -abs(spatial_correlation(maps.maps[i], templates.maps[j]))
    rows, cols = linear_sum_assignment(cost)
    labels = [None] * maps.k
    for i, j in zip(rows, cols):
        labels[i] = templates.labels[j]
    return maps.relabeled(labels)
