"""Independent reference implementations the tests compare against.

Everything here is deliberately written by a different route than the
package: plain loops, itertools, cmath, closed forms. Keep this module
free of msaf imports so a bug cannot appear on both sides of a check.
"""
from __future__ import annotations

import cmath
import itertools
import math

import numpy as np


# --- microstate feature metrics, brute force ---

def run_groups(states) -> list[tuple[int, int, int]]:
    """(start, stop, state) runs via itertools.groupby, stop exclusive."""
    out = []
    pos = 0
    for state, grp in itertools.groupby(int(s) for s in states):
        n = sum(1 for _ in grp)
        out.append((pos, pos + n, state))
        pos += n
    return out


def features_brute_force(
    states,
    corr,
    gfp,
    fs: float,
    k: int,
    state_labels,
    gfp_aggregate: str = "mean",
    trim_edge_runs: bool = False,
) -> dict[str, float]:
    """Per-state metric dict {label_metric: value} plus global "gfp".

    Mirrors the published metric definitions directly; exactly rounded
    sums (math.fsum) make the result independent of iteration order, so
    agreement with the package must be bit-for-bit.
    """
    states = [int(v) for v in states]
    corr = [float(v) for v in corr]
    gfp = [float(v) for v in gfp]
    t = len(states)
    duration_s = t / fs
    denom = math.fsum(g * g for g in gfp)
    runs = run_groups(states)
    if trim_edge_runs and len(runs) > 2:
        runs = runs[1:-1]

    out = {}
    for c in range(k):
        pairs = [(g, r) for s, g, r in zip(states, gfp, corr) if s == c]
        n_assigned = len(pairs)
        my_runs = [(a, b) for a, b, s in runs if s == c]
        if denom > 0.0 and n_assigned:
            gev = math.fsum((g * r) ** 2 for g, r in pairs) / denom
        else:
            gev = 0.0
        meancorr = (
            math.fsum(r for _, r in pairs) / n_assigned if n_assigned else 0.0
        )
        occurrence = len(my_runs) / duration_s if my_runs else 0.0
        timecov = n_assigned / t if n_assigned else 0.0
        if my_runs:
            durs = [((b - a) / fs) * 1000.0 for a, b in my_runs]
            meandur = math.fsum(durs) / len(durs)
        else:
            meandur = 0.0
        label = state_labels[c]
        out[f"{label}_gev"] = gev
        out[f"{label}_meancorr"] = meancorr
        out[f"{label}_occurrence"] = occurrence
        out[f"{label}_timecov"] = timecov
        out[f"{label}_meandur"] = meandur
    if gfp_aggregate == "mean":
        out["gfp"] = math.fsum(gfp) / t
    else:
        out["gfp"] = float(np.median(np.asarray(gfp)))
    return out


# --- FIR frequency response, direct DTFT ---

def dtft_magnitude(taps, fs: float, freq: float) -> float:
    """|H(f)| = |sum_n h[n] e^{-2 pi i f n / fs}| by a plain loop."""
    acc = 0j
    for n, h in enumerate(taps):
        acc += float(h) * cmath.exp(-2j * cmath.pi * freq * n / fs)
    return abs(acc)


def db(ratio: float) -> float:
    return 20.0 * math.log10(ratio)


# --- classification metrics by hand ---

def macro_f1_by_hand(y_true, y_pred) -> float:
    """Macro F1 from counting dicts; absent class gets F1 = 0."""
    labels = sorted(set(y_true) | set(y_pred))
    f1s = []
    for c in labels:
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == c and p != c)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1s.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    return sum(f1s) / len(f1s)


def accuracy_by_hand(y_true, y_pred) -> float:
    return sum(1 for t, p in zip(y_true, y_pred) if t == p) / len(y_true)


# --- XOR RBF-SVM dual solution in closed form ---

def xor_alpha_star(gamma: float) -> float:
    """Optimal dual variable for the symmetric XOR problem.

    Points (+-1, +-1) with label +1 on the main diagonal. By symmetry
    all four alphas are equal; stationarity of the dual gives
    alpha = 1 / (1 - e^{-4 gamma})^2, valid whenever C >= alpha.
    Decision values at the training points are then exactly +-1 and the
    bias is 0.
    """
    return 1.0 / (1.0 - math.exp(-4.0 * gamma)) ** 2


XOR_X = [(1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)]
XOR_Y = [1, 1, 0, 0]


# --- statistics closed forms and brute force ---

def chi2_sf_df2(x: float) -> float:
    """Survival function of chi-square with 2 dof: e^{-x/2}."""
    return math.exp(-x / 2.0)


def mann_whitney_z(a, b) -> float:
    """Standardized U by direct pairwise counting (no tie handling)."""
    n1, n2 = len(a), len(b)
    u = 0.0
    for x in a:
        for y in b:
            if x > y:
                u += 1.0
            elif x == y:
                u += 0.5
    mean_u = n1 * n2 / 2.0
    sd_u = math.sqrt(n1 * n2 * (n1 + n2 + 1) / 12.0)
    return (u - mean_u) / sd_u


def kw_h_by_ranks(*groups) -> float:
    """Kruskal-Wallis H from hand-assigned midranks (ties allowed)."""
    pooled = sorted((v, gi) for gi, g in enumerate(groups) for v in g)
    n = len(pooled)
    ranks = [0.0] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and pooled[j + 1][0] == pooled[i][0]:
            j += 1
        mid = (i + j) / 2.0 + 1.0
        for t in range(i, j + 1):
            ranks[t] = mid
        i = j + 1
    sums = [0.0] * len(groups)
    counts = [0] * len(groups)
    for r, (_, gi) in zip(ranks, pooled):
        sums[gi] += r
        counts[gi] += 1
    h = 12.0 / (n * (n + 1)) * sum(
        s * s / c for s, c in zip(sums, counts)
    ) - 3.0 * (n + 1)
    tie_sizes = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and pooled[j + 1][0] == pooled[i][0]:
            j += 1
        if j > i:
            tie_sizes.append(j - i + 1)
        i = j + 1
    if tie_sizes:
        correction = 1.0 - sum(t ** 3 - t for t in tie_sizes) / (n ** 3 - n)
        h /= correction
    return h


# --- Shapley values by permutation averaging ---

def shapley_by_permutations(score_fn, x_row, background) -> tuple[np.ndarray, np.ndarray]:
    """Average marginal contribution over all d! feature orderings.

    The coalition value is the interventional expectation: features in
    the coalition come from x_row, the rest from each background row in
    turn, scores averaged over the background. Returns (phi (d, C),
    phi0 (C,)). Only sensible for small d.
    """
    x_row = np.asarray(x_row, dtype=np.float64)
    background = np.asarray(background, dtype=np.float64)
    d = x_row.size

    cache: dict[frozenset, np.ndarray] = {}

    def value(coalition: frozenset) -> np.ndarray:
        if coalition not in cache:
            rows = []
            for brow in background:
                z = brow.copy()
                for i in coalition:
                    z[i] = x_row[i]
                rows.append(z)
            scores = np.asarray(score_fn(np.asarray(rows)), dtype=np.float64)
            if scores.ndim == 1:
                scores = scores[:, None]
            cache[coalition] = scores.mean(axis=0)
        return cache[coalition]

    phi0 = value(frozenset())
    phi = np.zeros((d, phi0.size))
    n_perm = 0
    for perm in itertools.permutations(range(d)):
        n_perm += 1
        seen: set = set()
        for i in perm:
            before = value(frozenset(seen))
            seen.add(i)
            after = value(frozenset(seen))
            phi[i] += after - before
    phi /= n_perm
    return phi, phi0
