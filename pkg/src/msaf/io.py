"""Recording and feature-table I/O.

Binary recordings live in a two-file container:

* ``<stem>.eegb``   8 magic bytes ``EEGB0001`` followed by the sample
  payload as little-endian 32-bit floats in channel-major order
  (channel 0's samples first, then channel 1's, ...).
* ``<stem>.json``   sidecar with keys ``subject_id``, ``fs``,
  ``channels``, ``n_samples``, optional ``label``, and ``provenance``
  (a list of strings describing the operations applied so far).

Values are widened to float64 on load; all in-memory computation happens
at working precision and only the container narrows to float32.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BadMagic,
    DuplicateSubject,
    InvalidRate,
    IoFailure,
    LengthMismatch,
    MissingSidecar,
    NonFiniteData,
    ShapeMismatch,
    UnknownChannel,
)

MAGIC = b"EEGB0001"

# Idealized spherical 10-20 coordinates, BESA convention: (theta, phi) in
# degrees, theta signed toward the right ear, phi counterclockwise from
# the right-ear axis. Cartesian: x = sin(theta)cos(phi) (right),
# y = sin(theta)sin(phi) (anterior), z = cos(theta) (up). Homologous
# left/right pairs differ only in the sign of x; Cz is exactly (0, 0, 1).
_BESA_1020: dict[str, tuple[float, float]] = {
    "Fp1": (-92.0, -72.0),
    "Fp2": (92.0, 72.0),
    "Fpz": (92.0, 90.0),
    "F7": (-92.0, -36.0),
    "F3": (-60.0, -51.0),
    "Fz": (46.0, 90.0),
    "F4": (60.0, 51.0),
    "F8": (92.0, 36.0),
    "T3": (-92.0, 0.0),
    "C3": (-46.0, 0.0),
    "Cz": (0.0, 0.0),
    "C4": (46.0, 0.0),
    "T4": (92.0, 0.0),
    "T5": (-92.0, 36.0),
    "P3": (-60.0, 51.0),
    "Pz": (46.0, -90.0),
    "P4": (60.0, -51.0),
    "T6": (92.0, -36.0),
    "O1": (-92.0, 72.0),
    "O2": (92.0, -72.0),
    "Oz": (92.0, -90.0),
}

# Modern names mapped onto the classic positions.
_ALIASES = {"T7": "T3", "T8": "T4", "P7": "T5", "P8": "T6"}

STANDARD_1020_NAMES = (
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T3", "C3", "Cz",
    "C4", "T4", "T5", "P3", "Pz", "P4", "T6", "O1", "O2",
)


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Montage:
    """Named electrode set with unit-sphere positions.

    Attributes:
        names: Channel names, unique and non-empty, in recording order.
        positions: (K, 3) array of unit vectors on the scalp sphere,
            x to the right, y anterior, z up.
    """

    names: tuple[str, ...]
    positions: np.ndarray

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        object.__setattr__(self, "names", names)
        if len(names) < 2:
            raise ShapeMismatch(f"montage needs at least 2 channels, got {len(names)}")
        if any(not n for n in names):
            raise ShapeMismatch("montage contains an empty channel name")
        if len(set(names)) != len(names):
            raise ShapeMismatch("montage channel names are not unique")
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.shape != (len(names), 3):
            raise ShapeMismatch(
                f"positions shape {pos.shape} does not match {len(names)} channels"
            )
        if not np.all(np.isfinite(pos)):
            raise NonFiniteData("montage positions contain non-finite values")
        norms = np.linalg.norm(pos, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ShapeMismatch("montage positions must be unit vectors")
        object.__setattr__(self, "positions", _freeze(pos))

    @property
    def n_channels(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownChannel(f"channel {name!r} not in montage") from None


def standard_1020_montage(names: Optional[Sequence[str]] = None) -> Montage:
    """Build a montage from the built-in idealized 10-20 table.

    Args:
        names: Channel names to include, in order. Defaults to the
            19-channel clinical set. Modern temporal names (T7, T8,
            P7, P8) are accepted as aliases of T3/T4/T5/T6.

    Returns:
        Montage with unit-sphere positions for the requested channels.
    """
    if names is None:
        names = STANDARD_1020_NAMES
    positions = []
    for name in names:
        key = _ALIASES.get(name, name)
        if key not in _BESA_1020:
            raise UnknownChannel(f"channel {name!r} not in the built-in 10-20 table")
        theta, phi = (math.radians(v) for v in _BESA_1020[key])
        if theta == 0.0:
            positions.append((0.0, 0.0, 1.0))
        else:
            positions.append(
                (
                    math.sin(theta) * math.cos(phi),
                    math.sin(theta) * math.sin(phi),
                    math.cos(theta),
                )
            )
    return Montage(names=tuple(names), positions=np.array(positions, dtype=np.float64))


@dataclass(frozen=True)
class Recording:
    """Multichannel EEG segment with its montage and sampling rate.

    Attributes:
        montage: Channel names and positions; row order matches data.
        fs: Sampling rate in Hz, strictly positive.
        data: (K, T) float64 array, channels by samples, finite.
        subject_id: Stable identifier used to join tables downstream.
        label: Optional class label (diagnostic group).
        provenance: Tuple of strings, one per operation applied.
    """

    montage: Montage
    fs: float
    data: np.ndarray
    subject_id: str
    label: Optional[str] = None
    provenance: tuple[str, ...] = ()

    def __post_init__(self):
        if not (isinstance(self.fs, (int, float)) and math.isfinite(self.fs) and self.fs > 0):
            raise InvalidRate(f"sampling rate must be positive and finite, got {self.fs!r}")
        object.__setattr__(self, "fs", float(self.fs))
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ShapeMismatch(f"data must be 2-D (channels, samples), got ndim={data.ndim}")
        if data.shape[0] != self.montage.n_channels:
            raise ShapeMismatch(
                f"data has {data.shape[0]} rows but montage has "
                f"{self.montage.n_channels} channels"
            )
        if data.shape[1] < 1:
            raise ShapeMismatch("recording must contain at least one sample")
        if not np.all(np.isfinite(data)):
            raise NonFiniteData(f"recording {self.subject_id!r} contains non-finite samples")
        object.__setattr__(self, "data", _freeze(data))
        if self.label is not None:
            object.__setattr__(self, "label", str(self.label))
        object.__setattr__(self, "provenance", tuple(str(p) for p in self.provenance))

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        """Length in seconds."""
        return self.data.shape[1] / self.fs

    def with_data(
        self,
        data: np.ndarray,
        note: Optional[str] = None,
        fs: Optional[float] = None,
        montage: Optional[Montage] = None,
    ) -> "Recording":
        """Derive a new recording, appending `note` to the provenance."""
        prov = self.provenance + ((note,) if note else ())
        return Recording(
            montage=montage if montage is not None else self.montage,
            fs=fs if fs is not None else self.fs,
            data=data,
            subject_id=self.subject_id,
            label=self.label,
            provenance=prov,
        )

    def pick(self, names: Sequence[str]) -> "Recording":
        """Select channels by name, in the requested order."""
        idx = [self.montage.index(n) for n in names]
        sub = Montage(
            names=tuple(names),
            positions=self.montage.positions[idx],
        )
        return self.with_data(
            self.data[idx], note=f"pick:{','.join(names)}", montage=sub
        )


def _split_stem(path: str) -> str:
    base, ext = os.path.splitext(path)
    if ext in (".eegb", ".json"):
        return base
    return path


def save_recording(rec: Recording, path: str) -> tuple[str, str]:
    """Write `<stem>.eegb` and its JSON sidecar.

    Args:
        rec: Recording to store. Samples are narrowed to float32.
        path: Target path; an `.eegb`/`.json` extension is stripped.

    Returns:
        (binary_path, sidecar_path).
    """
    stem = _split_stem(path)
    payload = rec.data.astype("<f4")
    if not np.all(np.isfinite(payload)):
        raise NonFiniteData("data overflows float32; rescale before saving")
    sidecar = {
        "subject_id": rec.subject_id,
        "fs": rec.fs,
        "channels": list(rec.montage.names),
        "n_samples": rec.n_samples,
        "provenance": list(rec.provenance),
    }
    if rec.label is not None:
        sidecar["label"] = rec.label
    bin_path, json_path = stem + ".eegb", stem + ".json"
    try:
        with open(bin_path, "wb") as f:
            f.write(MAGIC)
            f.write(payload.tobytes(order="C"))
        with open(json_path, "w", encoding="utf-8") as f:
            json.dump(sidecar, f, sort_keys=True, indent=2)
            f.write("\n")
    except OSError as e:
        raise IoFailure(f"could not write {stem!r}: {e}") from e
    return bin_path, json_path


def load_recording(path: str) -> Recording:
    """Read a recording stored by :func:`save_recording`.

    Channel order is taken from the sidecar verbatim; nothing is
    reordered or dropped. Payload floats are widened to float64.
    """
    stem = _split_stem(path)
    bin_path, json_path = stem + ".eegb", stem + ".json"
    try:
        with open(bin_path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise IoFailure(f"could not read {bin_path!r}: {e}") from e
    if blob[: len(MAGIC)] != MAGIC:
        raise BadMagic(f"{bin_path!r} does not start with {MAGIC!r}")
    if not os.path.exists(json_path):
        raise MissingSidecar(f"no sidecar {json_path!r} for {bin_path!r}")
    try:
        with open(json_path, "r", encoding="utf-8") as f:
            sidecar = json.load(f)
    except OSError as e:
        raise IoFailure(f"could not read {json_path!r}: {e}") from e
    except json.JSONDecodeError as e:
        raise IoFailure(f"sidecar {json_path!r} is not valid JSON: {e}") from e
    for key in ("subject_id", "fs", "channels", "n_samples"):
        if key not in sidecar:
            raise IoFailure(f"sidecar {json_path!r} missing key {key!r}")
    channels = [str(c) for c in sidecar["channels"]]
    n_samples = int(sidecar["n_samples"])
    raw = blob[len(MAGIC):]
    expected = len(channels) * n_samples * 4
    if len(raw) != expected:
        raise ShapeMismatch(
            f"{bin_path!r}: payload is {len(raw)} bytes, sidecar declares "
            f"{len(channels)}x{n_samples} float32 = {expected}"
        )
    data = np.frombuffer(raw, dtype="<f4").reshape(len(channels), n_samples)
    data = data.astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise NonFiniteData(f"{bin_path!r} contains non-finite samples")
    return Recording(
        montage=standard_1020_montage(channels),
        fs=float(sidecar["fs"]),
        data=data,
        subject_id=str(sidecar["subject_id"]),
        label=(str(sidecar["label"]) if sidecar.get("label") is not None else None),
        provenance=tuple(str(p) for p in sidecar.get("provenance", [])),
    )


@dataclass(frozen=True)
class FeatureTable:
    """Tabular features: one row per subject, fixed column order.

    Attributes:
        subject_ids: Unique row identifiers.
        y: (n,) integer class indices into class_names.
        class_names: Class label strings, index-aligned with y.
        feature_names: Column names, length F.
        values: (n, F) float64 matrix.
    """

    subject_ids: tuple[str, ...]
    y: np.ndarray
    class_names: tuple[str, ...]
    feature_names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        ids = tuple(str(s) for s in self.subject_ids)
        object.__setattr__(self, "subject_ids", ids)
        if len(set(ids)) != len(ids):
            dupes = sorted({s for s in ids if ids.count(s) > 1})
            raise DuplicateSubject(f"duplicate subject ids: {dupes}")
        y = np.asarray(self.y, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ShapeMismatch("feature values must be 2-D")
        if len(ids) != vals.shape[0] or len(ids) != y.shape[0]:
            raise LengthMismatch(
                f"{len(ids)} subjects, {y.shape[0]} labels, {vals.shape[0]} rows"
            )
        if vals.shape[1] != len(self.feature_names):
            raise ShapeMismatch(
                f"{vals.shape[1]} columns but {len(self.feature_names)} feature names"
            )
        if y.size and (y.min() < 0 or y.max() >= len(self.class_names)):
            raise ShapeMismatch("class index out of range")
        if not np.all(np.isfinite(vals)):
            raise NonFiniteData("feature table contains non-finite values")
        object.__setattr__(self, "y", _freeze(y))
        object.__setattr__(self, "values", _freeze(vals))
        object.__setattr__(self, "class_names", tuple(str(c) for c in self.class_names))
        object.__setattr__(self, "feature_names", tuple(str(f) for f in self.feature_names))

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def to_csv(self, path: str) -> None:
        """Write `subject_id,label,<features...>` with round-trip floats."""
        try:
            with open(path, "w", encoding="utf-8", newline="") as f:
                w = csv.writer(f, lineterminator="\n")
                w.writerow(["subject_id", "label", *self.feature_names])
                for i, sid in enumerate(self.subject_ids):
                    row = [sid, self.class_names[self.y[i]]]
                    row.extend(repr(float(v)) for v in self.values[i])
                    w.writerow(row)
        except OSError as e:
            raise IoFailure(f"could not write {path!r}: {e}") from e


def load_feature_table(path: str) -> FeatureTable:
    """Read a CSV written by :meth:`FeatureTable.to_csv`.

    Class names are the sorted distinct label strings.
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise IoFailure(f"could not read {path!r}: {e}") from e
    if not rows or len(rows[0]) < 3 or rows[0][:2] != ["subject_id", "label"]:
        raise ShapeMismatch(f"{path!r} is not a feature table (bad header)")
    feature_names = tuple(rows[0][2:])
    ids, labels, values = [], [], []
    for r in rows[1:]:
        if len(r) != 2 + len(feature_names):
            raise ShapeMismatch(f"{path!r}: row with {len(r)} fields, expected "
                                f"{2 + len(feature_names)}")
        ids.append(r[0])
        labels.append(r[1])
        values.append([float(v) for v in r[2:]])
    class_names = tuple(sorted(set(labels)))
    lut = {c: i for i, c in enumerate(class_names)}
    return FeatureTable(
        subject_ids=tuple(ids),
        y=np.array([lut[s] for s in labels], dtype=np.int64),
        class_names=class_names,
        feature_names=feature_names,
        values=np.array(values, dtype=np.float64),
    )


def write_json(path: str, obj) -> None:
    """Serialize deterministically: sorted keys, fixed separators."""
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(obj, f, sort_keys=True, indent=2)
            f.write("\n")
    except OSError as e:
        raise IoFailure(f"could not write {path!r}: {e}") from e


def read_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise IoFailure(f"could not read {path!r}: {e}") from e
    except json.JSONDecodeError as e:
        raise IoFailure(f"{path!r} is not valid JSON: {e}") from e
