"""On-disk feature containers, dataset manifests, and the UEA ``.ts`` reader.

Everything downstream consumes the types defined here.  A sample is an
:class:`ElementSet`: an ``N_E x N_D`` float32 matrix whose rows are element
feature vectors.  Row order carries no meaning; descriptors computed from a
set must be permutation invariant.

The binary container format is deliberately minimal so that feature
producers written in other languages can emit it byte for byte:

    magic  ``SINB``      4 bytes
    version (u16, =1)    little endian
    flags   (u16, =0)
    n_elements (u32)
    n_dims     (u32)
    payload: n_elements * n_dims float32, little endian, row major
"""

from __future__ import annotations

import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"SINB"
CONTAINER_VERSION = 1
_HEADER = struct.Struct("<4sHHII")

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"

LABEL_NORMAL = "normal"
LABEL_ANOMALOUS = "anomalous"
LABEL_UNKNOWN = "unknown"
_LABELS = {LABEL_NORMAL, LABEL_ANOMALOUS, LABEL_UNKNOWN}

_SPLITS = {"train", "validation", "test"}


class FeatureStoreError(Exception):
    """Base class for container, manifest, and parser failures."""


class ContainerFormatError(FeatureStoreError):
    """The bytes on disk do not form a valid element-set container."""


class BadMagicError(ContainerFormatError):
    pass


class UnsupportedVersionError(ContainerFormatError):
    pass


class TruncatedPayloadError(ContainerFormatError):
    pass


class PayloadSizeError(ContainerFormatError):
    """Payload length disagrees with the header shape (e.g. trailing bytes)."""


class ManifestError(FeatureStoreError):
    pass


class TsFormatError(FeatureStoreError):
    """Raised when a ``.ts`` file violates the expected layout."""


@dataclass
class ElementSet:
    """One sample, stored as a set of element feature vectors.

    ``elements`` has shape ``(n_elements, n_dims)`` and is kept in float32 so
    that in-memory values round-trip bit exactly through the container
    format.  ``group_keys`` carries descriptive keys such as the granularity
    level or crop identity; the pipeline groups samples by them.
    """

    elements: np.ndarray
    sample_id: str = ""
    group_keys: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.elements, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError(f"elements must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"elements must be at least 1x1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("elements contain non-finite values")
        self.elements = arr

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def n_dims(self) -> int:
        return self.elements.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ElementSet):
            return NotImplemented
        return (
            self.sample_id == other.sample_id
            and self.group_keys == other.group_keys
            and self.elements.shape == other.elements.shape
            and np.array_equal(self.elements, other.elements)
        )


@dataclass
class TimeSeries:
    """A multivariate series: ``values`` is ``(n_steps, n_channels)``."""

    values: np.ndarray
    series_id: str = ""
    label: str | None = None

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise ValueError(f"values must be 1-D or 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"values must be at least 1x1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"series {self.series_id!r} contains non-finite values")
        self.values = arr

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]


@dataclass
class ManifestEntry:
    sample_id: str
    label: str
    group_keys: dict[str, str]
    path: str

    def __post_init__(self):
        if self.label not in _LABELS:
            raise ManifestError(
                f"label must be one of {sorted(_LABELS)}, got {self.label!r}"
            )


@dataclass
class DatasetManifest:
    """Index of containers belonging to one dataset split."""

    split: str
    entries: list[ManifestEntry] = field(default_factory=list)
    format_version: int = MANIFEST_VERSION

    def __post_init__(self):
        if self.split not in _SPLITS:
            raise ManifestError(f"split must be one of {sorted(_SPLITS)}, got {self.split!r}")
        self.validate()

    def validate(self):
        if self.split == "train":
            bad = [e.sample_id for e in self.entries if e.label != LABEL_NORMAL]
            if bad:
                raise ManifestError(
                    f"train split must contain only normal samples; offending ids: {bad[:5]}"
                )
        seen = set()
        for e in self.entries:
            key = (e.sample_id, tuple(sorted(e.group_keys.items())))
            if key in seen:
                raise ManifestError(f"duplicate sample id {e.sample_id!r} for group {e.group_keys}")
            seen.add(key)

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "split": self.split,
            "entries": [
                {
                    "sample_id": e.sample_id,
                    "label": e.label,
                    "group_keys": e.group_keys,
                    "path": e.path,
                }
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        try:
            entries = [
                ManifestEntry(
                    sample_id=e["sample_id"],
                    label=e["label"],
                    group_keys=dict(e.get("group_keys", {})),
                    path=e["path"],
                )
                for e in d["entries"]
            ]
            return cls(split=d["split"], entries=entries, format_version=d["format_version"])
        except KeyError as exc:
            raise ManifestError(f"manifest missing field {exc}") from exc

    def save(self, directory) -> Path:
        path = Path(directory) / MANIFEST_NAME
        _atomic_write_bytes(path, json.dumps(self.to_dict(), indent=2).encode())
        return path

    @classmethod
    def load(cls, directory) -> "DatasetManifest":
        path = Path(directory)
        if path.is_dir():
            path = path / MANIFEST_NAME
        if not path.exists():
            raise ManifestError(f"no manifest at {path}")
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_element_set(eset: ElementSet, path) -> None:
    """Write ``eset`` to ``path`` in the binary container format.

    Two writes of the same set produce identical bytes.
    """
    arr = eset.elements
    if not np.all(np.isfinite(arr)):
        raise ValueError("refusing to write non-finite values")
    header = _HEADER.pack(MAGIC, CONTAINER_VERSION, 0, arr.shape[0], arr.shape[1])
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    _atomic_write_bytes(path, header + payload)


def read_element_set(path, sample_id: str | None = None,
                     group_keys: dict[str, str] | None = None) -> ElementSet:
    """Read a container back into an :class:`ElementSet`.

    The container stores only the matrix; ``sample_id`` and ``group_keys``
    normally come from the manifest entry.  When omitted, the file stem is
    used as the sample id.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise TruncatedPayloadError(f"{path}: file shorter than header")
    magic, version, _flags, n_e, n_d = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != CONTAINER_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported version {version}")
    expected = n_e * n_d * 4
    payload = raw[_HEADER.size:]
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"{path}: truncated payload ({len(payload)} bytes, expected {expected})"
        )
    if len(payload) > expected:
        raise PayloadSizeError(
            f"{path}: payload length {len(payload)} does not match header shape "
            f"{n_e}x{n_d} ({expected} bytes)"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(n_e, n_d)
    return ElementSet(
        elements=arr,
        sample_id=path.stem if sample_id is None else sample_id,
        group_keys={} if group_keys is None else dict(group_keys),
    )


def _parse_bool(token: str, tag: str) -> bool:
    if token == "true":
        return True
    if token == "false":
        return False
    raise TsFormatError(f"{tag} expects true/false, got {token!r}")


def parse_uea_ts(path) -> list[TimeSeries]:
    """Parse a UEA multivariate ``.ts`` file into one :class:`TimeSeries` per line.

    Header tags (``@problemName``, ``@univariate`` / ``@dimensions``,
    ``@equalLength``, ``@classLabel`` ...) are case-insensitive and must
    precede ``@data``.  In a data line, dimensions are separated by ``:``,
    values within a dimension by ``,``; when ``@classLabel true``, the class
    label is the last ``:`` field and is retained on the series for
    one-vs-rest protocols.
    """
    path = Path(path)
    univariate: bool | None = None
    declared_dims: int | None = None
    equal_length: bool | None = None
    has_class_labels = False
    in_data = False
    n_channels: int | None = None
    series: list[TimeSeries] = []

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if not in_data and line.startswith("@"):
                tag, _, rest = line.partition(" ")
                tag = tag.lower()
                rest = rest.strip()
                if tag == "@data":
                    in_data = True
                elif tag == "@univariate":
                    univariate = _parse_bool(rest.lower(), tag)
                elif tag == "@dimensions":
                    try:
                        declared_dims = int(rest)
                    except ValueError as exc:
                        raise TsFormatError(f"{path}:{lineno}: bad @dimensions value {rest!r}") from exc
                elif tag == "@equallength":
                    equal_length = _parse_bool(rest.lower(), tag)
                elif tag == "@classlabel":
                    first = rest.split()[0].lower() if rest else ""
                    has_class_labels = _parse_bool(first, tag)
                # remaining tags (@problemName, @seriesLength, ...) are informational
                continue
            if not in_data:
                raise TsFormatError(f"{path}:{lineno}: data line before @data section")

            fields = line.split(":")
            label = None
            if has_class_labels:
                if len(fields) < 2:
                    raise TsFormatError(f"{path}:{lineno}: expected a class label after ':'")
                label = fields[-1].strip()
                fields = fields[:-1]
            channels = []
            for dim_idx, chunk in enumerate(fields):
                tokens = [t for t in chunk.strip().split(",") if t != ""]
                try:
                    channels.append([float(t) for t in tokens])
                except ValueError as exc:
                    raise TsFormatError(
                        f"{path}:{lineno}: unparseable numeric token in dimension {dim_idx}"
                    ) from exc
            if n_channels is None:
                n_channels = len(channels)
            elif len(channels) != n_channels:
                raise TsFormatError(
                    f"{path}:{lineno}: {len(channels)} dimensions, expected {n_channels}"
                )
            lengths = {len(c) for c in channels}
            if len(lengths) != 1:
                raise TsFormatError(f"{path}:{lineno}: dimensions have unequal lengths {sorted(lengths)}")
            values = np.array(channels, dtype=np.float64).T  # (T, C)
            series.append(TimeSeries(values=values,
                                     series_id=f"{path.stem}-{len(series):05d}",
                                     label=label))

    if not in_data:
        raise TsFormatError(f"{path}: missing @data section")
    if n_channels is None:
        raise TsFormatError(f"{path}: @data section contains no series")
    if univariate is True and n_channels != 1:
        raise TsFormatError(f"{path}: @univariate true but found {n_channels} channels")
    if declared_dims is not None and declared_dims != n_channels:
        raise TsFormatError(
            f"{path}: @dimensions {declared_dims} but found {n_channels} channels"
        )
    if equal_length is True:
        lengths = {s.n_steps for s in series}
        if len(lengths) != 1:
            raise TsFormatError(f"{path}: @equalLength true but lengths vary: {sorted(lengths)[:5]}...")
    return series


def filter_series_by_length(series: list[TimeSeries],
                            min_steps: int | None = None,
                            max_steps: int | None = None) -> list[TimeSeries]:
    """Keep series whose step count lies in the closed interval given.

    Bounds set to ``None`` are not applied.  Dropped series are not padded or
    truncated.
    """
    lo = 0 if min_steps is None else min_steps
    hi = math.inf if max_steps is None else max_steps
    return [s for s in series if lo <= s.n_steps <= hi]
