"""On-disk storage of thinned posterior draws.

A store is a directory with one ``.npy`` file per parameter (draws stacked
along the first axis) and ``manifest.json`` listing names, shapes and dtypes.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .exceptions import ConfigError

MANIFEST = "manifest.json"


class DrawStore:
    """Append-only collection of named arrays, one record per retained draw."""

    def __init__(self, meta=None):
        self._lists = {}
        self._arrays = {}
        self.meta = dict(meta or {})

    def __len__(self):
        if self._arrays:
            return len(next(iter(self._arrays.values())))
        if self._lists:
            return len(next(iter(self._lists.values())))
        return 0

    @property
    def names(self):
        return list(self._arrays or self._lists)

    def append(self, record: dict):
        if self._arrays:
            self._lists = {k: list(v) for k, v in self._arrays.items()}
            self._arrays = {}
        if self._lists and set(record) != set(self._lists):
            raise ConfigError("record fields differ from earlier draws")
        for k, v in record.items():
            self._lists.setdefault(k, []).append(np.array(v, copy=True))

    def _freeze(self):
        if self._lists:
            self._arrays = {k: np.stack(v) for k, v in self._lists.items()}
            self._lists = {}

    def __getitem__(self, name):
        self._freeze()
        return self._arrays[name]

    def __contains__(self, name):
        return name in self.names

    def record(self, k):
        self._freeze()
        return {name: arr[k] for name, arr in self._arrays.items()}

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self._freeze()
        entries = {}
        for name, arr in self._arrays.items():
            np.save(directory / f"{name}.npy", arr, allow_pickle=False)
            entries[name] = {"shape": list(arr.shape), "dtype": str(arr.dtype)}
        manifest = {"draws": len(self), "arrays": entries, "meta": self.meta}
        (directory / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True))
        return directory

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        path = directory / MANIFEST
        if not path.exists():
            raise ConfigError(f"no draw store at {directory}")
        manifest = json.loads(path.read_text())
        store = cls(meta=manifest.get("meta"))
        for name, info in manifest["arrays"].items():
            arr = np.load(directory / f"{name}.npy", allow_pickle=False)
            if list(arr.shape) != info["shape"]:
                raise ConfigError(f"{name}.npy shape {arr.shape} differs from manifest")
            store._arrays[name] = arr
        return store

    def to_csv(self, directory):
        """One CSV per parameter: a draw column then the flattened entries."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self._freeze()
        for name, arr in self._arrays.items():
            flat = arr.reshape(len(arr), -1)
            idx = [".".join(map(str, i)) for i in np.ndindex(*arr.shape[1:])] or ["value"]
            with (directory / f"{name}.csv").open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["draw", *[f"{name}[{i}]" for i in idx]])
                for k, row in enumerate(flat):
                    w.writerow([k, *[fmt(v) for v in row]])
        return directory


def fmt(v):
    """Full double precision, 17 significant digits."""
    return format(float(v), ".17g")
