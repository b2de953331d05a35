"""Readers for the legacy serialized benchmark distribution.

A raw directory holds, per dataset ``<name>``:

* ``ind.<name>.x``     -- pickled float32 CSR, labeled-train feature rows
* ``ind.<name>.y``     -- pickled one-hot label rows for ``x``
* ``ind.<name>.tx``    -- pickled float32 CSR, test feature rows
* ``ind.<name>.ty``    -- pickled one-hot label rows for ``tx``
* ``ind.<name>.allx``  -- pickled float32 CSR, all non-test feature rows
* ``ind.<name>.ally``  -- pickled one-hot label rows for ``allx``
* ``ind.<name>.graph`` -- pickled dict: node id -> neighbor list
* ``ind.<name>.test.index`` -- text file, one test position per line

The pickles were produced under Python 2, hence the latin1 decoding.
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

SHARD_SUFFIXES = ("x", "y", "tx", "ty", "allx", "ally", "graph")


class RawBenchmarkError(Exception):
    """Raw distribution is missing files or structurally inconsistent."""


@dataclass
class RawBenchmark:
    name: str
    x: sp.csr_matrix
    y: np.ndarray
    tx: sp.csr_matrix
    ty: np.ndarray
    allx: sp.csr_matrix
    ally: np.ndarray
    graph: dict
    test_index: np.ndarray


def _load_pickle(path: Path):
    with open(path, "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def load_raw(raw_dir, name: str) -> RawBenchmark:
    raw_dir = Path(raw_dir)
    blobs = {}
    for suffix in SHARD_SUFFIXES:
        path = raw_dir / f"ind.{name}.{suffix}"
        if not path.exists():
            raise RawBenchmarkError(f"missing shard {path.name}")
        blobs[suffix] = _load_pickle(path)
    index_path = raw_dir / f"ind.{name}.test.index"
    if not index_path.exists():
        raise RawBenchmarkError(f"missing test index {index_path.name}")
    test_index = []
    for lineno, line in enumerate(index_path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            test_index.append(int(line))
        except ValueError:
            raise RawBenchmarkError(
                f"{index_path.name} line {lineno}: non-integer index") from None

    raw = RawBenchmark(name=name,
                       x=sp.csr_matrix(blobs["x"]),
                       y=np.asarray(blobs["y"]),
                       tx=sp.csr_matrix(blobs["tx"]),
                       ty=np.asarray(blobs["ty"]),
                       allx=sp.csr_matrix(blobs["allx"]),
                       ally=np.asarray(blobs["ally"]),
                       graph=dict(blobs["graph"]),
                       test_index=np.asarray(test_index, dtype=np.int64))
    _check_consistency(raw)
    return raw


def _check_consistency(raw: RawBenchmark) -> None:
    if raw.x.shape[1] != raw.allx.shape[1] or raw.tx.shape[1] != raw.allx.shape[1]:
        raise RawBenchmarkError("feature dimension differs across shards")
    if raw.x.shape[0] != raw.y.shape[0]:
        raise RawBenchmarkError("x and y row counts differ")
    if raw.tx.shape[0] != raw.ty.shape[0]:
        raise RawBenchmarkError("tx and ty row counts differ")
    if raw.allx.shape[0] != raw.ally.shape[0]:
        raise RawBenchmarkError("allx and ally row counts differ")
    if raw.test_index.shape[0] != raw.tx.shape[0]:
        raise RawBenchmarkError(
            f"test index lists {raw.test_index.shape[0]} rows, "
            f"tx holds {raw.tx.shape[0]}")
    if raw.y.shape[1] != raw.ty.shape[1] or raw.y.shape[1] != raw.ally.shape[1]:
        raise RawBenchmarkError("class count differs across label shards")
