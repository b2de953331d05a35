"""Writers for the canonical dataset directory format.

The format is the external contract of the downstream GCN library:
``meta.json``, ``edges.tsv`` (u<TAB>v, u < v, sorted), ``features.bin``
(magic GCNF, little-endian u32 version / u64 n / u64 d, float32 row-major),
``labels.tsv`` and ``splits/{train,val,test}.txt``. Everything is written
deterministically so converting twice yields identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

FEATURES_MAGIC = b"GCNF"
FEATURES_VERSION = 1


def write_canonical(out_dir, *, name: str, edges: np.ndarray,
                    features: np.ndarray, labels: np.ndarray,
                    num_classes: int, train_ids, val_ids, test_ids) -> None:
    out_dir = Path(out_dir)
    (out_dir / "splits").mkdir(parents=True, exist_ok=True)
    n, d = features.shape
    meta = {
        "name": name,
        "num_nodes": int(n),
        "num_features": int(d),
        "num_classes": int(num_classes),
    }
    (out_dir / "meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    with open(out_dir / "edges.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for u, v in edges:
            fh.write(f"{u}\t{v}\n")
    with open(out_dir / "features.bin", "wb") as fh:
        fh.write(FEATURES_MAGIC)
        fh.write(struct.pack("<IQQ", FEATURES_VERSION, n, d))
        fh.write(np.ascontiguousarray(features, dtype="<f4").tobytes())
    with open(out_dir / "labels.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for node in np.flatnonzero(labels >= 0):
            fh.write(f"{node}\t{labels[node]}\n")
    for part, ids in (("train", train_ids), ("val", val_ids), ("test", test_ids)):
        with open(out_dir / "splits" / f"{part}.txt", "w", encoding="utf-8",
                  newline="\n") as fh:
            for node in sorted(int(v) for v in ids):
                fh.write(f"{node}\n")
