"""Binary container for :class:`DatasetTensor`.

Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON header
(layout, source, dims, label table, subject table), float64 payload in C
order, then one uint8 per frame for the mask when present.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import ParseError
from ..features import Source
from .dataset import DatasetTensor, Layout

MAGIC = b"CKDSET\x00\x01"


def write_dataset(ds: DatasetTensor, path):
    n, f, c = ds.data.shape
    header = {
        "layout": ds.layout.value,
        "source": ds.source.value,
        "dims": [n, f, c],
        "has_mask": ds.masks is not None,
        "labels": [
            {
                "trial_id": ds.trial_ids[i] if ds.trial_ids else str(i),
                "weight": int(ds.weight[i]),
                "careful": int(ds.careful[i]),
                "route": ds.routes[i] if ds.routes else None,
                "slot": ds.slots[i] if ds.slots else None,
                "duration": None if ds.durations is None else float(ds.durations[i]),
            }
            for i in range(n)
        ],
        "subjects": [int(s) for s in ds.subject_ids],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(ds.data, dtype="<f8").tobytes())
        if ds.masks is not None:
            fh.write(np.ascontiguousarray(ds.masks, dtype=np.uint8).tobytes())


def read_dataset(path) -> DatasetTensor:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise ParseError("not a dataset container (bad magic)", path)
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16 : 16 + hlen].decode())
    n, f, c = header["dims"]
    off = 16 + hlen
    size = n * f * c * 8
    if len(raw) < off + size:
        raise ParseError("truncated payload", path)
    data = np.frombuffer(raw[off : off + size], dtype="<f8").reshape(n, f, c).astype(float)
    masks = None
    if header["has_mask"]:
        masks = np.frombuffer(raw[off + size : off + size + n * f], dtype=np.uint8).reshape(n, f).astype(bool)
    labels = header["labels"]
    durations = [lab["duration"] for lab in labels]
    return DatasetTensor(
        layout=Layout(header["layout"]),
        data=data,
        weight=np.array([lab["weight"] for lab in labels], dtype=int),
        careful=np.array([lab["careful"] for lab in labels], dtype=int),
        subject_ids=np.array(header["subjects"], dtype=int),
        source=Source(header["source"]),
        masks=masks,
        trial_ids=[lab["trial_id"] for lab in labels],
        routes=[lab["route"] for lab in labels],
        slots=[lab["slot"] for lab in labels],
        durations=None if any(d is None for d in durations) else np.array(durations, dtype=float),
    )
