"""JSON persistence for a scenario and its CFR stacks.

Layout (version 1)::

    {
      "version": 1,
      "scenario": {...Scenario.to_dict()...},
      "stacks": [
        {"channel_kind": "carrier" | "backscatter",
         "tx_index": int, "rx_index": int, "tag_index": int | null,
         "shape": [N_sym, N_s, N_a],
         "real": [...], "imag": [...]}          # flattened C order
      ]
    }

Floats are written with ``repr`` precision, so a round trip is bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .channel import CfrStack, Scenario

FORMAT_VERSION = 1


class DatasetError(ValueError):
    """Malformed, truncated or incompatible dataset file."""


def _stack_to_dict(s: CfrStack) -> dict:
    return {
        "channel_kind": s.channel_kind,
        "tx_index": s.tx_index,
        "rx_index": s.rx_index,
        "tag_index": s.tag_index,
        "shape": list(s.symbols.shape),
        "real": s.symbols.real.ravel().tolist(),
        "imag": s.symbols.imag.ravel().tolist(),
    }


def _stack_from_dict(d: dict) -> CfrStack:
    shape = tuple(d["shape"])
    re = np.asarray(d["real"], dtype=float)
    im = np.asarray(d["imag"], dtype=float)
    if re.size != int(np.prod(shape)) or im.size != re.size:
        raise DatasetError("stack payload does not match its shape")
    return CfrStack(
        (re + 1j * im).reshape(shape),
        d["channel_kind"],
        int(d["tx_index"]),
        int(d["rx_index"]),
        None if d["tag_index"] is None else int(d["tag_index"]),
    )


def save_dataset(path, scenario: Scenario, stacks) -> None:
    doc = {
        "version": FORMAT_VERSION,
        "scenario": scenario.to_dict(),
        "stacks": [_stack_to_dict(s) for s in stacks],
    }
    Path(path).write_text(json.dumps(doc))


def load_dataset(path):
    """Returns ``(scenario, stacks)``; raises DatasetError on schema problems."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"not a valid dataset file: {exc}") from exc
    if not isinstance(doc, dict) or "version" not in doc:
        raise DatasetError("missing version tag")
    if doc["version"] != FORMAT_VERSION:
        raise DatasetError(f"unsupported dataset version {doc['version']!r}")
    try:
        scenario = Scenario.from_dict(doc["scenario"])
        stacks = [_stack_from_dict(s) for s in doc["stacks"]]
    except (KeyError, TypeError) as exc:
        raise DatasetError(f"schema violation: {exc!r}") from exc
    return scenario, stacks
