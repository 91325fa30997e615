"""Checkpoint directories: a JSON manifest plus one parameter blob per model.

Layout::

    ckpt/
      manifest.json   {"schema_version", "component", "step", "config", "blobs": {name: {"file", "sha256"}}}
      <name>.pt       torch state dict
"""

import hashlib
import io
import json
import os
import shutil
import tempfile
from pathlib import Path

import torch

from .exceptions import SchemaVersionMismatch

CHECKPOINT_SCHEMA = 1


def _digest(data):
    return hashlib.sha256(data).hexdigest()


def save_checkpoint(path, state_dicts, component, step=0, config=None):
    """Write atomically: build in a sibling temp dir, then swap it in."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".ckpt-", dir=path.parent))
    blobs = {}
    for name, state in state_dicts.items():
        buf = io.BytesIO()
        torch.save({k: v.detach().cpu() for k, v in state.items()}, buf)
        data = buf.getvalue()
        (tmp / f"{name}.pt").write_bytes(data)
        blobs[name] = {"file": f"{name}.pt", "sha256": _digest(data)}
    manifest = {
        "schema_version": CHECKPOINT_SCHEMA,
        "component": component,
        "step": int(step),
        "config": config or {},
        "blobs": blobs,
    }
    (tmp / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    old = None
    if path.exists():
        old = path.with_name(path.name + ".old")
        shutil.rmtree(old, ignore_errors=True)
        os.replace(path, old)
    os.replace(tmp, path)
    if old is not None:
        shutil.rmtree(old, ignore_errors=True)
    return path


def read_manifest(path):
    manifest = json.loads((Path(path) / "manifest.json").read_text())
    if manifest.get("schema_version") != CHECKPOINT_SCHEMA:
        raise SchemaVersionMismatch(f"checkpoint schema {manifest.get('schema_version')!r}")
    return manifest


def load_checkpoint(path):
    """Return ``(manifest, {name: state_dict})`` after checking digests."""
    path = Path(path)
    manifest = read_manifest(path)
    states = {}
    for name, blob in manifest["blobs"].items():
        data = (path / blob["file"]).read_bytes()
        if _digest(data) != blob["sha256"]:
            raise OSError(f"digest mismatch for {path / blob['file']}")
        states[name] = torch.load(io.BytesIO(data), weights_only=True)
    return manifest, states
