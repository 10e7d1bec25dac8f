"""Provenance manifest: content hashes and input lineage per artifact."""

import hashlib
import json
import os

from . import __version__

MANIFEST_NAME = "manifest.json"


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def record(out_dir, artifacts):
    """Merge artifact entries into out_dir/manifest.json.

    artifacts: iterable of (path, stage, input_paths).  Paths are stored
    relative to out_dir; each entry carries the file's sha256 and the
    hashes of its direct inputs, forming a reproducibility DAG.
    """
    out_dir = os.path.abspath(out_dir)
    mpath = os.path.join(out_dir, MANIFEST_NAME)
    entries = {}
    if os.path.exists(mpath):
        with open(mpath) as fh:
            entries = json.load(fh).get("entries", {})

    def rel(p):
        return os.path.relpath(os.path.abspath(p), out_dir)

    for path, stage, inputs in artifacts:
        entries[rel(path)] = {
            "sha256": file_sha256(path),
            "stage": stage,
            "inputs": sorted(rel(p) for p in inputs),
        }
    doc = {"tool_version": __version__,
           "entries": {k: entries[k] for k in sorted(entries)}}
    with open(mpath, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
