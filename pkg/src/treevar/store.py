"""Draw-store persistence: one directory per run.

Layout: ``manifest.json`` (config snapshot, seed, software version, timestamps,
content hash, input hashes) plus one ``.npy`` file per draw block — raw
little-endian float64 arrays with shape headers — and JSON files for the tree
snapshots and scalers. Reloading reconstructs a PosteriorDraws equal to the one
saved; rerunning the manifest's config on the same inputs reproduces it
bit-for-bit.
"""

from __future__ import annotations

import dataclasses
import datetime
import hashlib
import json
import os
from typing import Optional

import numpy as np

from ._version import __version__
from .core import ModelConfig, Scaler, TreevarError
from .sampler import PosteriorDraws

__all__ = ["RunManifest", "save_draws", "load_draws", "file_sha256"]

_ARRAY_BLOCKS = ("A", "Gamma", "V", "Lambda", "q", "R", "sigma2",
                 "sv_params", "loglik", "Beta", "Y", "X", "Z")


@dataclasses.dataclass
class RunManifest:
    """Everything needed to reproduce and audit one run."""

    config: dict
    seed: int
    version: str
    started: str
    finished: str
    content_hash: str
    input_hashes: dict
    paths: dict
    variable_names: Optional[list] = None
    modifier_names: Optional[list] = None
    dates: Optional[list] = None
    scalers: Optional[list] = None
    tree_accept: Optional[dict] = None

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "RunManifest":
        return cls(**json.loads(s))


def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _draws_content_hash(draws: PosteriorDraws) -> str:
    """Order-stable SHA-256 over every stored block and the config."""
    h = hashlib.sha256()
    h.update(json.dumps(dataclasses.asdict(draws.config), sort_keys=True).encode())
    for name in _ARRAY_BLOCKS:
        arr = getattr(draws, name)
        if arr is not None:
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr).tobytes())
    for attr in ("mean_trees", "var_trees"):
        obj = getattr(draws, attr)
        if obj is not None:
            h.update(json.dumps(obj, sort_keys=True).encode())
    return h.hexdigest()


def save_draws(
    draws: PosteriorDraws,
    directory: str,
    input_hashes: Optional[dict] = None,
    started: Optional[str] = None,
) -> RunManifest:
    """Write a PosteriorDraws to ``directory`` and return its manifest."""
    os.makedirs(directory, exist_ok=True)
    paths = {}
    for name in _ARRAY_BLOCKS:
        arr = getattr(draws, name)
        if arr is not None:
            rel = f"{name}.npy"
            np.save(os.path.join(directory, rel), np.asarray(arr, dtype=float))
            paths[name] = rel
    for attr in ("mean_trees", "var_trees"):
        obj = getattr(draws, attr)
        if obj is not None:
            rel = f"{attr}.json"
            with open(os.path.join(directory, rel), "w") as f:
                json.dump(obj, f)
            paths[attr] = rel

    now = datetime.datetime.now(datetime.timezone.utc).isoformat()
    manifest = RunManifest(
        config=dataclasses.asdict(draws.config),
        seed=draws.config.seed,
        version=__version__,
        started=started or now,
        finished=now,
        content_hash=_draws_content_hash(draws),
        input_hashes=input_hashes or {},
        paths=paths,
        variable_names=draws.variable_names,
        modifier_names=draws.modifier_names,
        dates=None if draws.dates is None else list(draws.dates),
        scalers=None if draws.scalers is None else [
            {"center": s.center, "half_range": s.half_range} for s in draws.scalers
        ],
        tree_accept={k: list(v) for k, v in draws.tree_accept.items()},
    )
    with open(os.path.join(directory, "manifest.json"), "w") as f:
        f.write(manifest.to_json())
    return manifest


def load_draws(directory: str) -> PosteriorDraws:
    """Reconstruct a PosteriorDraws (with manifest metadata) from a store."""
    manifest_path = os.path.join(directory, "manifest.json")
    if not os.path.isfile(manifest_path):
        raise TreevarError(f"no manifest.json in {directory}; not a draw store")
    with open(manifest_path) as f:
        manifest = RunManifest.from_json(f.read())
    config = ModelConfig(**manifest.config)

    def arr(name):
        rel = manifest.paths.get(name)
        return None if rel is None else np.load(os.path.join(directory, rel))

    def js(name):
        rel = manifest.paths.get(name)
        if rel is None:
            return None
        with open(os.path.join(directory, rel)) as f:
            return json.load(f)

    draws = PosteriorDraws(
        config=config,
        A=arr("A"), Gamma=arr("Gamma"), V=arr("V"), Lambda=arr("Lambda"),
        q=arr("q"), R=arr("R"), sigma2=arr("sigma2"), sv_params=arr("sv_params"),
        loglik=arr("loglik"), Beta=arr("Beta"),
        mean_trees=js("mean_trees"), var_trees=js("var_trees"),
        tree_accept={k: tuple(v) for k, v in (manifest.tree_accept or {}).items()},
        scalers=None if manifest.scalers is None else [
            Scaler(center=s["center"], half_range=s["half_range"])
            for s in manifest.scalers
        ],
        variable_names=manifest.variable_names,
        modifier_names=manifest.modifier_names,
        dates=None if manifest.dates is None else [str(d) for d in manifest.dates],
        Z=arr("Z"), Y=arr("Y"), X=arr("X"),
    )
    if _draws_content_hash(draws) != manifest.content_hash:
        raise TreevarError("draw store content does not match its manifest hash")
    return draws
