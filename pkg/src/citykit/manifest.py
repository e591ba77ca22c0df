"""Content-hash manifests written beside every subcommand's outputs."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Sequence


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def write_manifest(
    out_dir: str | Path,
    subcommand: str,
    seed: int,
    inputs: Sequence[str | Path],
    outputs: Sequence[str | Path],
    params: dict,
    version: str,
) -> Path:
    """Hash inputs and outputs by file name; no wall-clock fields, so reruns
    with identical inputs produce byte-identical manifests."""

    def named(paths: Sequence[str | Path]) -> dict[str, str]:
        table: dict[str, str] = {}
        for p in paths:
            p = Path(p)
            name = p.name
            k = 2
            while name in table:  # same basename from different dirs
                name = f"{p.name}#{k}"
                k += 1
            table[name] = sha256_file(p)
        return table

    payload = {
        "tool": "citykit",
        "version": version,
        "subcommand": subcommand,
        "seed": seed,
        "inputs": named(inputs),
        "outputs": named(outputs),
        "params": params,
    }
    path = Path(out_dir) / f"{subcommand}.manifest.json"
    path.write_text(
        json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    return path
