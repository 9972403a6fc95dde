"""
Output writers and run manifests.

All JSON is written canonically (sorted keys, fixed float repr, NaN as null)
so that identical inputs produce identical bytes.
"""

import hashlib
import json
import logging
import math
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from app.core.constants import schema_tag
from app.schemas.config import NumericsConfig
from app.schemas.results import OutputFile, RunManifest

logger = logging.getLogger("radialiq.manifest")

MANIFEST_NAME = "manifest.json"


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def to_jsonable(obj: Any) -> Any:
    """numpy scalars and arrays to plain Python, complex to [re, im], non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_jsonable(float(obj.real)), to_jsonable(float(obj.imag))]
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def canonical_json(payload: Any) -> str:
    return json.dumps(to_jsonable(payload), sort_keys=True, indent=2, allow_nan=False) + "\n"


class OutputWriter:
    """Writes command artifacts under one directory and remembers what it wrote."""

    def __init__(self, out_dir: str):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.written: List[str] = []

    def path(self, name: str) -> str:
        return str(self.out_dir / name)

    def register(self, name: str) -> str:
        path = self.path(name)
        if path not in self.written:
            self.written.append(path)
        return path

    def write_json(self, name: str, payload: Any) -> str:
        path = self.register(name)
        with open(path, "w") as f:
            f.write(canonical_json(payload))
        return path

    def write_text(self, name: str, text: str) -> str:
        path = self.register(name)
        with open(path, "w") as f:
            f.write(text)
        return path

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        path = self.register(name)
        with open(path, "w") as f:
            f.write(",".join(header) + "\n")
            for row in rows:
                f.write(",".join(_csv_cell(v) for v in row) + "\n")
        return path

    def write_plot(self, name: str, csv_name: str, x_col: int, y_cols: Sequence[int],
                   title: str, logscale: str = "") -> str:
        """gnuplot script plotting columns of a CSV written alongside."""
        lines = [
            "set datafile separator ','",
            "set key autotitle columnhead",
            f"set title '{title}'",
        ]
        if logscale:
            lines.append(f"set logscale {logscale}")
        plots = [f"'{csv_name}' using {x_col}:{c} with lines" for c in y_cols]
        lines.append("plot " + ", \\\n     ".join(plots))
        return self.write_text(name, "\n".join(lines) + "\n")


def _csv_cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def build_manifest(command: str, argv: Sequence[str], config: NumericsConfig, writer: OutputWriter,
                   inputs: Optional[Sequence[str]] = None, wall_time: float = 0.0,
                   status: str = "ok") -> RunManifest:
    outputs = []
    for path in sorted(writer.written):
        if os.path.exists(path):
            outputs.append(OutputFile(path=os.path.relpath(path, writer.out_dir),
                                      sha256=sha256_file(path), size_bytes=os.path.getsize(path)))
    return RunManifest(
        schema=schema_tag("manifest"),
        command=command,
        argv=list(argv),
        config=config.snapshot(),
        config_hash=config.config_hash(),
        seed=config.cli.seed,
        jobs=config.cli.jobs,
        inputs={p: sha256_file(p) for p in (inputs or []) if os.path.exists(p)},
        outputs=outputs,
        wall_time_s=round(wall_time, 6),
        status=status,
    )


def write_manifest(writer: OutputWriter, manifest: RunManifest) -> str:
    path = writer.path(MANIFEST_NAME)
    with open(path, "w") as f:
        f.write(canonical_json(manifest.model_dump(mode="json", by_alias=True)))
    logger.debug(f"[MANIFEST] wrote {path}", extra={"details": {"outputs": len(manifest.outputs)}})
    return path
