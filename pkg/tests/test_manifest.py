"""
Canonical JSON, output writers and run manifests.
"""

import json
import math

import numpy as np

from app.schemas.config import NumericsConfig
from app.services.classical import RadialKind
from app.services.manifest import (
    MANIFEST_NAME,
    OutputWriter,
    build_manifest,
    canonical_json,
    sha256_file,
    to_jsonable,
    write_manifest,
)


class TestCanonicalJson:
    """Deterministic serialization"""

    def test_to_jsonable(self):
        """Test numpy values, complex numbers, enums and non-finite floats"""
        payload = {
            "a": np.float64(1.5),
            "b": np.arange(3),
            "c": 1 + 2j,
            "d": math.nan,
            "e": (np.bool_(True), np.int64(4)),
            "f": RadialKind.SADDLE,
        }
        assert to_jsonable(payload) == {"a": 1.5, "b": [0, 1, 2], "c": [1.0, 2.0], "d": None,
                                        "e": [True, 4], "f": "Saddle"}

    def test_sorted_and_stable(self):
        """Test key order does not change the bytes"""
        assert canonical_json({"b": 1, "a": [math.inf]}) == canonical_json({"a": [math.inf], "b": 1})
        assert json.loads(canonical_json({"a": math.inf})) == {"a": None}


class TestOutputWriter:
    """Artifacts under one directory"""

    def test_csv(self, tmp_path):
        """Test floats are written with repr precision"""
        writer = OutputWriter(str(tmp_path / "out"))
        path = writer.write_csv("t.csv", ["x", "y"], [(0.1, 1), (1 / 3, 2)])
        lines = open(path).read().splitlines()
        assert lines == ["x,y", "0.1,1", f"{1 / 3!r},2"]
        assert writer.written == [path]

    def test_plot_script(self, tmp_path):
        """Test the gnuplot script plots the requested columns"""
        writer = OutputWriter(str(tmp_path))
        path = writer.write_plot("r.gp", "r.csv", 1, [2, 3], "shells", logscale="xy")
        text = open(path).read()
        assert "set logscale xy" in text
        assert "'r.csv' using 1:2 with lines" in text
        assert "'r.csv' using 1:3 with lines" in text

    def test_register_once(self, tmp_path):
        """Test rewriting a file keeps one entry"""
        writer = OutputWriter(str(tmp_path))
        writer.write_json("a.json", {"x": 1})
        writer.write_json("a.json", {"x": 2})
        assert len(writer.written) == 1


class TestManifest:
    """Run manifests"""

    def test_manifest_hashes_outputs(self, tmp_path, problem_file):
        """Test outputs and inputs are listed with their sha256"""
        writer = OutputWriter(str(tmp_path / "run"))
        result = writer.write_json("result.json", {"value": 1.0})
        config = NumericsConfig()
        manifest = build_manifest("classify", ["classify"], config, writer, [problem_file], 1.25)
        assert manifest.schema_id == "radialiq.manifest/v1"
        assert manifest.config_hash == config.config_hash()
        assert manifest.inputs == {problem_file: sha256_file(problem_file)}
        assert [o.path for o in manifest.outputs] == ["result.json"]
        assert manifest.outputs[0].sha256 == sha256_file(result)
        path = write_manifest(writer, manifest)
        assert path.endswith(MANIFEST_NAME)
        data = json.loads(open(path).read())
        assert data["schema"] == "radialiq.manifest/v1"
        assert data["seed"] == config.cli.seed
        assert data["status"] == "ok"
