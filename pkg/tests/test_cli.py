"""Command line interface tests, driven through main() in-process."""

import base64
import hashlib
import json

import numpy as np
import pytest

from rfemu._backend import HAVE_CORE
from rfemu.cli import main
from rfemu.numerics import all_f10_values
from rfemu.scenario import scp_decode

SCENE = """
sample_rate_hz = 518e6
scenario_length = 4096

[[objects]]
id = "tx"
role = "transmitter"
position = [0.0, 0.0, 0.0]

[[objects]]
id = "rx"
role = "receiver"
position = [5000.0, 0.0, 0.0]
"""


@pytest.fixture
def scene_file(tmp_path):
    p = tmp_path / "scene.toml"
    p.write_text(SCENE)
    return p


@pytest.fixture
def run_artifact(scene_file, tmp_path):
    out = tmp_path / "run.json"
    rc = main(["run", "--scene", str(scene_file), "--cycles", "12288",
               "--out", str(out)])
    assert rc == 0
    return out


class TestRun:
    def test_artifact_contents(self, run_artifact):
        payload = json.loads(run_artifact.read_text())
        assert payload["format"] == "rfemu-run"
        assert payload["cycles"] == 12288
        assert payload["preset"] == "asic4"
        assert payload["capture"]["receiver"] == "rx"
        assert payload["capture"]["n"] == 12288
        assert payload["counters"]["cycles"] == 12288
        re_raw = base64.b64decode(payload["capture"]["re_bits_b64"])
        im_raw = base64.b64decode(payload["capture"]["im_bits_b64"])
        assert len(re_raw) == 2 * 12288
        digest = hashlib.sha256(re_raw + im_raw).hexdigest()
        assert digest == payload["capture"]["sha256"]

    def test_byte_identical_reruns(self, scene_file, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert main(["run", "--scene", str(scene_file), "--cycles", "8192",
                     "--out", str(a)]) == 0
        assert main(["run", "--scene", str(scene_file), "--cycles", "8192",
                     "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    @pytest.mark.skipif(not HAVE_CORE, reason="compiled core unavailable")
    def test_backends_agree_on_capture(self, scene_file, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert main(["run", "--scene", str(scene_file), "--cycles", "8192",
                     "--backend", "compiled", "--out", str(a)]) == 0
        assert main(["run", "--scene", str(scene_file), "--cycles", "8192",
                     "--backend", "pure", "--out", str(b)]) == 0
        pa, pb = json.loads(a.read_text()), json.loads(b.read_text())
        assert pa["capture"]["sha256"] == pb["capture"]["sha256"]
        assert pa["counters"] == pb["counters"]
        assert pa["backend"] == "compiled"
        assert pb["backend"] == "pure"

    def test_missing_scene_is_a_clean_error(self, tmp_path, capsys):
        rc = main(["run", "--scene", str(tmp_path / "nope.toml"),
                   "--out", str(tmp_path / "x.json")])
        assert rc == 2
        assert "error:" in capsys.readouterr().err


class TestAnalyze:
    def test_outputs_and_check(self, run_artifact, tmp_path, capsys):
        exp = tmp_path / "ranges.csv"
        exp.write_text("# meters\n5000.0\n")
        rc = main(["analyze", "--run", str(run_artifact),
                   "--expected", str(exp), "--fold-period", "2048",
                   "--check"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "check passed" in out
        prefix = run_artifact.with_suffix("")
        report = json.loads(
            (prefix.parent / (prefix.name + "_report.json")).read_text())
        assert report["misses"] == 0
        assert report["matches"][0]["error_pct"] < 0.01
        assert report["mse_m2"] < 1e-3
        counters = json.loads(
            (prefix.parent / (prefix.name + "_counters.json")).read_text())
        assert counters["cycles"] == 12288
        iq = (prefix.parent / (prefix.name + "_iq.csv")).read_text()
        assert iq.splitlines()[0] == "index,re,im"
        assert len(iq.splitlines()) == 12288 + 1
        corr = (prefix.parent / (prefix.name + "_corr.csv")).read_text()
        assert corr.splitlines()[0] == "lag,magnitude"

    def test_check_fails_on_tight_limit(self, run_artifact, tmp_path,
                                        capsys):
        exp = tmp_path / "ranges.csv"
        exp.write_text("5000.0\n")
        rc = main(["analyze", "--run", str(run_artifact),
                   "--expected", str(exp), "--fold-period", "2048",
                   "--check", "--max-error-pct", "1e-12"])
        assert rc == 1
        assert "check FAILED" in capsys.readouterr().err

    def test_check_requires_expected(self, run_artifact, capsys):
        rc = main(["analyze", "--run", str(run_artifact), "--check"])
        assert rc == 2

    def test_rejects_foreign_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"hello": 1}')
        rc = main(["analyze", "--run", str(bad)])
        assert rc == 2
        assert "not a run artifact" in capsys.readouterr().err


class TestCompileScene:
    def test_packets_roundtrip(self, scene_file, tmp_path):
        out = tmp_path / "scps.bin"
        rc = main(["compile-scene", str(scene_file), "--preset", "asic4",
                   "--frames", "3", "-o", str(out)])
        assert rc == 0
        blob = out.read_bytes()
        assert len(blob) % 3 == 0
        per = len(blob) // 3
        for s in range(3):
            scp = scp_decode(blob[s * per:(s + 1) * per])
            assert scp.scenario_id == s
            assert len(scp.links) == 1

    def test_unknown_preset(self, scene_file, tmp_path, capsys):
        rc = main(["compile-scene", str(scene_file), "--preset", "nope",
                   "--frames", "1", "-o", str(tmp_path / "x.bin")])
        assert rc == 2
        assert "unknown preset" in capsys.readouterr().err


class TestDumpMinifloat:
    def test_all_values(self, tmp_path):
        out = tmp_path / "mf.csv"
        assert main(["dump-minifloat", "-o", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "bits,value"
        assert len(lines) == 1 + 1024
        table = dict(all_f10_values())
        row = lines[1 + 0x123].split(",")
        assert int(row[0], 16) == 0x123
        assert float(row[1]) == table[0x123]

    def test_stdout_mode(self, capsys):
        assert main(["dump-minifloat"]) == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0] == "bits,value"
        assert len(out.splitlines()) == 1025
