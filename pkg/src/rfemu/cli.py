"""Command line front end.

Subcommands
-----------
run
    Solve and emulate a scene, writing a self-contained JSON artifact
    (capture bits, counters, run metadata).
compile-scene
    Solve a scene into a binary stream of scenario config packets.
analyze
    Post-process a run artifact: I/Q CSV, correlation CSV, range
    report JSON, instrumentation JSON; optional threshold check.
dump-minifloat
    Emit every tap-format value as CSV (bits, decoded value).

All artifacts are deterministic: JSON is written with sorted keys and
capture payloads carry a SHA-256 digest, so identical runs produce
byte-identical files.
"""

from __future__ import annotations

import argparse
import base64
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from rfemu.controlpath import PRESETS
from rfemu.errors import ConfigurationError, ContractViolation, DomainError
from rfemu.golden_model import SPEED_OF_LIGHT
from rfemu.numerics import all_f10_values, f16_bits_to_double_array
from rfemu.scenario import Scene, frame_generate, scp_encode, solve_frame
from rfemu.sim_harness import (
    DEFAULT_DRFG_PERIOD,
    detect_peaks,
    matched_filter,
    range_metrics,
    reference_waveform,
    run_emulation,
)

__all__ = ["main"]


# ----------------------------------------------------------------------
# Artifact helpers
# ----------------------------------------------------------------------

def _b64(bits: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(
        bits, dtype="<u2").tobytes()).decode("ascii")

def _unb64(text: str, n: int) -> np.ndarray:
    raw = base64.b64decode(text.encode("ascii"))
    out = np.frombuffer(raw, dtype="<u2")
    if out.size != n:
        raise ConfigurationError(
            f"capture payload holds {out.size} samples, header says {n}")
    return out.astype(np.uint16)

def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


# ----------------------------------------------------------------------
# run
# ----------------------------------------------------------------------

def _cmd_run(args: argparse.Namespace) -> int:
    scene = Scene.from_toml(args.scene)
    run = run_emulation(scene, preset=args.preset, n_cycles=args.cycles,
                        backend=args.backend, receiver_id=args.receiver,
                        strict=not args.lenient)
    cap = run.capture()
    re64, im64 = _b64(cap.re_bits), _b64(cap.im_bits)
    digest = hashlib.sha256()
    digest.update(base64.b64decode(re64))
    digest.update(base64.b64decode(im64))
    payload = {
        "format": "rfemu-run",
        "version": 1,
        "scene_file": str(args.scene),
        "preset": run.preset,
        "backend": run.backend,
        "cycles": run.n_cycles,
        "sample_rate_hz": scene.sample_rate_hz,
        "carrier_hz": scene.carrier_hz,
        "scenario_length": scene.scenario_length,
        "generator_period": DEFAULT_DRFG_PERIOD,
        "counters": dict(run.counters),
        "capture": {
            "receiver": run.receiver_id,
            "n": len(cap),
            "re_bits_b64": re64,
            "im_bits_b64": im64,
            "sha256": digest.hexdigest(),
        },
    }
    out = Path(args.out)
    _write_json(out, payload)
    print(f"wrote {out} ({len(cap)} samples, backend={run.backend}, "
          f"sha256={digest.hexdigest()[:12]}...)")
    return 0


# ----------------------------------------------------------------------
# compile-scene
# ----------------------------------------------------------------------

def _cmd_compile_scene(args: argparse.Namespace) -> int:
    scene = Scene.from_toml(args.scene)
    if args.preset not in PRESETS:
        raise ConfigurationError(
            f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
    geometry = PRESETS[args.preset]
    frames = frame_generate(scene, args.frames)
    blob = bytearray()
    for s, frame in enumerate(frames):
        scp = solve_frame(frame, scene, geometry=geometry, scenario_id=s,
                          strict=not args.lenient)
        blob += scp_encode(scp)
    out = Path(args.out)
    out.write_bytes(bytes(blob))
    print(f"wrote {len(frames)} packets ({len(blob)} bytes) to {out}")
    return 0


# ----------------------------------------------------------------------
# analyze
# ----------------------------------------------------------------------

def _load_run(path: Path) -> dict:
    payload = json.loads(path.read_text())
    if payload.get("format") != "rfemu-run":
        raise ConfigurationError(f"{path} is not a run artifact")
    return payload

def _load_expected(path: Path) -> list[float]:
    ranges = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                ranges.append(float(row[0]))
            except ValueError:
                continue   # header line
    if not ranges:
        raise ConfigurationError(f"no ranges found in {path}")
    return ranges

def _cmd_analyze(args: argparse.Namespace) -> int:
    payload = _load_run(Path(args.run))
    cap = payload["capture"]
    n = cap["n"]
    re = f16_bits_to_double_array(_unb64(cap["re_bits_b64"], n))
    im = f16_bits_to_double_array(_unb64(cap["im_bits_b64"], n))
    captured = re + 1j * im

    ref = reference_waveform()
    corr = matched_filter(captured, ref)
    peaks = detect_peaks(corr, threshold_frac=args.threshold,
                         min_separation=args.min_separation)
    expected = _load_expected(Path(args.expected)) if args.expected else []
    report = range_metrics(peaks, expected, payload["sample_rate_hz"],
                           fold_period=args.fold_period)

    prefix = Path(args.out_prefix) if args.out_prefix \
        else Path(args.run).with_suffix("")
    prefix.parent.mkdir(parents=True, exist_ok=True)

    iq_path = prefix.with_name(prefix.name + "_iq.csv")
    with open(iq_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "re", "im"])
        for i in range(n):
            w.writerow([i, repr(re[i]), repr(im[i])])

    corr_path = prefix.with_name(prefix.name + "_corr.csv")
    with open(corr_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lag", "magnitude"])
        for i, v in enumerate(corr):
            w.writerow([i, repr(float(v))])

    report_path = prefix.with_name(prefix.name + "_report.json")
    _write_json(report_path, {
        "peaks": report.peaks,
        "expected_m": report.expected,
        "matches": [{"expected_m": e, "estimated_m": est, "error_m": err,
                     "error_pct": pct}
                    for e, est, err, pct in report.matches],
        "mse_m2": report.mse,
        "misses": report.misses,
    })

    counters_path = prefix.with_name(prefix.name + "_counters.json")
    _write_json(counters_path, payload["counters"])

    print(f"wrote {iq_path}, {corr_path}, {report_path}, {counters_path}")
    for e, est, err, pct in report.matches:
        print(f"  expected {e:12.2f} m  estimated {est:12.2f} m  "
              f"error {pct:.4f}%")
    if report.misses:
        print(f"  {report.misses} expected range(s) had no matching peak")

    if args.check:
        if not expected:
            print("check failed: --check needs --expected", file=sys.stderr)
            return 2
        bad = report.misses > 0 or report.max_error_pct >= args.max_error_pct
        if bad:
            print(f"check FAILED: misses={report.misses}, "
                  f"max error {report.max_error_pct:.4f}% "
                  f"(limit {args.max_error_pct}%)", file=sys.stderr)
            return 1
        print(f"check passed: max error {report.max_error_pct:.4f}% "
              f"< {args.max_error_pct}%")
    return 0


# ----------------------------------------------------------------------
# dump-minifloat
# ----------------------------------------------------------------------

def _cmd_dump_minifloat(args: argparse.Namespace) -> int:
    rows = all_f10_values()
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(["bits", "value"])
        for bits, value in rows:
            w.writerow([f"0x{bits:03x}", repr(value)])
    finally:
        if args.out:
            fh.close()
            print(f"wrote {len(rows)} values to {args.out}")
    return 0


# ----------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rfemu",
        description="Cycle-level RF channel emulation simulator")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="emulate a scene and save the capture")
    r.add_argument("--scene", required=True, help="scene TOML file")
    r.add_argument("--preset", default="asic4", choices=sorted(PRESETS),
                   help="hardware configuration preset")
    r.add_argument("--cycles", type=int, default=None,
                   help="cycles to run (default: 4 scenario lengths)")
    r.add_argument("--backend", default="auto",
                   choices=["auto", "compiled", "pure"],
                   help="engine implementation")
    r.add_argument("--receiver", default=None,
                   help="receiver object id to capture (default: first)")
    r.add_argument("--lenient", action="store_true",
                   help="mute below-minimum-range links instead of failing")
    r.add_argument("--out", default="run.json", help="output artifact path")
    r.set_defaults(func=_cmd_run)

    c = sub.add_parser("compile-scene",
                       help="solve a scene into a packet stream")
    c.add_argument("scene", help="scene TOML file")
    c.add_argument("--preset", default="asic4",
                   help="hardware configuration preset")
    c.add_argument("--frames", type=int, required=True,
                   help="number of scenario frames to solve")
    c.add_argument("--lenient", action="store_true",
                   help="mute below-minimum-range links instead of failing")
    c.add_argument("-o", "--out", required=True, help="output binary path")
    c.set_defaults(func=_cmd_compile_scene)

    a = sub.add_parser("analyze", help="post-process a run artifact")
    a.add_argument("--run", required=True, help="run artifact from `run`")
    a.add_argument("--expected", default=None,
                   help="CSV of expected ranges in meters, one per line")
    a.add_argument("--threshold", type=float, default=0.3,
                   help="peak threshold as a fraction of the global max")
    a.add_argument("--min-separation", type=int, default=16,
                   help="minimum spacing between reported peaks, samples")
    a.add_argument("--fold-period", type=int, default=None,
                   help="match ranges modulo this many samples "
                        "(periodic reference)")
    a.add_argument("--out-prefix", default=None,
                   help="output file prefix (default: run path sans suffix)")
    a.add_argument("--check", action="store_true",
                   help="exit non-zero when the error limit is violated")
    a.add_argument("--max-error-pct", type=float, default=1.0,
                   help="per-peak error limit for --check")
    a.set_defaults(func=_cmd_analyze)

    d = sub.add_parser("dump-minifloat",
                       help="dump every tap-format value as CSV")
    d.add_argument("-o", "--out", default=None,
                   help="output CSV path (default: stdout)")
    d.set_defaults(func=_cmd_dump_minifloat)
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, DomainError, ContractViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        # downstream pager closed the pipe; not an error
        sys.stderr.close()
        return 0


if __name__ == "__main__":
    sys.exit(main())
