"""Command-line interface.

Exit codes: 0 success, 1 internal error, 2 usage or input mismatch
(unknown format, missing file, wrong length for the declared format),
3 corrupted compressed data.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import container, delta, formats, fp4, ingest, kvcache, synth
from .errors import CorruptionError, FormatError, ZtncError

FORMAT_FLAGS = {
    "bf16": "BF16",
    "fp8-e4m3": "FP8_E4M3",
    "fp8-e5m2": "FP8_E5M2",
    "mxfp4": "MXFP4",
    "nvfp4": "NVFP4",
}
FP4_SCHEMES = ("mxfp4", "nvfp4")
KV_FORMATS = {"bf16": formats.BF16, "fp8-e4m3": formats.FP8_E4M3}


def _read(path: str) -> bytes:
    with open(path, "rb") as f:
        return f.read()


def _write(path: str, data: bytes):
    with open(path, "wb") as f:
        f.write(data)


def _default_threads() -> int:
    return os.cpu_count() or 1


def _print_report(rep: container.CompressionReport, as_json: bool):
    if as_json:
        print(rep.to_json())
        return
    print(
        f"format {rep.format}  elements {rep.element_count}  "
        f"original {rep.original_bytes} B  compressed {rep.compressed_bytes} B  "
        f"ratio {rep.total_ratio:.4f}  overhead {rep.overhead_bytes} B"
    )
    print(f"{'stream':<14} {'original':>10} {'compressed':>10} {'ratio':>8} "
          f"{'entropy':>8} {'huff/raw':>9}")
    for s in rep.streams:
        print(
            f"{s.kind:<14} {s.original_bytes:>10} {s.compressed_bytes:>10} "
            f"{s.ratio:>8.4f} {s.entropy_bits_per_symbol:>8.3f} "
            f"{s.chunks_huffman:>4}/{s.chunks_raw}"
        )


def _fp4_from_parts(layout: fp4.Fp4Layout, nibbles: bytes, scales: bytes) -> fp4.Fp4Tensor:
    """Derive the element count from the two stream sizes; prefer no pad."""
    blocks = len(scales)
    for ec in (2 * len(nibbles), 2 * len(nibbles) - 1):
        if ec < 0:
            continue
        if (ec + layout.block_size - 1) // layout.block_size == blocks:
            return fp4.Fp4Tensor(layout, ec, nibbles, scales)
    raise FormatError(
        f"{len(nibbles)} nibble bytes and {len(scales)} scales are inconsistent "
        f"for {layout.scheme} (block size {layout.block_size})"
    )


def _load_fp4(args, raw: bytes) -> fp4.Fp4Tensor:
    layout = fp4.LAYOUTS[FORMAT_FLAGS[args.format]]
    if getattr(args, "scales", None):
        return _fp4_from_parts(layout, raw, _read(args.scales))
    return fp4.split_combined(raw, layout)


def cmd_compress(args) -> int:
    raw = _read(args.input)
    if args.format in FP4_SCHEMES:
        blob, rep = fp4.compress_fp4(
            _load_fp4(args, raw), args.chunk_size, threads=args.threads
        )
    else:
        fmt = formats.FORMATS[FORMAT_FLAGS[args.format]]
        blob, rep = container.compress_tensor(
            raw, fmt, args.chunk_size, threads=args.threads
        )
    _write(args.output, blob)
    _print_report(rep, args.json)
    return 0


def cmd_decompress(args) -> int:
    blob = _read(args.input)
    magic = blob[:4]
    if magic == ingest.ARCHIVE_MAGIC:
        out = ingest.decompress_model(blob, threads=args.threads)
    elif magic == kvcache.MAGIC:
        out = b"".join(kvcache.decode_session(blob))
    else:
        parsed = container.parse_container(blob)
        if parsed.flags & container.FLAG_DELTA:
            raise FormatError(
                "input is a delta container; use `apply --base BASE --delta ...`"
            )
        out = container.decompress_tensor(blob, threads=args.threads)
    _write(args.output, out)
    if args.json:
        print(json.dumps({"output_bytes": len(out)}))
    else:
        print(f"wrote {len(out)} bytes")
    return 0


def cmd_delta(args) -> int:
    blob, rep = delta.compress_delta(
        _read(args.base), _read(args.next), args.chunk_size, threads=args.threads
    )
    _write(args.output, blob)
    _print_report(rep, args.json)
    return 0


def cmd_apply(args) -> int:
    out = delta.apply_delta(_read(args.base), _read(args.delta), threads=args.threads)
    _write(args.output, out)
    if args.json:
        print(json.dumps({"output_bytes": len(out)}))
    else:
        print(f"wrote {len(out)} bytes")
    return 0


def cmd_profile(args) -> int:
    raw = _read(args.input)
    if args.format in FP4_SCHEMES:
        t = _load_fp4(args, raw)
        rep = container._profile_streams(
            [
                container.StreamSpec(container.KIND_RAW_NIBBLES, t.nibbles, entropy_coded=False),
                container.StreamSpec(container.KIND_SCALE, t.scales),
            ],
            container.FORMAT_IDS[t.layout.scheme],
            t.element_count,
            len(t.nibbles) + len(t.scales),
            args.chunk_size,
        )
    else:
        fmt = formats.FORMATS[FORMAT_FLAGS[args.format]]
        rep = container.profile_tensor(raw, fmt, args.chunk_size)
    _print_report(rep, args.json)
    return 0


def cmd_fp4_regroup(args) -> int:
    raw = _read(args.input)
    if args.scheme:
        layout = fp4.LAYOUTS[FORMAT_FLAGS[args.scheme]]
        nibbles = fp4.split_combined(raw, layout).nibbles
    else:
        nibbles = raw
    regrouped, rep = fp4.regroup_bits_experiment(nibbles)
    stream = rep.streams[0]
    if args.json:
        print(
            json.dumps(
                {
                    "groups": len(regrouped),
                    "entropy_bits_per_symbol": stream.entropy_bits_per_symbol,
                    "ratio": stream.ratio,
                    "total_ratio": rep.total_ratio,
                },
                indent=2,
            )
        )
    else:
        print(
            f"regrouped {len(regrouped)} bytes from {len(regrouped) * 4} elements\n"
            f"entropy {stream.entropy_bits_per_symbol:.3f} bits/byte  "
            f"hypothetical ratio {stream.ratio:.4f}"
        )
    return 0


def _kv_distribution(spec: str):
    """Returns (initial sigma or None for uniform, shift step or None)."""
    if spec == "gaussian":
        return 0.02, None
    if spec == "uniform":
        return None, None
    if spec.startswith("shift:"):
        try:
            k = int(spec.split(":", 1)[1])
        except ValueError:
            raise FormatError(f"bad shift step in distribution {spec!r}")
        if k < 0:
            raise FormatError("shift step must be nonnegative")
        return 0.02, k
    raise FormatError(f"unknown distribution {spec!r}")


def cmd_kv_bench(args) -> int:
    fmt = KV_FORMATS[args.format]
    sigma, shift_at = _kv_distribution(args.distribution)
    rng = np.random.default_rng(args.seed)
    step_bytes = args.elements * fmt.element_bytes

    def make_step(i: int) -> bytes:
        if sigma is None:
            return rng.integers(0, 256, step_bytes, np.uint8).tobytes()
        s = 3.0 if shift_at is not None and i >= shift_at else sigma
        return synth.kv_step(rng, fmt, args.elements, s)

    # calibration always comes from the initial gaussian, so `uniform`
    # doubles as the adversarial mismatch case
    calibration = [synth.kv_step(rng, fmt, args.elements, 0.02) for _ in range(8)]
    session = kvcache.open_session(
        fmt, calibration, window=args.window, threshold=args.threshold
    )
    initial_baseline = session.baseline_ratio

    ratios = []
    rebuilds = []
    stream_bytes = len(session.stream_header())
    t0 = time.perf_counter()
    for i in range(args.steps):
        frame, ratio = session.compress_step(make_step(i))
        stream_bytes += len(frame)
        ratios.append(ratio)
        if session.maybe_rebuild() == "rebuilt":
            rebuilds.append(i)
            stream_bytes += len(session.generation_record())
    elapsed = time.perf_counter() - t0
    original = args.steps * step_bytes
    throughput = original / elapsed / 1e6 if elapsed > 0 else float("inf")

    if args.json:
        print(
            json.dumps(
                {
                    "format": fmt.name,
                    "steps": args.steps,
                    "elements": args.elements,
                    "step_bytes": step_bytes,
                    "distribution": args.distribution,
                    "seed": args.seed,
                    "window": args.window,
                    "threshold": args.threshold,
                    "initial_baseline_ratio": initial_baseline,
                    "ratios": ratios,
                    "rebuild_steps": rebuilds,
                    "codebook_builds": session.codebook_builds,
                    "stream_bytes": stream_bytes,
                    "original_bytes": original,
                    "overall_ratio": stream_bytes / original if original else 0.0,
                    "throughput_mb_s": throughput,
                },
                indent=2,
            )
        )
        return 0

    print(
        f"kv-bench {fmt.name}  {args.steps} steps x {step_bytes} B  "
        f"distribution {args.distribution}  seed {args.seed}"
    )
    print(f"baseline ratio {initial_baseline:.4f}  window {args.window}  "
          f"threshold +{args.threshold}")
    for i, r in enumerate(ratios):
        mark = "  [rebuild]" if i in rebuilds else ""
        print(f"step {i:4d}  ratio {r:.4f}{mark}")
    print(
        f"overall ratio {stream_bytes / original:.4f}  "
        f"rebuilds {len(rebuilds)}  throughput {throughput:.1f} MB/s"
    )
    return 0


def cmd_compress_model(args) -> int:
    archive, rep = ingest.compress_model(
        _read(args.input), args.chunk_size, threads=args.threads
    )
    _write(args.output, archive)
    for s in rep.skipped:
        print(
            f"warning: skipped tensor {s['name']!r} (dtype {s['dtype']}, "
            f"{s['length']} B stored verbatim)",
            file=sys.stderr,
        )
    if args.json:
        print(json.dumps(rep.to_dict(), indent=2))
    else:
        print(
            f"model {rep.original_size} B -> archive {rep.archive_size} B  "
            f"ratio {rep.total_ratio:.4f}"
        )
        for name, r in rep.tensors:
            print(f"{name:<30} {r.format:<9} {r.original_bytes:>10} B  ratio {r.total_ratio:.4f}")
    return 0


def cmd_decompress_model(args) -> int:
    out = ingest.decompress_model(_read(args.input), threads=args.threads)
    _write(args.output, out)
    if args.json:
        print(json.dumps({"output_bytes": len(out)}))
    else:
        print(f"wrote {len(out)} bytes")
    return 0


def _split_steps(data: bytes, step_bytes: int, what: str) -> list[bytes]:
    if step_bytes <= 0:
        raise FormatError("--step-bytes must be positive")
    if len(data) % step_bytes:
        raise FormatError(
            f"{what} of {len(data)} bytes is not a multiple of step size {step_bytes}"
        )
    return [data[i : i + step_bytes] for i in range(0, len(data), step_bytes)]


def cmd_kv_encode(args) -> int:
    fmt = KV_FORMATS[args.format]
    calibration = _split_steps(_read(args.calibration), args.step_bytes, "calibration file")
    steps = _split_steps(_read(args.input), args.step_bytes, "input file")
    session = kvcache.open_session(
        fmt, calibration, window=args.window, threshold=args.threshold
    )
    out = bytearray(session.stream_header())
    ratios = []
    rebuilds = []
    for i, tensor in enumerate(steps):
        frame, ratio = session.compress_step(tensor)
        out += frame
        ratios.append(ratio)
        if session.maybe_rebuild() == "rebuilt":
            rebuilds.append(i)
            out += session.generation_record()
    _write(args.output, bytes(out))
    if args.json:
        print(
            json.dumps(
                {
                    "steps": len(steps),
                    "stream_bytes": len(out),
                    "ratios": ratios,
                    "rebuild_steps": rebuilds,
                    "baseline_ratio": session.baseline_ratio,
                },
                indent=2,
            )
        )
    else:
        print(
            f"encoded {len(steps)} steps into {len(out)} bytes, "
            f"{len(rebuilds)} rebuilds"
        )
    return 0


def cmd_kv_decode(args) -> int:
    tensors = kvcache.decode_session(_read(args.input))
    out = b"".join(tensors)
    _write(args.output, out)
    if args.json:
        print(json.dumps({"steps": len(tensors), "output_bytes": len(out)}))
    else:
        print(f"decoded {len(tensors)} steps, {len(out)} bytes")
    return 0


def _add_common(p, *, chunked=True):
    if chunked:
        p.add_argument("--chunk-size", type=int, default=container.DEFAULT_CHUNK_SIZE,
                       help="chunk size in bytes (default %(default)s)")
    p.add_argument("--threads", type=int, default=_default_threads(),
                   help="worker threads for chunk coding (default: CPU count)")
    p.add_argument("--json", action="store_true", help="machine-readable report")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ztnc",
        description="Lossless compression for low-precision tensor files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="compress a tensor file into a container")
    p.add_argument("--format", required=True, choices=sorted(FORMAT_FLAGS))
    p.add_argument("--scales", help="separate scale file for FP4 formats")
    _add_common(p)
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help="restore the original bytes from a "
                       "container, model archive, or kv session stream")
    _add_common(p, chunked=False)
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_decompress)

    p = sub.add_parser("delta", help="compress a BF16 checkpoint as an XOR delta against a base")
    p.add_argument("--base", required=True)
    p.add_argument("--next", required=True)
    _add_common(p)
    p.add_argument("output")
    p.set_defaults(func=cmd_delta)

    p = sub.add_parser("apply", help="reconstruct a checkpoint from a base and a delta")
    p.add_argument("--base", required=True)
    p.add_argument("--delta", required=True)
    _add_common(p, chunked=False)
    p.add_argument("output")
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("profile", help="per-stream entropy and predicted ratios, no output file")
    p.add_argument("--format", required=True, choices=sorted(FORMAT_FLAGS))
    p.add_argument("--scales", help="separate scale file for FP4 formats")
    _add_common(p)
    p.add_argument("input")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("fp4-regroup", help="bit-regrouping experiment on an FP4 nibble payload")
    p.add_argument("--scheme", choices=FP4_SCHEMES,
                   help="treat input as a combined payload+scales file")
    p.add_argument("--json", action="store_true", help="machine-readable report")
    p.add_argument("input")
    p.set_defaults(func=cmd_fp4_regroup)

    p = sub.add_parser("kv-bench", help="synthetic kv-cache session benchmark")
    p.add_argument("--format", default="bf16", choices=sorted(KV_FORMATS))
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--elements", type=int, default=8192, help="elements per step tensor")
    p.add_argument("--distribution", default="gaussian",
                   help="gaussian | shift:K | uniform (default %(default)s)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window", type=int, default=kvcache.DEFAULT_WINDOW)
    p.add_argument("--threshold", type=float, default=kvcache.DEFAULT_THRESHOLD)
    p.add_argument("--json", action="store_true", help="machine-readable report")
    p.set_defaults(func=cmd_kv_bench)

    p = sub.add_parser("compress-model", help="compress a safetensors model into an archive")
    _add_common(p)
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_compress_model)

    p = sub.add_parser("decompress-model", help="restore the original model file from an archive")
    _add_common(p, chunked=False)
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_decompress_model)

    p = sub.add_parser("kv-encode", help="encode fixed-size step tensors as a kv session stream")
    p.add_argument("--format", required=True, choices=sorted(KV_FORMATS))
    p.add_argument("--calibration", required=True, help="file of calibration step tensors")
    p.add_argument("--step-bytes", type=int, required=True)
    p.add_argument("--window", type=int, default=kvcache.DEFAULT_WINDOW)
    p.add_argument("--threshold", type=float, default=kvcache.DEFAULT_THRESHOLD)
    p.add_argument("--json", action="store_true", help="machine-readable report")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_kv_encode)

    p = sub.add_parser("kv-decode", help="decode a kv session stream to concatenated tensors")
    p.add_argument("--json", action="store_true", help="machine-readable report")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_kv_decode)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except CorruptionError as e:
        print(f"corrupt input: {e}", file=sys.stderr)
        return 3
    except ZtncError as e:
        print(f"internal error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
