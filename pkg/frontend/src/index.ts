/**
 * Typed client for the ztnc CLI.
 *
 * Each call shells out to the `ztnc` executable, so outputs are
 * byte-identical to what the CLI writes for the same inputs and settings;
 * this package contains no codec logic of its own. Inputs are owned
 * Uint8Arrays, results are freshly allocated buffers, and CLI failures
 * surface as typed errors (UsageError, CorruptionError, InternalError).
 */

import { join } from "node:path";

import {
  RunOptions,
  commonFlags,
  readOutput,
  runZtnc,
  withTempDir,
  writeInput,
} from "./cli.js";

export {
  CorruptionError,
  InternalError,
  UsageError,
  ZtncError,
} from "./errors.js";
export type { RunOptions } from "./cli.js";

/** Pinned to the core package version. */
export const VERSION = "0.1.0";

export type TensorFormat = "bf16" | "fp8-e4m3" | "fp8-e5m2";
export type Fp4Scheme = "mxfp4" | "nvfp4";
export type KvFormat = "bf16" | "fp8-e4m3";

/** Per-stream entry of a compression report (CLI `--json` field names). */
export interface StreamReport {
  kind: string;
  original_bytes: number;
  compressed_bytes: number;
  ratio: number;
  entropy_bits_per_symbol: number;
  top_symbols: [number, number][];
  chunks_raw: number;
  chunks_huffman: number;
}

export interface CompressionReport {
  format: string;
  element_count: number;
  original_bytes: number;
  compressed_bytes: number;
  overhead_bytes: number;
  total_ratio: number;
  streams: StreamReport[];
}

export interface CompressResult {
  /** The container bytes, exactly as the CLI writes them. */
  data: Uint8Array;
  report: CompressionReport;
}

async function compressFile(
  format: string,
  input: Uint8Array,
  opts?: RunOptions,
  scales?: Uint8Array,
): Promise<CompressResult> {
  return withTempDir(async (dir) => {
    const src = await writeInput(dir, "input.bin", input);
    const out = join(dir, "output.ztnc");
    const args = ["compress", "--format", format, "--json"];
    if (scales !== undefined) {
      args.push("--scales", await writeInput(dir, "input.scales", scales));
    }
    args.push(...commonFlags(opts), src, out);
    const stdout = await runZtnc(args, opts);
    return { data: await readOutput(out), report: JSON.parse(stdout) };
  });
}

/** Compresses a raw tensor dump of the given format into a container. */
export function compressTensor(
  data: Uint8Array,
  format: TensorFormat,
  opts?: RunOptions,
): Promise<CompressResult> {
  return compressFile(format, data, opts);
}

/**
 * Compresses an FP4 tensor. Without `scales`, `data` is the combined
 * layout (packed nibbles followed by one scale byte per block); with
 * `scales`, `data` holds only the packed nibbles.
 */
export function compressFp4(
  data: Uint8Array,
  scheme: Fp4Scheme,
  opts?: RunOptions & { scales?: Uint8Array },
): Promise<CompressResult> {
  return compressFile(scheme, data, opts, opts?.scales);
}

/** Restores the original bytes of a container, model archive, or session stream. */
export function decompressTensor(
  blob: Uint8Array,
  opts?: RunOptions,
): Promise<Uint8Array> {
  return withTempDir(async (dir) => {
    const src = await writeInput(dir, "input.ztnc", blob);
    const out = join(dir, "output.bin");
    await runZtnc(
      ["decompress", ...commonFlags(opts, false), src, out],
      opts,
    );
    return readOutput(out);
  });
}

/** Compresses a BF16 checkpoint as an XOR delta against a base checkpoint. */
export function compressDelta(
  base: Uint8Array,
  next: Uint8Array,
  opts?: RunOptions,
): Promise<CompressResult> {
  return withTempDir(async (dir) => {
    const basePath = await writeInput(dir, "base.bin", base);
    const nextPath = await writeInput(dir, "next.bin", next);
    const out = join(dir, "output.delta");
    const stdout = await runZtnc(
      [
        "delta",
        "--base",
        basePath,
        "--next",
        nextPath,
        "--json",
        ...commonFlags(opts),
        out,
      ],
      opts,
    );
    return { data: await readOutput(out), report: JSON.parse(stdout) };
  });
}

/** Reconstructs a checkpoint from its base and a delta container. */
export function applyDelta(
  base: Uint8Array,
  delta: Uint8Array,
  opts?: RunOptions,
): Promise<Uint8Array> {
  return withTempDir(async (dir) => {
    const basePath = await writeInput(dir, "base.bin", base);
    const deltaPath = await writeInput(dir, "step.delta", delta);
    const out = join(dir, "output.bin");
    await runZtnc(
      [
        "apply",
        "--base",
        basePath,
        "--delta",
        deltaPath,
        ...commonFlags(opts, false),
        out,
      ],
      opts,
    );
    return readOutput(out);
  });
}

/** Per-stream entropy and predicted ratios without writing a container. */
export function profile(
  data: Uint8Array,
  format: TensorFormat | Fp4Scheme,
  opts?: RunOptions & { scales?: Uint8Array },
): Promise<CompressionReport> {
  return withTempDir(async (dir) => {
    const src = await writeInput(dir, "input.bin", data);
    const args = ["profile", "--format", format, "--json"];
    if (opts?.scales !== undefined) {
      args.push("--scales", await writeInput(dir, "input.scales", opts.scales));
    }
    args.push(...commonFlags(opts), src);
    return JSON.parse(await runZtnc(args, opts));
  });
}

export interface KvSessionOptions extends RunOptions {
  /** Sliding window length for drift monitoring. */
  window?: number;
  /** Rebuild once the window mean exceeds baseline + threshold. */
  threshold?: number;
}

export interface KvEncodeResult {
  /** The self-contained session stream. */
  stream: Uint8Array;
  steps: number;
  /** Realized per-step compression ratios. */
  ratios: number[];
  /** Step indices that triggered a codebook rebuild. */
  rebuildSteps: number[];
  /** Predicted ratio of the calibration dictionaries. */
  baselineRatio: number;
}

/**
 * A kv-cache encoding session over fixed-size step tensors.
 *
 * Steps are accumulated and encoded in one `kv-encode` run, which builds
 * the dictionaries from the calibration batch, reuses them across steps,
 * and rebuilds them in-stream when the monitored ratio drifts. Every
 * tensor (calibration and steps) must have the same byte length.
 */
export class KvSession {
  readonly format: KvFormat;
  readonly stepBytes: number;
  private readonly calibration: Uint8Array[];
  private readonly steps: Uint8Array[] = [];
  private readonly opts?: KvSessionOptions;

  constructor(format: KvFormat, calibration: Uint8Array[], opts?: KvSessionOptions) {
    if (calibration.length === 0) {
      throw new RangeError("calibration batch is empty");
    }
    this.format = format;
    this.stepBytes = calibration[0].length;
    for (const t of calibration) {
      this.checkLength(t, "calibration tensor");
    }
    this.calibration = calibration.slice();
    this.opts = opts;
  }

  private checkLength(t: Uint8Array, what: string) {
    if (t.length !== this.stepBytes) {
      throw new RangeError(
        `${what} has ${t.length} bytes, session uses ${this.stepBytes}`,
      );
    }
  }

  /** Queues one step tensor for encoding. */
  addStep(tensor: Uint8Array): void {
    this.checkLength(tensor, "step tensor");
    this.steps.push(tensor);
  }

  /** Encodes all queued steps into a session stream. */
  encode(): Promise<KvEncodeResult> {
    return withTempDir(async (dir) => {
      const calPath = await writeInput(dir, "calib.bin", concat(this.calibration));
      const inPath = await writeInput(dir, "steps.bin", concat(this.steps));
      const out = join(dir, "session.ztns");
      const args = [
        "kv-encode",
        "--format",
        this.format,
        "--calibration",
        calPath,
        "--step-bytes",
        String(this.stepBytes),
        "--json",
      ];
      if (this.opts?.window !== undefined) {
        args.push("--window", String(this.opts.window));
      }
      if (this.opts?.threshold !== undefined) {
        args.push("--threshold", String(this.opts.threshold));
      }
      args.push(inPath, out);
      const rep = JSON.parse(await runZtnc(args, this.opts));
      return {
        stream: await readOutput(out),
        steps: rep.steps,
        ratios: rep.ratios,
        rebuildSteps: rep.rebuild_steps,
        baselineRatio: rep.baseline_ratio,
      };
    });
  }
}

/**
 * Decodes a session stream back into its step tensors, in encode order.
 * Streams from {@link KvSession} always use one step size; mixed-size
 * streams cannot be split through the file interface and are rejected.
 */
export function decodeSession(
  stream: Uint8Array,
  opts?: RunOptions,
): Promise<Uint8Array[]> {
  return withTempDir(async (dir) => {
    const src = await writeInput(dir, "session.ztns", stream);
    const out = join(dir, "steps.bin");
    const rep = JSON.parse(
      await runZtnc(["kv-decode", "--json", src, out], opts),
    );
    const data = await readOutput(out);
    if (rep.steps === 0) {
      return [];
    }
    if (rep.output_bytes % rep.steps !== 0) {
      throw new RangeError("session holds mixed step sizes");
    }
    const stepBytes = rep.output_bytes / rep.steps;
    const steps: Uint8Array[] = [];
    for (let i = 0; i < rep.steps; i++) {
      steps.push(data.slice(i * stepBytes, (i + 1) * stepBytes));
    }
    return steps;
  });
}

function concat(parts: Uint8Array[]): Uint8Array {
  let total = 0;
  for (const p of parts) {
    total += p.length;
  }
  const out = new Uint8Array(total);
  let off = 0;
  for (const p of parts) {
    out.set(p, off);
    off += p.length;
  }
  return out;
}
