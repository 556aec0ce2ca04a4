/** Subprocess plumbing: every operation is one ztnc CLI invocation. */

import { execFile } from "node:child_process";
import { mkdtemp, readFile, rm, writeFile } from "node:fs/promises";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { errorFromExit } from "./errors.js";

/** Options shared by every operation. */
export interface RunOptions {
  /** ztnc executable; defaults to $ZTNC_BIN or "ztnc" on PATH. */
  bin?: string;
  /** Chunk size in bytes for compressing commands. */
  chunkSize?: number;
  /** Worker threads for chunk coding; never changes output bytes. */
  threads?: number;
}

export function resolveBin(opts?: RunOptions): string {
  return opts?.bin ?? process.env.ZTNC_BIN ?? "ztnc";
}

export function commonFlags(opts?: RunOptions, chunked = true): string[] {
  const flags: string[] = [];
  if (chunked && opts?.chunkSize !== undefined) {
    flags.push("--chunk-size", String(opts.chunkSize));
  }
  if (opts?.threads !== undefined) {
    flags.push("--threads", String(opts.threads));
  }
  return flags;
}

/** Runs ztnc and resolves with stdout, mapping exit codes to typed errors. */
export function runZtnc(args: string[], opts?: RunOptions): Promise<string> {
  return new Promise((resolve, reject) => {
    execFile(
      resolveBin(opts),
      args,
      { maxBuffer: 64 * 1024 * 1024 },
      (err, stdout, stderr) => {
        if (err === null) {
          resolve(stdout);
          return;
        }
        const code = typeof err.code === "number" ? err.code : null;
        if (code === null) {
          reject(err); // spawn failure (binary missing), not a codec error
          return;
        }
        reject(errorFromExit(code, stderr));
      },
    );
  });
}

/** Runs fn with a private scratch directory that is always cleaned up. */
export async function withTempDir<T>(fn: (dir: string) => Promise<T>): Promise<T> {
  const dir = await mkdtemp(join(tmpdir(), "ztnc-"));
  try {
    return await fn(dir);
  } finally {
    await rm(dir, { recursive: true, force: true });
  }
}

export async function writeInput(dir: string, name: string, data: Uint8Array): Promise<string> {
  const path = join(dir, name);
  await writeFile(path, data);
  return path;
}

export async function readOutput(path: string): Promise<Uint8Array> {
  return new Uint8Array(await readFile(path));
}
