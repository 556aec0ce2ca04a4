/** Error taxonomy mirroring the CLI exit-code contract. */

export class ZtncError extends Error {
  /** Exit code reported by the ztnc process. */
  readonly exitCode: number;
  /** Raw stderr from the process, including the error detail line. */
  readonly stderr: string;

  constructor(message: string, exitCode: number, stderr: string) {
    super(message);
    this.name = new.target.name;
    this.exitCode = exitCode;
    this.stderr = stderr;
  }
}

/** Exit code 2: bad arguments or input that does not match its declared format. */
export class UsageError extends ZtncError {}

/** Exit code 3: compressed data failed validation (checksums, framing, truncation). */
export class CorruptionError extends ZtncError {}

/** Exit code 1: unexpected failure inside the codec. */
export class InternalError extends ZtncError {}

export function errorFromExit(code: number, stderr: string): ZtncError {
  const detail = stderr.trim().split("\n").pop() ?? `ztnc exited with ${code}`;
  switch (code) {
    case 2:
      return new UsageError(detail, code, stderr);
    case 3:
      return new CorruptionError(detail, code, stderr);
    default:
      return new InternalError(detail, code, stderr);
  }
}
