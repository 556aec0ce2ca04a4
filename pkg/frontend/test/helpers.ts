/** Deterministic fuzz-input generators for the test suite. */

export type Rng = () => number;

/** mulberry32: tiny seedable PRNG, uniform in [0, 1). */
export function mulberry32(seed: number): Rng {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function randInt(rng: Rng, lo: number, hi: number): number {
  return lo + Math.floor(rng() * (hi - lo));
}

export function uniformBytes(rng: Rng, n: number): Uint8Array {
  const out = new Uint8Array(n);
  for (let i = 0; i < n; i++) {
    out[i] = randInt(rng, 0, 256);
  }
  return out;
}

/** Bytes drawn from a small alphabet; compresses like real tensor streams.
 * Pass `symbols` to keep several draws on one distribution. */
export function skewedBytes(
  rng: Rng,
  n: number,
  alphabet = 5,
  symbols?: Uint8Array,
): Uint8Array {
  const syms = symbols ?? uniformBytes(rng, alphabet);
  const out = new Uint8Array(n);
  for (let i = 0; i < n; i++) {
    // zipf-flavored: symbol k with weight 1/(k+1)
    let r = rng() * harmonic(syms.length);
    let k = 0;
    while (r > 1 / (k + 1) && k < syms.length - 1) {
      r -= 1 / (k + 1);
      k++;
    }
    out[i] = syms[k];
  }
  return out;
}

function harmonic(k: number): number {
  let h = 0;
  for (let i = 1; i <= k; i++) {
    h += 1 / i;
  }
  return h;
}

/** A combined FP4 payload: whole blocks of packed nibbles plus scales. */
export function combinedFp4(rng: Rng, scheme: "mxfp4" | "nvfp4", blocks: number): Uint8Array {
  const perBlock = scheme === "mxfp4" ? 17 : 9;
  return uniformBytes(rng, blocks * perBlock);
}
