/** Gaussian kernel density estimates over exported samples.
 *
 * Torus samples use a periodic Gaussian kernel in angle space (one wrap in
 * each direction is ample at the default bandwidth). Sphere samples use
 * ambient-space Gaussian kernels on the unit vectors.
 */

export const DEFAULT_BANDWIDTH = 0.2;

export function torusKde(
  samples: Array<[number, number]>,
  gridTheta1: number[],
  gridTheta2: number[],
  bandwidth: number = DEFAULT_BANDWIDTH,
): number[] {
  if (samples.length === 0) {
    throw new Error("KDE needs at least one sample");
  }
  const twoPi = 2 * Math.PI;
  const inv2h2 = 1 / (2 * bandwidth * bandwidth);
  const out = new Array(gridTheta1.length).fill(0);
  for (const [s1, s2] of samples) {
    for (let i = 0; i < gridTheta1.length; i++) {
      let best = Infinity;
      for (let k1 = -1; k1 <= 1; k1++) {
        for (let k2 = -1; k2 <= 1; k2++) {
          const d1 = gridTheta1[i] - s1 + k1 * twoPi;
          const d2 = gridTheta2[i] - s2 + k2 * twoPi;
          const d = d1 * d1 + d2 * d2;
          if (d < best) best = d;
        }
      }
      out[i] += Math.exp(-best * inv2h2);
    }
  }
  const norm = samples.length * twoPi * bandwidth * bandwidth; // up to wrap terms
  return out.map((v) => v / norm);
}

export function sphereKde(
  samples: Array<[number, number, number]>,
  gridPoints: Array<[number, number, number]>,
  bandwidth: number = DEFAULT_BANDWIDTH,
): number[] {
  if (samples.length === 0) {
    throw new Error("KDE needs at least one sample");
  }
  const inv2h2 = 1 / (2 * bandwidth * bandwidth);
  const out = new Array(gridPoints.length).fill(0);
  for (const [sx, sy, sz] of samples) {
    for (let i = 0; i < gridPoints.length; i++) {
      const g = gridPoints[i];
      const dx = g[0] - sx;
      const dy = g[1] - sy;
      const dz = g[2] - sz;
      out[i] += Math.exp(-(dx * dx + dy * dy + dz * dz) * inv2h2);
    }
  }
  return out.map((v) => v / samples.length);
}
