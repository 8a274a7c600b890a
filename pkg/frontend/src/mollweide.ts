/** Mollweide projection: equal-area map of the sphere into a 2:1 ellipse. */

const SQRT2 = Math.SQRT2;

/** Auxiliary angle solving 2t + sin 2t = pi sin(lat), by Newton iteration. */
export function auxiliaryAngle(lat: number): number {
  if (Math.abs(lat) > Math.PI / 2 - 1e-9) {
    return Math.sign(lat) * (Math.PI / 2);
  }
  let t = lat;
  for (let i = 0; i < 20; i++) {
    const f = 2 * t + Math.sin(2 * t) - Math.PI * Math.sin(lat);
    const df = 2 + 2 * Math.cos(2 * t);
    const step = f / df;
    t -= step;
    if (Math.abs(step) < 1e-13) break;
  }
  return t;
}

/** lon in [-pi, pi], lat in [-pi/2, pi/2] -> (x, y), |x|<=2*sqrt2, |y|<=sqrt2. */
export function forward(lon: number, lat: number): [number, number] {
  const t = auxiliaryAngle(lat);
  return [((2 * SQRT2) / Math.PI) * lon * Math.cos(t), SQRT2 * Math.sin(t)];
}

/** Inverse projection; null outside the ellipse. */
export function inverse(x: number, y: number): [number, number] | null {
  const s = y / SQRT2;
  if (Math.abs(s) > 1) return null;
  const t = Math.asin(s);
  const sinLat = (2 * t + Math.sin(2 * t)) / Math.PI;
  if (Math.abs(sinLat) > 1) return null;
  const lat = Math.asin(sinLat);
  const cosT = Math.cos(t);
  if (cosT < 1e-12) {
    return Math.abs(x) < 1e-9 ? [0, lat] : null;
  }
  const lon = (Math.PI * x) / (2 * SQRT2 * cosT);
  if (Math.abs(lon) > Math.PI) return null;
  return [lon, lat];
}
