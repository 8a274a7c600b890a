/** Pixel rasters for the renderers. */

import { colormap } from "./color.js";
import { forward, inverse } from "./mollweide.js";

export interface Raster {
  width: number;
  height: number;
  rgb: Uint8Array;
}

const BACKGROUND: [number, number, number] = [255, 255, 255];

/** Heatmap of a row-major res1 x res2 field over [0,2pi)^2; theta1 runs
 * along x, theta2 along y (y grows downward). */
export function torusRaster(
  field: number[],
  res1: number,
  res2: number,
  scale = 2,
): Raster {
  const width = res1 * scale;
  const height = res2 * scale;
  const rgb = new Uint8Array(width * height * 3);
  for (let py = 0; py < height; py++) {
    const j = Math.floor(py / scale);
    for (let px = 0; px < width; px++) {
      const i = Math.floor(px / scale);
      const [r, g, b] = colormap(field[i * res2 + j]);
      const o = (py * width + px) * 3;
      rgb[o] = r;
      rgb[o + 1] = g;
      rgb[o + 2] = b;
    }
  }
  return { width, height, rgb };
}

/** Mollweide heatmap from a lookup of normalized values by (lon, colat). */
export function mollweideRaster(
  lookup: (lon: number, colat: number) => number,
  width = 480,
): Raster {
  const height = Math.round(width / 2);
  const rgb = new Uint8Array(width * height * 3);
  const sx = (2 * Math.SQRT2 * 1.005) / (width / 2);
  for (let py = 0; py < height; py++) {
    for (let px = 0; px < width; px++) {
      const x = (px - width / 2 + 0.5) * sx;
      const y = -(py - height / 2 + 0.5) * sx;
      const ll = inverse(x, y);
      let col = BACKGROUND;
      if (ll !== null) {
        const [lon, lat] = ll;
        const lonPos = lon < 0 ? lon + 2 * Math.PI : lon; // data uses [0, 2pi)
        col = colormap(lookup(lonPos, Math.PI / 2 - lat));
      }
      const o = (py * width + px) * 3;
      rgb[o] = col[0];
      rgb[o + 1] = col[1];
      rgb[o + 2] = col[2];
    }
  }
  return { width, height, rgb };
}

/** Horizontal montage with a small white gutter (for S^3 slices). */
export function montage(rasters: Raster[], gutter = 4): Raster {
  const height = Math.max(...rasters.map((r) => r.height));
  const width = rasters.reduce((acc, r) => acc + r.width, 0) + gutter * (rasters.length - 1);
  const rgb = new Uint8Array(width * height * 3).fill(255);
  let xofs = 0;
  for (const r of rasters) {
    for (let y = 0; y < r.height; y++) {
      for (let x = 0; x < r.width; x++) {
        const src = (y * r.width + x) * 3;
        const dst = (y * width + (xofs + x)) * 3;
        rgb[dst] = r.rgb[src];
        rgb[dst + 1] = r.rgb[src + 1];
        rgb[dst + 2] = r.rgb[src + 2];
      }
    }
    xofs += r.width + gutter;
  }
  return { width, height, rgb };
}

/** Nearest-cell lookup over a regular (lon, colat) grid. */
export function gridLookup(
  lons: number[],
  colats: number[],
  values: number[],
): (lon: number, colat: number) => number {
  const lonSet = Array.from(new Set(lons)).sort((a, b) => a - b);
  const colatSet = Array.from(new Set(colats)).sort((a, b) => a - b);
  const nLon = lonSet.length;
  const nColat = colatSet.length;
  const table = new Map<string, number>();
  for (let i = 0; i < values.length; i++) {
    table.set(`${lons[i]},${colats[i]}`, values[i]);
  }
  const lon0 = lonSet[0];
  const dLon = nLon > 1 ? lonSet[1] - lonSet[0] : 2 * Math.PI;
  const colat0 = colatSet[0];
  const dColat = nColat > 1 ? colatSet[1] - colatSet[0] : Math.PI;
  return (lon, colat) => {
    const i = Math.min(nLon - 1, Math.max(0, Math.round((lon - lon0) / dLon)));
    const j = Math.min(nColat - 1, Math.max(0, Math.round((colat - colat0) / dColat)));
    return table.get(`${lonSet[i]},${colatSet[j]}`) ?? 0;
  };
}

export { forward as mollweideForward };
