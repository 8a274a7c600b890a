/** Kernel density estimate image from exported samples.
 *
 * Usage: node dist/render_kde.js samples.csv --out kde.png [--bandwidth 0.2]
 * Torus samples (theta1, theta2 columns) use a periodic Gaussian kernel in
 * angle space and render as a [0,2pi)^2 heatmap. Sphere samples (x1..x3
 * unit vectors) use ambient-space Gaussian kernels and render in the
 * Mollweide projection.
 */

import { writeFileSync } from "node:fs";

import { parseArgs, requireOut } from "./args.js";
import { column, hasColumn, readCsv } from "./csv.js";
import { DEFAULT_BANDWIDTH, sphereKde, torusKde } from "./kde.js";
import { normalize } from "./color.js";
import { encodePng } from "./png.js";
import { gridLookup, mollweideRaster, torusRaster } from "./raster.js";

export function renderKde(
  csvPath: string,
  outPath: string,
  bandwidth: number = DEFAULT_BANDWIDTH,
): void {
  const table = readCsv(csvPath);
  if (table.rows.length === 0) {
    throw new Error("no samples in the CSV");
  }
  if (hasColumn(table, "theta1") && hasColumn(table, "theta2")) {
    const t1 = column(table, "theta1");
    const t2 = column(table, "theta2");
    const samples = t1.map((v, i) => [v, t2[i]] as [number, number]);
    const res = 128;
    const g1: number[] = [];
    const g2: number[] = [];
    for (let i = 0; i < res; i++) {
      for (let j = 0; j < res; j++) {
        g1.push(((i + 0.5) * 2 * Math.PI) / res);
        g2.push(((j + 0.5) * 2 * Math.PI) / res);
      }
    }
    const density = torusKde(samples, g1, g2, bandwidth);
    const raster = torusRaster(normalize(density), res, res, 4);
    writeFileSync(outPath, encodePng(raster.width, raster.height, raster.rgb));
    return;
  }
  if (hasColumn(table, "x1") && hasColumn(table, "x3") && !hasColumn(table, "x4")) {
    const xs = column(table, "x1");
    const ys = column(table, "x2");
    const zs = column(table, "x3");
    const samples = xs.map((v, i) => [v, ys[i], zs[i]] as [number, number, number]);
    const nLon = 180;
    const nLat = 90;
    const lon: number[] = [];
    const colat: number[] = [];
    const pts: Array<[number, number, number]> = [];
    for (let i = 0; i < nLon; i++) {
      for (let j = 0; j < nLat; j++) {
        const lam = ((i + 0.5) * 2 * Math.PI) / nLon;
        const psi = ((j + 0.5) * Math.PI) / nLat;
        lon.push(lam);
        colat.push(psi);
        pts.push([
          Math.sin(psi) * Math.cos(lam),
          Math.sin(psi) * Math.sin(lam),
          Math.cos(psi),
        ]);
      }
    }
    const density = sphereKde(samples, pts, bandwidth);
    const raster = mollweideRaster(gridLookup(lon, colat, normalize(density)), 480);
    writeFileSync(outPath, encodePng(raster.width, raster.height, raster.rgb));
    return;
  }
  throw new Error(
    `schema: need torus (theta1, theta2) or S^2 (x1..x3) sample columns; ` +
    `have ${table.columns.join(", ")}`,
  );
}

const isMain = process.argv[1] !== undefined &&
  import.meta.url.endsWith(process.argv[1].split("/").pop() ?? "");
if (isMain) {
  try {
    const parsed = parseArgs(process.argv.slice(2));
    if (parsed.positional.length !== 1) {
      throw new Error("usage: render_kde <samples.csv> --out <image.png> [--bandwidth 0.2]");
    }
    const bw = Number(parsed.flags.get("bandwidth") ?? DEFAULT_BANDWIDTH);
    renderKde(parsed.positional[0], requireOut(parsed), bw);
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    process.exit(1);
  }
}
