/** Heatmap of an exported T^2 density grid.
 *
 * Usage: node dist/render_torus.js grid_t2_256.csv --out torus.png
 * Input columns: theta1, theta2, logq (radians, nats). The color scale is
 * fixed to the grid's own min/max, so output is deterministic.
 */

import { writeFileSync } from "node:fs";

import { parseArgs, requireOut } from "./args.js";
import { column, readCsv } from "./csv.js";
import { normalize } from "./color.js";
import { encodePng } from "./png.js";
import { torusRaster } from "./raster.js";

export function renderTorus(csvPath: string, outPath: string): void {
  const table = readCsv(csvPath);
  const theta1 = column(table, "theta1");
  const logq = column(table, "logq");
  const res = Math.round(Math.sqrt(logq.length));
  if (res * res !== logq.length) {
    throw new Error(`grid is not square: ${logq.length} rows`);
  }
  void theta1;
  const density = logq.map(Math.exp);
  const raster = torusRaster(normalize(density), res, res);
  writeFileSync(outPath, encodePng(raster.width, raster.height, raster.rgb));
}

const isMain = process.argv[1] !== undefined &&
  import.meta.url.endsWith(process.argv[1].split("/").pop() ?? "");
if (isMain) {
  try {
    const parsed = parseArgs(process.argv.slice(2));
    if (parsed.positional.length !== 1) {
      throw new Error("usage: render_torus <grid.csv> --out <image.png>");
    }
    renderTorus(parsed.positional[0], requireOut(parsed));
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    process.exit(1);
  }
}
