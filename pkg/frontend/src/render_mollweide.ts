/** Mollweide-projection heatmap of an exported sphere density grid.
 *
 * Usage: node dist/render_mollweide.js grid_s2_400x200.csv --out sphere.png
 * S^2 input columns: longitude, colatitude, logq. An S^3 export carries an
 * extra slice_x4 column; each slice is rendered as one Mollweide panel and
 * the panels are laid out in a row.
 */

import { writeFileSync } from "node:fs";

import { parseArgs, requireOut } from "./args.js";
import { column, hasColumn, readCsv, type Table } from "./csv.js";
import { normalize } from "./color.js";
import { encodePng } from "./png.js";
import { gridLookup, mollweideRaster, montage, type Raster } from "./raster.js";

function renderOne(lon: number[], colat: number[], norm: number[], width: number): Raster {
  return mollweideRaster(gridLookup(lon, colat, norm), width);
}

export function renderMollweide(csvPath: string, outPath: string, width = 480): void {
  const table: Table = readCsv(csvPath);
  const lon = column(table, "longitude");
  const colat = column(table, "colatitude");
  const logq = column(table, "logq");
  const density = logq.map(Math.exp);
  const norm = normalize(density); // one shared scale across slices
  let raster: Raster;
  if (hasColumn(table, "slice_x4")) {
    const slice = column(table, "slice_x4");
    const values = Array.from(new Set(slice)).sort((a, b) => a - b);
    const panels = values.map((s) => {
      const keep = slice.map((v) => v === s);
      const pick = (xs: number[]) => xs.filter((_, i) => keep[i]);
      return renderOne(pick(lon), pick(colat), pick(norm), Math.round(width / 2));
    });
    raster = montage(panels);
  } else {
    raster = renderOne(lon, colat, norm, width);
  }
  writeFileSync(outPath, encodePng(raster.width, raster.height, raster.rgb));
}

const isMain = process.argv[1] !== undefined &&
  import.meta.url.endsWith(process.argv[1].split("/").pop() ?? "");
if (isMain) {
  try {
    const parsed = parseArgs(process.argv.slice(2));
    if (parsed.positional.length !== 1) {
      throw new Error("usage: render_mollweide <grid.csv> --out <image.png>");
    }
    const width = Number(parsed.flags.get("width") ?? 480);
    renderMollweide(parsed.positional[0], requireOut(parsed), width);
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    process.exit(1);
  }
}
