import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { renderKde } from "../src/render_kde.js";
import { renderMollweide } from "../src/render_mollweide.js";
import { renderTorus } from "../src/render_torus.js";

const FIXTURES = join(fileURLToPath(new URL(".", import.meta.url)), "fixtures");
const PNG_MAGIC = Buffer.from([137, 80, 78, 71]);

function outDir(): string {
  return mkdtempSync(join(tmpdir(), "figs-"));
}

function expectPng(path: string): Buffer {
  const data = readFileSync(path);
  expect(data.subarray(0, 4).equals(PNG_MAGIC)).toBe(true);
  expect(data.length).toBeGreaterThan(100);
  return data;
}

describe("renderers on real grid exports", () => {
  it("renders the identity T^2 grid (constant field smoke test)", () => {
    const out = join(outDir(), "t2.png");
    renderTorus(join(FIXTURES, "t2_identity", "grid_t2_24.csv"), out);
    expectPng(out);
  });

  it("renders a random S^2 grid in the Mollweide projection", () => {
    const out = join(outDir(), "s2.png");
    renderMollweide(join(FIXTURES, "s2_random", "grid_s2_80x40.csv"), out);
    expectPng(out);
  });

  it("renders S^3 slice exports as a montage", () => {
    const out = join(outDir(), "s3.png");
    renderMollweide(join(FIXTURES, "s3_identity", "grid_s3_slices_32x16.csv"), out);
    const png = expectPng(out);
    // five slices side by side: montage wider than a single panel
    const width = png.readUInt32BE(16);
    const height = png.readUInt32BE(20);
    expect(width).toBeGreaterThan(height * 3);
  });

  it("renders torus and sphere sample KDEs", () => {
    const dir = outDir();
    renderKde(join(FIXTURES, "t2_identity", "samples.csv"), join(dir, "kt.png"));
    expectPng(join(dir, "kt.png"));
    renderKde(join(FIXTURES, "s2_random", "samples.csv"), join(dir, "ks.png"), 0.25);
    expectPng(join(dir, "ks.png"));
  });

  it("is deterministic for fixed inputs", () => {
    const dir = outDir();
    renderTorus(join(FIXTURES, "t2_identity", "grid_t2_24.csv"), join(dir, "a.png"));
    renderTorus(join(FIXTURES, "t2_identity", "grid_t2_24.csv"), join(dir, "b.png"));
    expect(readFileSync(join(dir, "a.png")).equals(readFileSync(join(dir, "b.png")))).toBe(true);
  });

  it("rejects files with missing columns", () => {
    const dir = outDir();
    const bad = join(dir, "bad.csv");
    writeFileSync(bad, "a,b\n1,2\n");
    expect(() => renderTorus(bad, join(dir, "x.png"))).toThrow(/missing column/);
    expect(() => renderMollweide(bad, join(dir, "x.png"))).toThrow(/missing column/);
    expect(() => renderKde(bad, join(dir, "x.png"))).toThrow(/schema/);
  });

  it("rejects empty sample files", () => {
    const dir = outDir();
    const empty = join(dir, "empty.csv");
    writeFileSync(empty, "theta1,theta2,logq\n");
    expect(() => renderKde(empty, join(dir, "x.png"))).toThrow(/no samples/);
  });
});
