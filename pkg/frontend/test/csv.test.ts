import { describe, expect, it } from "vitest";

import { column, parseCsv } from "../src/csv.js";

describe("csv parsing", () => {
  it("parses numeric tables with a header", () => {
    const t = parseCsv("a,b\n1,2\n3.5,-4e-2\n");
    expect(t.columns).toEqual(["a", "b"]);
    expect(t.rows).toEqual([[1, 2], [3.5, -0.04]]);
  });

  it("rejects ragged rows", () => {
    expect(() => parseCsv("a,b\n1\n")).toThrow(/expected 2 fields/);
  });

  it("rejects non-numeric cells", () => {
    expect(() => parseCsv("a\nxyz\n")).toThrow(/non-numeric/);
  });

  it("reports missing columns with the schema", () => {
    const t = parseCsv("a,b\n1,2\n");
    expect(() => column(t, "logq")).toThrow(/missing column 'logq'/);
  });
});
