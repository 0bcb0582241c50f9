import * as fs from "node:fs";
import * as path from "node:path";
import { describe, expect, it } from "vitest";
import { column, parseCsv, textColumn } from "../src/csv.js";

describe("csv parser", () => {
  it("skips metadata lines and parses the header", () => {
    const t = parseCsv("# scenario=x hash=abc\r\nt,name,value\r\n0.5,m0,1.25\r\n");
    expect(t.meta).toEqual(["scenario=x hash=abc"]);
    expect(t.columns).toEqual(["t", "name", "value"]);
    expect(column(t, "value")).toEqual([1.25]);
    expect(textColumn(t, "name")).toEqual(["m0"]);
  });

  it("handles quoted fields and bare newlines", () => {
    const t = parseCsv('a,b\n"x,y",2\n"he said ""hi""",3\n');
    expect(t.rows[0][0]).toBe("x,y");
    expect(t.rows[1][0]).toBe('he said "hi"');
  });

  it("raises on unknown columns", () => {
    const t = parseCsv("a,b\n1,2\n");
    expect(() => column(t, "zz")).toThrow(/not found/);
  });

  it("parses every numeric column of the fixture bundle to finite values", () => {
    const dir = path.join(__dirname, "fixtures", "case3");
    for (const name of ["moments", "selfsim", "laplace", "ensemble", "snapshots"]) {
      const t = parseCsv(fs.readFileSync(path.join(dir, `${name}.csv`), "utf-8"));
      for (const col of t.columns) {
        if (col === "name") continue;
        for (const v of column(t, col)) {
          expect(Number.isFinite(v), `${name}.${col}`).toBe(true);
        }
      }
    }
  });
});
