// CLI: render <artifact-dir> [--out <figures-dir>]
// Missing optional artifacts degrade to a subset of figures (exit 0);
// only a missing input directory is an error.

import * as fs from "node:fs";
import * as path from "node:path";
import { renderBundle } from "./figures.js";

function main(argv: string[]): number {
  const args = argv.slice(2);
  if (args.length < 1 || args[0] === "--help") {
    console.error("usage: render <artifact-dir> [--out <figures-dir>]");
    return args[0] === "--help" ? 0 : 2;
  }
  const dir = args[0];
  let out = path.join(dir, "figures");
  for (let i = 1; i < args.length; i++) {
    if (args[i] === "--out" && args[i + 1]) {
      out = args[i + 1];
      i++;
    } else {
      console.error(`unknown argument: ${args[i]}`);
      return 2;
    }
  }
  if (!fs.existsSync(dir) || !fs.statSync(dir).isDirectory()) {
    console.error(`not a directory: ${dir}`);
    return 2;
  }
  const result = renderBundle(dir, out);
  console.log(`wrote ${result.written.length} figures + index.html to ${out}`);
  if (result.skipped.length) {
    console.log(`skipped: ${result.skipped.join(", ")}`);
  }
  return 0;
}

process.exit(main(process.argv));
