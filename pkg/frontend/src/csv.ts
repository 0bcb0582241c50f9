// Reader for the simulator's CSV artifacts: RFC-4180 bodies preceded by
// '#'-prefixed metadata lines. Values in these files are plain numerics
// and bare strings (no quoting is ever emitted), but quoted fields are
// accepted for robustness.

export interface Table {
  meta: string[];
  columns: string[];
  rows: string[][];
}

function splitLine(line: string): string[] {
  const out: string[] = [];
  let cur = "";
  let quoted = false;
  for (let i = 0; i < line.length; i++) {
    const ch = line[i];
    if (quoted) {
      if (ch === '"') {
        if (line[i + 1] === '"') {
          cur += '"';
          i++;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch === '"') {
      quoted = true;
    } else if (ch === ",") {
      out.push(cur);
      cur = "";
    } else {
      cur += ch;
    }
  }
  out.push(cur);
  return out;
}

export function parseCsv(text: string): Table {
  const meta: string[] = [];
  let columns: string[] = [];
  const rows: string[][] = [];
  for (const raw of text.split(/\r\n|\n/)) {
    if (!raw) continue;
    if (raw.startsWith("#")) {
      meta.push(raw.slice(1).trim());
      continue;
    }
    if (columns.length === 0) {
      columns = splitLine(raw);
      continue;
    }
    rows.push(splitLine(raw));
  }
  return { meta, columns, rows };
}

export function column(table: Table, name: string): number[] {
  const k = table.columns.indexOf(name);
  if (k < 0) throw new Error(`column ${name} not found in [${table.columns}]`);
  return table.rows.map((r) => Number(r[k]));
}

export function textColumn(table: Table, name: string): string[] {
  const k = table.columns.indexOf(name);
  if (k < 0) throw new Error(`column ${name} not found in [${table.columns}]`);
  return table.rows.map((r) => r[k]);
}
