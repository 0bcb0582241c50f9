// Figure builders over a report bundle. Every plotted value is read from
// an artifact file; nothing is recomputed from the model.

import * as fs from "node:fs";
import * as path from "node:path";
import { column, parseCsv, Table, textColumn } from "./csv.js";
import { renderChart, renderScatter, Series } from "./svg.js";

export interface Bundle {
  dir: string;
  report?: any;
  moments?: Table;
  selfsim?: Table;
  laplace?: Table;
  ensemble?: Table;
  snapshots?: Table;
}

export function loadBundle(dir: string): Bundle {
  const bundle: Bundle = { dir };
  const jsonPath = path.join(dir, "gelation_report.json");
  if (fs.existsSync(jsonPath)) {
    bundle.report = JSON.parse(fs.readFileSync(jsonPath, "utf-8"));
  }
  for (const name of ["moments", "selfsim", "laplace", "ensemble", "snapshots"] as const) {
    const p = path.join(dir, `${name}.csv`);
    if (fs.existsSync(p)) {
      try {
        bundle[name] = parseCsv(fs.readFileSync(p, "utf-8"));
      } catch (err) {
        // unreadable artifacts degrade to a skipped figure
      }
    }
  }
  return bundle;
}

function longSeries(t: Table, name: string): { x: number[]; y: number[] } {
  const names = textColumn(t, "name");
  const ts = column(t, "t");
  const vals = column(t, "value");
  const x: number[] = [];
  const y: number[] = [];
  for (let i = 0; i < names.length; i++) {
    if (names[i] === name) {
      x.push(ts[i]);
      y.push(vals[i]);
    }
  }
  return { x, y };
}

export function momentsFigure(bundle: Bundle): string | null {
  if (!bundle.moments) return null;
  const palette: Record<string, string> = {
    m2_xx: "#1f77b4", m2_xy: "#2ca02c", m2_yy: "#9467bd",
  };
  const series: Series[] = [];
  for (const comp of ["m2_xx", "m2_xy", "m2_yy"]) {
    const lat = longSeries(bundle.moments, `lattice.${comp}`);
    const ode = longSeries(bundle.moments, `ode.${comp}`);
    if (lat.x.length === 0) continue;
    series.push({ ...lat, color: palette[comp], label: `lattice ${comp}` });
    series.push({ ...ode, color: palette[comp], label: `Riccati ${comp}`, dash: "5 4", width: 1.2 });
  }
  if (series.length === 0) return null;
  if (bundle.ensemble) {
    try {
      const t = column(bundle.ensemble, "t");
      const v = column(bundle.ensemble, "m2_yy");
      series.push({ x: t, y: v, color: "#ff7f0e", label: "MC replicas m2_yy", markers: true });
    } catch (err) {
      // ensemble without the expected column: no overlay
    }
  }
  return renderChart({
    title: "Second moments toward blow-up",
    xAxis: { label: "t" },
    yAxis: { label: "second moments", log: true },
    series,
  });
}

export function localizationFigure(bundle: Bundle): string | null {
  if (!bundle.selfsim) return null;
  const tau = column(bundle.selfsim, "tau");
  if (tau.length === 0) return null;
  const series: Series[] = [];
  const spec: [string, string, string][] = [
    ["loc_p2", "#1f77b4", "localization p=2"],
    ["loc_p3", "#2ca02c", "localization p=3"],
    ["m2_dev", "#9467bd", "|M2(F) - theta x theta|"],
    ["m3_dev", "#8c564b", "|M3(F) - c0 theta^3|"],
  ];
  for (const [name, color, label] of spec) {
    series.push({ x: tau, y: column(bundle.selfsim, name), color, label });
  }
  const l0 = column(bundle.selfsim, "loc_p2")[0];
  series.push({
    x: tau,
    y: tau.map((v) => l0 * Math.exp(-(v - tau[0]))),
    color: "#d62728", label: "e^-tau guide", dash: "3 3", width: 1.2,
  });
  return renderChart({
    title: "Localization diagnostics in self-similar variables",
    xAxis: { label: "tau" },
    yAxis: { label: "integral / deviation", log: true },
    series,
  });
}

export function laplaceFigure(bundle: Bundle): string | null {
  if (!bundle.laplace) return null;
  const tau = column(bundle.laplace, "tau");
  const rho = column(bundle.laplace, "rho");
  const dg = column(bundle.laplace, "dg_drho");
  const target = column(bundle.laplace, "target");
  if (tau.length === 0) return null;
  const taus = [...new Set(tau)].sort((a, b) => a - b);
  const chosen = [taus[0], taus[Math.floor(taus.length / 2)], taus[taus.length - 1]]
    .filter((v, i, arr) => arr.indexOf(v) === i);
  const shades = ["#c6dbef", "#6baed6", "#1f77b4"];
  const series: Series[] = chosen.map((tv, k) => {
    const x: number[] = [];
    const y: number[] = [];
    for (let i = 0; i < tau.length; i++) {
      if (tau[i] === tv) {
        x.push(rho[i]);
        y.push(dg[i]);
      }
    }
    return { x, y, color: shades[k % shades.length], label: `tau = ${tv.toFixed(2)}` };
  });
  const xt: number[] = [];
  const yt: number[] = [];
  for (let i = 0; i < tau.length; i++) {
    if (tau[i] === chosen[chosen.length - 1]) {
      xt.push(rho[i]);
      yt.push(target[i]);
    }
  }
  series.push({ x: xt, y: yt, color: "#d62728", label: "(1+2 K0 rho)^-1/2", dash: "5 4" });
  return renderChart({
    title: "Transform derivative against the limit profile",
    xAxis: { label: "rho" },
    yAxis: { label: "d/drho of the transform" },
    series,
  });
}

export function scatterFigure(bundle: Bundle): string | null {
  if (!bundle.snapshots) return null;
  const x = column(bundle.snapshots, "eta_x");
  const y = column(bundle.snapshots, "eta_y");
  const w = column(bundle.snapshots, "weight");
  if (x.length === 0) return null;
  const tau = column(bundle.snapshots, "tau")[0];
  let ray;
  const theta = bundle.report?.theta;
  if (theta && theta.length === 2) {
    ray = { dx: theta[0], dy: theta[1], label: `theta ray (${theta[0].toFixed(3)}, ${theta[1].toFixed(3)})` };
  }
  return renderScatter(
    `Rescaled support F(tau = ${tau.toFixed(2)})`,
    "eta_x", "eta_y", x, y, w, ray);
}

export interface RenderResult {
  written: string[];
  skipped: string[];
}

export function renderBundle(dir: string, outDir: string): RenderResult {
  const bundle = loadBundle(dir);
  fs.mkdirSync(outDir, { recursive: true });
  const written: string[] = [];
  const skipped: string[] = [];
  const figures: [string, string | null][] = [
    ["moments.svg", momentsFigure(bundle)],
    ["localization.svg", localizationFigure(bundle)],
    ["laplace_convergence.svg", laplaceFigure(bundle)],
    ["support_scatter.svg", scatterFigure(bundle)],
  ];
  for (const [name, svg] of figures) {
    if (svg === null) {
      skipped.push(name);
      continue;
    }
    fs.writeFileSync(path.join(outDir, name), svg, "utf-8");
    written.push(name);
  }
  fs.writeFileSync(path.join(outDir, "index.html"), indexHtml(bundle, written, skipped), "utf-8");
  return { written, skipped };
}

function indexHtml(bundle: Bundle, written: string[], skipped: string[]): string {
  const head = bundle.report
    ? `<p>gelates: <b>${bundle.report.gelates}</b> (branch ${bundle.report.branch})` +
      (bundle.report.gelates
        ? `, T* = ${bundle.report.t_star}, K0 = ${bundle.report.k0}`
        : "") + "</p>"
    : "<p>no gelation report found</p>";
  const figs = written
    .map((f) => `<figure><embed src="${f}" type="image/svg+xml"/><figcaption>${f}</figcaption></figure>`)
    .join("\n");
  const skips = skipped.length
    ? `<p>skipped (missing inputs): ${skipped.join(", ")}</p>`
    : "";
  return `<!doctype html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>rouleaux report</title>
<style>
body { font-family: Helvetica, Arial, sans-serif; margin: 2em; }
figure { margin: 1.5em 0; }
embed { border: 1px solid #cccccc; }
</style>
</head>
<body>
<h1>rouleaux simulation report</h1>
${head}
${figs}
${skips}
</body>
</html>
`;
}
