// Deterministic SVG chart primitives: fixed fonts, fixed precision, no
// timestamps, so re-rendering identical inputs yields identical bytes.

export interface Series {
  x: number[];
  y: number[];
  color: string;
  label: string;
  dash?: string;
  markers?: boolean;
  width?: number;
}

export interface Axis {
  label: string;
  log?: boolean;
}

export interface ChartSpec {
  title: string;
  xAxis: Axis;
  yAxis: Axis;
  series: Series[];
  width?: number;
  height?: number;
}

const W = 760;
const H = 480;
const M = { top: 44, right: 24, bottom: 56, left: 76 };

function fmt(v: number): string {
  if (!isFinite(v)) return "0";
  return Number(v.toPrecision(6)).toString();
}

function tickLabel(v: number): string {
  const a = Math.abs(v);
  if (a !== 0 && (a < 1e-3 || a >= 1e4)) return v.toExponential(1);
  return Number(v.toPrecision(4)).toString();
}

function niceTicks(lo: number, hi: number, n = 6): number[] {
  if (!(hi > lo)) return [lo];
  const span = hi - lo;
  const step0 = span / (n - 1);
  const mag = Math.pow(10, Math.floor(Math.log10(step0)));
  const norm = step0 / mag;
  const step = (norm < 1.5 ? 1 : norm < 3.5 ? 2 : norm < 7.5 ? 5 : 10) * mag;
  const first = Math.ceil(lo / step) * step;
  const out: number[] = [];
  for (let v = first; v <= hi + 1e-12 * span; v += step) out.push(v);
  return out;
}

function logTicks(lo: number, hi: number): number[] {
  const out: number[] = [];
  for (let e = Math.ceil(Math.log10(lo) - 1e-9); Math.pow(10, e) <= hi * (1 + 1e-9); e++) {
    out.push(Math.pow(10, e));
  }
  return out.length >= 2 ? out : [lo, hi];
}

export function renderChart(spec: ChartSpec): string {
  const width = spec.width ?? W;
  const height = spec.height ?? H;
  const plotW = width - M.left - M.right;
  const plotH = height - M.top - M.bottom;
  const xs = spec.series.flatMap((s) => s.x);
  const ys = spec.series.flatMap((s, i) =>
    spec.yAxis.log ? s.y.filter((v) => v > 0) : s.y);
  const xlo = Math.min(...xs);
  const xhi = Math.max(...xs);
  let ylo = Math.min(...ys);
  let yhi = Math.max(...ys);
  if (ylo === yhi) {
    ylo -= 0.5;
    yhi += 0.5;
  }
  const tx = (v: number) =>
    M.left + ((v - xlo) / (xhi - xlo || 1)) * plotW;
  const ty = (v: number) => {
    if (spec.yAxis.log) {
      const l = Math.log10(v);
      return M.top + plotH - ((l - Math.log10(ylo)) / (Math.log10(yhi) - Math.log10(ylo) || 1)) * plotH;
    }
    return M.top + plotH - ((v - ylo) / (yhi - ylo || 1)) * plotH;
  };

  const parts: string[] = [];
  parts.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}" font-family="Helvetica,Arial,sans-serif">`);
  parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);
  parts.push(`<text x="${width / 2}" y="24" text-anchor="middle" font-size="16">${spec.title}</text>`);

  const yticks = spec.yAxis.log ? logTicks(ylo, yhi) : niceTicks(ylo, yhi);
  for (const v of yticks) {
    const y = ty(v);
    if (y < M.top - 1 || y > M.top + plotH + 1) continue;
    parts.push(`<line x1="${M.left}" y1="${fmt(y)}" x2="${width - M.right}" y2="${fmt(y)}" stroke="#dddddd" stroke-width="1"/>`);
    parts.push(`<text x="${M.left - 8}" y="${fmt(y + 4)}" text-anchor="end" font-size="11">${tickLabel(v)}</text>`);
  }
  for (const v of niceTicks(xlo, xhi)) {
    const x = tx(v);
    parts.push(`<line x1="${fmt(x)}" y1="${M.top}" x2="${fmt(x)}" y2="${M.top + plotH}" stroke="#eeeeee" stroke-width="1"/>`);
    parts.push(`<text x="${fmt(x)}" y="${M.top + plotH + 18}" text-anchor="middle" font-size="11">${tickLabel(v)}</text>`);
  }
  parts.push(`<rect x="${M.left}" y="${M.top}" width="${plotW}" height="${plotH}" fill="none" stroke="#444444"/>`);
  parts.push(`<text x="${M.left + plotW / 2}" y="${height - 14}" text-anchor="middle" font-size="13">${spec.xAxis.label}</text>`);
  parts.push(`<text x="20" y="${M.top + plotH / 2}" text-anchor="middle" font-size="13" transform="rotate(-90 20 ${M.top + plotH / 2})">${spec.yAxis.label}</text>`);

  for (const s of spec.series) {
    const pts: string[] = [];
    for (let i = 0; i < s.x.length; i++) {
      if (spec.yAxis.log && !(s.y[i] > 0)) continue;
      pts.push(`${fmt(tx(s.x[i]))},${fmt(ty(s.y[i]))}`);
    }
    if (s.markers) {
      for (const p of pts) {
        const [cx, cy] = p.split(",");
        parts.push(`<circle cx="${cx}" cy="${cy}" r="3" fill="${s.color}"/>`);
      }
    } else {
      const dash = s.dash ? ` stroke-dasharray="${s.dash}"` : "";
      parts.push(`<polyline points="${pts.join(" ")}" fill="none" stroke="${s.color}" stroke-width="${s.width ?? 1.8}"${dash}/>`);
    }
  }

  // legend
  let ly = M.top + 10;
  for (const s of spec.series) {
    const lx = width - M.right - 180;
    if (s.markers) {
      parts.push(`<circle cx="${lx + 12}" cy="${ly - 4}" r="3" fill="${s.color}"/>`);
    } else {
      const dash = s.dash ? ` stroke-dasharray="${s.dash}"` : "";
      parts.push(`<line x1="${lx}" y1="${ly - 4}" x2="${lx + 24}" y2="${ly - 4}" stroke="${s.color}" stroke-width="2"${dash}/>`);
    }
    parts.push(`<text x="${lx + 30}" y="${ly}" font-size="11">${s.label}</text>`);
    ly += 16;
  }
  parts.push("</svg>");
  return parts.join("\n") + "\n";
}

export function renderScatter(title: string, xLabel: string, yLabel: string,
                              x: number[], y: number[], weights: number[],
                              ray?: { dx: number; dy: number; label: string }): string {
  const width = W;
  const height = H;
  const plotW = width - M.left - M.right;
  const plotH = height - M.top - M.bottom;
  const xhi = Math.max(...x, 1e-12);
  const yhi = Math.max(...y, 1e-12);
  const hi = Math.max(xhi, yhi) * 1.05;
  const tx = (v: number) => M.left + (v / hi) * plotW;
  const ty = (v: number) => M.top + plotH - (v / hi) * plotH;
  const wmax = Math.max(...weights, 1e-300);
  const parts: string[] = [];
  parts.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}" font-family="Helvetica,Arial,sans-serif">`);
  parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);
  parts.push(`<text x="${width / 2}" y="24" text-anchor="middle" font-size="16">${title}</text>`);
  for (const v of niceTicks(0, hi)) {
    parts.push(`<line x1="${fmt(tx(v))}" y1="${M.top}" x2="${fmt(tx(v))}" y2="${M.top + plotH}" stroke="#eeeeee"/>`);
    parts.push(`<text x="${fmt(tx(v))}" y="${M.top + plotH + 18}" text-anchor="middle" font-size="11">${tickLabel(v)}</text>`);
    parts.push(`<line x1="${M.left}" y1="${fmt(ty(v))}" x2="${width - M.right}" y2="${fmt(ty(v))}" stroke="#eeeeee"/>`);
    parts.push(`<text x="${M.left - 8}" y="${fmt(ty(v) + 4)}" text-anchor="end" font-size="11">${tickLabel(v)}</text>`);
  }
  parts.push(`<rect x="${M.left}" y="${M.top}" width="${plotW}" height="${plotH}" fill="none" stroke="#444444"/>`);
  parts.push(`<text x="${M.left + plotW / 2}" y="${height - 14}" text-anchor="middle" font-size="13">${xLabel}</text>`);
  parts.push(`<text x="20" y="${M.top + plotH / 2}" text-anchor="middle" font-size="13" transform="rotate(-90 20 ${M.top + plotH / 2})">${yLabel}</text>`);
  if (ray) {
    const s = hi / Math.max(ray.dx, ray.dy);
    parts.push(`<line x1="${fmt(tx(0))}" y1="${fmt(ty(0))}" x2="${fmt(tx(ray.dx * s))}" y2="${fmt(ty(ray.dy * s))}" stroke="#d62728" stroke-width="2" stroke-dasharray="6 4"/>`);
    parts.push(`<text x="${width - M.right - 180}" y="${M.top + 10}" font-size="11" fill="#d62728">${ray.label}</text>`);
  }
  for (let i = 0; i < x.length; i++) {
    const rel = weights[i] / wmax;
    if (rel <= 0) continue;
    // area encodes weight on a log scale over 12 decades
    const r = Math.max(0.6, 3.4 + 0.28 * Math.log10(Math.max(rel, 1e-12)));
    parts.push(`<circle cx="${fmt(tx(x[i]))}" cy="${fmt(ty(y[i]))}" r="${fmt(r)}" fill="#1f77b4" fill-opacity="0.45"/>`);
  }
  parts.push("</svg>");
  return parts.join("\n") + "\n";
}
