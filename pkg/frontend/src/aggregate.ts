import { CurvePoint, MetricsRow } from "./csv";

/** One x position of a line with its shaded uncertainty band. */
export interface BandPoint {
  x: number;
  center: number;
  lo: number;
  hi: number;
}

function mean(xs: number[]): number {
  return xs.reduce((a, b) => a + b, 0) / xs.length;
}

function std(xs: number[]): number {
  const m = mean(xs);
  return Math.sqrt(mean(xs.map((x) => (x - m) * (x - m))));
}

export function quantile(xs: number[], q: number): number {
  const sorted = [...xs].sort((a, b) => a - b);
  const pos = (sorted.length - 1) * q;
  const base = Math.floor(pos);
  const rest = pos - base;
  return base + 1 < sorted.length ? sorted[base] + rest * (sorted[base + 1] - sorted[base]) : sorted[base];
}

export function median(xs: number[]): number {
  return quantile(xs, 0.5);
}

/** Mean +/- one standard deviation across seeds, per setup and iteration. */
export function meanStdBands(rows: MetricsRow[], metric: string): Map<string, BandPoint[]> {
  const groups = new Map<string, Map<number, number[]>>();
  for (const row of rows) {
    const value = row.values[metric];
    if (!Number.isFinite(value)) continue;
    let perIteration = groups.get(row.setup);
    if (!perIteration) {
      perIteration = new Map();
      groups.set(row.setup, perIteration);
    }
    const bucket = perIteration.get(row.iteration) ?? [];
    bucket.push(value);
    perIteration.set(row.iteration, bucket);
  }
  const bands = new Map<string, BandPoint[]>();
  for (const setup of [...groups.keys()].sort()) {
    const perIteration = groups.get(setup)!;
    const points = [...perIteration.entries()]
      .sort((a, b) => a[0] - b[0])
      .map(([iteration, values]) => {
        const m = mean(values);
        const s = std(values);
        return { x: iteration, center: m, lo: m - s, hi: m + s };
      });
    bands.set(setup, points);
  }
  return bands;
}

/** Median accuracy with interquartile band across repetition curves. */
export function medianIqrBand(curves: CurvePoint[][]): BandPoint[] {
  const byBatch = new Map<number, number[]>();
  for (const curve of curves) {
    for (const point of curve) {
      const bucket = byBatch.get(point.batch) ?? [];
      bucket.push(point.accuracy);
      byBatch.set(point.batch, bucket);
    }
  }
  return [...byBatch.entries()]
    .sort((a, b) => a[0] - b[0])
    .map(([batch, values]) => ({
      x: batch,
      center: median(values),
      lo: quantile(values, 0.25),
      hi: quantile(values, 0.75),
    }));
}
