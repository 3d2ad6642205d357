import Papa from "papaparse";

/** Column order produced by the simulator's metrics logger. */
export const METRICS_COLUMNS = [
  "iteration",
  "setup",
  "seed",
  "accuracy",
  "loss",
  "avg_entropy",
  "avg_convergence",
  "jaccard",
  "match_rate",
  "unique_proportion",
  "unique_messages",
  "topo_sim",
] as const;

export type MetricColumn = (typeof METRICS_COLUMNS)[number];

export interface MetricsRow {
  iteration: number;
  setup: string;
  seed: number;
  values: Record<string, number>;
}

export interface CurvePoint {
  batch: number;
  accuracy: number;
  loss: number;
}

export class CsvFormatError extends Error {}

export function parseMetricsCsv(text: string, source = "metrics.csv"): MetricsRow[] {
  const parsed = Papa.parse<Record<string, string>>(text.trim(), {
    header: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    throw new CsvFormatError(`${source}: ${parsed.errors[0].message} (row ${parsed.errors[0].row})`);
  }
  const header = parsed.meta.fields ?? [];
  for (const column of METRICS_COLUMNS) {
    if (!header.includes(column)) {
      throw new CsvFormatError(`${source}: missing column '${column}'`);
    }
  }
  if (parsed.data.length === 0) {
    throw new CsvFormatError(`${source}: no data rows`);
  }
  return parsed.data.map((raw, i) => {
    const values: Record<string, number> = {};
    for (const column of METRICS_COLUMNS) {
      if (column === "setup") continue;
      const v = Number(raw[column]);
      if (!Number.isFinite(v) && column !== "avg_convergence") {
        throw new CsvFormatError(`${source}: row ${i + 1}: '${column}' is not a number: ${raw[column]}`);
      }
      values[column] = v;
    }
    return {
      iteration: values.iteration,
      setup: raw.setup,
      seed: values.seed,
      values,
    };
  });
}

export function parseCurveCsv(text: string, source = "curve.csv"): CurvePoint[] {
  const parsed = Papa.parse<Record<string, string>>(text.trim(), {
    header: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    throw new CsvFormatError(`${source}: ${parsed.errors[0].message}`);
  }
  const header = parsed.meta.fields ?? [];
  for (const column of ["batch", "accuracy", "loss"]) {
    if (!header.includes(column)) {
      throw new CsvFormatError(`${source}: missing column '${column}'`);
    }
  }
  return parsed.data.map((raw) => ({
    batch: Number(raw.batch),
    accuracy: Number(raw.accuracy),
    loss: Number(raw.loss),
  }));
}
