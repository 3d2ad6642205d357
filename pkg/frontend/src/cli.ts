#!/usr/bin/env node

import fs from "fs";
import path from "path";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { medianIqrBand, meanStdBands } from "./aggregate";
import { frozenFigureOption, metricsFigureOption, renderChart } from "./charts";
import { CsvFormatError, parseCurveCsv, parseMetricsCsv } from "./csv";
import { DEFAULT_FIGURES, figuresByName } from "./figures";

function writeFigure(outDir: string, name: string, rendered: { svg: string; png: Buffer }) {
  fs.writeFileSync(path.join(outDir, `${name}.svg`), rendered.svg);
  fs.writeFileSync(path.join(outDir, `${name}.png`), rendered.png);
  console.log(`wrote ${path.join(outDir, name)}.{svg,png}`);
}

function plotMetrics(csvPath: string, outDir: string, figureNames?: string[]) {
  const rows = parseMetricsCsv(fs.readFileSync(csvPath, "utf8"), csvPath);
  const specs = figureNames && figureNames.length > 0 ? figuresByName(figureNames) : DEFAULT_FIGURES;
  for (const spec of specs) {
    const groups = meanStdBands(rows, spec.metric);
    if (groups.size === 0) {
      throw new CsvFormatError(`${csvPath}: no finite values for metric '${spec.metric}'`);
    }
    writeFigure(outDir, spec.file, renderChart(metricsFigureOption(spec, groups)));
  }
}

function plotFrozen(inDir: string, outDir: string) {
  const armsPath = path.join(inDir, "arms.json");
  const arms: Record<string, string[]> = JSON.parse(fs.readFileSync(armsPath, "utf8"));
  const groups = new Map<string, ReturnType<typeof medianIqrBand>>();
  for (const arm of Object.keys(arms).sort()) {
    const curves = arms[arm].map((rel) => {
      const file = path.join(inDir, rel);
      if (!fs.existsSync(file)) {
        throw new Error(`arm '${arm}': missing curve file ${file}`);
      }
      return parseCurveCsv(fs.readFileSync(file, "utf8"), file);
    });
    if (curves.length === 0) {
      throw new Error(`arm '${arm}' has no repetition curves`);
    }
    groups.set(arm, medianIqrBand(curves));
  }
  writeFigure(outDir, "frozen_accuracy", renderChart(frozenFigureOption(groups)));
}

export function main(argv: string[]): number {
  const args = yargs(argv)
    .usage("lte-plot --in DIR --out DIR [--figures LIST]")
    .option("in", {
      alias: "i",
      type: "string",
      demandOption: true,
      describe: "run directory (metrics.csv and/or arms.json) or a metrics CSV file",
    })
    .option("out", { alias: "o", type: "string", demandOption: true, describe: "output directory" })
    .option("figures", {
      type: "string",
      describe: `comma-separated subset of: ${DEFAULT_FIGURES.map((f) => f.file).join(",")}`,
    })
    .strict()
    .help()
    .parseSync();

  const input = args.in;
  const outDir = args.out;
  try {
    fs.mkdirSync(outDir, { recursive: true });
    const figureNames = args.figures
      ? args.figures.split(",").map((s) => s.trim()).filter((s) => s.length > 0)
      : undefined;

    let plotted = false;
    if (fs.statSync(input).isDirectory()) {
      const metricsCsv = path.join(input, "metrics.csv");
      if (fs.existsSync(metricsCsv)) {
        plotMetrics(metricsCsv, outDir, figureNames);
        plotted = true;
      }
      if (fs.existsSync(path.join(input, "arms.json"))) {
        plotFrozen(input, outDir);
        plotted = true;
      }
      if (!plotted) {
        throw new Error(`${input}: found neither metrics.csv nor arms.json`);
      }
    } else {
      plotMetrics(input, outDir, figureNames);
    }
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 2;
  }
  return 0;
}

if (require.main === module) {
  process.exit(main(hideBin(process.argv)));
}
