import * as echarts from "echarts";
import { Resvg } from "@resvg/resvg-js";

import { BandPoint } from "./aggregate";
import { FigureSpec } from "./figures";

const WIDTH = 900;
const HEIGHT = 560;

// fixed palette so re-renders are pixel-stable
const PALETTE = ["#c23531", "#2f4554", "#61a0a8", "#d48265", "#91c7ae", "#749f83", "#ca8622"];

export interface Rendered {
  svg: string;
  png: Buffer;
}

function bandSeries(name: string, points: BandPoint[], color: string): echarts.SeriesOption[] {
  const lower = points.map((p) => [p.x, p.lo]);
  const width = points.map((p) => [p.x, p.hi - p.lo]);
  const center = points.map((p) => [p.x, p.center]);
  return [
    {
      name: `${name}-band-lo`,
      type: "line",
      data: lower,
      stack: `${name}-band`,
      lineStyle: { opacity: 0 },
      symbol: "none",
      silent: true,
      tooltip: { show: false },
    },
    {
      name: `${name}-band`,
      type: "line",
      data: width,
      stack: `${name}-band`,
      lineStyle: { opacity: 0 },
      areaStyle: { color, opacity: 0.18 },
      symbol: "none",
      silent: true,
      tooltip: { show: false },
    },
    {
      name,
      type: "line",
      data: center,
      itemStyle: { color },
      lineStyle: { color, width: 2 },
      symbol: "circle",
      symbolSize: 3,
    },
  ];
}

export function bandedLineOption(
  title: string,
  xLabel: string,
  yLabel: string,
  groups: Map<string, BandPoint[]>,
  referenceLine?: { value: number; label: string },
): echarts.EChartsOption {
  const series: echarts.SeriesOption[] = [];
  const names = [...groups.keys()];
  names.forEach((name, i) => {
    series.push(...bandSeries(name, groups.get(name)!, PALETTE[i % PALETTE.length]));
  });
  const yAxis: any = { type: "value", name: yLabel, nameLocation: "middle", nameGap: 45, scale: true };
  if (referenceLine && series.length > 0) {
    (series[series.length - 1] as any).markLine = {
      silent: true,
      symbol: "none",
      label: { formatter: referenceLine.label, position: "insideEndTop" },
      lineStyle: { color: "#555", type: "dashed" },
      data: [{ yAxis: referenceLine.value }],
    };
    // keep the reference visible even when every curve sits far below it
    yAxis.max = (extent: { max: number }) => Math.max(extent.max, referenceLine.value * 1.08);
  }
  return {
    animation: false,
    backgroundColor: "#ffffff",
    title: { text: title, left: "center" },
    legend: { data: names, bottom: 0 },
    grid: { left: 70, right: 30, top: 60, bottom: 70 },
    xAxis: { type: "value", name: xLabel, nameLocation: "middle", nameGap: 30 },
    yAxis,
    series,
  };
}

export function metricsFigureOption(spec: FigureSpec, groups: Map<string, BandPoint[]>): echarts.EChartsOption {
  return bandedLineOption(spec.title, "iteration", spec.yLabel, groups, spec.referenceLine);
}

export function frozenFigureOption(groups: Map<string, BandPoint[]>): echarts.EChartsOption {
  return bandedLineOption(
    "Receiver accuracy against frozen and from-scratch senders",
    "batch",
    "accuracy",
    groups,
  );
}

export function renderChart(option: echarts.EChartsOption): Rendered {
  const chart = echarts.init(null as any, null, {
    renderer: "svg",
    ssr: true,
    width: WIDTH,
    height: HEIGHT,
  });
  try {
    chart.setOption(option);
    const svg = normalizeSvgIds(chart.renderToSVGString());
    const png = new Resvg(svg, { fitTo: { mode: "width", value: WIDTH } }).render().asPng();
    return { svg, png };
  } finally {
    chart.dispose();
  }
}

/** Strip echarts' process-global counters so equal inputs give equal bytes. */
export function normalizeSvgIds(svg: string): string {
  let out = svg.replace(/zr\d+-/g, "zr-");
  const seen = new Map<string, string>();
  out = out.replace(/zr-cls-(\d+)/g, (match) => {
    let mapped = seen.get(match);
    if (!mapped) {
      mapped = `zr-cls-${seen.size}`;
      seen.set(match, mapped);
    }
    return mapped;
  });
  return out;
}
