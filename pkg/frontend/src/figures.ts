/** What to draw for one metric figure. */
export interface FigureSpec {
  metric: string;
  title: string;
  yLabel: string;
  file: string;
  /** Horizontal reference, e.g. the 162 fully-compositional message count. */
  referenceLine?: { value: number; label: string };
}

export const SYMBOLIC_REFERENCE_MESSAGES = 162;

export const DEFAULT_FIGURES: FigureSpec[] = [
  { metric: "accuracy", title: "Average population accuracy", yLabel: "accuracy", file: "accuracy" },
  { metric: "loss", title: "Average population loss", yLabel: "loss", file: "loss" },
  { metric: "avg_entropy", title: "Average agent entropy", yLabel: "entropy (nats)", file: "entropy" },
  { metric: "avg_convergence", title: "Average population convergence", yLabel: "convergence", file: "convergence" },
  { metric: "jaccard", title: "Token-set similarity", yLabel: "Jaccard similarity", file: "jaccard" },
  { metric: "match_rate", title: "Proportion of message matches", yLabel: "match rate", file: "match_rate" },
  {
    metric: "unique_proportion",
    title: "Proportion of unique messages per input",
    yLabel: "unique proportion",
    file: "unique_proportion",
  },
  {
    metric: "unique_messages",
    title: "Unique messages per sender",
    yLabel: "unique messages",
    file: "unique_messages",
    referenceLine: { value: SYMBOLIC_REFERENCE_MESSAGES, label: "symbolic reference (162)" },
  },
  { metric: "topo_sim", title: "Topographic similarity", yLabel: "Pearson rho", file: "topo_sim" },
];

export function figuresByName(names: string[]): FigureSpec[] {
  const known = new Map(DEFAULT_FIGURES.map((f) => [f.file, f]));
  return names.map((name) => {
    const spec = known.get(name);
    if (!spec) {
      throw new Error(`unknown figure '${name}' (available: ${[...known.keys()].join(", ")})`);
    }
    return spec;
  });
}
