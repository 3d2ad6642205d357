import { afterAll, describe, expect, it } from "vitest";
import fs from "fs";
import os from "os";
import path from "path";

import { main } from "../src/cli";
import { DEFAULT_FIGURES } from "../src/figures";

const SAMPLE_DIR = path.join(__dirname, "..", "sample");
const tmpDirs: string[] = [];

function tmpDir(): string {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "lte-plot-"));
  tmpDirs.push(dir);
  return dir;
}

afterAll(() => {
  for (const dir of tmpDirs) fs.rmSync(dir, { recursive: true, force: true });
});

describe("lte-plot CLI", () => {
  it("renders every default figure from the bundled sample", () => {
    const out = tmpDir();
    const code = main(["--in", path.join(SAMPLE_DIR, "metrics.csv"), "--out", out]);
    expect(code).toBe(0);
    for (const spec of DEFAULT_FIGURES) {
      const svg = path.join(out, `${spec.file}.svg`);
      const png = path.join(out, `${spec.file}.png`);
      expect(fs.existsSync(svg), svg).toBe(true);
      expect(fs.existsSync(png), png).toBe(true);
      expect(fs.statSync(png).size).toBeGreaterThan(1000);
    }
  }, 60000);

  it("draws the 162-message reference line", () => {
    const out = tmpDir();
    const code = main([
      "--in", path.join(SAMPLE_DIR, "metrics.csv"),
      "--out", out,
      "--figures", "unique_messages",
    ]);
    expect(code).toBe(0);
    const svg = fs.readFileSync(path.join(out, "unique_messages.svg"), "utf8");
    expect(svg).toContain("symbolic reference (162)");
    expect(fs.existsSync(path.join(out, "accuracy.svg"))).toBe(false); // subset only
  }, 30000);

  it("is deterministic for fixed inputs", () => {
    const a = tmpDir();
    const b = tmpDir();
    main(["--in", path.join(SAMPLE_DIR, "metrics.csv"), "--out", a, "--figures", "accuracy"]);
    main(["--in", path.join(SAMPLE_DIR, "metrics.csv"), "--out", b, "--figures", "accuracy"]);
    expect(fs.readFileSync(path.join(a, "accuracy.svg"), "utf8"))
      .toBe(fs.readFileSync(path.join(b, "accuracy.svg"), "utf8"));
    expect(fs.readFileSync(path.join(a, "accuracy.png")))
      .toEqual(fs.readFileSync(path.join(b, "accuracy.png")));
  }, 30000);

  it("fails with a named error on an unknown figure", () => {
    const out = tmpDir();
    const code = main(["--in", path.join(SAMPLE_DIR, "metrics.csv"), "--out", out, "--figures", "nope"]);
    expect(code).toBe(2);
  });

  it("renders the frozen figure from arm curve files", () => {
    const inDir = tmpDir();
    const out = tmpDir();
    const arms: Record<string, string[]> = {};
    for (const arm of ["frozen-co", "co-baseline"]) {
      fs.mkdirSync(path.join(inDir, arm));
      arms[arm] = [];
      for (let rep = 0; rep < 2; rep++) {
        const rows = ["batch,accuracy,loss"];
        for (let b = 1; b <= 30; b++) {
          const acc = arm === "frozen-co" ? Math.min(0.95, 0.25 + b * 0.05) : Math.min(0.9, 0.25 + b * 0.01);
          rows.push(`${b},${acc + rep * 0.01},${1.4 - acc}`);
        }
        const rel = path.join(arm, `rep_${rep}.csv`);
        fs.writeFileSync(path.join(inDir, rel), rows.join("\n") + "\n");
        arms[arm].push(rel);
      }
    }
    fs.writeFileSync(path.join(inDir, "arms.json"), JSON.stringify(arms));
    const code = main(["--in", inDir, "--out", out]);
    expect(code).toBe(0);
    const svg = fs.readFileSync(path.join(out, "frozen_accuracy.svg"), "utf8");
    expect(svg).toContain("frozen-co");
    expect(fs.existsSync(path.join(out, "frozen_accuracy.png"))).toBe(true);
  }, 30000);

  it("fails on a directory with neither input kind", () => {
    const code = main(["--in", tmpDir(), "--out", tmpDir()]);
    expect(code).toBe(2);
  });
});
