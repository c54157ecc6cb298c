// Display helpers. Engine numbers are shown rounded to 4 decimals and never
// mutated; sorting works on the raw values.

export function fmt(value: number | null | undefined): string {
  if (value === null || value === undefined || Number.isNaN(value)) return "-";
  return value.toFixed(4);
}

export type SortKey =
  | "id"
  | "size"
  | "accuracy"
  | "mean_confidence"
  | "coherence"
  | "spuriousness";

export interface Sortable {
  id: number;
  size: number;
  accuracy: number | null;
  mean_confidence: number | null;
  coherence: number;
  spuriousness: number | null;
}

// Ascending sort; missing metric values sink to the end so "worst first"
// ordering puts real numbers on top. Stable for equal keys (id tiebreak).
export function sortSlices<T extends Sortable>(
  rows: T[],
  key: SortKey,
  ascending: boolean,
): T[] {
  const value = (r: T): number | null => {
    const v = r[key];
    return v === null || v === undefined ? null : (v as number);
  };
  return [...rows].sort((a, b) => {
    const va = value(a);
    const vb = value(b);
    if (va === null && vb === null) return a.id - b.id;
    if (va === null) return 1;
    if (vb === null) return -1;
    if (va !== vb) return ascending ? va - vb : vb - va;
    return a.id - b.id;
  });
}

// Color scale for mosaic boundaries and table chips: blue (low) through
// white to red (high), on [0, 1].
const LOW: [number, number, number] = [59, 106, 245];
const MID: [number, number, number] = [245, 245, 245];
const HIGH: [number, number, number] = [204, 59, 51];

export function metricColor(value: number | null): string {
  if (value === null || Number.isNaN(value)) return "#999999";
  const t = Math.max(0, Math.min(1, value));
  const [from, to, u] =
    t < 0.5
      ? ([LOW, MID, t * 2] as const)
      : ([MID, HIGH, (t - 0.5) * 2] as const);
  const ch = from.map((a, i) => Math.round(a + (to[i] - a) * u));
  return `rgb(${ch[0]}, ${ch[1]}, ${ch[2]})`;
}

export function confusionCaption(
  cell: string,
  classNames: [string, string] | null,
  positive = 1,
): string {
  if (!classNames) return cell;
  const pos = classNames[positive];
  const neg = classNames[1 - positive];
  switch (cell) {
    case "TP":
      return `label: ${pos}; prediction: ${pos}`;
    case "TN":
      return `label: ${neg}; prediction: ${neg}`;
    case "FP":
      return `label: ${neg}; prediction: ${pos}`;
    case "FN":
      return `label: ${pos}; prediction: ${neg}`;
    default:
      return cell;
  }
}
