// Slice table: sortable columns, row selection, metric chips.

import type { SliceSummary } from "./api.js";
import { fmt, metricColor, sortSlices, type SortKey } from "./format.js";

const COLUMNS: { key: SortKey; label: string }[] = [
  { key: "id", label: "slice" },
  { key: "size", label: "size" },
  { key: "accuracy", label: "accuracy" },
  { key: "mean_confidence", label: "confidence" },
  { key: "coherence", label: "coherence" },
  { key: "spuriousness", label: "spuriousness" },
];

export class SliceTable {
  private rows: SliceSummary[] = [];
  sortKey: SortKey = "id";
  ascending = true;
  selected: number | null = null;

  constructor(
    private root: HTMLElement,
    private onSelect: (sliceId: number) => void,
  ) {}

  update(rows: SliceSummary[]): void {
    this.rows = rows;
    this.render();
  }

  sortBy(key: SortKey, ascending?: boolean): void {
    if (ascending === undefined) {
      this.ascending = this.sortKey === key ? !this.ascending : true;
    } else {
      this.ascending = ascending;
    }
    this.sortKey = key;
    this.render();
  }

  sortedRows(): SliceSummary[] {
    return sortSlices(this.rows, this.sortKey, this.ascending);
  }

  private render(): void {
    const table = document.createElement("table");
    table.className = "slice-table";
    const thead = document.createElement("thead");
    const headRow = document.createElement("tr");
    for (const col of COLUMNS) {
      const th = document.createElement("th");
      th.dataset.key = col.key;
      th.textContent =
        col.label +
        (this.sortKey === col.key ? (this.ascending ? " \u25b2" : " \u25bc") : "");
      th.addEventListener("click", () => this.sortBy(col.key));
      headRow.appendChild(th);
    }
    thead.appendChild(headRow);
    table.appendChild(thead);

    const tbody = document.createElement("tbody");
    for (const row of this.sortedRows()) {
      const tr = document.createElement("tr");
      tr.dataset.sliceId = String(row.id);
      if (row.id === this.selected) tr.classList.add("selected");
      const cells: (string | number | null)[] = [
        row.id,
        row.size,
        fmt(row.accuracy),
        fmt(row.mean_confidence),
        fmt(row.coherence),
        fmt(row.spuriousness),
      ];
      for (const [i, value] of cells.entries()) {
        const td = document.createElement("td");
        td.textContent = String(value);
        if (COLUMNS[i].key === "spuriousness" && row.spuriousness !== null) {
          td.style.backgroundColor = metricColor(row.spuriousness);
        }
        tr.appendChild(td);
      }
      tr.addEventListener("click", () => {
        this.selected = row.id;
        this.onSelect(row.id);
        this.render();
      });
      tbody.appendChild(tr);
    }
    table.appendChild(tbody);
    this.root.replaceChildren(table);
  }
}
