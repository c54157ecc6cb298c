// Application shell: wires the table, mosaic, detail view and the
// annotate -> propagate -> recolor loop. The view is a pure function of the
// last fetched state; polling on /api/version picks up changes.

import { ApiClient, ApiError } from "./api.js";
import { DetailView } from "./detail.js";
import { Mosaic } from "./mosaic.js";
import { SliceTable } from "./table.js";

export type ColorMetric = "accuracy" | "confidence" | "spuriousness" | "coherence";

export class App {
  readonly api: ApiClient;
  readonly table: SliceTable;
  readonly mosaic: Mosaic;
  readonly detail: DetailView;
  color: ColorMetric = "accuracy";
  layout: "combined" | "confusion" = "combined";
  classNames: [string, string] | null = null;
  spuriousnessVersion = -1;
  private pollTimer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private doc: Document,
    baseUrl = "",
  ) {
    this.api = new ApiClient(baseUrl);
    this.table = new SliceTable(
      this.el("table-pane"),
      (id) => void this.select(id),
    );
    this.mosaic = new Mosaic(this.el("mosaic-pane"), {
      onSelect: (id) => void this.select(id),
      onAnnotate: (id) => void this.openAnnotation(id),
    });
    this.mosaic.baseUrl = baseUrl;
    this.detail = new DetailView(this.el("detail-pane"), this.api);
  }

  private el(id: string): HTMLElement {
    const node = this.doc.getElementById(id);
    if (!node) throw new Error(`missing #${id} in the page shell`);
    return node;
  }

  status(message: string, isError = false): void {
    const bar = this.el("status-bar");
    bar.textContent = message;
    bar.classList.toggle("error", isError);
  }

  async start(pollMs = 2000): Promise<void> {
    this.bindControls();
    await this.refreshAll();
    if (pollMs > 0) {
      this.pollTimer = setInterval(() => void this.pollVersion(), pollMs);
    }
  }

  stop(): void {
    if (this.pollTimer) clearInterval(this.pollTimer);
    this.pollTimer = null;
  }

  private bindControls(): void {
    const colorSel = this.el("color-select") as HTMLSelectElement;
    colorSel.addEventListener("change", () => {
      this.color = colorSel.value as ColorMetric;
      void this.refreshMosaic();
    });
    const layoutSel = this.el("layout-select") as HTMLSelectElement;
    layoutSel.addEventListener("change", () => {
      this.layout = layoutSel.value as "combined" | "confusion";
      void this.refreshMosaic();
    });
    const viewSel = this.el("view-select") as HTMLSelectElement;
    viewSel.addEventListener("change", () => {
      void this.detail
        .toggle(viewSel.value as "image" | "heatmap")
        .catch((err) => this.fail(err));
    });
  }

  async refreshAll(): Promise<void> {
    try {
      const [version, slices] = await Promise.all([
        this.api.version(),
        this.api.slices(),
      ]);
      this.spuriousnessVersion = version.spuriousness_version;
      this.table.update(slices);
      await this.refreshMosaic();
      this.status(
        `${version.n_slices} slices over ${version.n_samples} samples ` +
          `(spuriousness v${version.spuriousness_version})`,
      );
    } catch (err) {
      this.fail(err);
    }
  }

  async refreshMosaic(): Promise<void> {
    try {
      const data = await this.api.mosaic(this.color, this.layout);
      this.mosaic.render(data, this.classNames);
    } catch (err) {
      this.fail(err);
    }
  }

  async select(sliceId: number): Promise<void> {
    try {
      await this.detail.show(sliceId);
    } catch (err) {
      this.fail(err);
    }
  }

  async openAnnotation(sliceId: number): Promise<void> {
    const verdict = (
      this.doc.defaultView?.prompt(
        `Annotate slice ${sliceId}: type "core" or "spurious"`,
        "spurious",
      ) ?? ""
    ).trim();
    if (verdict !== "core" && verdict !== "spurious") {
      if (verdict) this.status(`annotation cancelled: ${verdict} is not a verdict`, true);
      return;
    }
    const note =
      this.doc.defaultView?.prompt("Optional note", "") ?? "";
    await this.annotateAndPropagate(sliceId, verdict, note);
  }

  // The core loop: POST the annotation, POST propagate, refetch and recolor.
  // Failures surface in the status bar; nothing is dropped silently.
  async annotateAndPropagate(
    sliceId: number,
    verdict: "core" | "spurious",
    note = "",
  ): Promise<number> {
    try {
      await this.api.annotate(sliceId, verdict, note, "ui");
      const { version } = await this.api.propagate();
      this.spuriousnessVersion = version;
      this.table.update(await this.api.slices());
      await this.refreshMosaic();
      this.status(`annotated slice ${sliceId} as ${verdict}; spuriousness v${version}`);
      return version;
    } catch (err) {
      this.fail(err);
      throw err;
    }
  }

  private async pollVersion(): Promise<void> {
    try {
      const version = await this.api.version();
      if (version.spuriousness_version !== this.spuriousnessVersion) {
        this.spuriousnessVersion = version.spuriousness_version;
        this.table.update(await this.api.slices());
        await this.refreshMosaic();
      }
    } catch (err) {
      this.fail(err);
    }
  }

  private fail(err: unknown): void {
    const message =
      err instanceof ApiError
        ? err.status === 0
          ? `service offline: ${err.message}`
          : err.message
        : String(err);
    this.status(message, true);
  }
}
