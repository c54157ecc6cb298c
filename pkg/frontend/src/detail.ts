// Slice detail view: the selected slice's samples as canvases, either raw
// images or attribution heatmaps (re-fetched with the matching ?view=).

import type { ApiClient, SampleView } from "./api.js";
import { fmt } from "./format.js";

function drawArray(canvas: HTMLCanvasElement, sample: SampleView): void {
  if (!sample.shape || !sample.values) return;
  let h: number;
  let w: number;
  let rgb: (i: number, j: number) => [number, number, number];
  const v = sample.values;
  if (sample.shape.length === 3) {
    const [, hh, ww] = sample.shape;
    h = hh;
    w = ww;
    const plane = h * w;
    rgb = (i, j) => [
      v[i * w + j] * 255,
      v[plane + i * w + j] * 255,
      v[2 * plane + i * w + j] * 255,
    ];
  } else {
    [h, w] = sample.shape;
    let max = 0;
    for (const x of v) max = Math.max(max, x);
    const scale = max > 0 ? 255 / max : 0;
    rgb = (i, j) => {
      const t = v[i * w + j] * scale;
      return [t, Math.round(t * 0.45), 255 - t];
    };
  }
  canvas.width = w;
  canvas.height = h;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const img = ctx.createImageData(w, h);
  for (let i = 0; i < h; i++) {
    for (let j = 0; j < w; j++) {
      const [r, g, b] = rgb(i, j);
      const o = (i * w + j) * 4;
      img.data[o] = Math.max(0, Math.min(255, r));
      img.data[o + 1] = Math.max(0, Math.min(255, g));
      img.data[o + 2] = Math.max(0, Math.min(255, b));
      img.data[o + 3] = 255;
    }
  }
  ctx.putImageData(img, 0, 0);
}

export class DetailView {
  view: "image" | "heatmap" = "image";
  sliceId: number | null = null;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
  ) {}

  async show(sliceId: number): Promise<void> {
    this.sliceId = sliceId;
    await this.refresh();
  }

  async toggle(view: "image" | "heatmap"): Promise<void> {
    this.view = view;
    if (this.sliceId !== null) await this.refresh();
  }

  private async refresh(): Promise<void> {
    if (this.sliceId === null) return;
    const data = await this.api.samples(this.sliceId, this.view);
    const header = document.createElement("div");
    header.className = "detail-header";
    header.textContent = `slice ${data.slice_id} (${data.samples.length} samples, ${data.view} view)`;

    const grid = document.createElement("div");
    grid.className = "sample-grid";
    for (const sample of data.samples) {
      const card = document.createElement("figure");
      card.className = "sample-card";
      const canvas = document.createElement("canvas");
      canvas.className = "sample-canvas";
      drawArray(canvas, sample);
      const cap = document.createElement("figcaption");
      cap.textContent = `${sample.id} label=${sample.label} pred=${sample.prediction} conf=${fmt(sample.confidence)}`;
      card.appendChild(canvas);
      card.appendChild(cap);
      grid.appendChild(card);
    }
    this.root.replaceChildren(header, grid);
  }
}
