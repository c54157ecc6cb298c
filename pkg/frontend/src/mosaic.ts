// Attribution mosaic: slice hulls as SVG polygons, optionally filled with
// registered tile images, boundary-colored by the selected metric.
// Hovering a tile raises it to the top SVG layer (last-drawn wins);
// double-click starts an annotation.

import type { MosaicResponse, MosaicTile } from "./api.js";
import { confusionCaption, metricColor } from "./format.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const CELLS = ["TP", "FN", "FP", "TN"] as const;

export interface MosaicCallbacks {
  onSelect: (sliceId: number) => void;
  onAnnotate: (sliceId: number) => void;
}

function bounds(tiles: MosaicTile[]): [number, number, number, number] {
  let minX = Infinity;
  let minY = Infinity;
  let maxX = -Infinity;
  let maxY = -Infinity;
  for (const t of tiles) {
    for (const [x, y] of t.hull) {
      minX = Math.min(minX, x);
      minY = Math.min(minY, y);
      maxX = Math.max(maxX, x);
      maxY = Math.max(maxY, y);
    }
  }
  if (!tiles.length) return [0, 0, 1, 1];
  const padX = (maxX - minX || 1) * 0.03;
  const padY = (maxY - minY || 1) * 0.03;
  return [minX - padX, minY - padY, maxX + padX, maxY + padY];
}

export class Mosaic {
  baseUrl = "";

  constructor(
    private root: HTMLElement,
    private callbacks: MosaicCallbacks,
  ) {}

  render(data: MosaicResponse, classNames: [string, string] | null): void {
    this.root.replaceChildren();
    if (data.layout === "confusion") {
      const grid = document.createElement("div");
      grid.className = "confusion-grid";
      for (const cell of CELLS) {
        const panel = document.createElement("div");
        panel.className = "confusion-panel";
        const caption = document.createElement("div");
        caption.className = "confusion-caption";
        caption.textContent = confusionCaption(cell, classNames);
        panel.appendChild(caption);
        panel.appendChild(this.buildSvg(data, cell));
        grid.appendChild(panel);
      }
      this.root.appendChild(grid);
    } else {
      this.root.appendChild(this.buildSvg(data, null));
    }
  }

  private buildSvg(data: MosaicResponse, cell: string | null): SVGSVGElement {
    const svg = document.createElementNS(SVG_NS, "svg");
    const [minX, minY, maxX, maxY] = bounds(data.slices);
    svg.setAttribute("viewBox", `${minX} ${minY} ${maxX - minX} ${maxY - minY}`);
    svg.setAttribute("class", "mosaic");
    svg.setAttribute("preserveAspectRatio", "xMidYMid meet");
    const defs = document.createElementNS(SVG_NS, "defs");
    svg.appendChild(defs);

    for (const tile of data.slices) {
      const hull =
        cell === null ? tile.hull : tile.cells?.[cell]?.hull ?? null;
      if (!hull) continue;
      svg.appendChild(this.buildTile(svg, defs, tile, hull, cell));
    }
    return svg;
  }

  private buildTile(
    svg: SVGSVGElement,
    defs: SVGDefsElement,
    tile: MosaicTile,
    hull: [number, number][],
    cell: string | null,
  ): SVGGElement {
    const group = document.createElementNS(SVG_NS, "g");
    group.dataset.sliceId = String(tile.id);
    const points = hull.map(([x, y]) => `${x},${y}`).join(" ");

    const polygon = document.createElementNS(SVG_NS, "polygon");
    polygon.setAttribute("points", points);
    polygon.setAttribute("fill", "#f4f1ea");
    polygon.setAttribute("stroke", metricColor(tile.color_value));
    polygon.setAttribute("stroke-width", "0.12");
    polygon.setAttribute("vector-effect", "non-scaling-stroke");
    group.appendChild(polygon);

    if (tile.tile_url && cell === null) {
      const clipId = `clip-${tile.id}`;
      const clip = document.createElementNS(SVG_NS, "clipPath");
      clip.setAttribute("id", clipId);
      clip.setAttribute("clipPathUnits", "userSpaceOnUse");
      const clipPoly = document.createElementNS(SVG_NS, "polygon");
      clipPoly.setAttribute("points", points);
      clip.appendChild(clipPoly);
      defs.appendChild(clip);

      const xs = hull.map((p) => p[0]);
      const ys = hull.map((p) => p[1]);
      const image = document.createElementNS(SVG_NS, "image");
      image.setAttribute("href", this.baseUrl + tile.tile_url);
      image.setAttribute("x", String(Math.min(...xs)));
      image.setAttribute("y", String(Math.min(...ys)));
      image.setAttribute("width", String(Math.max(...xs) - Math.min(...xs)));
      image.setAttribute("height", String(Math.max(...ys) - Math.min(...ys)));
      image.setAttribute("preserveAspectRatio", "none");
      image.setAttribute("clip-path", `url(#${clipId})`);
      group.appendChild(image);
    }

    // Raising to the top layer = re-appending as the last child.
    group.addEventListener("mouseenter", () => {
      svg.appendChild(group);
      group.classList.add("hovered");
    });
    group.addEventListener("mouseleave", () => group.classList.remove("hovered"));
    group.addEventListener("click", () => this.callbacks.onSelect(tile.id));
    group.addEventListener("dblclick", () => this.callbacks.onAnnotate(tile.id));
    return group;
  }
}
