// Typed client for the engine's JSON API. Every call either resolves with
// parsed data or throws ApiError; nothing is swallowed.

export interface SliceSummary {
  id: number;
  size: number;
  accuracy: number | null;
  mean_confidence: number | null;
  coherence: number;
  spuriousness: number | null;
}

export interface SliceDetail extends SliceSummary {
  member_ids: number[];
  member_sample_ids: string[];
  hull: [number, number][];
  degenerate: boolean;
  confusion_cells: Record<string, number[]>;
}

export interface SampleView {
  id: string;
  index: number;
  label: number;
  prediction: number;
  confidence: number;
  shape: number[] | null;
  values: number[] | null;
}

export interface SamplesResponse {
  slice_id: number;
  view: "image" | "heatmap";
  samples: SampleView[];
}

export interface MosaicCell {
  members: number[];
  hull: [number, number][];
}

export interface MosaicTile {
  id: number;
  hull: [number, number][];
  degenerate: boolean;
  color_value: number | null;
  tile_url: string | null;
  cells?: Record<string, MosaicCell | null>;
}

export interface MosaicResponse {
  color: string;
  layout: "combined" | "confusion";
  spuriousness_version: number;
  slices: MosaicTile[];
}

export interface SpuriousnessResponse {
  version: number;
  per_slice: Record<string, number>;
  per_point: number[] | null;
}

export interface VersionResponse {
  spuriousness_version: number;
  n_slices: number;
  n_samples: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly url: string,
    message: string,
  ) {
    super(`${status} ${url}: ${message}`);
  }
}

export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let res: Response;
    try {
      res = await fetch(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(0, path, `service unreachable (${String(err)})`);
    }
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const body = await res.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(res.status, path, detail);
    }
    return (await res.json()) as T;
  }

  version(): Promise<VersionResponse> {
    return this.request("/api/version");
  }

  slices(): Promise<SliceSummary[]> {
    return this.request("/api/slices");
  }

  sliceDetail(id: number): Promise<SliceDetail> {
    return this.request(`/api/slices/${id}`);
  }

  samples(id: number, view: "image" | "heatmap"): Promise<SamplesResponse> {
    return this.request(`/api/slices/${id}/samples?view=${view}`);
  }

  mosaic(
    color: string,
    layout: "combined" | "confusion" = "combined",
  ): Promise<MosaicResponse> {
    return this.request(`/api/mosaic?color=${color}&layout=${layout}`);
  }

  spuriousness(): Promise<SpuriousnessResponse> {
    return this.request("/api/spuriousness");
  }

  annotate(
    sliceId: number,
    verdict: "core" | "spurious",
    note = "",
    author = "",
  ): Promise<{ ok: boolean; timestamp: string }> {
    return this.request("/api/annotations", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ slice_id: sliceId, verdict, note, author }),
    });
  }

  propagate(): Promise<{ version: number }> {
    return this.request("/api/propagate", { method: "POST" });
  }
}
