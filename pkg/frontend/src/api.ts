/** Typed client for the adlens HTTP API. Every number shown in the UI comes
 * from one of these calls; nothing is computed locally. */

export interface Meta {
  model_digest: string | null;
  domains: string[];
  vocab: string[];
  feature_dim: number;
  image_size: number;
  recommendation_domains: string[];
}

export interface ContentDraft {
  id?: string;
  text: string | null;
  image_png_base64: string | null;
  domain: string | null;
  features: number[] | null;
}

export interface ScoreResponse {
  score: number;
  presence: Record<string, boolean>;
  model_digest: string;
  latency_ms: number;
  request_id: string;
}

export interface AttributionParts {
  image: number[][] | null;
  text: number[] | null;
  features: number[] | null;
  domain: number | null;
  rescaled: boolean;
  prediction: number | null;
}

export interface AttributeResponse {
  map: AttributionParts;
  positive: AttributionParts;
  negative: AttributionParts;
  request_id: string;
}

export interface RankedEntry {
  key: string;
  score: number;
  support: number;
}

export interface TextRecommendations {
  domain: string;
  words: { positive: RankedEntry[]; negative: RankedEntry[]; short: boolean };
  phrases: { positive: RankedEntry[]; negative: RankedEntry[]; short: boolean };
}

export interface PatchEntry {
  id: string;
  source: string;
  box: [number, number, number];
  score: number;
  cluster: number;
  url: string;
}

export interface PatchRecommendations {
  domain: string;
  positive: PatchEntry[];
  negative: PatchEntry[];
  low_diversity: boolean;
}

export interface TrustResponse {
  domain: string;
  modality: string;
  rho: number | null;
  trust: number;
  n_pairs: number;
}

export class ApiError extends Error {
  constructor(public status: number, public code: string, detail: string) {
    super(detail);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(private base: string, private fetchImpl: FetchLike = fetch.bind(globalThis)) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.base + path, init);
    const body = await response.json();
    if (!response.ok) {
      const err = body?.error ?? { code: "unknown", detail: response.statusText };
      throw new ApiError(response.status, err.code, err.detail);
    }
    return body as T;
  }

  meta(): Promise<Meta> {
    return this.request<Meta>("/meta");
  }

  score(draft: ContentDraft, signal?: AbortSignal): Promise<ScoreResponse> {
    return this.request<ScoreResponse>("/score", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(draft),
      signal,
    });
  }

  attribute(draft: ContentDraft, method: string, options: Record<string, unknown> = {},
            signal?: AbortSignal): Promise<AttributeResponse> {
    return this.request<AttributeResponse>("/attribute", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ content: draft, method, options }),
      signal,
    });
  }

  textRecommendations(domain: string, k = 10): Promise<TextRecommendations> {
    return this.request<TextRecommendations>(
      `/recommendations?domain=${encodeURIComponent(domain)}&modality=text&k=${k}`);
  }

  patchRecommendations(domain: string, k = 10): Promise<PatchRecommendations> {
    return this.request<PatchRecommendations>(
      `/recommendations?domain=${encodeURIComponent(domain)}&modality=image&k=${k}`);
  }

  trust(domain: string, modality: string): Promise<TrustResponse> {
    return this.request<TrustResponse>(
      `/trust?domain=${encodeURIComponent(domain)}&modality=${encodeURIComponent(modality)}`);
  }

  patchUrl(patch: PatchEntry): string {
    return this.base + patch.url;
  }
}
