/**
 * Typed client for the indexing service HTTP API.
 *
 * Every error response carries {"error": {"code", "message"}}; those become
 * ApiError so the UI can render the code and offer a retry.
 */

export interface SearchRow {
  series_uid: string;
  acquisition_date: string;
  patient_pseudonym: string;
  annotation_count: number;
}

export interface SearchResponse {
  total: number;
  hits: string[];
  rows: SearchRow[];
  offset: number;
  limit: number;
}

export interface MappingEntry {
  label: string;
  snomed_code: string;
  snomed_display: string;
  radlex_id: string | null;
  equivalence_degree: number;
}

export interface AnnotationSetResponse {
  series_uid: string;
  annotations: {
    label: string;
    snomed_code: string;
    snomed_display: string;
    radlex_id: string | null;
    volume_mm3: number;
    mean_intensity: number;
  }[];
  unmapped_labels: string[];
  indexer_version: string;
  mapping_version: string;
  created_at: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
    private readonly authToken?: string,
  ) {}

  private async request<T>(path: string): Promise<T> {
    const headers: Record<string, string> = {};
    if (this.authToken) headers["Authorization"] = `Bearer ${this.authToken}`;
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, { headers });
    } catch (err) {
      throw new ApiError(0, "network_error", String(err));
    }
    if (!response.ok) {
      let code = "http_error";
      let message = `${response.status} ${response.statusText}`;
      try {
        const body = (await response.json()) as { error?: { code: string; message: string } };
        if (body.error) {
          code = body.error.code;
          message = body.error.message;
        }
      } catch {
        // non-JSON error body; keep the generic message
      }
      throw new ApiError(response.status, code, message);
    }
    return (await response.json()) as T;
  }

  search(queryText: string, offset = 0, limit = 50): Promise<SearchResponse> {
    const params = new URLSearchParams({
      q: queryText,
      offset: String(offset),
      limit: String(limit),
    });
    return this.request<SearchResponse>(`/search?${params}`);
  }

  mappingEntries(): Promise<MappingEntry[]> {
    return this.request<MappingEntry[]>("/mapping/entries");
  }

  annotations(seriesUid: string): Promise<AnnotationSetResponse> {
    return this.request<AnnotationSetResponse>(
      `/series/${encodeURIComponent(seriesUid)}/annotations`,
    );
  }

  fhirBundle(seriesUid: string): Promise<unknown> {
    return this.request<unknown>(`/series/${encodeURIComponent(seriesUid)}/fhir`);
  }
}
