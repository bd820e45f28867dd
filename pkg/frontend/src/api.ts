import type {
  ChunkRow,
  DocumentRow,
  ErrorEnvelope,
  EventRow,
  JobRow,
  PersonaEditFields,
  PersonaRow,
  ProjectDetail,
  ProjectSummary,
  QaEditFields,
  QaRow,
  ReviewStatus,
} from "./types";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  status: number;
  code: string;
  detail: unknown;

  constructor(status: number, envelope: ErrorEnvelope) {
    super(envelope.message);
    this.name = "ApiError";
    this.status = status;
    this.code = envelope.code;
    this.detail = envelope.detail;
  }
}

/**
 * Thin typed wrapper over the REST API. Every method maps 1:1 to a route;
 * non-2xx responses become ApiError carrying the server's error envelope.
 */
export class DocforgeClient {
  private base: string;
  private fetchImpl: FetchLike;

  constructor(baseUrl = "", fetchImpl?: FetchLike) {
    this.base = baseUrl.replace(/\/$/, "");
    // bind so a bare window.fetch doesn't lose its receiver
    this.fetchImpl =
      fetchImpl ?? ((input, init) => globalThis.fetch(input, init));
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const init: RequestInit = { method };
    if (body instanceof FormData) {
      init.body = body;
    } else if (body !== undefined) {
      init.body = JSON.stringify(body);
      init.headers = { "content-type": "application/json" };
    }
    const res = await this.fetchImpl(`${this.base}/api/v1${path}`, init);
    if (!res.ok) {
      let envelope: ErrorEnvelope;
      try {
        envelope = (await res.json()) as ErrorEnvelope;
      } catch {
        envelope = { code: "http_error", message: res.statusText, detail: null };
      }
      throw new ApiError(res.status, envelope);
    }
    if (res.status === 204) return undefined as T;
    return (await res.json()) as T;
  }

  // projects

  listProjects(): Promise<ProjectSummary[]> {
    return this.request("GET", "/projects");
  }

  createProject(name: string): Promise<ProjectDetail> {
    return this.request("POST", "/projects", { name });
  }

  getProject(projectId: string): Promise<ProjectDetail> {
    return this.request("GET", `/projects/${encodeURIComponent(projectId)}`);
  }

  // documents

  listDocuments(projectId: string): Promise<DocumentRow[]> {
    return this.request(
      "GET",
      `/projects/${encodeURIComponent(projectId)}/documents`,
    );
  }

  uploadDocuments(projectId: string, files: File[]): Promise<JobRow> {
    const form = new FormData();
    for (const file of files) form.append("files", file, file.name);
    return this.request(
      "POST",
      `/projects/${encodeURIComponent(projectId)}/documents`,
      form,
    );
  }

  // chunks

  listChunks(projectId: string): Promise<ChunkRow[]> {
    return this.request(
      "GET",
      `/projects/${encodeURIComponent(projectId)}/chunks`,
    );
  }

  rechunk(
    projectId: string,
    cfg?: { max_len?: number; min_len?: number; delimiters?: string[] },
  ): Promise<JobRow> {
    return this.request(
      "POST",
      `/projects/${encodeURIComponent(projectId)}/chunk`,
      cfg ?? {},
    );
  }

  splitChunk(chunkId: string, offset: number): Promise<[ChunkRow, ChunkRow]> {
    return this.request("POST", `/chunks/${encodeURIComponent(chunkId)}/split`, {
      offset,
    });
  }

  mergeChunks(leftId: string): Promise<ChunkRow> {
    return this.request("POST", "/chunks/merge", { left_id: leftId });
  }

  // personas

  listPersonas(projectId: string): Promise<PersonaRow[]> {
    return this.request(
      "GET",
      `/projects/${encodeURIComponent(projectId)}/personas`,
    );
  }

  generatePersonas(projectId: string, n?: number): Promise<JobRow> {
    return this.request(
      "POST",
      `/projects/${encodeURIComponent(projectId)}/personas/generate`,
      n === undefined ? {} : { n },
    );
  }

  updatePersona(personaId: string, fields: PersonaEditFields): Promise<PersonaRow> {
    return this.request(
      "PUT",
      `/personas/${encodeURIComponent(personaId)}`,
      fields,
    );
  }

  deletePersona(personaId: string): Promise<void> {
    return this.request("DELETE", `/personas/${encodeURIComponent(personaId)}`);
  }

  // generation

  generateQuestions(
    projectId: string,
    mode: "persona" | "naive" = "persona",
  ): Promise<JobRow> {
    return this.request(
      "POST",
      `/projects/${encodeURIComponent(projectId)}/questions`,
      { mode },
    );
  }

  generateAnswers(projectId: string, style?: string): Promise<JobRow> {
    return this.request(
      "POST",
      `/projects/${encodeURIComponent(projectId)}/answers`,
      style === undefined ? {} : { style },
    );
  }

  refine(qaId: string): Promise<JobRow> {
    return this.request("POST", `/qa/${encodeURIComponent(qaId)}/refine`);
  }

  // review

  listQa(projectId: string, status?: ReviewStatus): Promise<QaRow[]> {
    const query = status === undefined ? "" : `?status=${encodeURIComponent(status)}`;
    return this.request(
      "GET",
      `/projects/${encodeURIComponent(projectId)}/qa${query}`,
    );
  }

  getQa(qaId: string): Promise<QaRow> {
    return this.request("GET", `/qa/${encodeURIComponent(qaId)}`);
  }

  review(
    qaId: string,
    action: "approve" | "reject" | "edit",
    fields?: QaEditFields,
  ): Promise<QaRow> {
    const body: Record<string, unknown> = { action };
    if (fields !== undefined) body.fields = fields;
    return this.request("PATCH", `/qa/${encodeURIComponent(qaId)}`, body);
  }

  listEvents(projectId: string): Promise<EventRow[]> {
    return this.request(
      "GET",
      `/projects/${encodeURIComponent(projectId)}/events`,
    );
  }

  // export / eval

  exportDataset(
    projectId: string,
    cfg?: {
      schema?: string;
      format?: string;
      include_cot?: boolean;
      statuses?: string[];
    },
  ): Promise<JobRow> {
    return this.request(
      "POST",
      `/projects/${encodeURIComponent(projectId)}/export`,
      cfg ?? {},
    );
  }

  // jobs

  getJob(jobId: string): Promise<JobRow> {
    return this.request("GET", `/jobs/${encodeURIComponent(jobId)}`);
  }

  listJobs(projectId: string): Promise<JobRow[]> {
    return this.request(
      "GET",
      `/projects/${encodeURIComponent(projectId)}/jobs`,
    );
  }
}
