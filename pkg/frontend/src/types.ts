// Row shapes as the REST API serializes them. Field names match the wire
// format exactly; keep in sync with the service's serializers.

export type ReviewStatus = "Pending" | "Approved" | "Edited" | "Rejected";
export type JobStatus = "Queued" | "Running" | "Done" | "Failed";
export type ChunkOrigin = "auto" | "manual_split" | "manual_merge";

export interface ProjectSummary {
  id: string;
  name: string;
  created_at: string;
}

export interface ProjectDetail extends ProjectSummary {
  chunk_config: { max_len: number; min_len: number; delimiters: string[] };
  gen_config: {
    questions_per_chunk: number;
    dropout_prob: number;
    rng_seed: number;
    answer_style: string;
  };
  model_profiles: string[];
  default_profile: string;
  counts: {
    documents: number;
    chunks: number;
    personas: number;
    questions: number;
    qa_pairs: number;
  };
}

export interface DocumentRow {
  id: string;
  source_path: string;
  format: string;
  parser_name: string;
  parsed_at: string;
  length: number;
}

export interface ChunkRow {
  id: string;
  doc_id: string;
  start: number;
  end: number;
  text: string;
  origin: ChunkOrigin;
}

export interface PersonaRow {
  id: string;
  doc_id: string;
  genre_name: string;
  genre_description: string;
  audience_name: string;
  audience_description: string;
  enabled: boolean;
  source: "Generated" | "Manual";
}

export interface QuestionRow {
  id: string;
  chunk_id: string;
  text: string;
  persona_id: string | null;
  dropout_applied: boolean;
}

export interface AnswerVersionRow {
  answer_text: string;
  reasoning: string | null;
  model_name: string;
  created_at: string;
}

export interface QaRow {
  id: string;
  question: QuestionRow;
  answer_text: string;
  reasoning: string | null;
  review_status: ReviewStatus;
  created_at: string;
  model_name: string;
  history: AnswerVersionRow[];
}

export interface JobRow {
  id: string;
  kind: string;
  project_id: string;
  status: JobStatus;
  progress: { done: number; total: number };
  error: string | null;
  result_ref: string[];
  created_at: string;
  updated_at: string;
}

export interface EventRow {
  entity_id: string;
  actor: string;
  action: string;
  before: Record<string, unknown> | null;
  after: Record<string, unknown> | null;
  at: string;
}

export interface ErrorEnvelope {
  code: string;
  message: string;
  detail: unknown;
}

/** Fields PATCH /qa/{id} accepts under "fields" for the edit action. */
export interface QaEditFields {
  question_text?: string;
  answer_text?: string;
  reasoning?: string;
}

export interface PersonaEditFields {
  genre_name?: string;
  genre_description?: string;
  audience_name?: string;
  audience_description?: string;
  enabled?: boolean;
}
