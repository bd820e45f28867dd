import { ApiError, DocforgeClient } from "./api";
import { clear, el } from "./dom";
import { pollJob, progressLabel } from "./jobs";
import type { ProjectDetail } from "./types";

/** Landing page: pick an existing project or create one. */
export class ProjectsView {
  private root: HTMLElement;
  private client: DocforgeClient;
  private statusLine = "";

  constructor(root: HTMLElement, client: DocforgeClient) {
    this.root = root;
    this.client = client;
  }

  async mount(): Promise<void> {
    const projects = await this.client.listProjects();
    clear(this.root);
    this.root.append(el("h2", {}, "Projects"));
    const list = el("ul", { class: "project-list", "data-role": "project-list" });
    for (const p of projects) {
      list.append(
        el("li", {},
          el("a", { href: `#/p/${encodeURIComponent(p.id)}/review` }, p.name),
          el("span", { class: "meta" }, ` ${p.id}`)),
      );
    }
    this.root.append(list);
    if (projects.length === 0) {
      this.root.append(el("p", { class: "empty" }, "No projects yet."));
    }
    this.root.append(
      el("form",
        {
          class: "create-project",
          onsubmit: (e: Event) => {
            e.preventDefault();
            void this.create();
          },
        },
        el("input", {
          type: "text", placeholder: "New project name", "data-role": "project-name",
        }),
        el("button", { type: "submit", "data-role": "create" }, "Create"),
        el("span", { class: "status", "data-role": "status" }, this.statusLine)),
    );
  }

  private async create(): Promise<void> {
    const input = this.root.querySelector<HTMLInputElement>(
      '[data-role="project-name"]',
    );
    const name = input?.value.trim();
    if (!name) return;
    try {
      const project = await this.client.createProject(name);
      window.location.hash = `#/p/${encodeURIComponent(project.id)}/review`;
    } catch (err) {
      this.statusLine =
        err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
      await this.mount();
    }
  }
}

/**
 * Per-project header: counts, document upload, and one button per pipeline
 * stage. Stage buttons submit a job, poll it, then refresh the counts.
 */
export class ProjectHeader {
  project: ProjectDetail | null = null;

  private root: HTMLElement;
  private client: DocforgeClient;
  private projectId: string;
  private pollIntervalMs: number;
  private statusLine = "";
  private onChange: () => void;

  constructor(
    root: HTMLElement,
    client: DocforgeClient,
    projectId: string,
    opts: { pollIntervalMs?: number; onChange?: () => void } = {},
  ) {
    this.root = root;
    this.client = client;
    this.projectId = projectId;
    this.pollIntervalMs = opts.pollIntervalMs ?? 500;
    this.onChange = opts.onChange ?? (() => {});
  }

  async mount(): Promise<void> {
    this.project = await this.client.getProject(this.projectId);
    this.render();
  }

  private async runStage(
    label: string,
    submit: () => Promise<{ id: string }>,
  ): Promise<void> {
    try {
      this.statusLine = `${label}...`;
      this.render();
      const job = await submit();
      const finished = await pollJob(this.client, job.id, {
        intervalMs: this.pollIntervalMs,
        onProgress: (j) => {
          this.statusLine = progressLabel(j);
          this.render();
        },
      });
      this.statusLine = progressLabel(finished);
    } catch (err) {
      this.statusLine =
        err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    }
    await this.mount();
    this.onChange();
  }

  private async upload(files: FileList | null): Promise<void> {
    if (!files || files.length === 0) return;
    await this.runStage("uploading", () =>
      this.client.uploadDocuments(this.projectId, Array.from(files)),
    );
  }

  render(): void {
    clear(this.root);
    const p = this.project;
    if (!p) return;
    const c = p.counts;
    this.root.append(
      el("h2", {}, p.name),
      el("p", { class: "counts", "data-role": "counts" },
        `${c.documents} docs | ${c.chunks} chunks | ${c.personas} personas | ` +
        `${c.questions} questions | ${c.qa_pairs} QA pairs`),
      el("div", { class: "stage-bar" },
        el("input", {
          type: "file", multiple: true, "data-role": "upload",
          onchange: (e: Event) =>
            void this.upload((e.target as HTMLInputElement).files),
        }),
        el("button",
          {
            "data-role": "stage-chunk",
            onclick: () => void this.runStage("chunking", () =>
              this.client.rechunk(this.projectId)),
          },
          "Chunk"),
        el("button",
          {
            "data-role": "stage-questions",
            onclick: () => void this.runStage("questions", () =>
              this.client.generateQuestions(this.projectId)),
          },
          "Questions"),
        el("button",
          {
            "data-role": "stage-answers",
            onclick: () => void this.runStage("answers", () =>
              this.client.generateAnswers(this.projectId)),
          },
          "Answers"),
        el("button",
          {
            "data-role": "stage-export",
            onclick: () => void this.runStage("export", () =>
              this.client.exportDataset(this.projectId)),
          },
          "Export"),
        el("span", { class: "status", "data-role": "status" }, this.statusLine)),
    );
  }
}
