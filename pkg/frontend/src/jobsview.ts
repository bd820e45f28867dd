import { DocforgeClient } from "./api";
import { clear, el } from "./dom";
import type { JobRow } from "./types";

/** Job table; refreshes itself while anything is still Queued or Running. */
export class JobsView {
  jobs: JobRow[] = [];

  private root: HTMLElement;
  private client: DocforgeClient;
  private projectId: string;
  private refreshMs: number;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    root: HTMLElement,
    client: DocforgeClient,
    projectId: string,
    opts: { refreshMs?: number } = {},
  ) {
    this.root = root;
    this.client = client;
    this.projectId = projectId;
    this.refreshMs = opts.refreshMs ?? 2000;
  }

  async mount(): Promise<void> {
    await this.load();
  }

  unmount(): void {
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = null;
  }

  async load(): Promise<void> {
    this.jobs = await this.client.listJobs(this.projectId);
    this.render();
    const active = this.jobs.some(
      (j) => j.status === "Queued" || j.status === "Running",
    );
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = active
      ? setTimeout(() => void this.load(), this.refreshMs)
      : null;
  }

  render(): void {
    clear(this.root);
    if (this.jobs.length === 0) {
      this.root.append(el("p", { class: "empty" }, "No jobs yet."));
      return;
    }
    const table = el("table", { class: "jobs", "data-role": "jobs" });
    table.append(
      el("tr", {},
        el("th", {}, "Kind"), el("th", {}, "Status"), el("th", {}, "Progress"),
        el("th", {}, "Result"), el("th", {}, "Updated")),
    );
    for (const job of [...this.jobs].reverse()) {
      const { done, total } = job.progress;
      table.append(
        el("tr",
          { "data-job-id": job.id, "data-status": job.status },
          el("td", {}, job.kind),
          el("td", { class: `badge ${job.status.toLowerCase()}` }, job.status),
          el("td", {}, total > 0 ? `${done}/${total}` : ""),
          el("td", {},
            job.error ?? (job.result_ref.length ? `${job.result_ref.length} item(s)` : "")),
          el("td", {}, job.updated_at)),
      );
    }
    this.root.append(table);
  }
}
