import { ApiError, DocforgeClient } from "./api";
import { clear, el } from "./dom";
import { pollJob } from "./jobs";
import type { QaEditFields, QaRow, ReviewStatus } from "./types";

const FILTERS: (ReviewStatus | null)[] = [
  null,
  "Pending",
  "Approved",
  "Edited",
  "Rejected",
];

function isTyping(target: EventTarget | null): boolean {
  const node = target as HTMLElement | null;
  if (!node || !node.tagName) return false;
  return (
    node.tagName === "INPUT" ||
    node.tagName === "TEXTAREA" ||
    node.isContentEditable
  );
}

/**
 * QA review queue. One keystroke per verdict:
 *   j / ArrowDown  next pair          k / ArrowUp  previous pair
 *   a  approve     x  reject          e  edit      r  refine (regenerate)
 *   f  cycle status filter
 * While editing: Escape cancels, Ctrl/Cmd+Enter saves.
 *
 * The server's row is the source of truth: every action re-renders from the
 * PATCH response, and load() re-fetches the full queue.
 */
export class ReviewQueue {
  pairs: QaRow[] = [];
  selected = 0;
  filter: ReviewStatus | null = null;
  editing = false;

  private root: HTMLElement;
  private client: DocforgeClient;
  private projectId: string;
  private pollIntervalMs: number;
  private statusLine = "";
  private keyHandler = (e: KeyboardEvent) => this.onKey(e);

  constructor(
    root: HTMLElement,
    client: DocforgeClient,
    projectId: string,
    opts: { pollIntervalMs?: number } = {},
  ) {
    this.root = root;
    this.client = client;
    this.projectId = projectId;
    this.pollIntervalMs = opts.pollIntervalMs ?? 500;
  }

  async mount(): Promise<void> {
    document.addEventListener("keydown", this.keyHandler);
    await this.load();
  }

  unmount(): void {
    document.removeEventListener("keydown", this.keyHandler);
  }

  get current(): QaRow | null {
    return this.pairs[this.selected] ?? null;
  }

  async load(): Promise<void> {
    this.pairs = await this.client.listQa(this.projectId, this.filter ?? undefined);
    if (this.selected >= this.pairs.length) {
      this.selected = Math.max(0, this.pairs.length - 1);
    }
    this.editing = false;
    this.render();
  }

  move(delta: number): void {
    if (this.pairs.length === 0) return;
    const next = this.selected + delta;
    this.selected = Math.min(Math.max(next, 0), this.pairs.length - 1);
    this.render();
  }

  async cycleFilter(): Promise<void> {
    const at = FILTERS.indexOf(this.filter);
    this.filter = FILTERS[(at + 1) % FILTERS.length];
    this.selected = 0;
    await this.load();
  }

  async approve(): Promise<void> {
    await this.act("approve");
  }

  async reject(): Promise<void> {
    await this.act("reject");
  }

  private async act(action: "approve" | "reject"): Promise<void> {
    const pair = this.current;
    if (!pair) return;
    try {
      const updated = await this.client.review(pair.id, action);
      this.pairs[this.selected] = updated;
      this.statusLine = `${updated.id}: ${updated.review_status}`;
      // verdict given, move on to the next undecided pair
      if (this.selected < this.pairs.length - 1) this.selected += 1;
    } catch (err) {
      this.showError(err);
    }
    this.render();
  }

  startEdit(): void {
    if (!this.current) return;
    this.editing = true;
    this.render();
  }

  cancelEdit(): void {
    this.editing = false;
    this.render();
  }

  async saveEdit(): Promise<void> {
    const pair = this.current;
    if (!pair || !this.editing) return;
    const fields: QaEditFields = {};
    const question = this.fieldValue("edit-question");
    const answer = this.fieldValue("edit-answer");
    const reasoning = this.fieldValue("edit-reasoning");
    if (question !== null && question !== pair.question.text) {
      fields.question_text = question;
    }
    if (answer !== null && answer !== pair.answer_text) {
      fields.answer_text = answer;
    }
    if (reasoning !== null && reasoning !== (pair.reasoning ?? "")) {
      fields.reasoning = reasoning;
    }
    if (Object.keys(fields).length === 0) {
      this.cancelEdit();
      return;
    }
    try {
      const updated = await this.client.review(pair.id, "edit", fields);
      this.pairs[this.selected] = updated;
      this.statusLine = `${updated.id}: edited`;
      this.editing = false;
    } catch (err) {
      this.showError(err);
    }
    this.render();
  }

  async refineCurrent(): Promise<void> {
    const pair = this.current;
    if (!pair) return;
    try {
      const job = await this.client.refine(pair.id);
      this.statusLine = `refining ${pair.id}...`;
      this.render();
      await pollJob(this.client, job.id, { intervalMs: this.pollIntervalMs });
      this.pairs[this.selected] = await this.client.getQa(pair.id);
      this.statusLine = `${pair.id}: refined`;
    } catch (err) {
      this.showError(err);
    }
    this.render();
  }

  private onKey(e: KeyboardEvent): void {
    if (this.editing || isTyping(e.target)) {
      if (e.key === "Escape") {
        e.preventDefault();
        this.cancelEdit();
      } else if (e.key === "Enter" && (e.ctrlKey || e.metaKey)) {
        e.preventDefault();
        void this.saveEdit();
      }
      return;
    }
    switch (e.key) {
      case "j":
      case "ArrowDown":
        e.preventDefault();
        this.move(1);
        break;
      case "k":
      case "ArrowUp":
        e.preventDefault();
        this.move(-1);
        break;
      case "a":
        e.preventDefault();
        void this.approve();
        break;
      case "x":
        e.preventDefault();
        void this.reject();
        break;
      case "e":
        e.preventDefault();
        this.startEdit();
        break;
      case "r":
        e.preventDefault();
        void this.refineCurrent();
        break;
      case "f":
        e.preventDefault();
        void this.cycleFilter();
        break;
    }
  }

  private showError(err: unknown): void {
    if (err instanceof ApiError) {
      this.statusLine = `${err.code}: ${err.message}`;
    } else {
      this.statusLine = String(err);
    }
  }

  private fieldValue(role: string): string | null {
    const node = this.root.querySelector<HTMLTextAreaElement>(
      `[data-role="${role}"]`,
    );
    return node ? node.value : null;
  }

  render(): void {
    clear(this.root);
    const filterLabel = this.filter ?? "All";
    this.root.append(
      el(
        "div",
        { class: "toolbar" },
        el("span", { class: "hint" }, "j/k move  a approve  x reject  e edit  r refine  f filter"),
        el(
          "button",
          { "data-role": "filter", onclick: () => void this.cycleFilter() },
          `Filter: ${filterLabel}`,
        ),
        el("span", { class: "status", "data-role": "status" }, this.statusLine),
      ),
    );

    const list = el("ul", { class: "qa-list", "data-role": "qa-list" });
    this.pairs.forEach((pair, i) => {
      const item = el(
        "li",
        {
          class: i === this.selected ? "qa-item selected" : "qa-item",
          "data-qa-id": pair.id,
          "data-status": pair.review_status,
          onclick: () => {
            this.selected = i;
            this.render();
          },
        },
        el("span", { class: `badge ${pair.review_status.toLowerCase()}` },
          pair.review_status),
        el("span", { class: "qa-question" }, pair.question.text),
      );
      list.append(item);
    });
    this.root.append(list);

    const pair = this.current;
    if (!pair) {
      this.root.append(el("p", { class: "empty" }, "No QA pairs."));
      return;
    }
    this.root.append(this.editing ? this.renderEditor(pair) : this.renderDetail(pair));
  }

  private renderDetail(pair: QaRow): HTMLElement {
    const persona = pair.question.persona_id ?? "naive";
    return el(
      "div",
      { class: "qa-detail", "data-role": "detail" },
      el("h3", { "data-role": "question" }, pair.question.text),
      el("p", { class: "answer", "data-role": "answer" }, pair.answer_text),
      pair.reasoning
        ? el("details", {},
            el("summary", {}, "Reasoning"),
            el("p", { "data-role": "reasoning" }, pair.reasoning))
        : null,
      el("p", { class: "meta" },
        `${pair.review_status} | chunk ${pair.question.chunk_id} | ` +
        `persona ${persona} | ${pair.model_name} | ` +
        `${pair.history.length} version(s)`),
      el("div", { class: "actions" },
        el("button", { "data-role": "approve", onclick: () => void this.approve() },
          "Approve"),
        el("button", { "data-role": "reject", onclick: () => void this.reject() },
          "Reject"),
        el("button", { "data-role": "edit", onclick: () => this.startEdit() },
          "Edit"),
        el("button", { "data-role": "refine", onclick: () => void this.refineCurrent() },
          "Refine")),
    );
  }

  private renderEditor(pair: QaRow): HTMLElement {
    return el(
      "div",
      { class: "qa-detail editing", "data-role": "editor" },
      el("label", {}, "Question",
        el("textarea", { "data-role": "edit-question" }, pair.question.text)),
      el("label", {}, "Answer",
        el("textarea", { "data-role": "edit-answer" }, pair.answer_text)),
      el("label", {}, "Reasoning",
        el("textarea", { "data-role": "edit-reasoning" }, pair.reasoning ?? "")),
      el("div", { class: "actions" },
        el("button", { "data-role": "save", onclick: () => void this.saveEdit() },
          "Save"),
        el("button", { "data-role": "cancel", onclick: () => this.cancelEdit() },
          "Cancel")),
    );
  }
}
