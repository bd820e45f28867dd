import { ApiError, DocforgeClient } from "./api";
import { clear, el } from "./dom";
import type { ChunkRow } from "./types";

/**
 * Chunk boundary editor. Splits happen at a character offset inside the
 * selected chunk; merges join the selected chunk with its right neighbour.
 * After either operation the list is re-fetched so the view is exactly the
 * server's chunk state, never a local guess.
 */
export class ChunkEditor {
  chunks: ChunkRow[] = [];
  selected = 0;

  private root: HTMLElement;
  private client: DocforgeClient;
  private projectId: string;
  private statusLine = "";

  constructor(root: HTMLElement, client: DocforgeClient, projectId: string) {
    this.root = root;
    this.client = client;
    this.projectId = projectId;
  }

  async mount(): Promise<void> {
    await this.load();
  }

  get current(): ChunkRow | null {
    return this.chunks[this.selected] ?? null;
  }

  /** Right neighbour within the same document, or null at a boundary. */
  get mergeTarget(): ChunkRow | null {
    const next = this.chunks[this.selected + 1];
    const cur = this.current;
    if (!cur || !next || next.doc_id !== cur.doc_id) return null;
    return next;
  }

  async load(): Promise<void> {
    this.chunks = await this.client.listChunks(this.projectId);
    if (this.selected >= this.chunks.length) {
      this.selected = Math.max(0, this.chunks.length - 1);
    }
    this.render();
  }

  async split(offset: number): Promise<void> {
    const chunk = this.current;
    if (!chunk) return;
    try {
      await this.client.splitChunk(chunk.id, offset);
      this.statusLine = `split ${chunk.id} at ${offset}`;
    } catch (err) {
      this.showError(err);
      this.render();
      return;
    }
    await this.load();
  }

  async merge(): Promise<void> {
    const chunk = this.current;
    if (!chunk) return;
    if (!this.mergeTarget) {
      this.statusLine = "no right neighbour to merge with";
      this.render();
      return;
    }
    try {
      await this.client.mergeChunks(chunk.id);
      this.statusLine = `merged ${chunk.id} with its neighbour`;
    } catch (err) {
      this.showError(err);
      this.render();
      return;
    }
    await this.load();
  }

  private showError(err: unknown): void {
    this.statusLine =
      err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
  }

  private splitOffsetInput(): number {
    const input = this.root.querySelector<HTMLInputElement>(
      '[data-role="split-offset"]',
    );
    return input ? Number(input.value) : 0;
  }

  render(): void {
    clear(this.root);
    this.root.append(
      el("div", { class: "toolbar" },
        el("span", { class: "status", "data-role": "status" }, this.statusLine)),
    );

    const list = el("ul", { class: "chunk-list", "data-role": "chunk-list" });
    let lastDoc = "";
    this.chunks.forEach((chunk, i) => {
      if (chunk.doc_id !== lastDoc) {
        lastDoc = chunk.doc_id;
        list.append(el("li", { class: "doc-header" }, chunk.doc_id));
      }
      list.append(
        el("li",
          {
            class: i === this.selected ? "chunk-item selected" : "chunk-item",
            "data-chunk-id": chunk.id,
            "data-start": chunk.start,
            "data-end": chunk.end,
            onclick: () => {
              this.selected = i;
              this.render();
            },
          },
          el("span", { class: "range" }, `[${chunk.start}, ${chunk.end})`),
          el("span", { class: `badge ${chunk.origin}` }, chunk.origin),
          el("span", { class: "preview" },
            chunk.text.length > 80 ? chunk.text.slice(0, 80) + "…" : chunk.text)),
      );
    });
    this.root.append(list);

    const chunk = this.current;
    if (!chunk) {
      this.root.append(el("p", { class: "empty" }, "No chunks."));
      return;
    }
    const maxOffset = chunk.text.length - 1;
    this.root.append(
      el("div", { class: "chunk-detail", "data-role": "detail" },
        el("pre", { class: "chunk-text", "data-role": "chunk-text" }, chunk.text),
        el("div", { class: "actions" },
          el("label", {}, "Split at offset ",
            el("input", {
              type: "number",
              "data-role": "split-offset",
              min: 1,
              max: maxOffset,
              value: Math.max(1, Math.floor(chunk.text.length / 2)),
            })),
          el("button",
            {
              "data-role": "split",
              disabled: chunk.text.length < 2,
              onclick: () => void this.split(this.splitOffsetInput()),
            },
            "Split"),
          el("button",
            {
              "data-role": "merge",
              disabled: this.mergeTarget === null,
              onclick: () => void this.merge(),
            },
            "Merge with next"))),
    );
  }
}
