import { ApiError, DocforgeClient } from "./api";
import { clear, el } from "./dom";
import { pollJob } from "./jobs";
import type { PersonaRow } from "./types";

/** Persona list: toggle, edit, delete, or generate a fresh batch per doc. */
export class PersonaPanel {
  personas: PersonaRow[] = [];
  selected: string | null = null;

  private root: HTMLElement;
  private client: DocforgeClient;
  private projectId: string;
  private pollIntervalMs: number;
  private statusLine = "";

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
    await this.load();
  }

  async load(): Promise<void> {
    this.personas = await this.client.listPersonas(this.projectId);
    this.render();
  }

  async generate(n: number): Promise<void> {
    try {
      const job = await this.client.generatePersonas(this.projectId, n);
      this.statusLine = "generating personas...";
      this.render();
      await pollJob(this.client, job.id, { intervalMs: this.pollIntervalMs });
      this.statusLine = "personas generated";
    } catch (err) {
      this.showError(err);
    }
    await this.load();
  }

  async toggle(persona: PersonaRow): Promise<void> {
    try {
      await this.client.updatePersona(persona.id, { enabled: !persona.enabled });
    } catch (err) {
      this.showError(err);
    }
    await this.load();
  }

  async remove(persona: PersonaRow): Promise<void> {
    try {
      await this.client.deletePersona(persona.id);
      this.statusLine = `deleted ${persona.id}`;
      if (this.selected === persona.id) this.selected = null;
    } catch (err) {
      this.showError(err);
    }
    await this.load();
  }

  async saveEdits(persona: PersonaRow): Promise<void> {
    const fields = {
      genre_name: this.fieldValue("genre-name") ?? persona.genre_name,
      genre_description:
        this.fieldValue("genre-description") ?? persona.genre_description,
      audience_name: this.fieldValue("audience-name") ?? persona.audience_name,
      audience_description:
        this.fieldValue("audience-description") ?? persona.audience_description,
    };
    try {
      await this.client.updatePersona(persona.id, fields);
      this.statusLine = `updated ${persona.id}`;
      this.selected = null;
    } catch (err) {
      this.showError(err);
    }
    await this.load();
  }

  private fieldValue(role: string): string | null {
    const node = this.root.querySelector<HTMLInputElement>(
      `[data-role="${role}"]`,
    );
    return node ? node.value : null;
  }

  private showError(err: unknown): void {
    this.statusLine =
      err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
  }

  render(): void {
    clear(this.root);
    this.root.append(
      el("div", { class: "toolbar" },
        el("label", {}, "Per document ",
          el("input", {
            type: "number", "data-role": "persona-count", value: 3, min: 1,
          })),
        el("button",
          {
            "data-role": "generate",
            onclick: () => {
              const input = this.root.querySelector<HTMLInputElement>(
                '[data-role="persona-count"]',
              );
              void this.generate(Number(input?.value ?? 3));
            },
          },
          "Generate"),
        el("span", { class: "status", "data-role": "status" }, this.statusLine)),
    );

    const list = el("ul", { class: "persona-list", "data-role": "persona-list" });
    for (const persona of this.personas) {
      if (this.selected === persona.id) {
        list.append(this.renderEditor(persona));
        continue;
      }
      list.append(
        el("li",
          { class: "persona-item", "data-persona-id": persona.id },
          el("input", {
            type: "checkbox",
            "data-role": "enabled",
            checked: persona.enabled,
            onchange: () => void this.toggle(persona),
          }),
          el("span", { class: "persona-name" },
            `${persona.genre_name} → ${persona.audience_name}`),
          el("span", { class: "badge" }, persona.source),
          el("button",
            {
              "data-role": "edit-persona",
              onclick: () => {
                this.selected = persona.id;
                this.render();
              },
            },
            "Edit"),
          el("button",
            { "data-role": "delete", onclick: () => void this.remove(persona) },
            "Delete")),
      );
    }
    this.root.append(list);
    if (this.personas.length === 0) {
      this.root.append(el("p", { class: "empty" }, "No personas yet."));
    }
  }

  private renderEditor(persona: PersonaRow): HTMLElement {
    const field = (role: string, label: string, value: string) =>
      el("label", {}, label,
        el("input", { type: "text", "data-role": role, value }));
    return el("li",
      { class: "persona-item editing", "data-persona-id": persona.id },
      field("genre-name", "Genre", persona.genre_name),
      field("genre-description", "Genre description", persona.genre_description),
      field("audience-name", "Audience", persona.audience_name),
      field("audience-description", "Audience description",
        persona.audience_description),
      el("button",
        { "data-role": "save", onclick: () => void this.saveEdits(persona) },
        "Save"),
      el("button",
        {
          "data-role": "cancel",
          onclick: () => {
            this.selected = null;
            this.render();
          },
        },
        "Cancel"));
  }
}
