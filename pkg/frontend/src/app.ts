import { DocforgeClient } from "./api";
import { ChunkEditor } from "./chunks";
import { clear, el } from "./dom";
import { JobsView } from "./jobsview";
import { PersonaPanel } from "./personas";
import { ProjectHeader, ProjectsView } from "./projects";
import { ReviewQueue } from "./review";

type Tab = "review" | "chunks" | "personas" | "jobs";
const TABS: Tab[] = ["review", "chunks", "personas", "jobs"];

interface Mountable {
  mount(): Promise<void>;
  unmount?(): void;
}

/** Hash router: #/ lists projects, #/p/{id}/{tab} opens a project tab. */
export class App {
  private root: HTMLElement;
  private client: DocforgeClient;
  private active: Mountable | null = null;
  private header: ProjectHeader | null = null;

  constructor(root: HTMLElement, client?: DocforgeClient) {
    this.root = root;
    this.client = client ?? new DocforgeClient();
  }

  start(): void {
    window.addEventListener("hashchange", () => void this.route());
    void this.route();
  }

  async route(): Promise<void> {
    this.active?.unmount?.();
    this.active = null;
    this.header = null;
    clear(this.root);

    const hash = window.location.hash || "#/";
    const match = hash.match(/^#\/p\/([^/]+)(?:\/([a-z]+))?/);
    if (!match) {
      const view = new ProjectsView(this.root, this.client);
      this.active = view;
      await view.mount();
      return;
    }

    const projectId = decodeURIComponent(match[1]);
    const tab: Tab = TABS.includes(match[2] as Tab) ? (match[2] as Tab) : "review";

    const headerRoot = el("header", { "data-role": "project-header" });
    const nav = el("nav", { class: "tabs" },
      el("a", { href: "#/" }, "Projects"),
      ...TABS.map((t) =>
        el("a",
          {
            href: `#/p/${encodeURIComponent(projectId)}/${t}`,
            class: t === tab ? "tab active" : "tab",
          },
          t)),
    );
    const content = el("main", { "data-role": "tab-content" });
    this.root.append(headerRoot, nav, content);

    this.header = new ProjectHeader(headerRoot, this.client, projectId, {
      onChange: () => void this.refreshTab(),
    });
    await this.header.mount();

    this.active = this.makeTab(tab, content, projectId);
    await this.active.mount();
  }

  private makeTab(tab: Tab, root: HTMLElement, projectId: string): Mountable {
    switch (tab) {
      case "chunks":
        return new ChunkEditor(root, this.client, projectId);
      case "personas":
        return new PersonaPanel(root, this.client, projectId);
      case "jobs":
        return new JobsView(root, this.client, projectId);
      case "review":
        return new ReviewQueue(root, this.client, projectId);
    }
  }

  private async refreshTab(): Promise<void> {
    const view = this.active as { load?: () => Promise<void> } | null;
    if (view?.load) await view.load();
  }
}

// bootstrap only in a real browser; tests drive components directly
const rootNode = document.getElementById("app");
if (rootNode) {
  new App(rootNode).start();
}
