import { beforeEach, describe, expect, it } from "vitest";
import { DocforgeClient } from "../src/api";
import { PersonaPanel } from "../src/personas";
import { FakeServer, flush } from "./fake";

let fake: FakeServer;
let client: DocforgeClient;
let root: HTMLElement;

beforeEach(() => {
  fake = new FakeServer();
  client = new DocforgeClient("", fake.fetch);
  document.body.innerHTML = "";
  root = document.createElement("div");
  document.body.append(root);
});

async function mountPanel(): Promise<PersonaPanel> {
  const panel = new PersonaPanel(root, client, "proj", { pollIntervalMs: 0 });
  await panel.mount();
  return panel;
}

describe("persona panel", () => {
  it("toggling the checkbox persists enabled via PUT", async () => {
    const persona = fake.seedPersona("Report", "Analysts");
    await mountPanel();
    root
      .querySelector<HTMLInputElement>('[data-role="enabled"]')!
      .dispatchEvent(new Event("change"));
    await flush();

    const put = fake.requests.find((r) => r.method === "PUT")!;
    expect(put.path).toBe(`/api/v1/personas/${encodeURIComponent(persona.id)}`);
    expect(put.body).toEqual({ enabled: false });
    expect(fake.personas[0].enabled).toBe(false);
    const box = root.querySelector<HTMLInputElement>('[data-role="enabled"]')!;
    expect(box.checked).toBe(false);
  });

  it("delete removes the persona everywhere", async () => {
    fake.seedPersona("Report", "Analysts");
    fake.seedPersona("Quiz", "Students");
    const panel = await mountPanel();
    root.querySelector<HTMLButtonElement>('[data-role="delete"]')!.click();
    await flush();
    expect(fake.personas).toHaveLength(1);
    expect(panel.personas).toHaveLength(1);
    expect(root.querySelectorAll("[data-persona-id]")).toHaveLength(1);
  });

  it("generate submits a job, polls it, and reloads the list", async () => {
    await mountPanel();
    const count = root.querySelector<HTMLInputElement>(
      '[data-role="persona-count"]',
    )!;
    count.value = "2";
    root.querySelector<HTMLButtonElement>('[data-role="generate"]')!.click();
    await flush(6);

    expect(fake.personas).toHaveLength(2);
    expect(root.querySelectorAll("[data-persona-id]")).toHaveLength(2);
    const post = fake.requests.find((r) =>
      r.path.endsWith("/personas/generate"),
    )!;
    expect(post.body).toEqual({ n: 2 });
  });

  it("saving the edit form PUTs the updated fields", async () => {
    const persona = fake.seedPersona("Report", "Analysts");
    await mountPanel();
    root.querySelector<HTMLButtonElement>('[data-role="edit-persona"]')!.click();
    const genre = root.querySelector<HTMLInputElement>(
      '[data-role="genre-name"]',
    )!;
    genre.value = "Case study";
    root.querySelector<HTMLButtonElement>('[data-role="save"]')!.click();
    await flush();

    expect(fake.personas[0].genre_name).toBe("Case study");
    const put = fake.requests.find((r) => r.method === "PUT")!;
    expect(put.path).toContain(encodeURIComponent(persona.id));
    expect((put.body as Record<string, string>).genre_name).toBe("Case study");
  });
});
