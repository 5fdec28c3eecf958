// DOM behaviour against a canned node: verbatim status labels, EN/TR
// chrome, inline validation short-circuiting the network, and the queue
// staying hidden for keys without the checker role.

import { afterEach, describe, expect, it } from "vitest";

import { FetchLike } from "../src/api";
import { AppHandles, mountApp } from "../src/app";
import { setLocale } from "../src/i18n";
import { POLL_INTERVAL_MS } from "../src/poll";
import fixture from "./fixtures/vectors.json";

const WAITING_NEED = "waiting for confirmation";
const WAITING_SUPPORT = "waiting for approval";
const APPROVED = "approved";

const REF = "ab".repeat(32);

const LISTINGS: Record<string, unknown> = {
  "/v1/needs": {
    height: 3,
    records: [
      needRow(0, WAITING_NEED),
      { ...needRow(1, APPROVED), approved_by: "cd".repeat(32), approved_at: 3 },
    ],
  },
  "/v1/supports": { height: 3, records: [supportRow(0, WAITING_SUPPORT)] },
  "/v1/supports/approved": { height: 3, records: [] },
  "/v1/chain": { height: 3, tip_hash: "00", state_digest: "00", term: 1, leader: "ee", node: "ee", peers: 1, members: [] },
  "/v1/schema/application": fixture.schema,
};

function needRow(id: number, status: string) {
  return {
    need_id: id,
    kind: "water",
    amount: 120,
    unit: "bottle",
    creator: "aa".repeat(32),
    personal_ref: REF,
    status,
    created_at: 1,
    approved_by: null,
    approved_at: null,
  };
}

function supportRow(id: number, status: string) {
  return { ...needRow(id, status), need_id: undefined, support_id: id, shipping: "truck" };
}

interface Recorded {
  method: string;
  path: string;
}

function stubFetch(log: Recorded[]): FetchLike {
  return async (url, init) => {
    const path = new URL(url, "http://stub").pathname;
    log.push({ method: init?.method ?? "GET", path });
    if (path.startsWith("/v1/status/")) {
      return jsonResponse(403, { code: "unauthorized", message: "checker role required" });
    }
    const body = LISTINGS[path];
    if (body === undefined) {
      return jsonResponse(404, { code: "not_found", message: `no route ${path}` });
    }
    return jsonResponse(200, body);
  };
}

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

const mounted: AppHandles[] = [];

function mount(fetchImpl: FetchLike): AppHandles {
  const root = document.createElement("div");
  document.body.append(root);
  const handles = mountApp(root, {
    baseUrl: "http://stub",
    fetchImpl,
    pollIntervalMs: 50,
  });
  mounted.push(handles);
  return handles;
}

afterEach(() => {
  setLocale("en");
  while (mounted.length > 0) mounted.pop()?.destroy();
  document.body.replaceChildren();
});

async function waitFor(cond: () => boolean, timeout = 5000): Promise<void> {
  const deadline = Date.now() + timeout;
  while (Date.now() < deadline) {
    if (cond()) return;
    await new Promise((r) => setTimeout(r, 25));
  }
  throw new Error("condition not met in time");
}

const text = (selector: string) =>
  document.querySelector(selector)?.textContent ?? "";

describe("tracker", () => {
  it("renders chain status labels verbatim and keeps the raw bodies", async () => {
    const log: Recorded[] = [];
    const handles = mount(stubFetch(log));
    (document.querySelector("[data-testid=nav-tracker]") as HTMLElement).click();
    await waitFor(() => text("[data-testid=tracker-status-need-0]") !== "");

    expect(text("[data-testid=tracker-status-need-0]")).toBe(WAITING_NEED);
    expect(text("[data-testid=tracker-status-need-1]")).toBe(APPROVED);
    expect(handles.tracker.rawBodies.needs).toBe(JSON.stringify(LISTINGS["/v1/needs"]));
    expect(handles.tracker.rawBodies.supports).toBe(JSON.stringify(LISTINGS["/v1/supports"]));
    expect(handles.tracker.rawBodies.approved).toBe(
      JSON.stringify(LISTINGS["/v1/supports/approved"]),
    );

    (document.querySelector("[data-testid=tracker-tab-supports]") as HTMLElement).click();
    await waitFor(() => text("[data-testid=tracker-status-support-0]") !== "");
    expect(text("[data-testid=tracker-status-support-0]")).toBe(WAITING_SUPPORT);
  });

  it("polls at the documented 2s interval by default", () => {
    expect(POLL_INTERVAL_MS).toBe(2000);
  });
});

describe("language toggle", () => {
  it("translates the chrome but never the status labels", async () => {
    mount(stubFetch([]));
    (document.querySelector("[data-testid=nav-tracker]") as HTMLElement).click();
    await waitFor(() => text("[data-testid=tracker-status-need-0]") !== "");

    expect(text("[data-testid=nav-tracker]")).toBe("Tracker");
    (document.querySelector("[data-testid=locale-toggle]") as HTMLElement).click();
    expect(text("[data-testid=nav-tracker]")).toBe("Takip");
    expect(text("[data-testid=tracker-tab-needs]")).toBe("İhtiyaçlar");
    // chain-reported labels stay byte-verbatim in every locale
    expect(text("[data-testid=tracker-status-need-0]")).toBe(WAITING_NEED);
    (document.querySelector("[data-testid=locale-toggle]") as HTMLElement).click();
    expect(text("[data-testid=nav-tracker]")).toBe("Tracker");
  });
});

describe("form validation", () => {
  it("shows inline errors without touching /v1/applications", async () => {
    const log: Recorded[] = [];
    mount(stubFetch(log));
    await waitFor(() => log.some((r) => r.path === "/v1/schema/application"));

    const field = (name: string) =>
      document.querySelector(`[data-testid=field-${name}]`) as HTMLInputElement;
    field("category").value = "water";
    field("unit").value = "bottle";
    field("name").value = "Avery";
    field("phone").value = "555-0100";
    // amount intentionally left blank
    document
      .querySelector("form")!
      .dispatchEvent(new Event("submit", { cancelable: true }));
    await waitFor(() => text("[data-err=amount]") !== "");

    expect(log.filter((r) => r.path === "/v1/applications")).toEqual([]);
    expect(field("category").value).toBe("water");
  });
});

describe("checker queue", () => {
  it("stays hidden for a key without the checker role", async () => {
    const log: Recorded[] = [];
    mount(stubFetch(log));
    (document.querySelector("[data-testid=nav-queue]") as HTMLElement).click();

    const input = document.querySelector("[data-testid=key-input]") as HTMLTextAreaElement;
    input.value = "11".repeat(32);
    (document.querySelector("[data-testid=key-load]") as HTMLElement).click();
    await waitFor(() =>
      text("[data-testid=queue-note]").includes("does not hold the checker role"),
    );

    expect(document.querySelector("[data-testid=queue-table]")).toBeNull();
    expect(log.filter((r) => r.path.startsWith("/v1/personal"))).toEqual([]);
  });
});
