// End-to-end suite against a live two-node network (tests/helpers/cluster.py).
// Covers the console acceptance path: a submission resolving pending ->
// committed, the checker queue flipping a row to "approved" only after the
// chain says so, tracker tabs matching the GET endpoints byte for byte, and
// a network-level check that non-checker sessions never receive personal
// data.

import { ChildProcess, execFileSync, spawn } from "node:child_process";
import path from "node:path";
import { Readable } from "node:stream";

import { afterAll, afterEach, beforeAll, expect, it } from "vitest";

import { ApiClient, ApiError, ApplicationBody, NeedRow, SupportRow } from "../src/api";
import { AppHandles, mountApp } from "../src/app";
import { toHex } from "../src/codec";
import { importSeed } from "../src/keys";
import { pollReceipt } from "../src/poll";

interface ClusterInfo {
  url0: string;
  url1: string;
  adminSeed: string;
  checkerSeeds: [string, string];
}

const FRONTEND = process.cwd();
const POLL_MS = 300;

// distinctive token planted in every personal field so response bodies can
// be scanned for leaks
const MARK = "93121";
const SENTINEL = {
  name: `Nadia Sentinelova ${MARK}`,
  phone: `+90-555-${MARK}`,
  address: `12 Hidden Lane ${MARK}`,
  notes: `call after 18:00 ${MARK}`,
};

let child: ChildProcess;
let cluster: ClusterInfo;
const mounted: AppHandles[] = [];

function readLine(stream: Readable): Promise<string> {
  return new Promise((resolve, reject) => {
    let buffer = "";
    const onData = (chunk: Buffer) => {
      buffer += chunk.toString();
      const newline = buffer.indexOf("\n");
      if (newline >= 0) {
        stream.off("data", onData);
        resolve(buffer.slice(0, newline));
      }
    };
    stream.on("data", onData);
    stream.once("error", reject);
    stream.once("close", () =>
      reject(new Error(`cluster exited before it was ready: ${buffer}`)),
    );
  });
}

beforeAll(async () => {
  execFileSync("node", ["build.mjs"], { cwd: FRONTEND, stdio: "inherit" });
  child = spawn("python3", [path.join("tests", "helpers", "cluster.py")], {
    cwd: FRONTEND,
    stdio: ["pipe", "pipe", "inherit"],
  });
  cluster = JSON.parse(await readLine(child.stdout as Readable)) as ClusterInfo;
});

afterAll(async () => {
  if (!child) return;
  child.stdin?.end();
  await new Promise<void>((resolve) => {
    const timer = setTimeout(() => {
      child.kill("SIGKILL");
      resolve();
    }, 15_000);
    child.once("exit", () => {
      clearTimeout(timer);
      resolve();
    });
  });
});

afterEach(() => {
  while (mounted.length > 0) mounted.pop()?.destroy();
  document.body.replaceChildren();
});

function mount(opts: { baseUrl?: string; fetchImpl?: typeof fetch } = {}): AppHandles {
  const root = document.createElement("div");
  document.body.append(root);
  const handles = mountApp(root, {
    baseUrl: opts.baseUrl ?? cluster.url0,
    fetchImpl: opts.fetchImpl,
    pollIntervalMs: POLL_MS,
  });
  mounted.push(handles);
  return handles;
}

async function waitFor(cond: () => boolean, timeout = 60_000): Promise<void> {
  const deadline = Date.now() + timeout;
  while (Date.now() < deadline) {
    if (cond()) return;
    await new Promise((r) => setTimeout(r, 25));
  }
  throw new Error("condition not met in time");
}

const el = <T extends HTMLElement>(selector: string): T => {
  const found = document.querySelector(selector);
  if (!found) throw new Error(`missing element ${selector}`);
  return found as T;
};

const text = (selector: string) =>
  document.querySelector(selector)?.textContent ?? "";

const field = (name: string) => el<HTMLInputElement>(`[data-testid=field-${name}]`);

function fillForm(values: Record<string, string>): void {
  for (const [name, value] of Object.entries(values)) field(name).value = value;
}

function submitForm(): void {
  el("form").dispatchEvent(new Event("submit", { cancelable: true }));
}

// the locked-state note is already on screen before unlock starts, so wait
// for the unlock to actually change something: a table, an error, or a
// different note
const LOCKED_NOTE = "Import a checker key to see the queue.";

async function unlockQueue(seedHex: string): Promise<void> {
  el("[data-testid=nav-queue]").click();
  el<HTMLTextAreaElement>("[data-testid=key-input]").value = seedHex;
  el("[data-testid=key-load]").click();
  await waitFor(() => {
    if (document.querySelector("[data-testid=queue-table]")) return true;
    if (text("[data-testid=key-error]") !== "") return true;
    const note = text("[data-testid=queue-note]");
    return note !== "" && note !== LOCKED_NOTE;
  });
}

function randomSeedHex(): string {
  const seed = new Uint8Array(32);
  crypto.getRandomValues(seed);
  return toHex(seed);
}

it("serves the console bundle from the node itself", async () => {
  const page = await fetch(`${cluster.url0}/console/`);
  expect(page.status).toBe(200);
  expect(await page.text()).toContain('<div id="app">');

  const bundle = await fetch(`${cluster.url0}/console/app.js`);
  expect(bundle.status).toBe(200);
  expect((await bundle.text()).length).toBeGreaterThan(1000);

  const styles = await fetch(`${cluster.url0}/console/styles.css`);
  expect(styles.status).toBe(200);
});

it("form submission resolves pending -> committed", async () => {
  mount();
  fillForm({
    category: "water",
    amount: "120",
    unit: "bottle",
    name: SENTINEL.name,
    phone: SENTINEL.phone,
    address: SENTINEL.address,
    notes: SENTINEL.notes,
  });

  const seen: string[] = [];
  submitForm();
  await waitFor(() => {
    const status = text("[data-testid=receipt-status]");
    if (status && seen[seen.length - 1] !== status) seen.push(status);
    return status === "committed";
  });

  expect(seen[0]).toBe("pending");
  expect(seen[seen.length - 1]).toBe("committed");
  expect(text("[data-testid=receipt-height]")).toMatch(/\d+/);

  // second submission through the support tab, so the queue and tracker
  // have one record of each kind
  el("[data-testid=kind-support]").click();
  fillForm({
    category: "tent",
    amount: "3",
    unit: "piece",
    shipping: "truck convoy",
    name: SENTINEL.name,
    phone: SENTINEL.phone,
    address: "",
    notes: "",
  });
  submitForm();
  await waitFor(() => text("[data-testid=receipt-status]") === "pending");
  await waitFor(() => text("[data-testid=receipt-status]") === "committed");
});

it("checker queue approval flips the row to approved only after commit", async () => {
  mount();
  await unlockQueue(cluster.checkerSeeds[0]);

  expect(text("[data-testid=queue-row-need-0-status]")).toBe("waiting for confirmation");
  expect(text("[data-testid=queue-row-support-0-status]")).toBe("waiting for approval");

  el("[data-testid=approve-need-0]").click();
  // no optimistic flip: the status cell keeps the chain's label while the
  // approval is in flight, and the button cannot be clicked twice
  expect(text("[data-testid=queue-row-need-0-status]")).toContain("waiting for confirmation");
  expect(text("[data-testid=queue-row-need-0-status]")).not.toContain("approved");
  expect(el<HTMLButtonElement>("[data-testid=approve-need-0]").disabled).toBe(true);

  await waitFor(() => text("[data-testid=queue-row-need-0-status]") === "approved");
  expect(text(".toasts")).toContain("Approval committed.");

  // authorized contact reveal on the approved (pinned) row
  el("[data-testid=reveal-need-0]").click();
  await waitFor(() => text("[data-testid=personal-need-0]") !== "");
  expect(text("[data-testid=personal-need-0]")).toContain(SENTINEL.name);
  expect(text("[data-testid=personal-need-0]")).toContain(SENTINEL.phone);
});

it("a second checker racing an approved record gets the already-approved toast", async () => {
  const handles = mount();
  await unlockQueue(cluster.checkerSeeds[0]);
  expect(text("[data-testid=queue-row-support-0-status]")).toBe("waiting for approval");

  // freeze this session's view, then let the other checker win the race
  handles.watcher.stop();
  const rival = new ApiClient(cluster.url0);
  const rivalKey = await importSeed(cluster.checkerSeeds[1]);
  const receipt = (await rival.submitApproval("support", 0, rivalKey)).data;
  const final = await pollReceipt(rival, receipt.tx_id, { intervalMs: POLL_MS });
  expect(final.status).toBe("committed");

  // the stale button still shows a waiting row; clicking it must surface
  // the race, not a double approval
  el("[data-testid=approve-support-0]").click();
  await waitFor(() => text(".toasts").includes("Already approved by another checker."));
  await waitFor(() => text("[data-testid=queue-row-support-0-status]") === "approved");
});

it("tracker auto-refreshes on new committed height and matches the GET endpoints byte for byte", async () => {
  const handles = mount();
  el("[data-testid=nav-tracker]").click();
  await waitFor(() => text("[data-testid=tracker-status-need-0]") !== "");
  expect(document.querySelector("[data-testid=tracker-row-need-1]")).toBeNull();

  // a new application committed by another client shows up without any
  // manual refresh, via the height watcher
  const api = new ApiClient(cluster.url0);
  const body: ApplicationBody = {
    kind: "need",
    category: "blanket",
    amount: 4,
    unit: "box",
    personal: { name: SENTINEL.name, phone: SENTINEL.phone },
  };
  const receipt = (await api.submitApplication(body)).data;
  const final = await pollReceipt(api, receipt.tx_id, { intervalMs: POLL_MS });
  expect(final.status).toBe("committed");
  await waitFor(() => text("[data-testid=tracker-status-need-1]") !== "");
  expect(text("[data-testid=tracker-status-need-1]")).toBe("waiting for confirmation");
  expect(text("[data-testid=tracker-status-need-0]")).toBe("approved");

  // quiesce: both nodes at the same height, no writes in flight
  const other = new ApiClient(cluster.url1);
  const deadline = Date.now() + 30_000;
  for (;;) {
    const [height0, height1] = await Promise.all([
      api.chain().then((r) => r.data.height),
      other.chain().then((r) => r.data.height),
    ]);
    if (height0 === height1 && height0 >= (final.height ?? 0)) break;
    if (Date.now() > deadline) throw new Error("nodes did not converge");
    await new Promise((r) => setTimeout(r, 100));
  }

  // the tabs must show exactly what the HTTP endpoints return
  await handles.tracker.refresh();
  for (const [tab, endpoint] of [
    ["needs", "/v1/needs"],
    ["supports", "/v1/supports"],
    ["approved", "/v1/supports/approved"],
  ] as const) {
    const direct = await (await fetch(cluster.url0 + endpoint)).text();
    const mirror = await (await fetch(cluster.url1 + endpoint)).text();
    expect(handles.tracker.rawBodies[tab]).toBe(direct);
    expect(mirror).toBe(direct);
  }

  const approved = JSON.parse(handles.tracker.rawBodies.approved ?? "") as {
    records: SupportRow[];
  };
  expect(approved.records.map((r) => r.support_id)).toEqual([0]);
});

it("non-checker sessions never receive personal data", async () => {
  const recorded: { url: string; status: number; body: string }[] = [];
  const recordingFetch: typeof fetch = async (url, init) => {
    const response = await fetch(url, init);
    const body = await response.text();
    recorded.push({ url: String(url), status: response.status, body });
    return new Response(body, {
      status: response.status,
      headers: { "Content-Type": "application/json" },
    });
  };

  // an anonymous visitor browses every tab, then tries the queue with a
  // key that has no role at all
  mount({ fetchImpl: recordingFetch });
  el("[data-testid=nav-tracker]").click();
  await waitFor(() => text("[data-testid=tracker-status-need-0]") !== "");
  await unlockQueue(randomSeedHex());
  expect(text("[data-testid=queue-note]")).toContain("does not hold the checker role");
  expect(document.querySelector("[data-testid=queue-table]")).toBeNull();

  expect(recorded.length).toBeGreaterThan(3);
  for (const entry of recorded) {
    expect(entry.body, `leak in ${entry.url}`).not.toContain(MARK);
  }

  // network-level checks on the personal endpoint itself
  const needs = (await new ApiClient(cluster.url0).needs()).data.records as NeedRow[];
  const ref = needs[0].personal_ref;
  const bare = await fetch(`${cluster.url0}/v1/personal/${ref}`);
  expect(bare.status).toBe(401);
  expect(await bare.text()).not.toContain(MARK);

  const stranger = await importSeed(randomSeedHex());
  const api = new ApiClient(cluster.url0);
  const denied = await api.personal(ref, stranger).catch((err: unknown) => err);
  expect(denied).toBeInstanceOf(ApiError);
  expect((denied as ApiError).status).toBe(403);

  // positive control: the sentinel is really there for an authorized role
  const checker = await importSeed(cluster.checkerSeeds[0]);
  const record = (await api.personal(ref, checker)).data;
  expect(record.name).toBe(SENTINEL.name);
  expect(record.phone).toBe(SENTINEL.phone);
});

it("hides the queue from a key without the checker role, even the admin", async () => {
  mount();
  await unlockQueue(cluster.adminSeed);
  expect(text("[data-testid=queue-note]")).toContain("does not hold the checker role");
  expect(document.querySelector("[data-testid=queue-table]")).toBeNull();
});

it("shows the unavailable banner and preserves the form when no node answers", async () => {
  // a downed node surfaces as a rejected fetch; rejecting directly keeps
  // happy-dom from leaking async socket errors into unrelated tests
  const downFetch: typeof fetch = () =>
    Promise.reject(new TypeError("connect ECONNREFUSED"));
  mount({ fetchImpl: downFetch });
  fillForm({
    category: "water",
    amount: "10",
    unit: "bottle",
    name: "Kept Value",
    phone: "555-0000",
  });
  submitForm();
  await waitFor(() => !el("[data-testid=form-banner]").classList.contains("hidden"), 30_000);
  expect(text("[data-testid=form-banner]")).toContain("Service unavailable");
  expect(field("category").value).toBe("water");
  expect(field("name").value).toBe("Kept Value");
});
