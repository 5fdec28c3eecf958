// Checker approval queue. The checker imports a key into the browser
// session (it is never sent anywhere); approvals are signed client-side
// and submitted as ready-made transactions. Status cells always show what
// the node last said — a clicked row keeps its waiting label until the
// approval actually commits, with the receipt state shown separately.
//
// In-flight receipt state lives in a map keyed by record, not on the row
// objects: rows are rebuilt by every refresh (the height watcher runs
// concurrently with an approval), and state written to a replaced row
// object would be lost.

import { ApiClient, ApiError, NeedRow, SupportRow } from "../api";
import { t } from "../i18n";
import { importSeed, SessionKey } from "../keys";
import { pollReceipt } from "../poll";
import { clear, h, label, toast } from "./dom";

const APPROVED = "approved";

type ReceiptState = "submitting" | "pending" | "done";

interface QueueItem {
  kind: "need" | "support";
  id: number;
  category: string;
  amount: number;
  unit: string;
  shipping: string | null;
  status: string;
  personalRef: string;
}

const keyOf = (item: Pick<QueueItem, "kind" | "id">) => `${item.kind}:${item.id}`;

export class QueueView {
  readonly el: HTMLElement;
  session: SessionKey | null = null;
  authorized: boolean | null = null;
  private rows: QueueItem[] = [];
  private readonly inflight = new Map<string, ReceiptState>();
  private readonly pinned = new Set<string>();
  private refreshSeq = 0;
  private readonly keyInput: HTMLTextAreaElement;
  private readonly sessionBox: HTMLElement;
  private readonly body: HTMLElement;

  constructor(
    private readonly api: ApiClient,
    private readonly pollIntervalMs?: number,
  ) {
    this.keyInput = h("textarea", {
      class: "key-input",
      rows: "2",
      "data-testid": "key-input",
      spellcheck: "false",
    }) as HTMLTextAreaElement;
    this.sessionBox = h(
      "div",
      { class: "card session" },
      label("h3", "queueSession"),
      label("p", "keyPrompt", { class: "hint" }),
      this.keyInput,
      h("div", { class: "session-actions" },
        label("button", "keyLoad", {
          type: "button",
          class: "primary",
          "data-testid": "key-load",
          onclick: () => void this.unlock(),
        }),
        label("button", "keyForget", {
          type: "button",
          "data-testid": "key-forget",
          onclick: () => this.forget(),
        }),
      ),
      h("div", { class: "field-error", "data-testid": "key-error" }),
    );
    this.body = h("div", { class: "queue-body", "data-testid": "queue-body" });
    this.el = h("section", { class: "panel" }, this.sessionBox, this.body);
    this.renderLocked();
  }

  private keyError(text: string): void {
    const box = this.sessionBox.querySelector("[data-testid=key-error]");
    if (box) box.textContent = text;
  }

  async unlock(): Promise<void> {
    this.keyError("");
    let session: SessionKey;
    try {
      session = await importSeed(this.keyInput.value);
    } catch {
      this.keyError(t("keyBad"));
      return;
    }
    // probe the checker-only status endpoint: 200/unknown id mean the role
    // check passed, unauthorized means this key gets no queue
    try {
      await this.api.status("need", 0, session);
      this.authorized = true;
    } catch (err) {
      if (err instanceof ApiError && err.code === "unknown_id") {
        this.authorized = true;
      } else if (err instanceof ApiError && err.status === 403) {
        this.authorized = false;
      } else {
        this.keyError(err instanceof Error ? err.message : String(err));
        return;
      }
    }
    this.session = this.authorized ? session : null;
    this.rows = [];
    this.inflight.clear();
    this.pinned.clear();
    await this.refresh();
  }

  forget(): void {
    this.session = null;
    this.authorized = null;
    this.rows = [];
    this.inflight.clear();
    this.pinned.clear();
    this.keyInput.value = "";
    this.renderLocked();
  }

  private renderLocked(): void {
    clear(this.body);
    const key = this.authorized === false ? "queueDenied" : "queueLocked";
    this.body.append(label("p", key, { class: "hint", "data-testid": "queue-note" }));
  }

  async refresh(): Promise<void> {
    if (this.authorized === false) return this.renderLocked();
    if (!this.session) return this.renderLocked();
    const seq = ++this.refreshSeq;
    const [needs, supports] = await Promise.all([
      this.api.needs(),
      this.api.supports(),
    ]);
    if (seq !== this.refreshSeq) return; // a newer refresh superseded this one
    const rows: QueueItem[] = [];
    for (const rec of needs.data.records) rows.push(fromNeed(rec));
    for (const rec of supports.data.records) rows.push(fromSupport(rec));
    this.rows = rows.filter(
      (item) => item.status !== APPROVED || this.pinned.has(keyOf(item)),
    );
    this.render();
  }

  private render(): void {
    clear(this.body);
    if (this.rows.length === 0) {
      this.body.append(label("p", "queueEmpty", { class: "hint", "data-testid": "queue-note" }));
      return;
    }
    const table = h(
      "table",
      { class: "listing", "data-testid": "queue-table" },
      h("thead", {}, h("tr", {},
        label("th", "colId"),
        h("th", {}),
        label("th", "colKind"),
        label("th", "colAmount"),
        label("th", "colStatus"),
        h("th", {}),
      )),
    );
    const tbody = h("tbody", {});
    for (const row of this.rows) tbody.append(...this.renderRow(row));
    table.append(tbody);
    this.body.append(table);
  }

  private renderRow(row: QueueItem): HTMLElement[] {
    const testId = `queue-row-${row.kind}-${row.id}`;
    const state = this.inflight.get(keyOf(row)) ?? "";
    const detail = h("tr", { class: "detail hidden" }, h("td", { colspan: "6" }));
    const actions = h("td", { class: "row-actions" });
    if (row.status !== APPROVED) {
      const approveButton = label("button", "approve", {
        type: "button",
        class: "primary",
        "data-testid": `approve-${row.kind}-${row.id}`,
        onclick: () => void this.approve(row),
      }) as HTMLButtonElement;
      approveButton.disabled = state !== "";
      actions.append(approveButton);
    }
    actions.append(
      label("button", "reveal", {
        type: "button",
        "data-testid": `reveal-${row.kind}-${row.id}`,
        onclick: () => void this.reveal(row, detail),
      }),
    );
    const receiptCell =
      state === "submitting" || state === "pending"
        ? h("span", { class: "badge badge-pending", "data-testid": `${testId}-receipt` }, t("approving"))
        : null;
    const tr = h(
      "tr",
      { "data-testid": testId },
      h("td", {}, `#${row.id}`),
      h("td", {}, h("span", { class: `chip chip-${row.kind}` }, row.kind)),
      h("td", {}, row.category),
      h("td", {}, `${row.amount} ${row.unit}${row.shipping ? ` · ${row.shipping}` : ""}`),
      h("td", { "data-testid": `${testId}-status` }, row.status, receiptCell ? " " : null, receiptCell),
      actions,
    );
    return [tr, detail];
  }

  private async approve(row: QueueItem): Promise<void> {
    const key = keyOf(row);
    if (!this.session || this.inflight.has(key)) return;
    this.inflight.set(key, "submitting");
    this.pinned.add(key);
    this.render();
    try {
      const receipt = (await this.api.submitApproval(row.kind, row.id, this.session)).data;
      this.inflight.set(key, "pending");
      this.render();
      const final =
        receipt.status === "pending"
          ? await pollReceipt(this.api, receipt.tx_id, { intervalMs: this.pollIntervalMs })
          : receipt;
      this.inflight.set(key, "done");
      if (final.status === "committed") {
        toast(t("approvedToast"));
      } else if (final.code === "already_approved") {
        toast(t("alreadyApproved"), "error");
      } else {
        toast(`${t("rejectedToast")} (${final.message ?? final.code})`, "error");
      }
    } catch (err) {
      this.inflight.delete(key);
      toast(err instanceof ApiError ? err.message : String(err), "error");
    }
    await this.refresh();
  }

  private async reveal(row: QueueItem, detail: HTMLElement): Promise<void> {
    if (!this.session) return;
    const cell = detail.firstChild as HTMLElement;
    clear(cell);
    detail.classList.toggle("hidden");
    if (detail.classList.contains("hidden")) return;
    try {
      const personal = (await this.api.personal(row.personalRef, this.session)).data;
      cell.append(
        h("div", { class: "personal", "data-testid": `personal-${row.kind}-${row.id}` },
          h("div", {}, `${t("name")}: ${personal.name}`),
          h("div", {}, `${t("phone")}: ${personal.phone}`),
          personal.address ? h("div", {}, `${t("address")}: ${personal.address}`) : null,
          personal.notes ? h("div", {}, `${t("notes")}: ${personal.notes}`) : null,
        ),
      );
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        cell.append(h("span", { class: "hint" }, t("revealDeleted")));
      } else {
        cell.append(h("span", { class: "field-error" },
          err instanceof Error ? err.message : String(err)));
      }
    }
  }
}

function fromNeed(rec: NeedRow): QueueItem {
  return {
    kind: "need",
    id: rec.need_id,
    category: rec.kind,
    amount: rec.amount,
    unit: rec.unit,
    shipping: null,
    status: rec.status,
    personalRef: rec.personal_ref,
  };
}

function fromSupport(rec: SupportRow): QueueItem {
  return {
    kind: "support",
    id: rec.support_id,
    category: rec.kind,
    amount: rec.amount,
    unit: rec.unit,
    shipping: rec.shipping,
    status: rec.status,
    personalRef: rec.personal_ref,
  };
}
