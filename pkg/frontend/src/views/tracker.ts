// Read-only status tracker: needs, supports, and approved supports, each
// tab rendered from — and only from — the matching GET endpoint. The raw
// response body is kept verbatim per tab; rows are a rendering of it, not
// a local projection, and refreshes follow the committed height.

import { ApiClient, ApiResponse, NeedRow, RecordListing, SupportRow } from "../api";
import { t } from "../i18n";
import { clear, h, label, shortHex } from "./dom";

export type TrackerTab = "needs" | "supports" | "approved";

export class TrackerView {
  readonly el: HTMLElement;
  active: TrackerTab = "needs";
  readonly rawBodies: Partial<Record<TrackerTab, string>> = {};
  private readonly listings: Partial<
    Record<TrackerTab, RecordListing<NeedRow> | RecordListing<SupportRow>>
  > = {};
  private readonly body: HTMLElement;
  private readonly heightNote: HTMLElement;
  private refreshSeq = 0;

  constructor(private readonly api: ApiClient) {
    this.body = h("div", { class: "tracker-body" });
    this.heightNote = h("span", { class: "hint", "data-testid": "tracker-height" });
    const tabs = h(
      "div",
      { class: "tabs" },
      this.tabButton("needs", "tabNeeds"),
      this.tabButton("supports", "tabSupports"),
      this.tabButton("approved", "tabApproved"),
      this.heightNote,
    );
    this.el = h("section", { class: "panel" }, h("div", { class: "card" }, tabs, this.body));
  }

  private tabButton(tab: TrackerTab, key: "tabNeeds" | "tabSupports" | "tabApproved"): HTMLElement {
    return label("button", key, {
      type: "button",
      class: tab === this.active ? "tab active" : "tab",
      "data-testid": `tracker-tab-${tab}`,
      onclick: () => void this.show(tab),
    });
  }

  async show(tab: TrackerTab): Promise<void> {
    this.active = tab;
    for (const button of this.el.querySelectorAll(".tabs .tab")) {
      button.classList.toggle(
        "active",
        button.getAttribute("data-testid") === `tracker-tab-${tab}`,
      );
    }
    await this.refresh();
  }

  async refresh(): Promise<void> {
    const seq = ++this.refreshSeq;
    const [needs, supports, approved] = await Promise.all([
      this.api.needs(),
      this.api.supports(),
      this.api.approvedSupports(),
    ]);
    if (seq !== this.refreshSeq) return; // a newer refresh superseded this one
    this.keep("needs", needs);
    this.keep("supports", supports);
    this.keep("approved", approved);
    this.render();
  }

  private keep(
    tab: TrackerTab,
    response: ApiResponse<RecordListing<NeedRow> | RecordListing<SupportRow>>,
  ): void {
    this.rawBodies[tab] = response.raw;
    this.listings[tab] = response.data;
  }

  private render(): void {
    clear(this.body);
    const listing = this.listings[this.active];
    if (!listing) return;
    this.heightNote.textContent = `${t("trackerHeight")}: ${listing.height}`;
    if (listing.records.length === 0) {
      this.body.append(label("p", "emptyList", { class: "hint" }));
      return;
    }
    const withShipping = this.active !== "needs";
    const table = h(
      "table",
      { class: "listing", "data-testid": `tracker-table-${this.active}` },
      h("thead", {}, h("tr", {},
        label("th", "colId"),
        label("th", "colKind"),
        label("th", "colAmount"),
        label("th", "colUnit"),
        withShipping ? label("th", "colShipping") : null,
        label("th", "colStatus"),
        label("th", "colCreated"),
        label("th", "colApproved"),
      )),
      h("tbody", {}, listing.records.map((rec) => this.renderRow(rec, withShipping))),
    );
    this.body.append(h("div", { class: "scroll" }, table));
  }

  private renderRow(rec: NeedRow | SupportRow, withShipping: boolean): HTMLElement {
    const id = "need_id" in rec ? rec.need_id : rec.support_id;
    const kind = "need_id" in rec ? "need" : "support";
    return h(
      "tr",
      { "data-testid": `tracker-row-${kind}-${id}` },
      h("td", {}, `#${id}`),
      h("td", {}, rec.kind),
      h("td", {}, String(rec.amount)),
      h("td", {}, rec.unit),
      withShipping ? h("td", {}, "shipping" in rec ? rec.shipping : "") : null,
      h("td", { "data-testid": `tracker-status-${kind}-${id}` }, rec.status),
      h("td", {}, String(rec.created_at)),
      h("td", {}, rec.approved_at == null ? "" : `${rec.approved_at} (${shortHex(rec.approved_by ?? "")})`),
    );
  }
}
