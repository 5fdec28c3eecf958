// Public application forms (request / support). Validation runs against
// the node's own JSON schema before anything touches the network; a valid
// submission shows the receipt as "pending" and flips to "committed" or
// "rejected" only when GET /v1/tx says so.

import { ApiClient, ApiError, Receipt } from "../api";
import { t } from "../i18n";
import { pollReceipt } from "../poll";
import { ApplicationValidator, FieldError, FormModel, toApplicationBody } from "../schema";
import { clear, h, label, shortHex } from "./dom";

const FIELDS = [
  "category",
  "amount",
  "unit",
  "shipping",
  "name",
  "phone",
  "address",
  "notes",
] as const;
type FieldName = (typeof FIELDS)[number];

// schema paths -> form inputs
const ERROR_FIELDS: Record<string, FieldName> = {
  category: "category",
  amount: "amount",
  unit: "unit",
  shipping: "shipping",
  "personal.name": "name",
  "personal.phone": "phone",
  "personal.address": "address",
  "personal.notes": "notes",
};

export class FormView {
  readonly el: HTMLElement;
  private kind: "need" | "support" = "need";
  private readonly inputs = {} as Record<FieldName, HTMLInputElement>;
  private readonly errors = {} as Record<FieldName, HTMLElement>;
  private readonly generalError: HTMLElement;
  private readonly banner: HTMLElement;
  private readonly receiptBox: HTMLElement;
  private readonly submitButton: HTMLButtonElement;
  private readonly shippingRow: HTMLElement;

  constructor(
    private readonly api: ApiClient,
    private readonly validator: () => Promise<ApplicationValidator>,
    private readonly pollIntervalMs?: number,
  ) {
    this.banner = h("div", { class: "banner hidden", "data-testid": "form-banner" });
    this.generalError = h("div", { class: "field-error hidden" });
    this.receiptBox = h("div", { class: "receipt hidden", "data-testid": "receipt" });
    this.submitButton = h(
      "button",
      { class: "primary", type: "submit", "data-i18n": "submit" },
      t("submit"),
    ) as HTMLButtonElement;

    const rows = FIELDS.map((name) => this.fieldRow(name));
    this.shippingRow = rows[FIELDS.indexOf("shipping")];

    const form = h(
      "form",
      { class: "card", novalidate: "", onsubmit: (e: Event) => void this.submit(e) },
      this.kindSwitch(),
      this.banner,
      ...rows,
      label("p", "personalNote", { class: "hint" }),
      this.generalError,
      this.submitButton,
      this.receiptBox,
    );
    this.el = h("section", { class: "panel" }, form);
    this.setKind("need");
  }

  private kindSwitch(): HTMLElement {
    const need = label("button", "formNeed", {
      type: "button",
      class: "tab",
      "data-testid": "kind-need",
      onclick: () => this.setKind("need"),
    });
    const support = label("button", "formSupport", {
      type: "button",
      class: "tab",
      "data-testid": "kind-support",
      onclick: () => this.setKind("support"),
    });
    return h("div", { class: "tabs" }, need, support);
  }

  private setKind(kind: "need" | "support"): void {
    this.kind = kind;
    this.shippingRow.classList.toggle("hidden", kind === "need");
    for (const tab of this.el.querySelectorAll(".tabs .tab")) {
      tab.classList.toggle(
        "active",
        tab.getAttribute("data-testid") === `kind-${kind}`,
      );
    }
  }

  private fieldRow(name: FieldName): HTMLElement {
    const input = h("input", {
      name,
      "data-testid": `field-${name}`,
      autocomplete: "off",
    }) as HTMLInputElement;
    const error = h("span", { class: "field-error", "data-err": name });
    this.inputs[name] = input;
    this.errors[name] = error;
    return h("div", { class: "field" }, label("label", name), input, error);
  }

  private model(): FormModel {
    const value = (name: FieldName) => this.inputs[name].value;
    return {
      kind: this.kind,
      category: value("category"),
      amount: value("amount"),
      unit: value("unit"),
      shipping: value("shipping"),
      name: value("name"),
      phone: value("phone"),
      address: value("address"),
      notes: value("notes"),
    };
  }

  private showErrors(errors: FieldError[]): void {
    const leftover: string[] = [];
    for (const err of errors) {
      const field = ERROR_FIELDS[err.field];
      if (field && (field !== "shipping" || this.kind === "support")) {
        this.errors[field].textContent = err.message;
      } else if (err.field !== "body") {
        leftover.push(`${err.field}: ${err.message}`);
      }
    }
    if (leftover.length > 0) {
      this.generalError.textContent = leftover.join("; ");
      this.generalError.classList.remove("hidden");
    }
  }

  private resetMessages(): void {
    for (const name of FIELDS) this.errors[name].textContent = "";
    this.generalError.classList.add("hidden");
    this.banner.classList.add("hidden");
  }

  private showReceipt(receipt: Receipt): void {
    clear(this.receiptBox);
    this.receiptBox.classList.remove("hidden");
    const badge = h(
      "span",
      { class: `badge badge-${receipt.status}`, "data-testid": "receipt-status" },
      receipt.status,
    );
    const line = h(
      "span",
      {},
      `${t("receiptTx")} ${shortHex(receipt.tx_id, 12)}`,
    );
    this.receiptBox.append(badge, line);
    if (receipt.status === "committed") {
      this.receiptBox.append(
        h(
          "span",
          { "data-testid": "receipt-height" },
          `${t("receiptHeight")} ${receipt.height}`,
        ),
      );
    }
    if (receipt.status === "rejected") {
      this.receiptBox.append(
        h("span", { class: "field-error" }, receipt.message ?? receipt.code ?? ""),
      );
    }
  }

  private async submit(event: Event): Promise<void> {
    event.preventDefault();
    this.resetMessages();
    const body = toApplicationBody(this.model());

    let validator: ApplicationValidator;
    try {
      validator = await this.validator();
    } catch {
      this.banner.textContent = t("unavailable");
      this.banner.classList.remove("hidden");
      return;
    }
    const errors = validator.validate(body);
    if (errors.length > 0) {
      this.showErrors(errors); // invalid forms never reach the network
      return;
    }

    this.submitButton.disabled = true;
    this.submitButton.textContent = t("submitting");
    try {
      const receipt = (await this.api.submitApplication(body)).data;
      this.showReceipt(receipt);
      if (receipt.status === "pending") {
        const final = await pollReceipt(this.api, receipt.tx_id, {
          intervalMs: this.pollIntervalMs,
          onUpdate: (r) => this.showReceipt({ ...r, personal_ref: receipt.personal_ref }),
        });
        this.showReceipt({ ...final, personal_ref: receipt.personal_ref });
      }
    } catch (err) {
      if (err instanceof ApiError && err.unavailable) {
        this.banner.textContent = t("unavailable");
        this.banner.classList.remove("hidden");
      } else if (err instanceof ApiError) {
        this.generalError.textContent = err.message;
        this.generalError.classList.remove("hidden");
      } else {
        throw err;
      }
    } finally {
      this.submitButton.disabled = false;
      this.submitButton.textContent = t("submit");
    }
  }
}
