// Small DOM helpers; the console is a plain static page, no framework.

import { LabelKey, t } from "../i18n";

type Child = Node | string | null | undefined | Child[];

export function h(
  tag: string,
  attrs: Record<string, unknown> = {},
  ...children: Child[]
): HTMLElement {
  const el = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (value == null) continue;
    if (key.startsWith("on") && typeof value === "function") {
      el.addEventListener(key.slice(2), value as EventListener);
    } else if (key === "class") {
      el.className = String(value);
    } else {
      el.setAttribute(key, String(value));
    }
  }
  appendChildren(el, children);
  return el;
}

function appendChildren(el: HTMLElement, children: Child[]): void {
  for (const child of children) {
    if (child == null) continue;
    if (Array.isArray(child)) appendChildren(el, child);
    else el.append(child);
  }
}

// A labelled element: textContent tracks the active locale via data-i18n,
// so switching language rewrites labels in place without losing form state.
export function label(tag: string, key: LabelKey, attrs: Record<string, unknown> = {}): HTMLElement {
  return h(tag, { ...attrs, "data-i18n": key }, t(key));
}

export function refreshLabels(root: ParentNode): void {
  for (const el of root.querySelectorAll<HTMLElement>("[data-i18n]")) {
    el.textContent = t(el.dataset.i18n as LabelKey);
  }
}

export function clear(el: HTMLElement): void {
  while (el.firstChild) el.firstChild.remove();
}

export function shortHex(hex: string, keep = 8): string {
  return hex.length > keep + 1 ? `${hex.slice(0, keep)}…` : hex;
}

// Transient message in the shared .toasts container (mounted by the app).
export function toast(message: string, kind: "info" | "error" = "info"): void {
  const box = document.querySelector(".toasts");
  if (!box) return;
  const item = h("div", { class: `toast toast-${kind}`, role: "status" }, message);
  box.append(item);
  setTimeout(() => item.remove(), 6000);
}
