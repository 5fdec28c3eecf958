// Console shell: navigation, language toggle, and the three sections
// (public forms, checker queue, tracker) wired to one API client and one
// height watcher. Served as static files by the node under /console.

import { ApiClient, FetchLike } from "./api";
import { getLocale, setLocale, t } from "./i18n";
import { HeightWatcher } from "./poll";
import { ApplicationValidator } from "./schema";
import { h, label, refreshLabels } from "./views/dom";
import { FormView } from "./views/form";
import { QueueView } from "./views/queue";
import { TrackerView } from "./views/tracker";

export interface AppOptions {
  baseUrl?: string;
  fetchImpl?: FetchLike;
  pollIntervalMs?: number;
}

export interface AppHandles {
  api: ApiClient;
  form: FormView;
  queue: QueueView;
  tracker: TrackerView;
  watcher: HeightWatcher;
  destroy(): void;
}

type SectionName = "forms" | "queue" | "tracker";

export function mountApp(root: HTMLElement, opts: AppOptions = {}): AppHandles {
  const api = new ApiClient(opts.baseUrl ?? "", opts.fetchImpl);

  // the validator compiles the schema the node itself enforces; prefetched
  // at mount so an invalid submit is rejected without any network traffic,
  // with a retry on submit so a temporarily unreachable node surfaces as
  // the form banner rather than a dead page
  let validator: ApplicationValidator | undefined;
  const loadValidator = async () => {
    if (!validator) {
      validator = new ApplicationValidator((await api.applicationSchema()).data);
    }
    return validator;
  };
  void loadValidator().catch(() => undefined);

  const form = new FormView(api, loadValidator, opts.pollIntervalMs);
  const queue = new QueueView(api, opts.pollIntervalMs);
  const tracker = new TrackerView(api);

  const sections: Record<SectionName, HTMLElement> = {
    forms: form.el,
    queue: queue.el,
    tracker: tracker.el,
  };
  let active: SectionName = "forms";

  const navButton = (name: SectionName, key: "tabForms" | "tabQueue" | "tabTracker") =>
    label("button", key, {
      type: "button",
      class: name === active ? "nav-tab active" : "nav-tab",
      "data-testid": `nav-${name}`,
      onclick: () => show(name),
    });

  const nav = h(
    "nav",
    { class: "nav" },
    navButton("forms", "tabForms"),
    navButton("queue", "tabQueue"),
    navButton("tracker", "tabTracker"),
  );

  const localeButton = h(
    "button",
    { type: "button", class: "locale", "data-testid": "locale-toggle", onclick: toggleLocale },
    "TR",
  );

  const header = h(
    "header",
    { class: "header" },
    label("h1", "appTitle"),
    h("div", { class: "header-right" }, localeButton),
  );

  const main = h("main", { class: "main" }, form.el, queue.el, tracker.el);
  const toasts = h("div", { class: "toasts" });
  root.append(header, nav, main, toasts);

  function show(name: SectionName): void {
    active = name;
    for (const [section, el] of Object.entries(sections)) {
      el.classList.toggle("hidden", section !== name);
    }
    for (const button of nav.querySelectorAll(".nav-tab")) {
      button.classList.toggle(
        "active",
        button.getAttribute("data-testid") === `nav-${name}`,
      );
    }
    if (name === "tracker") void tracker.refresh().catch(() => undefined);
    if (name === "queue") void queue.refresh().catch(() => undefined);
  }

  function toggleLocale(): void {
    setLocale(getLocale() === "en" ? "tr" : "en");
    localeButton.textContent = getLocale() === "en" ? "TR" : "EN";
    refreshLabels(root);
  }

  const watcher = new HeightWatcher(api, opts.pollIntervalMs);
  watcher.onChange(() => {
    void tracker.refresh().catch(() => undefined);
    void queue.refresh().catch(() => undefined);
  });
  watcher.start();

  show("forms");

  return {
    api,
    form,
    queue,
    tracker,
    watcher,
    destroy() {
      watcher.stop();
      root.replaceChildren();
    },
  };
}

export { t };
