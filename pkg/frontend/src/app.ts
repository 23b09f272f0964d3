import { ApiClient } from "./api.js";
import { loadSession } from "./session.js";
import { renderAreaSearch } from "./views/area.js";
import { renderQuestionnaire } from "./views/questionnaire.js";
import { renderRegister } from "./views/register.js";
import { renderStatus } from "./views/status.js";

const ROUTES = ["#/area", "#/status", "#/questionnaire", "#/register"] as const;
type Route = (typeof ROUTES)[number];

function currentRoute(): Route {
  const hash = window.location.hash;
  return (ROUTES as readonly string[]).includes(hash) ? (hash as Route) : "#/area";
}

export class PortalApp {
  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
  ) {}

  start(): void {
    window.addEventListener("hashchange", () => this.render());
    this.render();
  }

  navigate(hash: string): void {
    if (window.location.hash === hash) {
      this.render();
    } else {
      window.location.hash = hash;
    }
  }

  render(): void {
    const session = loadSession();
    const route = currentRoute();
    this.root.innerHTML = `
      <header>
        <h1>Exposure check</h1>
        <nav>
          <a href="#/area" data-nav="area">Area search</a>
          <a href="#/status" data-nav="status">My status</a>
          <a href="#/questionnaire" data-nav="questionnaire">Questionnaire</a>
          <span id="session-badge">${
            session ? `Registered: ${session.maskedNumber}` : `<a href="#/register">Register</a>`
          }</span>
        </nav>
      </header>
      <main id="view"></main>
    `;
    const view = this.root.querySelector<HTMLElement>("#view")!;
    const active = this.root.querySelector(`[data-nav="${route.slice(2)}"]`);
    active?.classList.add("active");

    switch (route) {
      case "#/area":
        renderAreaSearch(view, this.api);
        break;
      case "#/status":
        void renderStatus(view, this.api, session);
        break;
      case "#/questionnaire":
        void renderQuestionnaire(view, this.api, session);
        break;
      case "#/register":
        renderRegister(view, this.api, () => this.navigate("#/status"));
        break;
    }
  }
}
