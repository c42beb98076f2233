// Evaluation console: schema-driven act composition, server-authoritative
// transcript, terminate + judge flow. All state lives on the server; this
// client only renders it and posts acts.

import { ApiClient, ServiceError } from "./api.js";
import {
  GENERAL_DOMAIN,
  actText,
  composeAct,
  domainOptions,
  intentOptions,
  slotOptions,
} from "./composer.js";
import type { DialogAct, GoalView, SchemaView, SessionCreated } from "./types.js";

interface ConsoleState {
  sessionId: string | null;
  schema: SchemaView | null;
  goal: GoalView | null;
  turnIndex: number;
  status: "idle" | "active" | "terminated" | "judged";
  autoDone: boolean;
  inFlight: boolean;
  verdict: "success" | "failure" | null;
  staged: DialogAct[];
  transcript: { speaker: "usr" | "sys"; acts: DialogAct[] }[];
}

export class EvalConsole {
  state: ConsoleState = {
    sessionId: null,
    schema: null,
    goal: null,
    turnIndex: 0,
    status: "idle",
    autoDone: false,
    inFlight: false,
    verdict: null,
    staged: [],
    transcript: [],
  };

  constructor(
    readonly root: HTMLElement,
    readonly client: ApiClient,
  ) {
    this.renderShell();
  }

  private el<T extends HTMLElement>(id: string): T {
    const node = this.root.querySelector(`#${id}`);
    if (!node) {
      throw new Error(`missing element #${id}`);
    }
    return node as T;
  }

  private renderShell() {
    this.root.innerHTML = `
      <header>
        <h1>Dialog evaluation console</h1>
        <div id="status-badge" class="badge">no session</div>
        <div id="turn-counter"></div>
      </header>
      <div id="error-banner" class="error hidden"></div>
      <button id="start-btn">Start session</button>
      <main class="hidden" id="main">
        <section id="goal-panel"><h2>Your goal</h2><div id="goal-body"></div></section>
        <section id="transcript-panel"><h2>Transcript</h2><ol id="transcript"></ol></section>
        <section id="composer-panel">
          <h2>Compose act</h2>
          <label>Domain <select id="domain-select"></select></label>
          <label>Intent <select id="intent-select"></select></label>
          <fieldset id="slot-boxes"><legend>Slots</legend></fieldset>
          <button id="add-act-btn">Add act</button>
          <ul id="staged-acts"></ul>
          <button id="send-btn" disabled>Send turn</button>
        </section>
        <section id="controls">
          <button id="terminate-btn">Terminate (doomed)</button>
          <button id="judge-success-btn" disabled>Judge: success</button>
          <button id="judge-failure-btn" disabled>Judge: failure</button>
        </section>
        <section id="summary" class="hidden"><h2>Session summary</h2><div id="summary-body"></div></section>
      </main>
    `;
    this.el<HTMLButtonElement>("start-btn").addEventListener("click", () => {
      void this.start();
    });
    this.el<HTMLSelectElement>("domain-select").addEventListener("change", () =>
      this.refreshComposer(),
    );
    this.el<HTMLSelectElement>("intent-select").addEventListener("change", () =>
      this.refreshSlots(),
    );
    this.el<HTMLButtonElement>("add-act-btn").addEventListener("click", () =>
      this.stageAct(),
    );
    this.el<HTMLButtonElement>("send-btn").addEventListener("click", () => {
      void this.sendTurn();
    });
    this.el<HTMLButtonElement>("terminate-btn").addEventListener("click", () => {
      void this.terminate();
    });
    this.el<HTMLButtonElement>("judge-success-btn").addEventListener("click", () => {
      void this.judge("success");
    });
    this.el<HTMLButtonElement>("judge-failure-btn").addEventListener("click", () => {
      void this.judge("failure");
    });
  }

  async start(): Promise<void> {
    await this.guard(async () => {
      const created: SessionCreated = await this.client.createSession();
      this.state.sessionId = created.session_id;
      this.state.schema = created.schema;
      this.state.goal = created.goal;
      this.state.status = "active";
      this.state.turnIndex = 0;
      this.state.transcript = [];
      this.state.staged = [];
      this.el("start-btn").classList.add("hidden");
      this.el("main").classList.remove("hidden");
      this.renderGoal();
      this.refreshComposer();
      this.renderAll();
    });
  }

  private renderGoal() {
    const goal = this.state.goal;
    if (!goal) return;
    const parts = goal.domains.map((g) => {
      const constraints = Object.entries(g.constraints)
        .map(([s, v]) => `<li>${s} = <b>${v}</b></li>`)
        .join("");
      const requests = g.requests.map((r) => `<li>find out <b>${r}</b></li>`).join("");
      const book = g.book ? "<li><b>book it</b></li>" : "";
      return `<div class="goal-domain"><h3>${g.domain}</h3><ul>${constraints}${requests}${book}</ul></div>`;
    });
    this.el("goal-body").innerHTML = parts.join("");
  }

  refreshComposer() {
    const schema = this.state.schema;
    if (!schema) return;
    const domainSel = this.el<HTMLSelectElement>("domain-select");
    if (!domainSel.options.length) {
      for (const d of domainOptions(schema)) {
        domainSel.add(new Option(d, d));
      }
    }
    const intents = intentOptions(schema, domainSel.value);
    const intentSel = this.el<HTMLSelectElement>("intent-select");
    intentSel.innerHTML = "";
    for (const i of intents) {
      intentSel.add(new Option(i, i));
    }
    this.refreshSlots();
  }

  refreshSlots() {
    const schema = this.state.schema;
    if (!schema) return;
    const domain = this.el<HTMLSelectElement>("domain-select").value;
    const intent = this.el<HTMLSelectElement>("intent-select").value;
    const slots = domain === GENERAL_DOMAIN ? [] : slotOptions(schema, domain, intent);
    const box = this.el("slot-boxes");
    box.innerHTML = "<legend>Slots</legend>";
    for (const s of slots) {
      const label = document.createElement("label");
      const input = document.createElement("input");
      input.type = "checkbox";
      input.value = s;
      input.className = "slot-box";
      label.appendChild(input);
      label.appendChild(document.createTextNode(` ${s}`));
      box.appendChild(label);
    }
  }

  stageAct() {
    const domain = this.el<HTMLSelectElement>("domain-select").value;
    const intent = this.el<HTMLSelectElement>("intent-select").value;
    const slots = [...this.root.querySelectorAll<HTMLInputElement>(".slot-box")]
      .filter((b) => b.checked)
      .map((b) => b.value);
    this.state.staged.push(composeAct(domain, intent, slots));
    this.renderStaged();
  }

  private renderStaged() {
    const list = this.el("staged-acts");
    list.innerHTML = "";
    this.state.staged.forEach((act, i) => {
      const item = document.createElement("li");
      item.textContent = actText(act);
      const remove = document.createElement("button");
      remove.textContent = "x";
      remove.className = "remove-staged";
      remove.addEventListener("click", () => {
        this.state.staged.splice(i, 1);
        this.renderStaged();
      });
      item.appendChild(remove);
      list.appendChild(item);
    });
    this.el<HTMLButtonElement>("send-btn").disabled =
      !this.state.staged.length || this.state.inFlight ||
      this.state.status !== "active" || this.state.autoDone;
  }

  async sendTurn(): Promise<void> {
    if (!this.state.staged.length || this.state.inFlight) return;
    const acts = [...this.state.staged];
    await this.guard(async () => {
      const res = await this.client.postActs(this.state.sessionId!, acts);
      // staged acts are cleared only on success; errors keep composer state
      this.state.staged = [];
      this.state.transcript.push({ speaker: "usr", acts });
      this.state.transcript.push({ speaker: "sys", acts: res.agent_acts });
      this.state.turnIndex = res.turn_index;
      this.state.autoDone = res.auto_done;
    });
    this.renderAll();
  }

  async terminate(): Promise<void> {
    if (this.state.status !== "active") return;
    await this.guard(async () => {
      await this.client.terminate(this.state.sessionId!);
      this.state.status = "terminated";
    });
    this.renderAll();
  }

  async judge(verdict: "success" | "failure"): Promise<void> {
    if (this.state.status === "judged" || this.state.inFlight) return;
    if (this.state.status === "active" && !this.state.autoDone) return;
    await this.guard(async () => {
      await this.client.judge(this.state.sessionId!, verdict);
      this.state.status = "judged";
      this.state.verdict = verdict;
    });
    this.renderAll();
    if (this.state.verdict !== null) {
      this.renderSummary();
    }
  }

  private async guard(fn: () => Promise<void>): Promise<void> {
    this.state.inFlight = true;
    this.renderControls();
    this.hideError();
    try {
      await fn();
    } catch (e) {
      this.showError(e);
    } finally {
      this.state.inFlight = false;
      this.renderControls();
    }
  }

  private showError(e: unknown) {
    const banner = this.el("error-banner");
    banner.classList.remove("hidden");
    banner.textContent =
      e instanceof ServiceError ? `${e.code}: ${e.message}` : String(e);
  }

  private hideError() {
    this.el("error-banner").classList.add("hidden");
  }

  renderAll() {
    this.renderTranscript();
    this.renderStaged();
    this.renderControls();
  }

  private renderTranscript() {
    const list = this.el("transcript");
    list.innerHTML = "";
    for (const entry of this.state.transcript) {
      const item = document.createElement("li");
      item.className = entry.speaker === "usr" ? "turn-user" : "turn-agent";
      item.textContent = `${entry.speaker === "usr" ? "you" : "agent"}: ` +
        entry.acts.map(actText).join(" | ");
      // keep the exact wire objects attached for lossless re-serialization
      (item as HTMLElement & { acts?: DialogAct[] }).acts = entry.acts;
      list.appendChild(item);
    }
  }

  renderControls() {
    const s = this.state;
    const done = s.status !== "active" || s.autoDone;
    const badge = this.el("status-badge");
    badge.textContent = s.status === "active" && s.autoDone
      ? "turn budget exhausted"
      : s.status;
    const remaining = s.schema ? s.schema.max_turns - s.turnIndex : 0;
    this.el("turn-counter").textContent = s.schema
      ? `turns left: ${remaining}`
      : "";
    this.el<HTMLButtonElement>("send-btn").disabled =
      !s.staged.length || s.inFlight || done;
    this.el<HTMLButtonElement>("add-act-btn").disabled = done;
    this.el<HTMLButtonElement>("terminate-btn").disabled =
      s.status !== "active" || s.inFlight;
    const canJudge = (s.status === "terminated" ||
      (s.status === "active" && s.autoDone)) && !s.inFlight;
    this.el<HTMLButtonElement>("judge-success-btn").disabled = !canJudge;
    this.el<HTMLButtonElement>("judge-failure-btn").disabled = !canJudge;
  }

  private renderSummary() {
    const body = this.el("summary-body");
    const goal = this.state.goal!;
    const lines = this.state.transcript
      .map((e) => `<li>${e.speaker}: ${e.acts.map(actText).join(" | ")}</li>`)
      .join("");
    const goals = goal.domains
      .map((g) =>
        `<li>${g.domain}: ${Object.entries(g.constraints)
          .map(([k, v]) => `${k}=${v}`)
          .join(", ")} / requests: ${g.requests.join(", ")}${g.book ? " / book" : ""}</li>`)
      .join("");
    body.innerHTML = `
      <p>Your verdict: <b id="verdict-label">${this.state.verdict}</b></p>
      <h3>Goal recap</h3><ul>${goals}</ul>
      <h3>What happened</h3><ul>${lines}</ul>
    `;
    this.el("summary").classList.remove("hidden");
  }
}

export function mountConsole(root: HTMLElement, client: ApiClient): EvalConsole {
  return new EvalConsole(root, client);
}

declare global {
  interface Window {
    evalConsole?: EvalConsole;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  window.evalConsole = mountConsole(
    document.getElementById("app") as HTMLElement,
    new ApiClient(""),
  );
}
