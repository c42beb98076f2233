// Console behavior against a scripted in-memory service double.

import { beforeEach, describe, expect, it } from "vitest";

import { ServiceError } from "../src/api.js";
import { EvalConsole } from "../src/app.js";
import type { DialogAct, GoalView, SchemaView } from "../src/types.js";

const SCHEMA: SchemaView = {
  domains: [
    {
      name: "restaurant",
      informable: { area: ["north"], food: ["thai"] },
      requestable: ["phone"],
      bookable: true,
    },
  ],
  user_intents: ["Inform", "Request", "Book", "thank", "bye"],
  max_turns: 3,
};

const GOAL: GoalView = {
  domains: [
    { domain: "restaurant", constraints: { food: "thai" }, requests: ["phone"], book: false },
  ],
};

class FakeClient {
  base = "";
  posted: DialogAct[][] = [];
  failNextPost: ServiceError | null = null;
  judgments: string[] = [];
  terminated = 0;
  turn = 0;

  async createSession() {
    return {
      session_id: "sess-1",
      goal: GOAL,
      catalog: [],
      schema: SCHEMA,
    };
  }

  async postActs(_id: string, acts: DialogAct[]) {
    if (this.failNextPost) {
      const err = this.failNextPost;
      this.failNextPost = null;
      throw err;
    }
    this.posted.push(acts);
    this.turn += 1;
    return {
      agent_acts: [{ domain: "restaurant", intent: "Inform", slots: ["phone"] }],
      db_summary: { restaurant: 4 },
      turn_index: this.turn,
      auto_done: this.turn >= SCHEMA.max_turns,
    };
  }

  async terminate(_id: string) {
    this.terminated += 1;
    return { status: "terminated" };
  }

  async judge(_id: string, verdict: "success" | "failure") {
    this.judgments.push(verdict);
    return { recorded: true, verdict, sim_success: false };
  }

  async getSession() {
    throw new Error("not used");
  }
  async getSchema() {
    return SCHEMA;
  }
  async getCheckpoints() {
    return { checkpoints: [] };
  }
}

function el<T extends HTMLElement>(id: string): T {
  return document.getElementById(id) as T;
}

async function mountStarted(): Promise<{ app: EvalConsole; client: FakeClient }> {
  document.body.innerHTML = '<div id="app"></div>';
  const client = new FakeClient();
  const app = new EvalConsole(el("app"), client as never);
  await app.start();
  return { app, client };
}

function composeInBrowser(domain: string, intent: string, slots: string[]) {
  const domainSel = el<HTMLSelectElement>("domain-select");
  domainSel.value = domain;
  domainSel.dispatchEvent(new Event("change"));
  const intentSel = el<HTMLSelectElement>("intent-select");
  intentSel.value = intent;
  intentSel.dispatchEvent(new Event("change"));
  for (const box of document.querySelectorAll<HTMLInputElement>(".slot-box")) {
    box.checked = slots.includes(box.value);
  }
  el<HTMLButtonElement>("add-act-btn").click();
}

describe("console flow", () => {
  beforeEach(() => {
    document.body.innerHTML = "";
  });

  it("renders the goal after starting", async () => {
    await mountStarted();
    const goal = el("goal-body").innerHTML;
    expect(goal).toContain("restaurant");
    expect(goal).toContain("thai");
    expect(goal).toContain("phone");
  });

  it("composer offers only schema-legal options", async () => {
    await mountStarted();
    const domains = [...el<HTMLSelectElement>("domain-select").options].map(
      (o) => o.value,
    );
    expect(domains).toEqual(["restaurant", "general"]);
    composeInBrowser("restaurant", "Inform", ["food"]);
    const staged = el("staged-acts").textContent;
    expect(staged).toContain("restaurant-Inform food");
  });

  it("sends staged acts and renders the agent reply", async () => {
    const { app, client } = await mountStarted();
    composeInBrowser("restaurant", "Inform", ["food", "area"]);
    await app.sendTurn();
    expect(client.posted).toEqual([
      [{ domain: "restaurant", intent: "Inform", slots: ["area", "food"] }],
    ]);
    const transcript = el("transcript").textContent!;
    expect(transcript).toContain("you: restaurant-Inform area food");
    expect(transcript).toContain("agent: restaurant-Inform phone");
    expect(el("turn-counter").textContent).toBe("turns left: 2");
  });

  it("judgment buttons stay disabled until termination", async () => {
    const { app } = await mountStarted();
    expect(el<HTMLButtonElement>("judge-success-btn").disabled).toBe(true);
    await app.judge("success"); // ignored while active
    expect(app.state.status).toBe("active");
    await app.terminate();
    expect(el<HTMLButtonElement>("judge-success-btn").disabled).toBe(false);
    await app.judge("success");
    expect(app.state.status).toBe("judged");
    expect(el("verdict-label").textContent).toBe("success");
  });

  it("auto-done at the turn budget enables judgment and disables composing", async () => {
    const { app } = await mountStarted();
    for (let i = 0; i < SCHEMA.max_turns; i++) {
      composeInBrowser("restaurant", "Request", ["phone"]);
      await app.sendTurn();
    }
    expect(app.state.autoDone).toBe(true);
    expect(el<HTMLButtonElement>("send-btn").disabled).toBe(true);
    expect(el<HTMLButtonElement>("add-act-btn").disabled).toBe(true);
    expect(el<HTMLButtonElement>("judge-failure-btn").disabled).toBe(false);
    await app.judge("failure");
    expect(app.state.status).toBe("judged");
  });

  it("double judgment is prevented client-side", async () => {
    const { app, client } = await mountStarted();
    await app.terminate();
    await app.judge("failure");
    await app.judge("success");
    expect(client.judgments).toEqual(["failure"]);
  });

  it("server errors render inline and keep composer state", async () => {
    const { app, client } = await mountStarted();
    composeInBrowser("restaurant", "Inform", ["food"]);
    client.failNextPost = new ServiceError(409, {
      error: "session_closed",
      message: "session is terminated",
    });
    await app.sendTurn();
    const banner = el("error-banner");
    expect(banner.classList.contains("hidden")).toBe(false);
    expect(banner.textContent).toContain("session_closed");
    // staged act survives the failure for retry
    expect(app.state.staged).toHaveLength(1);
    await app.sendTurn();
    expect(client.posted).toHaveLength(1);
    expect(app.state.staged).toHaveLength(0);
  });

  it("transcript entries re-serialize to the exact wire JSON", async () => {
    const { app } = await mountStarted();
    composeInBrowser("restaurant", "Inform", ["food"]);
    await app.sendTurn();
    const items = document.querySelectorAll<HTMLElement & { acts?: DialogAct[] }>(
      "#transcript li",
    );
    expect(items[0].acts).toEqual([
      { domain: "restaurant", intent: "Inform", slots: ["food"] },
    ]);
    expect(items[1].acts).toEqual([
      { domain: "restaurant", intent: "Inform", slots: ["phone"] },
    ]);
  });
});
