// Pure act-composition logic: which domain/intent/slot combinations the
// schema permits, and exact serialization of composed acts.

import type { DialogAct, SchemaView } from "./types.js";

export const GENERAL_DOMAIN = "general";
export const GENERAL_INTENTS = ["thank", "bye"];

export function domainOptions(schema: SchemaView): string[] {
  return [...schema.domains.map((d) => d.name), GENERAL_DOMAIN];
}

export function intentOptions(schema: SchemaView, domain: string): string[] {
  if (domain === GENERAL_DOMAIN) {
    return GENERAL_INTENTS;
  }
  const dom = schema.domains.find((d) => d.name === domain);
  if (!dom) {
    return [];
  }
  const intents = ["Inform", "Request"];
  if (dom.bookable) {
    intents.push("Book");
  }
  return intents;
}

export function slotOptions(
  schema: SchemaView,
  domain: string,
  intent: string,
): string[] {
  const dom = schema.domains.find((d) => d.name === domain);
  if (!dom) {
    return [];
  }
  if (intent === "Inform") {
    return Object.keys(dom.informable);
  }
  if (intent === "Request") {
    return [...dom.requestable];
  }
  return []; // Book / general acts carry no slots
}

export function composeAct(
  domain: string,
  intent: string,
  slots: string[],
): DialogAct {
  return { domain, intent, slots: slots.length ? [...slots] : ["none"] };
}

export function actText(act: DialogAct): string {
  return `${act.domain}-${act.intent} ${act.slots.join(" ")}`;
}

// An act rendered in the transcript must re-serialize to exactly the JSON the
// service exchanged; keeping the object and deriving text from it guarantees
// that. This helper round-trips for tests.
export function reserialize(act: DialogAct): string {
  return JSON.stringify({ domain: act.domain, intent: act.intent, slots: act.slots });
}
