export interface DialogAct {
  domain: string;
  intent: string;
  slots: string[];
}

export interface DomainView {
  name: string;
  informable: Record<string, string[]>;
  requestable: string[];
  bookable: boolean;
}

export interface SchemaView {
  domains: DomainView[];
  user_intents: string[];
  max_turns: number;
}

export interface DomainGoal {
  domain: string;
  constraints: Record<string, string>;
  requests: string[];
  book: boolean;
}

export interface GoalView {
  domains: DomainGoal[];
}

export interface TranscriptEntry {
  speaker: "usr" | "sys";
  acts: DialogAct[];
  t: number;
}

export interface SessionCreated {
  session_id: string;
  goal: GoalView;
  catalog: DialogAct[];
  schema: SchemaView;
}

export interface ActsResponse {
  agent_acts: DialogAct[];
  db_summary: Record<string, number>;
  turn_index: number;
  auto_done: boolean;
}

export interface SessionView {
  session_id: string;
  goal: GoalView;
  status: "active" | "terminated" | "judged";
  turn_index: number;
  max_turns: number;
  auto_done: boolean;
  judgment: "success" | "failure" | null;
  sim_success: boolean;
  transcript: TranscriptEntry[];
  checkpoint_id: string | null;
  db_summary: Record<string, number>;
}

export interface CheckpointStats {
  id: string;
  sessions: number;
  judged: number;
  human_successes: number;
  human_success_rate: number | null;
}

export interface ApiError {
  error: string;
  message: string;
}
