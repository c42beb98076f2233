"""Session service for interactive human evaluation over HTTP/JSON.

A session pairs a sampled goal with a (by default randomly drawn, initially
hidden) policy checkpoint; the human plays the user side by posting dialog
acts, the agent replies greedily. Humans may terminate a doomed session at
any point and must judge success/failure afterwards; the simulator's
mechanical success check is recorded alongside for comparison.

Every session is persisted as an append-only JSONL event log and survives
service restarts. Requests within one session are serialized.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .checkpoint import checkpoint_load
from .encoder import EncoderParams, encoder_forward_batch, q_head
from .schema import Goal, Schema, count_matches, db_match_vector, sample_goal
from .simulator import BOOK, INFORM, REQUEST, GENERAL, RewardConfig
from .tensor import no_grad
from .vocab import ActionCatalog, DialogAct, TokenVocab, tokenize_history

USER_INTENTS = (INFORM, REQUEST, BOOK, "thank", "bye")


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class PolicyCheckpoint:
    checkpoint_id: str
    params: EncoderParams
    vocab: TokenVocab
    catalog: ActionCatalog
    state_max_tokens: int

    def greedy_act(self, history: list[DialogAct], db_vec: np.ndarray) -> DialogAct:
        ids = np.asarray(
            tokenize_history(history, self.vocab, max_len=self.state_max_tokens),
            dtype=np.int64,
        )
        with no_grad():
            pooled, _ = encoder_forward_batch(
                self.params, ids[None, :], db_vec[None, :].astype(np.float32))
            q = q_head(self.params, pooled).data[0]
        return self.catalog.act(int(np.argmax(q)))


def load_checkpoints(directory) -> dict[str, PolicyCheckpoint]:
    out = {}
    for path in sorted(Path(directory).glob("*.ckpt")):
        params, _, meta = checkpoint_load(path)
        vocab = TokenVocab(meta["vocab"]["tokens"])
        catalog = ActionCatalog(
            [DialogAct.from_dict(a) for a in meta["catalog"]["actions"]])
        out[path.stem] = PolicyCheckpoint(
            path.stem, params, vocab, catalog,
            int(meta.get("policy", {}).get("state_max_tokens", 48)),
        )
    return out


@dataclass
class _DomainTrack:
    constraints: dict[str, str]
    requests: list[str]
    book: bool
    communicated: set[str] = field(default_factory=set)
    answered: set[str] = field(default_factory=set)
    booked: bool = False

    def satisfied(self) -> bool:
        return (
            self.communicated >= set(self.constraints)
            and self.answered >= set(self.requests)
            and (self.booked or not self.book)
        )


class HumanSession:
    """Server-side session state; the human drives the user side."""

    def __init__(self, session_id: str, goal: Goal, checkpoint_id: str,
                 schema: Schema, max_turns: int):
        self.session_id = session_id
        self.goal = goal
        self.checkpoint_id = checkpoint_id
        self.schema = schema
        self.max_turns = max_turns
        self.track = {
            g.domain: _DomainTrack(dict(g.constraints), list(g.requests), g.book)
            for g in goal.domains
        }
        self.history: list[DialogAct] = []
        self.transcript: list[dict] = []
        self.turn_index = 0
        self.status = "active"
        self.judgment: str | None = None
        self.auto_done = False
        self.lock = threading.Lock()

    def db_constraints(self) -> dict[str, dict[str, str]]:
        return {
            d: {s: t.constraints[s] for s in sorted(t.communicated)}
            for d, t in self.track.items()
        }

    def db_vector(self) -> np.ndarray:
        return db_match_vector(self.db_constraints(), self.schema)

    def db_summary(self) -> dict[str, int]:
        cons = self.db_constraints()
        return {
            dom.name: count_matches(dom, cons.get(dom.name, {}))
            for dom in self.schema.domains
        }

    def sim_success(self) -> bool:
        return all(t.satisfied() for t in self.track.values())

    def apply_user_acts(self, acts: list[DialogAct]):
        for act in acts:
            t = self.track.get(act.domain)
            if t is None:
                continue
            if act.intent == INFORM:
                for slot in act.slots:
                    if slot in t.constraints:
                        t.communicated.add(slot)

    def apply_agent_acts(self, acts: list[DialogAct]):
        for act in acts:
            t = self.track.get(act.domain)
            if t is None:
                continue
            if act.intent == INFORM:
                for slot in act.slots:
                    if slot in t.requests:
                        t.answered.add(slot)
            elif act.intent == BOOK:
                if t.book and t.communicated >= set(t.constraints):
                    t.booked = True

    def exchange(self, user_acts: list[DialogAct],
                 policy: PolicyCheckpoint) -> DialogAct:
        """One turn: apply the human's acts, let the agent answer greedily."""
        self.apply_user_acts(user_acts)
        self.history.extend(user_acts)
        agent_act = policy.greedy_act(self.history, self.db_vector())
        self.apply_agent_acts([agent_act])
        self.history.append(agent_act)
        self.turn_index += 1
        if self.turn_index >= self.max_turns:
            self.auto_done = True
        return agent_act

    def view(self, reveal_checkpoint: bool) -> dict:
        return {
            "session_id": self.session_id,
            "goal": self.goal.to_dict(),
            "status": self.status,
            "turn_index": self.turn_index,
            "max_turns": self.max_turns,
            "auto_done": self.auto_done,
            "judgment": self.judgment,
            "sim_success": self.sim_success(),
            "transcript": self.transcript,
            "checkpoint_id": self.checkpoint_id if reveal_checkpoint else None,
            "db_summary": self.db_summary(),
        }


def parse_acts(payload, schema: Schema) -> list[DialogAct]:
    if not isinstance(payload, list) or not payload:
        raise ServiceError(400, "malformed_acts", "acts must be a non-empty list")
    acts = []
    for item in payload:
        try:
            act = DialogAct.from_dict(item)
        except (KeyError, TypeError, ValueError) as e:
            raise ServiceError(400, "malformed_acts", f"bad act: {e}") from e
        if act.domain == GENERAL:
            acts.append(act)
            continue
        dom = schema.by_name.get(act.domain)
        if dom is None:
            raise ServiceError(400, "unknown_domain", f"unknown domain {act.domain!r}")
        if act.intent not in USER_INTENTS:
            raise ServiceError(400, "unknown_intent", f"unknown intent {act.intent!r}")
        legal = set(dom.informable) | set(dom.requestable) | {"none"}
        bad = [s for s in act.slots if s not in legal]
        if bad:
            raise ServiceError(400, "unknown_slot",
                               f"slots {bad} not in domain {act.domain!r}")
        acts.append(act)
    return acts


class SessionStore:
    def __init__(self, store_dir, schema: Schema,
                 checkpoints: dict[str, PolicyCheckpoint],
                 max_turns: int, seed: int = 0):
        self.dir = Path(store_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.schema = schema
        self.checkpoints = checkpoints
        self.max_turns = max_turns
        self.rng = np.random.default_rng(seed)
        self.sessions: dict[str, HumanSession] = {}
        self.lock = threading.Lock()
        self._counter = 0
        self._restore()

    # -- persistence --------------------------------------------------------

    def _log_path(self, session_id: str) -> Path:
        return self.dir / f"{session_id}.jsonl"

    def _append(self, session_id: str, event: dict):
        event = dict(event)
        event["t"] = time.time()
        with open(self._log_path(session_id), "a", encoding="utf-8") as f:
            f.write(json.dumps(event, separators=(",", ":")) + "\n")

    def _restore(self):
        for path in sorted(self.dir.glob("*.jsonl")):
            session = None
            for line in path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                ev = json.loads(line)
                kind = ev["event"]
                if kind == "created":
                    session = HumanSession(
                        path.stem, Goal.from_dict(ev["goal"]), ev["checkpoint_id"],
                        self.schema, ev.get("max_turns", self.max_turns))
                elif session is None:
                    break
                elif kind == "user_acts":
                    acts = [DialogAct.from_dict(a) for a in ev["acts"]]
                    session.apply_user_acts(acts)
                    session.history.extend(acts)
                    session.transcript.append(
                        {"speaker": "usr", "acts": ev["acts"], "t": ev["t"]})
                elif kind == "agent_acts":
                    acts = [DialogAct.from_dict(a) for a in ev["acts"]]
                    session.apply_agent_acts(acts)
                    session.history.extend(acts)
                    session.turn_index += 1
                    session.auto_done = session.turn_index >= session.max_turns
                    session.transcript.append(
                        {"speaker": "sys", "acts": ev["acts"], "t": ev["t"]})
                elif kind == "terminated":
                    session.status = "terminated"
                elif kind == "judged":
                    session.status = "judged"
                    session.judgment = ev["verdict"]
            if session is not None:
                self.sessions[session.session_id] = session
                n = int(session.session_id.split("-")[-1], 16)
                self._counter = max(self._counter, n + 1)

    # -- operations ----------------------------------------------------------

    def create(self, checkpoint_id: str | None) -> HumanSession:
        with self.lock:
            if not self.checkpoints:
                raise ServiceError(409, "no_checkpoints",
                                   "no policy checkpoints registered")
            if checkpoint_id is None:
                ids = sorted(self.checkpoints)
                checkpoint_id = ids[int(self.rng.integers(len(ids)))]
            elif checkpoint_id not in self.checkpoints:
                raise ServiceError(404, "unknown_checkpoint",
                                   f"checkpoint {checkpoint_id!r} not registered")
            goal = sample_goal(self.schema, self.rng)
            session_id = f"sess-{self._counter:08x}"
            self._counter += 1
            session = HumanSession(session_id, goal, checkpoint_id,
                                   self.schema, self.max_turns)
            self.sessions[session_id] = session
            self._append(session_id, {
                "event": "created", "goal": goal.to_dict(),
                "checkpoint_id": checkpoint_id, "max_turns": self.max_turns,
            })
            return session

    def get(self, session_id: str) -> HumanSession:
        session = self.sessions.get(session_id)
        if session is None:
            raise ServiceError(404, "unknown_session",
                               f"session {session_id!r} not found")
        return session

    def post_acts(self, session_id: str, acts_payload) -> dict:
        session = self.get(session_id)
        with session.lock:
            if session.status != "active":
                raise ServiceError(409, "session_closed",
                                   f"session is {session.status}")
            if session.auto_done:
                raise ServiceError(409, "turn_budget_exhausted",
                                   "turn budget exhausted; judge the session")
            acts = parse_acts(acts_payload, self.schema)
            now = time.time()
            session.transcript.append(
                {"speaker": "usr", "acts": [a.to_dict() for a in acts], "t": now})
            self._append(session_id, {"event": "user_acts",
                                      "acts": [a.to_dict() for a in acts]})
            agent_act = session.exchange(acts, self.checkpoints[session.checkpoint_id])
            session.transcript.append(
                {"speaker": "sys", "acts": [agent_act.to_dict()], "t": time.time()})
            self._append(session_id, {"event": "agent_acts",
                                      "acts": [agent_act.to_dict()]})
            return {
                "agent_acts": [agent_act.to_dict()],
                "db_summary": session.db_summary(),
                "turn_index": session.turn_index,
                "auto_done": session.auto_done,
            }

    def terminate(self, session_id: str) -> dict:
        session = self.get(session_id)
        with session.lock:
            if session.status != "active":
                raise ServiceError(409, "session_closed",
                                   f"session is {session.status}")
            session.status = "terminated"
            self._append(session_id, {"event": "terminated"})
            return {"status": session.status}

    def judge(self, session_id: str, verdict: str) -> dict:
        if verdict not in ("success", "failure"):
            raise ServiceError(400, "bad_verdict",
                               "verdict must be 'success' or 'failure'")
        session = self.get(session_id)
        with session.lock:
            if session.status == "judged":
                raise ServiceError(409, "already_judged",
                                   "session already judged")
            if session.status == "active" and not session.auto_done:
                raise ServiceError(409, "session_active",
                                   "terminate the session (or exhaust the turn "
                                   "budget) before judging")
            session.status = "judged"
            session.judgment = verdict
            self._append(session_id, {
                "event": "judged", "verdict": verdict,
                "sim_success": session.sim_success(),
            })
            return {"recorded": True, "verdict": verdict,
                    "sim_success": session.sim_success()}

    def checkpoint_stats(self) -> list[dict]:
        stats = []
        for cid in sorted(self.checkpoints):
            sessions = [s for s in self.sessions.values() if s.checkpoint_id == cid]
            judged = [s for s in sessions if s.status == "judged"]
            wins = sum(1 for s in judged if s.judgment == "success")
            stats.append({
                "id": cid,
                "sessions": len(sessions),
                "judged": len(judged),
                "human_successes": wins,
                "human_success_rate": wins / len(judged) if judged else None,
            })
        return stats


def schema_view(schema: Schema, max_turns: int) -> dict:
    return {
        "domains": [
            {
                "name": d.name,
                "informable": {s: list(v) for s, v in d.informable.items()},
                "requestable": list(d.requestable),
                "bookable": d.bookable,
            }
            for d in schema.domains
        ],
        "user_intents": list(USER_INTENTS),
        "max_turns": max_turns,
    }


def create_app(checkpoint_dir, store_dir, schema: Schema | None = None,
               max_turns: int | None = None, seed: int = 0,
               ui_dir=None) -> FastAPI:
    from .schema import load_fixture

    schema = schema or load_fixture("main")
    max_turns = max_turns or RewardConfig().max_turns
    checkpoints = load_checkpoints(checkpoint_dir)
    store = SessionStore(store_dir, schema, checkpoints, max_turns, seed)
    app = FastAPI(title="dialoq evaluation service")
    app.state.store = store

    @app.exception_handler(ServiceError)
    async def service_error_handler(request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status,
                            content={"error": exc.code, "message": exc.message})

    @app.post("/sessions")
    def create_session(body: dict | None = None):
        checkpoint_id = (body or {}).get("checkpoint_id")
        session = store.create(checkpoint_id)
        return {
            "session_id": session.session_id,
            "goal": session.goal.to_dict(),
            "catalog": [a.to_dict() for a in
                        store.checkpoints[session.checkpoint_id].catalog.entries],
            "schema": schema_view(schema, max_turns),
        }

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        session = store.get(session_id)
        return session.view(reveal_checkpoint=session.status == "judged")

    @app.post("/sessions/{session_id}/acts")
    def post_acts(session_id: str, body: dict):
        return store.post_acts(session_id, body.get("acts"))

    @app.post("/sessions/{session_id}/terminate")
    def terminate(session_id: str):
        return store.terminate(session_id)

    @app.post("/sessions/{session_id}/judgment")
    def judge(session_id: str, body: dict):
        return store.judge(session_id, body.get("verdict"))

    @app.get("/checkpoints")
    def checkpoints_route():
        return {"checkpoints": store.checkpoint_stats()}

    @app.get("/schema")
    def schema_route():
        return schema_view(schema, max_turns)

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
