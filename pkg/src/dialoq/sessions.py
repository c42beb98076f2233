"""Dialog sessions and their JSON-Lines corpus format.

One session per line:
{"session_id": str, "turns": [{"speaker": "sys"|"usr",
 "acts": [{"domain": str, "intent": str, "slots": [str, ...]}]}]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .vocab import DialogAct


@dataclass
class Turn:
    speaker: str  # "sys" | "usr"
    acts: list[DialogAct]

    def __post_init__(self):
        if self.speaker not in ("sys", "usr"):
            raise ValueError(f"speaker must be 'sys' or 'usr', got {self.speaker!r}")


@dataclass
class DialogSession:
    session_id: str
    turns: list[Turn]

    def flat_acts(self) -> list[DialogAct]:
        return [act for turn in self.turns for act in turn.acts]

    def flat_acts_with_speaker(self) -> list[tuple[str, DialogAct]]:
        return [(t.speaker, act) for t in self.turns for act in t.acts]

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "turns": [
                {"speaker": t.speaker, "acts": [a.to_dict() for a in t.acts]}
                for t in self.turns
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DialogSession":
        turns = [
            Turn(t["speaker"], [DialogAct.from_dict(a) for a in t["acts"]])
            for t in d["turns"]
        ]
        return cls(d["session_id"], turns)


def save_corpus(sessions, path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as f:
        for s in sessions:
            f.write(json.dumps(s.to_dict(), separators=(",", ":")))
            f.write("\n")
            n += 1
    return n


def load_corpus(path) -> list[DialogSession]:
    sessions = []
    with open(Path(path), "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                sessions.append(DialogSession.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as e:
                raise ValueError(f"{path}:{line_no}: malformed session: {e}") from e
    return sessions
