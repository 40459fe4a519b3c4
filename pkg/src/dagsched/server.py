"""Newline-delimited JSON protocol over stdio or TCP.

One JSON object per line. Requests carry an ``op`` of spec / reset / step
/ close; every response echoes a per-session monotonically increasing
``seq``. Errors come back as {"seq", "error": {"code", "message"}} with
codes ProtocolError, UnknownInstance, NoEpisode, MaskedAction; the episode
state is never changed by a failed request.

Each connection owns one Session (one episode at a time); a TCP server
hosts many connections independently.
"""

from __future__ import annotations

import json
import socketserver
import sys
from typing import IO, Sequence

from .env import Env, LOCATION_FEATURES, MaskedAction, NODE_FEATURES, NoEpisode
from .model import MergedDag, Platform

_OPS = ("spec", "reset", "step", "close")


def _dumps(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"))


class Session:
    """Protocol state machine for one connection."""

    def __init__(self, dataset: Sequence[tuple[str, MergedDag]], platform: Platform):
        if not dataset:
            raise ValueError("dataset must contain at least one instance")
        self.dataset = list(dataset)
        self.platform = platform
        self.seq = 0
        self.env: Env | None = None
        self.instance_name: str | None = None
        self.episodes = 0
        self.closed = False
        self.max_nodes = max(dag.num_nodes for _, dag in self.dataset)

    # -- plumbing -----------------------------------------------------------

    def _resp(self, payload: dict) -> dict:
        self.seq += 1
        return {"seq": self.seq, **payload}

    def _error(self, code: str, message: str) -> dict:
        return self._resp({"error": {"code": code, "message": message}})

    def handle_line(self, line: str) -> str:
        return _dumps(self.handle_obj(line))

    # -- dispatch -----------------------------------------------------------

    def handle_obj(self, line: str) -> dict:
        try:
            req = json.loads(line)
        except json.JSONDecodeError as exc:
            return self._error("ProtocolError", f"bad JSON: {exc}")
        if not isinstance(req, dict):
            return self._error("ProtocolError", "request must be a JSON object")
        op = req.get("op")
        if op not in _OPS:
            return self._error("ProtocolError", f"unknown op {op!r}")
        return getattr(self, f"_op_{op}")(req)

    def _op_spec(self, req: dict) -> dict:
        if self.env is not None:
            spec = self.env.spec_obj()
        else:
            plat = self.platform
            spec = {
                "num_nodes": None,
                "num_exec": None,
                "num_users": plat.K,
                "num_servers": plat.M,
                "num_locations": plat.U,
                "action_dims": None,
                "node_features": list(NODE_FEATURES),
                "location_features": list(LOCATION_FEATURES),
                "units": {
                    "time": "s",
                    "cycles": "cycles",
                    "data": "bytes",
                    "rate": "bits/s",
                },
            }
        spec["max_nodes"] = self.max_nodes
        return self._resp({"spec": spec})

    def _op_reset(self, req: dict) -> dict:
        if "seed" in req:
            return self._error(
                "ProtocolError",
                "seed-based reset is not supported; pass instance_id or nothing",
            )
        ref = req.get("instance_id")
        if ref is None:
            idx = self.episodes % len(self.dataset)
        elif type(ref) is int:
            if not (0 <= ref < len(self.dataset)):
                return self._error(
                    "UnknownInstance",
                    f"index {ref} out of range 0..{len(self.dataset) - 1}",
                )
            idx = ref
        elif isinstance(ref, str):
            names = [name for name, _ in self.dataset]
            if ref not in names:
                return self._error("UnknownInstance", f"no instance named {ref!r}")
            idx = names.index(ref)
        else:
            return self._error("ProtocolError", "instance_id must be int or string")
        name, dag = self.dataset[idx]
        self.env = Env(dag, self.platform)
        self.instance_name = name
        self.episodes += 1
        obs, info = self.env.reset()
        return self._resp({"observation": obs, "info": {"instance": name, **info}})

    def _op_step(self, req: dict) -> dict:
        if self.env is None:
            return self._error("NoEpisode", "reset before stepping")
        if self.env.done:
            return self._error("NoEpisode", "episode finished; reset to continue")
        action = req.get("action")
        if (
            not isinstance(action, (list, tuple))
            or len(action) != 2
            or not all(type(a) is int for a in action)
        ):
            return self._error(
                "ProtocolError", "action must be [node_id, loc_index] with ints"
            )
        node, loc = action
        try:
            obs, reward, done, info = self.env.step(node, loc)
        except MaskedAction as exc:
            return self._error("MaskedAction", str(exc))
        except ValueError as exc:
            return self._error("ProtocolError", str(exc))
        return self._resp(
            {"observation": obs, "reward": reward, "done": done, "info": info}
        )

    def _op_close(self, req: dict) -> dict:
        self.closed = True
        return self._resp({"closed": True})


# ---------------------------------------------------------------------------
# Transports
# ---------------------------------------------------------------------------


def serve_stdio(
    dataset: Sequence[tuple[str, MergedDag]],
    platform: Platform,
    inp: IO[str] | None = None,
    out: IO[str] | None = None,
) -> None:
    """Serve one session over text streams until close or EOF."""
    inp = sys.stdin if inp is None else inp
    out = sys.stdout if out is None else out
    session = Session(dataset, platform)
    for line in inp:
        line = line.strip()
        if not line:
            continue
        out.write(session.handle_line(line) + "\n")
        out.flush()
        if session.closed:
            break


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        session = Session(self.server.dataset, self.server.platform)  # type: ignore[attr-defined]
        for raw in self.rfile:
            line = raw.decode("utf-8").strip()
            if not line:
                continue
            self.wfile.write((session.handle_line(line) + "\n").encode("utf-8"))
            if session.closed:
                break


class ProtocolServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(
        self,
        dataset: Sequence[tuple[str, MergedDag]],
        platform: Platform,
        host: str = "127.0.0.1",
        port: int = 0,
    ):
        super().__init__((host, port), _Handler)
        self.dataset = list(dataset)
        self.platform = platform


def serve_tcp(
    dataset: Sequence[tuple[str, MergedDag]],
    platform: Platform,
    host: str = "127.0.0.1",
    port: int = 0,
) -> ProtocolServer:
    """Build a threading TCP server; the caller runs serve_forever()."""
    return ProtocolServer(dataset, platform, host=host, port=port)
