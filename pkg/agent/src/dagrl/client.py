"""Client for the dagsched environment wire protocol.

Speaks newline-delimited JSON to a ``dagsched serve`` process, either over
a spawned ``--stdio`` subprocess or a TCP connection.  Every request gets
one response tagged with a monotonically increasing ``seq``; protocol
errors arrive as {"error": {"code", "message"}} and are re-raised here as
typed exceptions.

Also hosts small helpers for the simulator's published file formats
(dataset manifests, observations) that the models consume.
"""

from __future__ import annotations

import json
import socket
import subprocess
from pathlib import Path

import numpy as np


class EnvError(RuntimeError):
    """Error reported by the environment server."""

    def __init__(self, message, code="EnvError"):
        super().__init__(message)
        self.code = code


class RemoteProtocolError(EnvError):
    """Malformed or out-of-contract request."""


class UnknownInstanceError(EnvError):
    """Reset named an instance the dataset does not contain."""


class NoEpisodeError(EnvError):
    """Step without an active episode."""


class MaskedActionError(EnvError):
    """Step chose a node whose mask bit is off."""


_CODE_MAP = {
    "ProtocolError": RemoteProtocolError,
    "UnknownInstance": UnknownInstanceError,
    "NoEpisode": NoEpisodeError,
    "MaskedAction": MaskedActionError,
}


def _raise_for(error):
    code = error.get("code", "EnvError")
    exc = _CODE_MAP.get(code, EnvError)
    raise exc(error.get("message", ""), code=code)


class EnvClient:
    """One protocol session over a line-based transport."""

    def __init__(self, reader, writer, proc=None, sock=None):
        self._reader = reader
        self._writer = writer
        self._proc = proc
        self._sock = sock
        self._seq = 0
        self._closed = False

    @classmethod
    def spawn(cls, dataset_dir, platform_file, exe=("dagsched",)):
        """Start ``dagsched serve --stdio`` as a subprocess and attach to it."""
        cmd = [*exe, "serve", "--stdio",
               "--dataset", str(dataset_dir), "--platform", str(platform_file)]
        proc = subprocess.Popen(
            cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, bufsize=1,
        )
        return cls(proc.stdout, proc.stdin, proc=proc)

    @classmethod
    def connect(cls, host, port):
        """Attach to a ``dagsched serve --port`` TCP server."""
        sock = socket.create_connection((host, port))
        reader = sock.makefile("r", encoding="utf-8", newline="\n")
        writer = sock.makefile("w", encoding="utf-8", newline="\n")
        return cls(reader, writer, sock=sock)

    def request(self, payload: dict) -> dict:
        if self._closed:
            raise EnvError("client is closed")
        self._writer.write(json.dumps(payload, separators=(",", ":")) + "\n")
        self._writer.flush()
        line = self._reader.readline()
        if not line:
            raise EnvError("connection closed by server")
        resp = json.loads(line)
        seq = resp.get("seq")
        if seq != self._seq + 1:
            raise EnvError(f"out-of-order response: seq {seq}, expected {self._seq + 1}")
        self._seq = seq
        if "error" in resp:
            _raise_for(resp["error"])
        return resp

    def spec(self) -> dict:
        return self.request({"op": "spec"})["spec"]

    def reset(self, instance=None):
        """Start an episode. Returns ``(observation, info)``.

        ``instance`` may be an int index, a stem name, or None to cycle
        through the dataset in order.
        """
        payload = {"op": "reset"}
        if instance is not None:
            payload["instance_id"] = instance
        resp = self.request(payload)
        return resp["observation"], resp["info"]

    def step(self, node, loc):
        """Apply one action. Returns ``(observation, reward, done, info)``."""
        resp = self.request({"op": "step", "action": [int(node), int(loc)]})
        return resp["observation"], resp["reward"], resp["done"], resp["info"]

    def close(self):
        if self._closed:
            return
        try:
            self.request({"op": "close"})
        except EnvError:
            pass
        self._closed = True
        for stream in (self._writer, self._reader):
            try:
                stream.close()
            except OSError:
                pass
        if self._sock is not None:
            self._sock.close()
        if self._proc is not None:
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def load_manifest(dataset_dir) -> dict:
    path = Path(dataset_dir) / "manifest.json"
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def obs_to_graph(obs):
    """Observation -> ``(features [N,F], adjacency [N,N])`` dense arrays.

    The adjacency gets a unit diagonal added, as the attention models
    require self-loops.
    """
    features = np.asarray(obs["node_features"], dtype=np.float64)
    n = features.shape[0]
    adj = np.zeros((n, n), dtype=np.float64)
    for src, dst in obs["adjacency"]:
        adj[src, dst] = 1.0
    np.fill_diagonal(adj, 1.0)
    return features, adj


def initial_observations(dataset_dir, platform_file, exe=("dagsched",)):
    """Reset every instance once; return ``[(name, features, adj), ...]``.

    This is the pretraining corpus: one initial observation per DAG in the
    dataset, collected over the wire so features match the environment's
    exactly.
    """
    count = load_manifest(dataset_dir)["count"]
    out = []
    with EnvClient.spawn(dataset_dir, platform_file, exe=exe) as client:
        for i in range(count):
            obs, info = client.reset(instance=i)
            features, adj = obs_to_graph(obs)
            out.append((info["instance"], features, adj))
    return out
