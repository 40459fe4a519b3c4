"""Environment semantics and the JSON wire protocol."""

from __future__ import annotations

import json
import socket
import threading
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dagsched import (
    Env,
    GenConfig,
    MaskedAction,
    NoEpisode,
    OWN,
    Session,
    build_user_dag,
    evaluate_partial,
    generate_merged,
    serve_tcp,
)
from dagsched.server import serve_stdio
from .conftest import make_platform, random_plan, small_instance

approx = pytest.approx

GOLDEN = Path(__file__).parent / "data" / "golden_episode.jsonl"


def chain_dag():
    return build_user_dag(
        nodes=[(4e8, 100e3), (6e8, 200e3), (2e8, 50e3)],
        edges=[(0, 1, 300e3), (1, 2, 150e3)],
        k=0,
        result_bytes={2: 250e3},
    )


class TestEnv:
    def test_reset_observation(self, plat_single):
        env = Env(chain_dag(), plat_single)
        obs, info = env.reset()
        assert info == {"num_nodes": 5, "num_exec": 3, "baseline_aft": approx(1.2)}
        assert obs["t"] == 0
        assert obs["node_mask"] == [False, True, False, False, False]
        assert [row[4] for row in obs["node_features"]] == [-1] * 5
        assert obs["node_features"][1] == [4e8, 100e3, 1, 1, -1, 1]
        assert obs["node_features"][0] == [0.0, 0.0, 0, 1, -1, 0]
        assert obs["location_features"] == [[0.0, 1e9], [0.0, 1e10]]
        assert obs["adjacency"] == [[0, 1], [1, 2], [2, 3], [3, 4]]

    def test_step_reward_and_done(self, plat_single):
        env = Env(chain_dag(), plat_single)
        env.reset()
        obs, r, done, info = env.step(1, 1)
        # Offloading A alone: estimate goes 1.2 -> 2.44.
        assert r == approx(1.2 - 2.44, rel=1e-12)
        assert not done and obs["t"] == 1
        assert obs["node_features"][1][4] == 1 and obs["node_features"][1][5] == 0
        assert obs["node_mask"] == [False, False, True, False, False]
        obs, r2, done, _ = env.step(2, 1)
        obs, r3, done, info = env.step(3, OWN)
        assert done
        assert info["mean_aft"] == approx(
            evaluate_partial(chain_dag(), plat_single, [(1, 1), (2, 1), (3, 0)]).mean_aft
        )
        assert r + r2 + r3 == approx(1.2 - info["mean_aft"], rel=1e-9)

    def test_masked_action_leaves_state_unchanged(self, plat_single):
        env = Env(chain_dag(), plat_single)
        obs0, _ = env.reset()
        for node in (2, 3, 0, 4, 99):
            with pytest.raises(MaskedAction):
                env.step(node, 0)
        assert env.observation() == obs0
        with pytest.raises(ValueError):
            env.step(1, 2)  # location out of range is not a masking issue
        assert env.observation() == obs0

    def test_step_lifecycle(self, plat_single):
        env = Env(chain_dag(), plat_single)
        with pytest.raises(NoEpisode):
            env.step(1, 0)
        env.reset()
        for node in (1, 2, 3):
            env.step(node, 0)
        with pytest.raises(NoEpisode):
            env.step(1, 0)

    def test_spec_obj_dims(self):
        dag = chain_dag()
        env = Env(dag, make_platform(M=3))
        spec = env.spec_obj()
        assert spec["action_dims"] == [5, 4]
        assert spec["num_locations"] == 4
        assert spec["units"]["data"] == "bytes"

    @settings(max_examples=20, deadline=None)
    @given(
        n=st.integers(min_value=1, max_value=10),
        k=st.integers(min_value=1, max_value=3),
        seed=st.integers(min_value=0, max_value=10_000),
        plan_seed=st.integers(min_value=0, max_value=10_000),
    )
    def test_episode_invariants(self, n, k, seed, plan_seed):
        dag = small_instance(n, k, seed)
        plat = make_platform(K=k, M=2, procs=2)
        env = Env(dag, plat)
        obs, info = env.reset()
        plan = random_plan(dag, plat.M, np.random.default_rng(plan_seed))
        total = 0.0
        for t, (node, loc) in enumerate(plan):
            assert obs["node_mask"][node]
            obs, r, done, step_info = env.step(node, loc)
            total += r
            scheduled = sum(1 for row in obs["node_features"] if row[4] >= 0)
            assert scheduled == t + 1
            assert done == (t + 1 == len(plan))
        assert len(plan) == info["num_exec"]
        assert total == approx(info["baseline_aft"] - step_info["mean_aft"], abs=1e-9)


def make_dataset(count: int = 3, n: int = 4, seed: int = 123):
    cfg = GenConfig(node_num=n, seed=seed)
    return [
        (f"instance_{i:04d}", generate_merged(cfg, K=1, index=i)) for i in range(count)
    ]


class TestSession:
    def run(self, session: Session, requests: list[dict]) -> list[dict]:
        return [json.loads(session.handle_line(json.dumps(r))) for r in requests]

    def test_seq_increases_and_codes(self, plat_single):
        session = Session(make_dataset(), plat_single)
        out = self.run(
            session,
            [
                {"op": "spec"},
                {"op": "step", "action": [1, 0]},
                {"op": "reset", "instance_id": 99},
                {"op": "reset", "instance_id": "instance_0001"},
                {"op": "nope"},
            ],
        )
        assert [o["seq"] for o in out] == [1, 2, 3, 4, 5]
        assert out[0]["spec"]["num_users"] == 1
        assert out[0]["spec"]["num_nodes"] is None
        assert out[1]["error"]["code"] == "NoEpisode"
        assert out[2]["error"]["code"] == "UnknownInstance"
        assert out[3]["info"]["instance"] == "instance_0001"
        assert out[4]["error"]["code"] == "ProtocolError"

    def test_bad_json_and_bad_action_shapes(self, plat_single):
        session = Session(make_dataset(), plat_single)
        bad = json.loads(session.handle_line("{not json"))
        assert bad["error"]["code"] == "ProtocolError"
        self.run(session, [{"op": "reset"}])
        for action in ([1], [1, 0, 0], ["1", 0], [1.0, 0], None):
            out = self.run(session, [{"op": "step", "action": action}])[0]
            assert out["error"]["code"] == "ProtocolError"

    def test_masked_action_keeps_state(self, plat_single):
        session = Session(make_dataset(), plat_single)
        first = self.run(session, [{"op": "reset"}])[0]
        masked_node = first["observation"]["node_mask"].index(False)
        out = self.run(session, [{"op": "step", "action": [masked_node, 0]}])[0]
        assert out["error"]["code"] == "MaskedAction"
        # A legal step still works afterwards from the same state.
        node = first["observation"]["node_mask"].index(True)
        out = self.run(session, [{"op": "step", "action": [node, 1]}])[0]
        assert "error" not in out
        assert out["observation"]["t"] == 1

    def test_reset_without_id_cycles_instances(self, plat_single):
        session = Session(make_dataset(count=2), plat_single)
        names = [
            self.run(session, [{"op": "reset"}])[0]["info"]["instance"]
            for _ in range(4)
        ]
        assert names == [
            "instance_0000",
            "instance_0001",
            "instance_0000",
            "instance_0001",
        ]

    def test_full_episode_matches_in_process_env(self, plat_single):
        dataset = make_dataset()
        session = Session(dataset, plat_single)
        reset = self.run(session, [{"op": "reset", "instance_id": 0}])[0]
        env = Env(dataset[0][1], plat_single)
        obs, _ = env.reset()
        assert reset["observation"] == obs
        done = False
        while not done:
            node = obs["node_mask"].index(True)
            wire = self.run(session, [{"op": "step", "action": [node, 1]}])[0]
            obs, r, done, info = env.step(node, 1)
            assert wire["observation"] == obs
            assert wire["reward"] == r
            assert wire["done"] == done
        out = self.run(session, [{"op": "close"}])[0]
        assert out["closed"] is True and session.closed

    def test_seed_reset_rejected(self, plat_single):
        session = Session(make_dataset(), plat_single)
        out = self.run(session, [{"op": "reset", "seed": 3}])[0]
        assert out["error"]["code"] == "ProtocolError"


class TestGoldenTranscript:
    def test_replay_matches_recorded_responses(self, plat_single):
        lines = GOLDEN.read_text().splitlines()
        session = Session(make_dataset(), plat_single)
        for line in lines:
            pair = json.loads(line)
            got = session.handle_line(json.dumps(pair["request"]))
            assert json.loads(got) == pair["response"]
            assert got == json.dumps(
                pair["response"], separators=(",", ":")
            ), "serialized bytes drifted"


class TestTransports:
    def test_stdio_roundtrip(self, plat_single):
        import io

        requests = "\n".join(
            [
                json.dumps({"op": "reset", "instance_id": 0}),
                json.dumps({"op": "spec"}),
                json.dumps({"op": "close"}),
            ]
        )
        out = io.StringIO()
        serve_stdio(make_dataset(), plat_single, inp=io.StringIO(requests), out=out)
        lines = out.getvalue().splitlines()
        assert len(lines) == 3
        assert json.loads(lines[0])["info"]["instance"] == "instance_0000"
        assert json.loads(lines[1])["spec"]["num_nodes"] == 6
        assert json.loads(lines[2])["closed"] is True

    def test_tcp_roundtrip(self, plat_single):
        server = serve_tcp(make_dataset(), plat_single, port=0)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            host, port = server.server_address
            with socket.create_connection((host, port), timeout=5) as sock:
                f = sock.makefile("rw", encoding="utf-8", newline="\n")
                for req, check in [
                    ({"op": "reset", "instance_id": 1}, "observation"),
                    ({"op": "close"}, "closed"),
                ]:
                    f.write(json.dumps(req) + "\n")
                    f.flush()
                    resp = json.loads(f.readline())
                    assert check in resp
        finally:
            server.shutdown()
            server.server_close()

    def test_tcp_sessions_are_independent(self, plat_single):
        server = serve_tcp(make_dataset(), plat_single, port=0)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            host, port = server.server_address

            def reset_seq(instance: int) -> int:
                with socket.create_connection((host, port), timeout=5) as sock:
                    f = sock.makefile("rw", encoding="utf-8", newline="\n")
                    f.write(json.dumps({"op": "reset", "instance_id": instance}) + "\n")
                    f.flush()
                    return json.loads(f.readline())["seq"]

            assert reset_seq(0) == 1
            assert reset_seq(1) == 1  # fresh session, fresh seq
        finally:
            server.shutdown()
            server.server_close()
