"""End-to-end guarantees for the client SDK."""

import random
import time
from pathlib import Path

import httpx

from specjudge_client import ClientSession

from service_fixtures import BROKEN_PROGRAM, GT_PROGRAM

CODE_PROGRAM = "method Sum(n: int) returns (s: int)\n{\n  s := n;\n}\n"
NONVERIFYING = GT_PROGRAM + "// WONT_VERIFY\n"


def report(name: str, started: float):
    print(f"[acceptance] {name}: PASS ({time.perf_counter() - started:.2f}s)")


def test_advantages_match_service_exactly(service_url):
    started = time.perf_counter()
    pool = [GT_PROGRAM, NONVERIFYING, BROKEN_PROGRAM]
    rng = random.Random(77031)
    with ClientSession(service_url) as session:
        for _ in range(20):
            candidates = [rng.choice(pool) for _ in range(rng.randint(2, 4))]
            group = session.reward_group(CODE_PROGRAM, GT_PROGRAM, candidates)
            raw = httpx.post(f"{service_url}/v1/reward", json={
                "code": CODE_PROGRAM, "ground_truth": GT_PROGRAM,
                "candidates": candidates}, timeout=30).json()
            assert len(group.advantages) == len(candidates)
            for got, want in zip(group.advantages, raw["advantages"]):
                assert abs(got - want) <= 1e-12
            assert group.breakdowns == raw["rewards"]

        zero_variance = session.reward_group(
            CODE_PROGRAM, GT_PROGRAM, [GT_PROGRAM, GT_PROGRAM])
        assert zero_variance.advantages == [0.0, 0.0]
    report("SDK advantages match the service", started)


def test_reward_engine_never_imports_this_sdk():
    """The scoring engine and its suite must work with the SDK absent."""
    started = time.perf_counter()
    repo_root = Path(__file__).resolve().parent.parent.parent
    offenders = []
    for directory in (repo_root / "src", repo_root / "tests"):
        for path in directory.rglob("*.py"):
            if "specjudge_client" in path.read_text():
                offenders.append(str(path))
    assert not offenders, f"engine code references the SDK: {offenders}"
    report("engine is SDK-independent", started)
