import os
import stat
import textwrap

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def write_script(path, body):
    """Drop an executable python script at `path` with the given body."""
    path.write_text("#!/usr/bin/env python3\n" + textwrap.dedent(body))
    path.chmod(path.stat().st_mode | stat.S_IXUSR | stat.S_IXGRP | stat.S_IXOTH)
    return str(path)


@pytest.fixture
def script_factory(tmp_path):
    counter = [0]

    def make(body):
        counter[0] += 1
        return write_script(tmp_path / f"evaluator_{counter[0]}.py", body)

    return make


# A well-behaved external evaluator: reads the request, answers with a smooth
# deterministic function of the parameters.
GOOD_EVALUATOR = """
import json, math, sys
req = json.loads(sys.stdin.readline())
p = req["params"]
vals = [v for v in p.values() if isinstance(v, (int, float))]
out = sum(math.sin(3.0 * v) for v in vals)
print(json.dumps({"id": req["id"], "outcome": out, "aux": {"n": len(vals)}}))
"""


@pytest.fixture
def good_evaluator_cmd(script_factory):
    return "python3 " + script_factory(GOOD_EVALUATOR)


@pytest.fixture(autouse=True)
def _runs_root(tmp_path, monkeypatch):
    # keep CLI tests from littering the working tree
    monkeypatch.setenv("MULTIVERSE_RUNS_ROOT", str(tmp_path / "runs"))
    monkeypatch.chdir(tmp_path)
    return tmp_path
