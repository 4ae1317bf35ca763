import numpy as np
import pytest

from temporal_pyramid.synthetic import SyntheticSpec, generate


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def separable_data(tmp_path_factory):
    spec = SyntheticSpec(structure="separable", n_classes=2, d=8, frames=10, noise=0.1,
                         videos_per_class={"train": 20, "validation": 5, "test": 10},
                         streams=("spatial", "temporal"), seed=3)
    return generate(spec, tmp_path_factory.mktemp("separable"))


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance" not in getattr(rep, "nodeid", "") or rep.when != "call":
                continue
            props = dict(rep.user_properties)
            lines.append((props.get("criterion", rep.nodeid), outcome.upper(), props.get("detail", "")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for criterion, status, detail in sorted(lines):
            status = "PASS" if status == "PASSED" else "FAIL"
            terminalreporter.write_line(f"{status}  {criterion}  {detail}")
