import pytest

import shared
from risisac.benchmarks import solve_proposed
from risisac.config import ScenarioConfig
from risisac.feasibility import max_detection_probability

# two antennas, two RIS elements, line of sight only; the detection
# requirement binds (no-sensing echo below threshold, maximum echo above)
TINY = dict(M=2, N_x=2, N_y=1, pure_los=True, p_tx_dbm=50.0, r_max=0.25, t0=1.0, pf_override=1e-4)


@pytest.fixture(scope="session")
def tiny_config():
    return ScenarioConfig(**TINY)


@pytest.fixture(scope="session")
def tiny_problem(tiny_config):
    return tiny_config.problem()


@pytest.fixture(scope="session")
def tiny_report(tiny_problem):
    return max_detection_probability(tiny_problem)


@pytest.fixture(scope="session")
def tiny_solution(tiny_problem, tiny_report):
    return solve_proposed(tiny_problem, tiny_report)


@pytest.fixture(scope="session")
def desk_problem():
    return shared.desk(1)[0]


@pytest.fixture(scope="session")
def desk_report():
    return shared.desk(1)[1]


@pytest.fixture(scope="session")
def desk_solution():
    return shared.desk(1)[2]


def pytest_terminal_summary(terminalreporter):
    if not shared.ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(shared.ACCEPTANCE):
        checks = shared.ACCEPTANCE[n]
        verdict = "PASS" if all(ok for _, ok, _ in checks) else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {verdict}")
        for label, ok, detail in checks:
            terminalreporter.write_line(f"    [{'ok' if ok else 'FAILED'}] {detail}")
