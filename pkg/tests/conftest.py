import sys
from pathlib import Path

import pytest

from spatialspill.dgp import make_lattice
from spatialspill.weights import WeightsMatrix, normalize

sys.path.insert(0, str(Path(__file__).parent))


def lattice_w(rows, cols, rule="rook", scheme="row"):
    _, graph = make_lattice(rows, cols, rule)
    w = WeightsMatrix.from_graph(graph)
    return normalize(w, scheme) if scheme != "none" else w


@pytest.fixture
def w_path3():
    from spatialspill.graph import NeighborGraph

    g = NeighborGraph.from_edges(["A", "B", "C"], [(0, 1), (1, 2)])
    return normalize(WeightsMatrix.from_graph(g), "row")


@pytest.fixture(scope="session")
def w_grid10():
    return lattice_w(10, 10)


# ---- acceptance reporting: one line per criterion at the end of the run

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, label): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and not (rep.when == "setup" and (rep.skipped or rep.failed))):
        return
    num, label = mark.args
    entry = _CRITERIA.setdefault(num, {"label": label, "status": "PASS", "detail": []})
    if rep.skipped:
        if entry["status"] == "PASS":
            entry["status"] = "SKIP"
        reason = rep.longrepr[2] if isinstance(rep.longrepr, tuple) else str(rep.longrepr)
        entry["detail"].append(f"{item.name}: {reason}")
    elif rep.failed:
        entry["status"] = "FAIL"
        entry["detail"].append(f"{item.name} failed")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        e = _CRITERIA[num]
        line = f"criterion {num:2d} {e['status']:4s} {e['label']}"
        if e["status"] != "PASS" and e["detail"]:
            line += f"  [{e['detail'][0]}]"
        terminalreporter.write_line(line)
