import os

import pytest
from hypothesis import settings

from gridmtd.case_io import SimConfig, load_case, parse_case

settings.register_profile("ci", max_examples=50, deadline=None)
settings.register_profile("dev", max_examples=20, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))

STUDY_DEPLOYMENT = (1, 3, 5, 8, 9, 18, 19)
DEFENDER_SETS = [[1], [1, 3], [1, 3, 5], [1, 3, 5, 8], list(STUDY_DEPLOYMENT)]

# four buses, five links: the square 1-2-3-4 closed by 1-4, plus the chord 1-3
FOUR_BUS_TEXT = """\
reference = 1;
bus = [
  1  0;
  2  10;
  3  20;
  4  30;
];
branch = [
  1  4  0.10  100;
  1  2  0.20  100;
  2  3  0.25  100;
  3  4  0.40  100;
  1  3  0.50  100;
];
gen = [
  1  0  200  10;
];
"""

TWO_BUS_TEXT = """\
bus = [
  1  0;
  2  100;
];
branch = [
  1  2  0.5  150;
];
gen = [
  1  0  200  20;
];
"""

# unit reactances so the flow split can be done by hand (see test_dispatch)
CASCADE_TEXT = """\
bus = [
  1  0;
  2  0;
  3  0;
  4  80;
];
branch = [
  1  4  1.0  100;
  1  2  1.0  100;
  2  3  1.0  100;
  3  4  1.0  60;
  1  3  1.0  100;
];
gen = [
  1  0  200  10;
];
"""


@pytest.fixture
def four_bus():
    return parse_case(FOUR_BUS_TEXT, name="four_bus")


@pytest.fixture
def two_bus():
    return parse_case(TWO_BUS_TEXT, name="two_bus")


@pytest.fixture
def cascade_case():
    return parse_case(CASCADE_TEXT, name="cascade")


@pytest.fixture(scope="session")
def ieee14():
    return load_case("ieee14")


@pytest.fixture(scope="session")
def ieee14_s2():
    return load_case("ieee14_s2")


@pytest.fixture
def study_config():
    return SimConfig(deployment=list(STUDY_DEPLOYMENT))


# acceptance reporting: one PASS/FAIL line per criterion in the terminal summary
_CRITERIA: dict[str, list[tuple[str, str]]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    text = "; ".join(v for k, v in rep.user_properties if k == "detail")
    _CRITERIA.setdefault(mark.args[0], []).append(("PASS" if rep.passed else "FAIL", text))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, results in _CRITERIA.items():
        status = "PASS" if all(r == "PASS" for r, _ in results) else "FAIL"
        terminalreporter.write_line(f"{status}  {name}")
        for _, text in results:
            if text:
                terminalreporter.write_line(f"      {text}")
