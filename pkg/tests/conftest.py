import pytest

from peqkd import AttackModel, ProtocolConfig, controlled_run, run_protocol

BIG = 100_000
PARAMS = (0.5, 0.9)


def pytest_addoption(parser):
    parser.addoption("--update-golden", action="store_true", help="rewrite tests/golden.json from the oracle")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (report.when != "call" and report.passed):
        return
    number, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    item.config._criteria[number] = ("PASS" if report.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter, config):
    results = getattr(config, "_criteria", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        verdict, title, detail = results[number]
        terminalreporter.write_line(f"criterion {number:2d} {verdict}  {title}: {detail}")


@pytest.fixture(scope="session")
def update_golden(request):
    return request.config.getoption("--update-golden")


@pytest.fixture(scope="session")
def passive_big():
    return run_protocol(ProtocolConfig(PARAMS, BIG))


@pytest.fixture(scope="session")
def controlled_big():
    return controlled_run(ProtocolConfig(PARAMS, BIG, mode="controlled", seed=31), None, charlie_discloses=True)


@pytest.fixture(scope="session")
def intercept_big():
    return run_protocol(ProtocolConfig(PARAMS, BIG), AttackModel("intercept", PARAMS, eve_seed=7))


@pytest.fixture(scope="session")
def intercept_fixed_guess():
    # Eve always uses e = 0.5, so she mismatches Alice whenever m = 0.9
    return run_protocol(ProtocolConfig(PARAMS, BIG, seed=5), AttackModel("intercept", (0.5,), eve_seed=8))
