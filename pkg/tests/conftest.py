import os

# Pin BLAS to one thread before numpy ever loads: the throughput gate is
# single-threaded and everything else stays deterministic on any box.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

from hypothesis import HealthCheck, settings  # noqa: E402

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

_acceptance_outcomes: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.failed:
        _acceptance_outcomes[name] = "FAIL"
    elif report.skipped:
        _acceptance_outcomes[name] = "SKIP"
    elif report.when == "call":
        _acceptance_outcomes.setdefault(name, "PASS")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance_outcomes.items():
        terminalreporter.write_line(f"{outcome}  {name}")
