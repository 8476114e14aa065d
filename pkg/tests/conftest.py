from hypothesis import settings

# first calls pay for numba compilation
settings.register_profile("semicp", deadline=None, max_examples=50)
settings.load_profile("semicp")


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in mod.CRITERIA:
            if key in mod.RESULTS:
                terminalreporter.write_line(mod.RESULTS[key])
