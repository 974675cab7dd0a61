from hypothesis import settings

# single-core CI boxes make per-example timing noisy
settings.register_profile("mofill", deadline=None)
settings.load_profile("mofill")


def pytest_terminal_summary(terminalreporter):
    from verdicts import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(RESULTS):
            terminalreporter.write_line(line)
