import acceptance_log


def pytest_terminal_summary(terminalreporter):
    # only when the acceptance module was part of the run
    ran = any("test_acceptance" in r.nodeid for key in ("passed", "failed", "error")
              for r in terminalreporter.stats.get(key, []) if hasattr(r, "nodeid"))
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acceptance_log.CRITERIA):
        terminalreporter.write_line(acceptance_log.line(n))
