import _corpus


def pytest_terminal_summary(terminalreporter):
    if not _corpus.RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(_corpus.RESULTS):
        checks = _corpus.RESULTS[crit]
        ok = all(c[1] for c in checks)
        tr.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}")
        for name, good, detail in checks:
            tr.write_line(f"    [{'pass' if good else 'FAIL'}] {name}: {detail}")
