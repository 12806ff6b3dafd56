import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(capsys):
    """``criterion(n, title, passed, detail)`` records one acceptance line and
    echoes it to the terminal."""

    def record(number, title, passed, detail=""):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}"
        if detail:
            line += f"  ({detail})"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def desk_model():
    """Generic net after the offline protocol (static, then recurrent) on the
    default synthetic suite with estimated flow.  Shared by the end-to-end
    criterion and the oracles that start from a trained net."""
    import time
    from dataclasses import replace
    from types import SimpleNamespace

    from maskrnn import data as D
    from maskrnn import pipeline as P

    tic = time.perf_counter()
    train, test = D.make_suite(D.SuiteConfig())
    cfg = P.ModelConfig(flow_source="estimate")
    tcfg = P.TrainConfig()
    caches = [P.FlowCache(v, cfg.flow, cfg.flow_source) for v in train]
    params, static_log = P.train_static(train, cfg, replace(tcfg, stage="static"), flow_caches=caches)
    params, rec_log = P.train_recurrent(train, cfg, replace(tcfg, stage="recurrent"), params, flow_caches=caches)
    return SimpleNamespace(
        params=params,
        cfg=cfg,
        tcfg=tcfg,
        train=train,
        test=test,
        seconds=time.perf_counter() - tic,
        losses={"static": static_log.epoch_losses, "recurrent": rec_log.epoch_losses},
    )


@pytest.fixture(scope="session")
def ablation_result():
    """Default ablation run (all rows, 5 seeds), shared by the ablation
    criterion and the restriction oracle."""
    from maskrnn import ablation as A

    return A.run_ablation(A.AblationConfig())
