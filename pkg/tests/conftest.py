import json

import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, ok: bool, detail: str = "") -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def write_mixed_csv(path, n=240, seed=0, n_classes=3):
    """Numeric + nominal features, string labels, mildly nonlinear concept."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    color = rng.choice(["red", "green", "blue"], n)
    score = X[:, 0] + X[:, 1] * X[:, 2] + (color == "red") + 0.3 * rng.normal(size=n)
    cuts = np.quantile(score, np.linspace(0, 1, n_classes + 1)[1:-1])
    y = np.searchsorted(cuts, score)
    with open(path, "w") as fh:
        fh.write("a,b,c,color,cls\n")
        for i in range(n):
            fh.write(f"{X[i, 0]:.6f},{X[i, 1]:.6f},{X[i, 2]:.6f},{color[i]},k{y[i]}\n")
    return path


@pytest.fixture
def mixed_csv(tmp_path):
    return write_mixed_csv(tmp_path / "mixed.csv")


@pytest.fixture
def make_config(tmp_path, mixed_csv):
    def _make(**overrides):
        raw = {"datasets": [{"path": mixed_csv.name, "label": "cls"}],
               "methods": ["simple_average", "bpe_entropy"], "n_seeds": 2}
        raw.update(overrides)
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(raw))
        return p

    return _make
