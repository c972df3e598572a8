import pytest

from idwnet.experiment import build_config, load_datasets, run

SEEDS = range(5)


def train_moons(**overrides):
    cfg = build_config(None, {k: str(v) for k, v in overrides.items()})
    tr, te = load_datasets(cfg)
    res = run(cfg, (tr, te))
    return res, tr, te


@pytest.fixture(scope="session")
def moons_runs():
    """Trained moons IDW models keyed by (prototypes, seed), built on first use."""
    cache = {}

    def get(prototypes=16, seed=0, **extra):
        key = (prototypes, seed, tuple(sorted(extra.items())))
        if key not in cache:
            cache[key] = train_moons(prototypes=prototypes, seed=seed, **extra)
        return cache[key]
    return get


@pytest.fixture(scope="session")
def acceptance_report(request):
    """Collects one status line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(_REPORT, [])

    def report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
        print(line)
        lines.append((number, line))
        return ok
    return report


_REPORT = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_REPORT, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
