import importlib

from dotenv import load_dotenv

from app import config

load_dotenv()


def test_defaults_have_expected_types():
    """
    Tests that the settings read from the environment come out with the
    types the rest of the package relies on.
    """
    assert isinstance(config.DEFAULT_SEED, int)
    assert isinstance(config.DEFAULT_WORKERS, int)
    assert isinstance(config.DEFAULT_OUT_DIR, str)
    assert config.LOG_LEVEL.upper() in (
        "DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"
    )


def test_temperature_grid_is_sorted_and_positive():
    """
    The nominal temperature grid is strictly increasing and positive.
    """
    grid = config.NOMINAL_T_GRID
    assert all(t > 0 for t in grid)
    assert all(a < b for a, b in zip(grid, grid[1:]))


def test_environment_overrides(monkeypatch):
    """
    Environment variables override the built-in seed and worker count.
    """
    monkeypatch.setenv("ISING_SEED", "7")
    monkeypatch.setenv("ISING_WORKERS", "1")
    try:
        reloaded = importlib.reload(config)
        assert reloaded.DEFAULT_SEED == 7
        assert reloaded.DEFAULT_WORKERS == 1
    finally:
        monkeypatch.undo()
        importlib.reload(config)
