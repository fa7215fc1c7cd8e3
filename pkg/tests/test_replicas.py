import time

import pytest

from phmc_coupling.replicas import resolve_workers, run_replicas


@pytest.fixture(autouse=True)
def _no_thread_env(monkeypatch):
    monkeypatch.delenv("PHMC_THREADS", raising=False)


def test_results_come_back_in_task_order():
    def slow_square(x):
        time.sleep(0.001 * (10 - x))
        return x * x

    for workers in (1, 2, 5):
        assert run_replicas(slow_square, range(10), workers=workers, chunk_size=3) == [x * x for x in range(10)]


def test_empty_task_list():
    assert run_replicas(lambda x: x, [], workers=4) == []


def test_environment_takes_precedence(monkeypatch):
    monkeypatch.setenv("PHMC_THREADS", "3")
    assert resolve_workers(7) == 3


@pytest.mark.parametrize("value", ["zero", "0"])
def test_invalid_environment_is_ignored(monkeypatch, value):
    monkeypatch.setenv("PHMC_THREADS", value)
    assert resolve_workers(2) == 2


def test_default_worker_count_is_bounded():
    assert 1 <= resolve_workers() <= 8
    assert resolve_workers(12) == 12


def test_worker_errors_propagate():
    def boom(x):
        if x == 3:
            raise RuntimeError("replica 3")
        return x

    with pytest.raises(RuntimeError, match="replica 3"):
        run_replicas(boom, range(6), workers=2)
