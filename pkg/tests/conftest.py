import threading
import time
from datetime import datetime, timedelta, timezone

import pytest

from reviewkit import EngineConfig, FeedbackTemplate, ReviewEngine, SessionStore
from reviewkit.errors import ProviderUnavailable
from reviewkit.providers import MockProvider


class FakeClock:
    """Deterministic clock: fixed start, fixed step per call."""

    def __init__(self, start=None, step_ms=250):
        self.t = start or datetime(2026, 8, 10, 12, 0, 0, tzinfo=timezone.utc)
        self.step = timedelta(milliseconds=step_ms)

    def __call__(self):
        self.t += self.step
        return self.t

    def advance(self, seconds):
        self.t += timedelta(seconds=seconds)


class CountingProvider:
    """Delegates to a real provider while tracking concurrent in-flight calls."""

    def __init__(self, inner, latency=0.0):
        self.inner = inner
        self.latency = latency
        self.active = 0
        self.peak = 0
        self.calls = 0
        self.calls_by_task = {}
        self._lock = threading.Lock()

    def generate(self, request):
        with self._lock:
            self.active += 1
            self.calls += 1
            self.calls_by_task[request.task] = self.calls_by_task.get(request.task, 0) + 1
            self.peak = max(self.peak, self.active)
        try:
            if self.latency:
                time.sleep(self.latency)
            return self.inner.generate(request)
        finally:
            with self._lock:
                self.active -= 1

    def embed(self, text):
        return self.inner.embed(text)


class FailingProvider:
    """Fails selected tasks; everything else delegates to the mock."""

    def __init__(self, inner=None, fail_tasks=(), fail_embed=False):
        self.inner = inner or MockProvider()
        self.fail_tasks = set(fail_tasks)
        self.fail_embed = fail_embed

    def generate(self, request):
        if request.task in self.fail_tasks:
            raise ProviderUnavailable(f"simulated failure for {request.task}")
        return self.inner.generate(request)

    def embed(self, text):
        if self.fail_embed:
            raise ProviderUnavailable("simulated embed failure")
        return self.inner.embed(text)


# Synthetic submissions, one family per mock rule; the {i} suffixes keep
# token sets distinct so no two different templates embed identically.

def missing_return_code(i=0):
    return (f"def summed{i}(xs):\n"
            f"    total{i} = 0\n"
            f"    for item{i} in xs:\n"
            f"        total{i} += item{i}")


def list_concat_code(i=0):
    return (f"def filtered{i}(xs):\n"
            f"    keep{i} = []\n"
            f"    for value{i} in xs:\n"
            f"        keep{i} += value{i}\n"
            f"    return keep{i}")


def off_by_one_code(i=0):
    return (f"def rising{i}(xs):\n"
            f"    for idx{i} in range(len(xs)):\n"
            f"        if xs[idx{i}] > xs[idx{i}+1]:\n"
            f"            return True\n"
            f"    return False")


def unused_accumulator_code(i=0):
    return (f"def collect{i}(xs):\n"
            f"    count{i} = 0\n"
            f"    found{i} = []\n"
            f"    for entry{i} in xs:\n"
            f"        found{i}.append(entry{i})\n"
            f"    return found{i}")


def clean_code(i=0):
    return (f"def double{i}(xs):\n"
            f"    out{i} = []\n"
            f"    for item{i} in xs:\n"
            f"        out{i}.append(item{i} * 2)\n"
            f"    return out{i}")


RULE_CODE_BUILDERS = {
    "missing-return": missing_return_code,
    "list-concat": list_concat_code,
    "off-by-one-range": off_by_one_code,
    "unused-accumulator": unused_accumulator_code,
}


def records_for(codes):
    return [
        {"student_ref": f"student-{i}", "code": code, "language_tag": "python",
         "severity": 0.5}
        for i, code in enumerate(codes)
    ]


@pytest.fixture
def clock():
    return FakeClock()


@pytest.fixture
def store(tmp_path):
    return SessionStore(tmp_path / "store")


@pytest.fixture
def make_engine(tmp_path):
    """Factory: engine with a fresh store, fake clock, optional corpus."""
    counter = {"n": 0}

    def build(codes=None, config=None, provider=None, template=None,
              generate=True, prompt="Write a function that filters a list"):
        counter["n"] += 1
        store = SessionStore(tmp_path / f"store{counter['n']}")
        engine = ReviewEngine.create(
            store, prompt, config or EngineConfig(),
            provider=provider, clock=FakeClock(),
        )
        if codes:
            engine.ingest_submissions(records_for(codes))
            if generate:
                engine.batch_generate(template or FeedbackTemplate())
        return engine

    return build
