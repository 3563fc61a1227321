import numpy as np
import pytest
from hypothesis import settings

from nidl.dataset import RoiSpec, make_dataset
from nidl.evm import EvmConfig, magnify
from nidl.media import VideoClip
from nidl.synth import SynthProfile, generate_synthetic_subject

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

TINY = SynthProfile(duration_s=240.0, width=32, height=32)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_clip(rng, n=4, h=6, w=5, fps=30.0, subject_id="x"):
    return VideoClip(rng.random((n, h, w, 3)), fps, subject_id)


@pytest.fixture(scope="session")
def tiny_datasets():
    """Three short magnified subjects with raw ROIs, 16 px side."""
    roi = RoiSpec.centered(TINY.height, TINY.width, 16)
    out = []
    for seed in range(3):
        sub = generate_synthetic_subject(seed, TINY)
        mag = magnify(sub.clip, EvmConfig())
        out.append(make_dataset(mag, sub.log, roi, evm_config=EvmConfig(), raw_clip=sub.clip))
    return out


# acceptance reporting: one PASS/FAIL line per criterion at the end of the run

def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, title): test belongs to acceptance criterion n")
    config._acceptance = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or (rep.when != "call" and not rep.failed):
        return
    n, title = mark.args
    entry = item.config._acceptance.setdefault(n, {"title": title, "ok": True, "details": []})
    entry["ok"] &= not rep.failed
    if rep.when == "call":
        entry["details"] += [f"{k}={v}" for k, v in item.user_properties]


def pytest_terminal_summary(terminalreporter, config):
    results = getattr(config, "_acceptance", {})
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(results):
        r = results[n]
        detail = f"  [{'; '.join(r['details'])}]" if r["details"] else ""
        terminalreporter.write_line(f"criterion {n}: {'PASS' if r['ok'] else 'FAIL'}  {r['title']}{detail}")
