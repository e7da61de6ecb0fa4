import functools
import json

import pytest

from chordarc.classify import (FIELD_ORDER, AnalysisConfig, classify_domain, report_json,
                               resolve, validate_report)
from chordarc.errors import PreconditionError, ResolutionError

from conftest import domain

FAST = dict(h=0.005)


@functools.lru_cache(maxsize=None)
def report(spec, **kw):
    return classify_domain(spec, AnalysisConfig(**{**FAST, **kw}))


def status(rep, name):
    return rep["verdicts"][name]["status"]


def test_config_from_mapping():
    cfg = AnalysisConfig.from_mapping({"h": "0.01", "n-pairs": "7", "eps_grid": "0.1, 0.2",
                                       "flatness_check": "no"})
    assert cfg.h == 0.01 and cfg.n_pairs == 7
    assert cfg.eps_grid == (0.1, 0.2) and cfg.flatness_check is False
    with pytest.raises(PreconditionError):
        AnalysisConfig.from_mapping({"bogus": 1})


def test_resolve_defaults():
    dom = domain("cantor:4")
    cfg = resolve(AnalysisConfig(), dom)
    assert cfg.h == pytest.approx(4.0 ** -4 / 16)
    assert cfg.r_min == pytest.approx(10 * cfg.h)
    assert 2 <= cfg.k_max <= 12
    disk = resolve(AnalysisConfig(), domain("disk"))
    assert disk.h == pytest.approx(disk.r_max * 8 / 1000)


def test_resolve_rejects_empty_range():
    with pytest.raises(ResolutionError):
        resolve(AnalysisConfig(h=0.01, r_max=0.05), domain("disk"))
    with pytest.raises(ResolutionError):
        resolve(AnalysisConfig(h=0.01, r_min=0.05), domain("disk"))


def test_report_layout():
    rep = report("line")
    assert validate_report(rep) == []
    assert tuple(rep) == FIELD_ORDER
    back = json.loads(report_json(rep))
    assert validate_report(back) == []
    assert back["provenance"]["seed"] == 0 and back["provenance"]["h"] == 0.005


def test_report_sweeps_meet_minimum_sizes():
    rep = report("disk")
    assert rep["corkscrews"]["windows"] >= 50
    assert rep["curves"]["pairs"] >= 20
    assert [g["eps"] for g in rep["bwgl"]["grid"]] == [0.05, 0.1, 0.2]
    assert rep["curves"]["lambda_max"] >= 32


def test_validate_catches_damage():
    rep = json.loads(report_json(report("line")))
    rep["verdicts"]["NTA"]["status"] = "maybe"
    del rep["provenance"]["seed"]
    probs = validate_report(rep)
    assert any("NTA" in p for p in probs) and any("seed" in p for p in probs)


def test_disk_is_chord_arc():
    rep = report("disk")
    assert {k: v["status"] for k, v in rep["verdicts"].items()} == dict.fromkeys(
        ("ADR", "UR-diag", "Uniform", "NTA", "ChordArc"), "pass")
    assert rep["theorem_check"] is not None


def test_slit_fails_uniform_through_curves():
    rep = report("slit")
    assert status(rep, "Uniform") == "fail"
    assert rep["curves"]["failures"] > 0
    assert rep["corkscrews"]["interior_min"] >= 0.1


def test_cusp_fails_uniform():
    rep = report("cusp:2")
    assert status(rep, "Uniform") == "fail"
    assert status(rep, "ChordArc") == "fail"


@pytest.mark.parametrize("spec", ["line", "disk", "lipschitz", "slit", "cusp:2"])
def test_verdict_consistency(spec):
    rep = report(spec)
    st = {k: v["status"] == "pass" for k, v in rep["verdicts"].items()}
    assert not st["ChordArc"] or (st["NTA"] and st["ADR"])
    assert not st["NTA"] or st["Uniform"]
    # flatness plus interior access gives exterior access
    if st["UR-diag"] and st["Uniform"]:
        assert st["NTA"]


def test_threads_do_not_change_the_report():
    a = report_json(classify_domain("line", AnalysisConfig(h=0.005, threads=1)))
    b = report_json(classify_domain("line", AnalysisConfig(h=0.005, threads=3)))
    strip = lambda s: {k: v for k, v in json.loads(s).items() if k != "config"}  # noqa: E731
    assert strip(a) == strip(b)


def test_repeat_runs_are_identical():
    a = report_json(classify_domain("lipschitz", AnalysisConfig(h=0.005)))
    b = report_json(classify_domain("lipschitz", AnalysisConfig(h=0.005)))
    assert a == b


def test_report_has_no_raw_nan():
    text = report_json(report("slit"))
    assert "NaN" not in text and "Infinity" not in text
    json.loads(text)


def test_grid_too_deep_is_untested_not_fatal():
    rep = report("line", k_max=12)
    assert rep["bwgl"] is None and rep["packing"] is None
    assert "bwgl" in rep["untested"]
    assert status(rep, "UR-diag") == "untested"
    assert status(rep, "Uniform") == "pass"
    assert validate_report(rep) == []
