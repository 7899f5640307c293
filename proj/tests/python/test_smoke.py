import os

import pytest

import switsyn

ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
EXAMPLE = os.path.join(ROOT, "examples", "paper_siv.sys")


def test_validate_bundled_example():
    rep = switsyn.validate(EXAMPLE)
    assert rep["ok"]
    assert rep["violations"] == []
    assert rep["subsystems"] == 2


def test_validate_missing_file_raises():
    with pytest.raises(switsyn.Error):
        switsyn.validate(os.path.join(ROOT, "examples", "does_not_exist.sys"))


@pytest.fixture(scope="module")
def controller_path(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("ctl") / "siv.ctl")
    rep = switsyn.synthesize(EXAMPLE, out=out, zeta=[1.7, 1.5], lam=-6.0)
    assert rep["status"] == "feasible"
    assert rep["slack"] > 0
    assert rep["zeta2"] == [1.7, 1.5]
    return out


def test_closed_loop_decays(controller_path, tmp_path):
    csv = str(tmp_path / "traj.csv")
    rep = switsyn.simulate(EXAMPLE, controller=controller_path, out=csv, tend=30.0)
    assert rep["controlled"]
    assert rep["samples"] == 30001
    for sub in rep["subsystems"]:
        assert max(abs(v) for v in sub["final_state"]) < 1e-6
    header = open(csv).readline()
    assert header.startswith("t,mode1,x1_1")


def test_seeded_noise_is_deterministic(controller_path, tmp_path):
    a = str(tmp_path / "a.csv")
    b = str(tmp_path / "b.csv")
    for path in (a, b):
        switsyn.simulate(EXAMPLE, controller=controller_path, out=path, tend=2.0,
                         sigma=0.01, seed=7)
    assert open(a, "rb").read() == open(b, "rb").read()
    switsyn.simulate(EXAMPLE, controller=controller_path, out=b, tend=2.0,
                     sigma=0.01, seed=8)
    assert open(a, "rb").read() != open(b, "rb").read()


def test_verify_passes(controller_path):
    rep = switsyn.verify(EXAMPLE, controller_path, runs=3)
    assert rep["pass"]
    assert rep["inequalities"]["source"] == "resynthesis"
    assert rep["storage"]["between_switches"]["violations"] == 0
    ratios = [s["worst_output_ratio"] for s in rep["attenuation"]["subsystems"]]
    assert ratios[0] <= 1.7 and ratios[1] <= 1.5


def test_open_loop_simulation():
    rep = switsyn.simulate(EXAMPLE, tend=1.0, stride=10)
    assert not rep["controlled"]
    assert rep["samples"] == 101
