"""Smoke test for the nmnfaith Python bindings.

Run after `pip install --no-build-isolation -e crates/python`:

    python crates/python/python/smoke_test.py
"""

import json
import math

import nmnfaith

FIGURE1 = "equal(count(find[dogs]), count(filter[black](find[dogs])))"


def check_program():
    p = nmnfaith.Program(FIGURE1)
    assert p.linearize() == FIGURE1
    assert p.root_type == "BOOLEAN"
    assert len(p) == 6
    assert [n[1] for n in p.nodes()] == ["equal", "count", "find", "count", "filter", "find"]
    assert nmnfaith.Program("count(relocate[x](find[y]))").nodes()[1][1] == "project"
    try:
        nmnfaith.Program("count(exist(find[dogs]))")
    except ValueError:
        pass
    else:
        raise AssertionError("type error not raised")


def check_algebra():
    a, b = nmnfaith.Number(2.0, 0.0), nmnfaith.Number(2.0, 0.0)
    assert nmnfaith.compare("equal", a, b) == 1.0
    assert nmnfaith.compare("less", a, b) == 0.0
    q = nmnfaith.Number(4.0, 0.1) / nmnfaith.Number(2.0, 0.1)
    assert abs(q.mean - 2.05) < 1e-12 and abs(q.var - 0.125) < 1e-12
    s = nmnfaith.Number(1.0, 0.25) + nmnfaith.Number(2.0, 0.25)
    assert (s.mean, s.var) == (3.0, 0.5)
    probs = nmnfaith.Number(3.0, 0.25).discretize()
    assert len(probs) == nmnfaith.DEFAULT_MAX_COUNT + 1
    assert abs(sum(probs) - 1.0) < 1e-9


def check_metrics():
    assert nmnfaith.iou([0, 0, 10, 10], [5, 0, 15, 10]) == 1 / 3
    assert abs(nmnfaith.text_instance_score([0.5, 0.5], [(0, 0)]) - math.log(2)) < 1e-12
    same = nmnfaith.permutation_test([0.1, 0.5, 0.9], [0.1, 0.5, 0.9], trials=500, seed=1)
    assert same["p_value"] == 1.0
    gap = nmnfaith.permutation_test([0.9] * 20, [0.1] * 20, trials=2000, seed=1)
    assert gap["p_value"] < 0.01


def check_pipeline():
    programs = nmnfaith.random_programs(20, seed=5)
    bundle = nmnfaith.synthesize(programs, seed=5, noise=0.0)
    scenes = [json.loads(line) for line in bundle["scenes"].splitlines()]
    groundings = [json.loads(line) for line in bundle["groundings"].splitlines()]
    traces = []
    for rec in (json.loads(line) for line in bundle["programs"].splitlines()):
        scene = next(s for s in scenes if s["id"] == rec["id"])
        mine = "\n".join(json.dumps(g) for g in groundings if g["id"] == rec["id"])
        trace = nmnfaith.execute(nmnfaith.Program(rec["program"]), json.dumps(scene), mine)
        traces.append(trace)
    report = json.loads(
        nmnfaith.eval_visual(bundle["annotations"], bundle["scenes"], "\n".join(traces), upper_bound=True)
    )
    assert report["model"]["overall"] == report["upper_bound"]["overall"]
    assert report["model"]["examples"] == 20


def check_text():
    ann = {"id": "q", "node": 0, "module": "find", "token_dist": [0.25, 0.75], "spans": [[1, 1]]}
    report = json.loads(nmnfaith.eval_text(json.dumps(ann)))
    assert abs(report["model"]["overall"]["mean"] + math.log(0.75)) < 1e-12


if __name__ == "__main__":
    check_program()
    check_algebra()
    check_metrics()
    check_pipeline()
    check_text()
    print("nmnfaith python smoke test: ok")
