"""Acceptance suite: ten criteria, each printed as one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or directly with ``python tests/test_acceptance.py``.
"""
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from iics.cli import main as cli_main  # noqa: E402
from iics.clustering import LINKAGES, ClusterConfig, agglomerate  # noqa: E402
from iics.core import l2_normalize_rows  # noqa: E402
from iics.evaluation import cmc_map, similarity_histogram  # noqa: E402
from iics.nn import AibnState, aibn_backward, aibn_forward  # noqa: E402
from iics.nn.checks import run_all  # noqa: E402
from iics.pipeline import PipelineConfig, run, similarity_features  # noqa: E402
from iics.similarity import ScoreVector, jaccard_delta, jaccard_matrix  # noqa: E402
from iics.synthgen import GenConfig, generate  # noqa: E402
from oracles import (  # noqa: E402
    agglomerate_brute,
    batch_norm,
    instance_norm,
    random_retrieval_instance,
    retrieval_oracle,
)

SEEDS = (0, 1, 2, 3, 4)
TOL_EXACT = 1e-12


def _final_map(seed, gen=None, **pipe):
    ds = generate(GenConfig(seed=seed, **(gen or {})))
    _, reports = run(PipelineConfig(seed=seed, **pipe), ds)
    return reports[-1].metrics["mAP"]


def criterion_1():
    start = time.perf_counter()
    reports = run_all(seed=0, n_probes=20, h=1e-5, tol=1e-4)
    elapsed = time.perf_counter() - start
    worst = max(r.max_rel_error for r in reports)
    ok = all(r.passed for r in reports) and all(len(r.probes) >= 20 for r in reports) \
        and len(reports) == 5 and elapsed < 30
    names = ",".join(r.name for r in reports if not r.passed) or "none"
    return ok, f"5 ops, worst rel err {worst:.2e}, failing: {names}, {elapsed:.1f}s"


def criterion_2():
    worst = 0.0
    for trial in range(50):
        rng = np.random.default_rng(1000 + trial)
        x = rng.normal(size=(int(rng.integers(2, 6)), 3, int(rng.integers(2, 9)))) * 2 + 0.5
        for alpha, ref in ((1.0, batch_norm), (0.0, instance_norm)):
            state = AibnState(3)
            state.alpha[:] = alpha
            y, _ = aibn_forward(x, state, "train")
            worst = max(worst, float(np.max(np.abs(y - ref(x, state.eps)))))
    flat = True
    x = np.random.default_rng(7).normal(size=(4, 3, 6))
    dy = np.random.default_rng(8).normal(size=x.shape)
    for stored, effective in ((-0.5, 0.0), (1.5, 1.0)):
        ref_state = AibnState(3)
        ref_state.alpha[:] = effective
        state = AibnState(3)
        state.alpha[:] = stored
        y, cache = aibn_forward(x, state, "train")
        dalpha = aibn_backward(dy, cache, state)[3]
        flat &= bool(np.array_equal(y, aibn_forward(x, ref_state, "train")[0]))
        flat &= bool(np.all(dalpha == 0.0))
    return worst <= 1e-10 and flat, f"max |diff| {worst:.1e} over 50 tensors, clamp flat: {flat}"


def criterion_3():
    layout = ((0, 3), (1, 4), (2, 2))
    rng = np.random.default_rng(3)
    vals = np.concatenate([rng.dirichlet(np.ones(m), size=40) for _, m in layout], axis=1)
    vecs = ScoreVector(vals, layout).rows()
    J = jaccard_matrix(vals)
    pair = np.array([[jaccard_delta(a, b) for b in vecs] for a in vecs])
    sym = float(np.max(np.abs(pair - pair.T)))
    bounds = bool(pair.min() >= -TOL_EXACT and pair.max() <= 1 + TOL_EXACT)
    self_sim = float(np.max(np.abs(np.diag(pair) - 1.0)))
    matrix = float(np.max(np.abs(J - pair)))

    def one_hot(idx):
        out = np.zeros(9)
        out[np.cumsum([0, 3, 4])[:3] + np.array(idx)] = 1.0
        return ScoreVector(out, layout)

    disjoint = jaccard_delta(one_hot([0, 0, 0]), one_hot([1, 1, 1]))
    hand = jaccard_delta(ScoreVector(np.array([0.6, 0.4]), ((0, 2),)),
                         ScoreVector(np.array([0.2, 0.8]), ((0, 2),)))
    errs = [sym, self_sim, matrix, abs(disjoint), abs(hand - 3 / 7)]
    ok = bounds and max(errs) <= TOL_EXACT
    return ok, (f"symmetry {sym:.1e}, bounds {bounds}, self {self_sim:.1e}, "
                f"disjoint {disjoint}, hand |d-3/7| {abs(hand - 3 / 7):.1e}")


def criterion_4():
    rng = np.random.default_rng(4)
    mismatches = 0
    for linkage in LINKAGES:
        for trial in range(100):
            n = int(rng.integers(2, 31))
            k = int(rng.integers(1, n + 1))
            A = rng.uniform(-1, 1, size=(n, n)) if trial % 2 else rng.integers(0, 4, (n, n)) / 4
            S = np.triu(A, 1)
            S = S + S.T
            np.fill_diagonal(S, 1.0)
            got = agglomerate(S, ClusterConfig(k, linkage)).labels
            mismatches += not np.array_equal(got, agglomerate_brute(S, k, linkage))
    return mismatches == 0, f"{mismatches} mismatches over 3 linkages x 100 instances"


def criterion_5():
    rng = np.random.default_rng(5)
    worst, checked, invariant = 0.0, 0, True
    for _ in range(200):
        prot, S, ids, cams = random_retrieval_instance(rng)
        res = cmc_map(S, prot, ids, cams)
        ap, cmc = retrieval_oracle(S, prot, ids, cams)
        if ap is not None:
            checked += 1
            worst = max(worst, abs(res.mAP - ap), float(np.max(np.abs(res.cmc - cmc))))
        moved = cmc_map(np.tanh(3 * S) * 7 + 2, prot, ids, cams)
        invariant &= moved.mAP == res.mAP and np.array_equal(moved.cmc, res.cmc)
    ok = worst <= TOL_EXACT and invariant and checked > 0
    return ok, f"{checked} valid instances, max err {worst:.1e}, transform invariant {invariant}"


def criterion_6():
    start = time.perf_counter()
    abl = ("full", "stage1-only", "cosine-inter", "inter-only")
    scores = {a: [_final_map(s, ablation=a) for s in SEEDS] for a in abl}
    elapsed = time.perf_counter() - start
    m = {a: np.array(v) for a, v in scores.items()}
    over_s1 = int(np.sum(m["full"] > m["stage1-only"]))
    over_cos = int(np.sum(m["full"] > m["cosine-inter"]))
    inter_low = int(np.sum(m["inter-only"] < np.min([m[a] for a in abl[:3]], axis=0)))
    ok = over_s1 >= 4 and over_cos >= 4 and inter_low >= 4 and elapsed < 3600
    table = " ".join(f"{a}={np.round(v, 3).tolist()}" for a, v in m.items())
    return ok, (f"full>stage1 {over_s1}/5, full>cosine-inter {over_cos}/5, "
                f"inter-only lowest {inter_low}/5, {elapsed:.0f}s; {table}")


def criterion_7():
    gen = {"camera_gain_range": (0.5, 1.5)}
    aibn = np.array([_final_map(s, gen) for s in SEEDS])
    bn = np.array([_final_map(s, gen, learn_alpha=False, alpha_init=1.0) for s in SEEDS])
    wins = int(np.sum(aibn >= bn))
    return wins >= 4, (f"AIBN >= BN in {wins}/5; AIBN={np.round(aibn, 3).tolist()} "
                       f"BN={np.round(bn, 3).tolist()}")


def criterion_8():
    mus = (0.0, 0.005, 0.01, 0.02)
    res = {mu: _final_map(0, mu0=mu) for mu in mus}
    ok = res[0.01] > res[0.0] and res[0.02] > res[0.0]
    return ok, "seed 0 mAP " + " ".join(f"mu0={mu}:{v:.4f}" for mu, v in res.items())


def criterion_9():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        data = tmp / "data.bin"
        if cli_main(["gen", "--out", str(data)]) != 0:
            return False, "dataset generation failed"
        for name in ("a", "b"):
            if cli_main(["run", "--data", str(data), "--out", str(tmp / name)]) != 0:
                return False, f"run {name} failed"
        files = ["metrics.json"] + sorted(p.name for p in (tmp / "a").glob("round_*.json"))
        differ = [f for f in files if (tmp / "a" / f).read_bytes() != (tmp / "b" / f).read_bytes()]
    return not differ and len(files) == 6, f"{len(files)} files compared, differing: {differ or 'none'}"


def criterion_10():
    rows, passing = [], 0
    for seed in SEEDS:
        ds = generate(GenConfig(seed=seed))
        cfg = PipelineConfig(seed=seed)
        gaps = {}

        def gap(model):
            U = l2_normalize_rows(similarity_features(model, ds.signals, cfg))
            return similarity_histogram(U @ U.T, ds.identities, ds.cameras).gap()

        def snapshot(event, t, model):
            if event == "init" or (event == "intra" and t == 0):
                gaps[event] = gap(model)

        model, _ = run(cfg, ds, callback=snapshot)
        g = (gaps["init"], gaps["intra"], gap(model))
        ok = g[2] >= 0.1 and g[0] < g[1] < g[2]
        passing += ok
        rows.append("/".join(f"{v:.3f}" for v in g))
    return passing >= 4, f"{passing}/5 seeds; gaps untrained/stage1/final: {' '.join(rows)}"


CRITERIA = {
    1: ("gradient oracle suite", criterion_1),
    2: ("AIBN identity suite", criterion_2),
    3: ("Jaccard suite", criterion_3),
    4: ("clustering oracle", criterion_4),
    5: ("retrieval-metric oracle", criterion_5),
    6: ("ablation ordering", criterion_6),
    7: ("AIBN benefit under wide camera gains", criterion_7),
    8: ("mu sensitivity", criterion_8),
    9: ("determinism", criterion_9),
    10: ("similarity gap growth", criterion_10),
}


def _line(num, ok, detail):
    return f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {CRITERIA[num][0]} ({detail})"


@pytest.mark.slow
@pytest.mark.parametrize("num", sorted(CRITERIA))
def test_criterion(num, record_property):
    ok, detail = CRITERIA[num][1]()
    line = _line(num, ok, detail)
    record_property("acceptance", line)
    print(line)
    assert ok, line


if __name__ == "__main__":
    results = []
    for num in sorted(CRITERIA):
        ok, detail = CRITERIA[num][1]()
        results.append(ok)
        print(_line(num, ok, detail), flush=True)
    sys.exit(0 if all(results) else 1)
