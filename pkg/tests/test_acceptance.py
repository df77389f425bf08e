"""End-to-end acceptance checks, one test per numbered criterion.

The terminal summary prints one PASS/FAIL line per criterion. The German
and Adult pipelines run once per session in module fixtures; the German
run happens twice so the determinism check can compare bundles.
"""

import time

import numpy as np
import pytest
import scipy.linalg
from scipy.stats import chi2_contingency

from fcmbias.association import cramers_v, cramers_v_table, discretize_numeric, fuzzy_cmeans, initial_memberships, pearson_abs
from fcmbias.audit import build_matrix, run_audit, run_instance
from fcmbias.config import load_config
from fcmbias.dataset import Dataset, FeatureSchema, load_csv, load_schema
from fcmbias.fcm import SimulationConfig, eigen_diagnostics, reasoning_step, simulate, transfer
from fcmbias.forest import ForestConfig, fit_forest
from fcmbias.shapley import BackgroundSet, exact_shapley, kernel_shap

from conftest import CONFIGS, DATA
from oracles import reference_fcm, subset_shapley

GERMAN_TABLE = {
    # feature: (gender, age, foreign worker)
    "F1": (0.03, 0.08, 0.08), "F2": (0.11, 0.04, 0.17), "F3": (0.12, 0.13, 0.07),
    "F4": (0.15, 0.14, 0.17), "F5": (0.08, 0.03, 0.04), "F6": (0.07, 0.10, 0.04),
    "F7": (0.22, 0.37, 0.08), "F8": (0.13, 0.06, 0.13), "F9": (1.00, 0.11, 0.05),
    "F10": (0.01, 0.02, 0.12), "F11": (0.11, 0.27, 0.08), "F12": (0.09, 0.17, 0.14),
    "F13": (0.11, 1.00, 0.02), "F14": (0.05, 0.03, 0.04), "F15": (0.23, 0.21, 0.07),
    "F16": (0.10, 0.15, 0.02), "F17": (0.09, 0.12, 0.11), "F18": (0.20, 0.13, 0.07),
    "F19": (0.07, 0.09, 0.10), "F20": (0.05, 0.02, 1.00),
}
GERMAN_PROTECTED = ("F9", "F13", "F20")
PHIS = (0.2, 0.4, 0.6, 0.8)


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


@pytest.fixture(scope="module")
def german(tmp_path_factory):
    cfg = load_config(CONFIGS / "german.yaml")
    out = tmp_path_factory.mktemp("german")
    with Timer() as ta:
        bundle = run_audit(cfg, out / "a")
    with Timer() as tb:
        run_audit(cfg, out / "b")
    return {"cfg": cfg, "bundle": bundle, "a": out / "a", "b": out / "b", "times": (ta.elapsed, tb.elapsed)}


@pytest.fixture(scope="module")
def adult(tmp_path_factory):
    cfg = load_config(CONFIGS / "adult.yaml")
    with Timer() as t:
        bundle = run_audit(cfg, tmp_path_factory.mktemp("adult"))
    return {"bundle": bundle, "time": t.elapsed}


@pytest.mark.criterion("1 transfer and reasoning rule")
def test_criterion_1_transfer_and_reasoning():
    with Timer() as t:
        assert np.allclose(transfer([3.0, 4.0]), [0.6, 0.8], rtol=0, atol=1e-12)
        assert transfer([0.0, 0.0]).tolist() == [0.0, 0.0]
        a0 = np.array([0.13, 0.02, 0.4])
        w = np.array([[1.0, 0.3, 0.2], [0.3, 1.0, 0.5], [0.2, 0.5, 1.0]])
        assert reasoning_step(np.array([0.9, 0.1, 0.7]), a0, w, 0.0).tolist() == a0.tolist()
        swap = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert np.allclose(reasoning_step([1.0, 0.0], [1.0, 0.0], swap, 1.0), [0.0, 1.0], rtol=0, atol=1e-12)
        assert np.allclose(reasoning_step([1.0, 0.0], [1.0, 0.0], swap, 0.5), [0.5, 0.5], rtol=0, atol=1e-12)
        # (1, 1) W = (3, 4) for W = [[1, 2], [2, 2]]
        got = reasoning_step([1.0, 1.0], [0.2, 0.4], np.array([[1.0, 2.0], [2.0, 2.0]]), 0.5)
        assert np.allclose(got, [0.5 * 0.6 + 0.1, 0.5 * 0.8 + 0.2], rtol=0, atol=1e-12)
    assert t.elapsed < 1.0


@pytest.mark.criterion("2 unique fixed point")
def test_criterion_2_unique_fixed_point():
    rng = np.random.default_rng(20240)
    cfg = SimulationConfig(phi=1.0)
    with Timer() as t:
        done = 0
        while done < 50:
            a = rng.random((10, 10))
            w = (a + a.T) / 2
            vals, vecs = scipy.linalg.eigh(w)
            order = np.argsort(-np.abs(vals))
            if abs(vals[order[1]]) > 0.9 * abs(vals[order[0]]):
                continue  # no verified gap
            oracle = vecs[:, order[0]]
            rep = eigen_diagnostics(w, np.ones(10))
            assert rep.strictly_dominant
            finals = []
            for _ in range(100):
                a0 = rng.random(10)
                assert eigen_diagnostics(w, a0).a0_aligned
                tr = simulate(w, a0, cfg)
                assert tr.termination.kind == "fixed_point"
                f = tr.final
                finals.append(f * np.sign(f @ oracle))
            finals = np.array(finals)
            assert np.max(np.ptp(finals, axis=0)) < 1e-5
            assert np.max(np.abs(finals - oracle)) < 1e-5
            done += 1
    assert t.elapsed < 30.0


@pytest.mark.criterion("3 zero raw vector case")
def test_criterion_3_zero_raw_vector():
    with Timer() as t:
        w = np.array([[0.5, -0.5, 0.0], [-0.5, 0.5, 0.0], [0.0, 0.0, 0.0]])
        a0 = np.array([0.3, 0.3, 0.0])
        assert np.all(a0 @ w == 0.0)
        tr = simulate(w, a0, SimulationConfig(phi=1.0))
        assert tr.degenerate and tr.zero_raw_steps[0] == 1
        assert tr.termination.kind in ("fixed_point", "limit_cycle")
        assert tr.metadata()["degenerate"]
        assert np.all(tr.final == 0.0)
    assert t.elapsed < 1.0


def _forest_predictor(m, seed, constant=None):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(400, m))
    if constant is not None:
        X[:, constant] = 0.0
    y = (X[:, 0] - X[:, 1] + X[:, 2] * X[:, 3] + 0.3 * rng.normal(size=400) > 0).astype(int)
    ds = Dataset(tuple(FeatureSchema(f"x{j}", "numeric") for j in range(m)), X, y, ("0", "1"))
    return fit_forest(ds, ForestConfig(n_estimators=25, seed=seed)).predict_proba, X


@pytest.mark.criterion("4 Shapley axioms and kernel accuracy")
def test_criterion_4_shapley():
    with Timer() as t:
        # efficiency, and a dummy: the forest never sees variation in x5
        pred, X = _forest_predictor(6, seed=1, constant=5)
        bg = BackgroundSet(np.random.default_rng(2).normal(size=(12, 6)))
        x = np.random.default_rng(3).normal(size=6)
        e = exact_shapley(pred, x, bg)
        assert abs(e.efficiency_gap) < 1e-9
        assert abs(e.attributions[5]) < 1e-9
        assert np.allclose(e.attributions, subset_shapley(pred, x, bg.rows), rtol=0, atol=1e-9)

        # symmetry: symmetrize a forest in x0, x1 and use a swap-closed background
        pred5, _ = _forest_predictor(5, seed=4)
        swap = lambda Z: np.asarray(Z)[:, [1, 0, 2, 3, 4]]
        sym = lambda Z: (pred5(Z) + pred5(swap(Z))) / 2
        rows = np.random.default_rng(5).normal(size=(8, 5))
        bgs = BackgroundSet(np.vstack([rows, swap(rows)]))
        es = exact_shapley(sym, np.array([0.4, 0.4, -1.0, 0.3, 2.0]), bgs)
        assert abs(es.attributions[0] - es.attributions[1]) < 1e-9
        assert abs(es.efficiency_gap) < 1e-9

        # kernel with every coalition reproduces the exact values
        pred8, X8 = _forest_predictor(8, seed=6)
        bg8 = BackgroundSet(X8[:30])
        ex8 = exact_shapley(pred8, X8[100], bg8)
        ke8 = kernel_shap(pred8, X8[100], bg8, n_coalitions=2**8, seed=0)
        assert np.max(np.abs(ex8.attributions - ke8.attributions)) < 1e-6
        assert abs(ke8.efficiency_gap) < 1e-9

        # sampled kernel against the brute-force oracle
        pred10, X10 = _forest_predictor(10, seed=7)
        bg10 = BackgroundSet(X10[:10])
        oracle = subset_shapley(pred10, X10[200], bg10.rows)
        ke10 = kernel_shap(pred10, X10[200], bg10, n_coalitions=2048, seed=0)
        assert np.max(np.abs(oracle - ke10.attributions)) <= 0.01
        assert abs(ke10.efficiency_gap) < 1e-9

        # 2048 covers all 2^10 coalitions, so also check a case that truly samples
        pred12, X12 = _forest_predictor(12, seed=8)
        bg12 = BackgroundSet(X12[:8])
        oracle12 = subset_shapley(pred12, X12[300], bg12.rows)
        ke12 = kernel_shap(pred12, X12[300], bg12, n_coalitions=2048, seed=0)
        assert np.max(np.abs(oracle12 - ke12.attributions)) <= 0.01
    assert t.elapsed < 120.0


@pytest.mark.criterion("5 association metrics")
def test_criterion_5_association():
    with Timer() as t:
        assert cramers_v_table([[10, 0], [0, 10]]) == pytest.approx(1.0, abs=1e-12)
        assert cramers_v_table([[5, 5], [5, 5]]) == pytest.approx(0.0, abs=1e-12)
        table = np.array([[12, 5, 7], [3, 14, 6]])
        chi2 = chi2_contingency(table, correction=False)[0]
        assert cramers_v_table(table) == pytest.approx(np.sqrt(chi2 / table.sum()), abs=1e-12)

        rng = np.random.default_rng(0)
        x, y = rng.normal(size=100), rng.normal(size=100)
        r = pearson_abs(x, y)
        for a, b in ((3.0, 1.0), (-0.5, 7.0), (1e3, -2.0)):
            assert pearson_abs(a * x + b, y) == pytest.approx(r, abs=1e-12)

        vals = np.array([0.0, 0.1, 0.2, 9.8, 9.9, 10.0])
        p = fuzzy_cmeans(vals, 2, seed=0, tol=1e-12)
        U, Z, f = reference_fcm(vals, 2, 2.0, initial_memberships(6, 2, 0))
        assert np.allclose(np.sort(p.prototypes), [0.1, 9.9], atol=0.5)
        assert np.allclose(p.prototypes, Z, atol=1e-9)
        assert p.fpc == pytest.approx(f, abs=1e-9)

        sample = np.concatenate([rng.uniform(-0.1, 0.1, 20), rng.uniform(9.9, 10.1, 20)])
        ref = {c: reference_fcm(sample, c, 2.0, initial_memberships(40, c, 0), tol=1e-10)[2] for c in range(2, 11)}
        assert max(ref, key=ref.get) == 2
        _, _, rep = discretize_numeric(sample, seed=0)
        assert rep.chosen_c == 2
    assert t.elapsed < 10.0


def _case(nominal, i, j):
    if not nominal[i] and not nominal[j]:
        return 1
    return 2 if nominal[i] and nominal[j] else 3


def _table_deviations(ds, weights):
    worst = {1: 0.0, 2: 0.0, 3: 0.0}
    nominal = ds.nominal_mask
    for fid, expected in GERMAN_TABLE.items():
        i = ds.index_of(fid)
        for k, pid in enumerate(GERMAN_PROTECTED):
            j = ds.index_of(pid)
            if i == j:
                continue
            c = _case(nominal, i, j)
            worst[c] = max(worst[c], abs(weights[i, j] - expected[k]))
    return worst


@pytest.mark.criterion("6 German Credit reproduction")
def test_criterion_6_german(german):
    b = german["bundle"]
    assert german["times"][0] < 600.0
    assert b.test_accuracy >= 0.70

    full = load_csv(DATA / "german.data", load_schema(CONFIGS / "german_schema.yaml"))
    worst_full = _table_deviations(full, build_matrix(full, german["cfg"]).weights)
    worst_pool = _table_deviations(b.dataset, b.matrix.weights)
    for worst in (worst_full, worst_pool):
        assert worst[1] <= 0.05 and worst[2] <= 0.05 and worst[3] <= 0.10, worst

    ids = b.dataset.feature_ids
    assert ids[int(np.argmax(b.global_importance))] == "F1"
    assert b.eigen.strictly_dominant


def test_german_global_shap_magnitude(german):
    g = dict(zip(german["bundle"].dataset.feature_ids, german["bundle"].global_importance))
    assert g["F1"] == pytest.approx(0.093, abs=0.03)
    assert g["F1"] > g["F2"]


def test_german_age_moderate_activation(german):
    inst = next(i for i in german["bundle"].report.instances if i.instance.role == "negative")
    run = inst.run_at(0.8)
    j = german["bundle"].dataset.feature_ids.index("F13")
    assert run.normalized[j] >= 0.5


def test_german_positive_initial_activations(german):
    inst = next(i for i in german["bundle"].report.instances if i.instance.role == "positive")
    a0 = dict(zip(german["bundle"].dataset.feature_ids, inst.run_at(0.0).initial))
    assert a0["F9"] == pytest.approx(0.01, abs=0.005)
    assert a0["F13"] == pytest.approx(0.01, abs=0.005)
    assert a0["F20"] < 0.002


@pytest.mark.criterion("7 implicit-bias phenomenon")
def test_criterion_7_protected_activation(german):
    b = german["bundle"]
    ids = b.dataset.feature_ids
    cfg = german["cfg"]
    with Timer() as t:
        for inst in b.report.instances:
            # rerun the simulations to time them separately from the pipeline
            again = run_instance(inst.explanation, b.matrix.weights, cfg.fcm.phis, cfg, ids, list(GERMAN_PROTECTED))
            for r0, r1 in zip(inst.runs, again.runs):
                assert np.array_equal(r0.final, r1.final)
    assert t.elapsed < 60.0
    for inst in b.report.instances:
        assert inst.run_at(0.0).protected_delta == {p: 0.0 for p in GERMAN_PROTECTED}
        for p in GERMAN_PROTECTED:
            j = ids.index(p)
            finals = [inst.run_at(phi).final[j] for phi in (0.0, *PHIS)]
            for phi in PHIS:
                run = inst.run_at(phi)
                assert run.final[j] > run.initial[j], (inst.instance.name, p, phi)
            assert all(b2 >= b1 for b1, b2 in zip(finals, finals[1:])), (inst.instance.name, p, finals)


@pytest.mark.criterion("8 Adult reproduction")
def test_criterion_8_adult(adult):
    b = adult["bundle"]
    assert adult["time"] < 900.0
    w, ds = b.matrix.weights, b.dataset
    assert w[ds.index_of("F8"), ds.index_of("F10")] >= 0.5
    assert w[ds.index_of("F14"), ds.index_of("F9")] >= 0.3
    neg = next(i for i in b.report.instances if i.instance.role == "negative")
    run = neg.run_at(0.8)
    assert run.fcm_rank["F10"] <= 5
    assert run.shap_rank["F10"] > ds.m // 2


@pytest.mark.criterion("9 determinism")
def test_criterion_9_byte_identical_bundles(german):
    assert sum(german["times"]) < 1200.0
    a = sorted(p.name for p in german["a"].iterdir())
    b = sorted(p.name for p in german["b"].iterdir())
    assert a == b and len(a) > 10
    for name in a:
        assert (german["a"] / name).read_bytes() == (german["b"] / name).read_bytes(), name
