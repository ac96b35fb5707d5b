"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``PASS``/``FAIL`` line (bypassing pytest's capture so the
line shows up in plain ``pytest -v`` output) and then asserts the criterion.
"""

import json
import time

import numpy as np
import pytest

from quickiva import extract, selftest, simgen
from quickiva.experiments import ExperimentConfig, extraction_summary, run_experiment, run_trials
from quickiva.model import CovarianceSet
from quickiva.score import phi_rational
from quickiva.separate import SeparationState, quickiva_iteration, symmetric_orthogonalize, whitening

SEED = 1


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number} {title}: {'PASS' if ok else 'FAIL'} ({detail})")

    return emit


def failed(checks):
    return [c.name for c in checks if not c.passed]


def test_1_algebraic_identities(report):
    t0 = time.perf_counter()
    checks = selftest.check_algebra(simgen.make_rng(SEED), draws=1000, dims=range(2, 9))
    elapsed = time.perf_counter() - t0
    ok = not failed(checks) and elapsed < 5
    worst = ", ".join(f"{c.name}: {c.error:.1e}" for c in checks)
    report(1, "algebraic identity suite", ok, f"{worst}; {elapsed:.1f}s")
    assert not failed(checks), failed(checks)
    assert elapsed < 5


def test_2_derivative_oracles(report):
    t0 = time.perf_counter()
    checks = selftest.check_derivatives(simgen.make_rng(SEED), instances=50)
    elapsed = time.perf_counter() - t0
    ok = not failed(checks) and elapsed < 30
    worst = ", ".join(f"{c.error:.1e}/{c.tol:.0e}" for c in checks)
    report(2, "derivative oracle suite", ok, f"errors {worst}; {elapsed:.1f}s")
    assert not failed(checks), failed(checks)
    assert elapsed < 30


def test_3_sampler(report):
    t0 = time.perf_counter()
    checks = selftest.check_sampler(simgen.make_rng(SEED), n=10**6, n_ks=10**5)
    elapsed = time.perf_counter() - t0
    ok = not failed(checks) and elapsed < 60
    var = max(c.error for c in checks if c.name.endswith("variance"))
    p = min(0.01 / c.error for c in checks if "KS" in c.name)
    report(3, "sampler suite", ok, f"worst variance error {var:.4f}, smallest KS p {p:.3f}; {elapsed:.1f}s")
    assert not failed(checks), failed(checks)
    assert elapsed < 60


@pytest.mark.slow
def test_4_extraction_benchmark(report):
    cfg = ExperimentConfig.for_experiment("extraction", trials=100, seed=SEED, workers=1)
    t0 = time.perf_counter()
    s = {alg: extraction_summary(run_trials(cfg, alg)) for alg in ("quickive1", "quickive2", "gradient")}
    elapsed = time.perf_counter() - t0
    parts = {
        "quickive1 success >= 0.85": s["quickive1"]["success_fraction"] >= 0.85,
        "quickive2 success >= 0.85": s["quickive2"]["success_fraction"] >= 0.85,
        "quickive1 median its <= 50": s["quickive1"]["median_iterations"] <= 50,
        "quickive2 median its <= 50": s["quickive2"]["median_iterations"] <= 50,
        "gradient median its >= 5x quickive2": s["gradient"]["median_iterations"]
        >= 5 * s["quickive2"]["median_iterations"],
        "runtime < 5 min": elapsed < 300,
    }
    detail = "; ".join(
        f"{a}: success {v['success_fraction']:.2f}, median SIR {v['median_sir_db']:.1f} dB, "
        f"median its {v['median_iterations']:.0f}"
        for a, v in s.items()
    )
    missed = [k for k, v in parts.items() if not v]
    report(4, "extraction benchmark", not missed, f"{detail}; {elapsed:.0f}s; missed: {missed or 'none'}")
    assert not missed, missed


@pytest.mark.slow
def test_5_csv_benchmark(report):
    cfg = ExperimentConfig.for_experiment("csv_extraction", trials=100, seed=SEED, workers=1)
    t0 = time.perf_counter()
    ive = extraction_summary(run_trials(cfg, "quickive2"))
    ice = extraction_summary(run_trials(cfg, "quickice2"))
    elapsed = time.perf_counter() - t0
    ok = ive["success_fraction"] >= 0.75 and ice["success_fraction"] < ive["success_fraction"] and elapsed < 600
    report(
        5,
        "CSV benchmark",
        ok,
        f"quickive2 success {ive['success_fraction']:.2f}, quickice2 success {ice['success_fraction']:.2f}; {elapsed:.0f}s",
    )
    assert ive["success_fraction"] >= 0.75
    assert ice["success_fraction"] < ive["success_fraction"]
    assert elapsed < 600


def settles(curve, start=5, bump=1.0):
    """Non-increasing from ``start`` on, allowing rises of at most ``bump`` dB above the running minimum."""
    tail = np.asarray(curve[start:])
    return bool(np.all(tail <= np.minimum.accumulate(tail) + bump))


@pytest.mark.slow
def test_6_separation_benchmark(report):
    cfg = ExperimentConfig.for_experiment("separation", trials=30, seed=SEED, workers=1)
    t0 = time.perf_counter()
    curves = {}
    for alg in ("quickiva1", "quickiva2"):
        results = run_trials(cfg, alg)
        curves[alg] = np.mean([r.isr_curve for r in results], axis=0)
    elapsed = time.perf_counter() - t0
    checks = {alg: (c.min() < -15, settles(c)) for alg, c in curves.items()}
    ok = all(a and b for a, b in checks.values()) and elapsed < 600
    detail = "; ".join(
        f"{alg}: ISR {c[0]:.1f} -> {c[10]:.1f} (it 10) -> {c[-1]:.1f} dB (it 50), settles {checks[alg][1]}"
        for alg, c in curves.items()
    )
    report(6, "separation benchmark", ok, f"{detail}; {elapsed:.0f}s")
    for alg, (below, mono) in checks.items():
        assert below, alg
        assert mono, alg
    assert elapsed < 600


def _output_metric(v, C):
    """Norm of ``v`` in the metric of covariance ``C`` (unit output power scale)."""
    return float(np.sqrt(np.vdot(v, C @ v).real))


def test_7_fixed_points(report):
    t0 = time.perf_counter()
    N = 2000
    floor = 3 / np.sqrt(N)
    worst = {}
    phase_err = 0.0
    for seed in range(3):
        data = simgen.generate_iva_dataset(simgen.trial_rng(SEED, seed), N=N)
        X = data.samples
        cov = CovarianceSet.from_samples(X, with_inverse=True)
        C = cov.block_average()
        st = extract.init_state(simgen.true_separating_vectors(data), cov)
        steps = {
            "quickive1": lambda s: extract.quickive1_step(s, X, cov, phi_rational),
            "quickive1-approx": lambda s: extract.quickive1_step(s, X, cov, phi_rational, "approx"),
            "quickive2": lambda s: extract.quickive2_step(s, X, cov, phi_rational),
        }
        for name, step in steps.items():
            nxt = step(st)
            ph = np.exp(1j * np.angle(np.einsum("kd,kd->k", nxt.w.conj(), st.w)))
            moved = max(_output_metric(nxt.w[k] * ph[k] - st.w[k], C[k]) for k in range(3))
            worst[name] = max(worst.get(name, 0.0), moved)
            rot = step(extract.phase_rotate(st, np.array([0.4, -2.0, 1.1])))
            phase_err = max(phase_err, abs(rot.last_step_norm - nxt.last_step_norm))
            phase_err = max(phase_err, float(np.max(extract.direction_change(rot.w, nxt.w))))
        # the baseline moves by mu * gradient; the gradient lives in the dual (mixing-vector) space
        g = extract.quickive2_gradient(st, X, phi_rational)
        gnorm = max(np.linalg.norm(whitening(C[k]) @ g[k]) for k in range(3))
        worst["gradient (per unit mu)"] = max(worst.get("gradient (per unit mu)", 0.0), gnorm)
        rot = extract.gradient_baseline_step(extract.phase_rotate(st, 0.7), X, cov, phi_rational)
        nxt = extract.gradient_baseline_step(st, X, cov, phi_rational)
        phase_err = max(phase_err, abs(rot.last_step_norm - nxt.last_step_norm))

        csv = simgen.generate_csv_dataset(simgen.trial_rng(SEED, 100 + seed), n_block=N)
        ccov = CovarianceSet.from_samples(csv.samples)
        cst = extract.init_state(simgen.true_separating_vectors(csv), ccov)
        nxt = extract.quickive2_step(cst, csv.samples, ccov, phi_rational)
        Cc = ccov.block_average()
        ph = np.exp(1j * np.angle(np.einsum("kd,kd->k", nxt.w.conj(), cst.w)))
        moved = max(_output_metric(nxt.w[k] * ph[k] - cst.w[k], Cc[k]) for k in range(3))
        worst["quickive2 (CSV)"] = max(worst.get("quickive2 (CSV)", 0.0), moved)

        sep = simgen.generate_separation_dataset(simgen.trial_rng(SEED, 200 + seed), N=N)
        raw = CovarianceSet.from_samples(sep.samples)
        V = np.stack([whitening(raw.cx[k, 0]) for k in range(3)])
        Xw = np.einsum("kij,ktjn->ktin", V, sep.samples)
        wcov = CovarianceSet.from_samples(Xw)
        W0 = np.stack([symmetric_orthogonalize(np.linalg.inv(sep.mixing[k, 0]) @ np.linalg.inv(V[k])) for k in range(3)])
        for variant in (1, 2):
            s0 = SeparationState(W=W0, whitener=V)
            nxt = quickiva_iteration(s0, Xw, wcov, phi_rational, variant)
            ph = np.exp(1j * np.angle(np.einsum("kij,kij->ki", nxt.W.conj(), W0)))
            moved = float(np.linalg.norm(nxt.W * ph[..., None] - W0, axis=(1, 2)).max())
            worst[f"quickiva{variant}"] = max(worst.get(f"quickiva{variant}", 0.0), moved)
            theta = np.exp(1j * np.array([0.3, 1.0, -0.5, 2.0, -2.5]))
            rot = quickiva_iteration(replace_W(s0, W0 * theta[None, :, None]), Xw, wcov, phi_rational, variant)
            phase_err = max(phase_err, abs(rot.last_step_norm - nxt.last_step_norm))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) <= floor and phase_err <= 1e-10 and elapsed < 30
    detail = ", ".join(f"{k} {v * np.sqrt(N):.2f}" for k, v in worst.items())
    report(7, "fixed-point suite", ok, f"step x sqrt(N): {detail} (floor 3); phase error {phase_err:.1e}; {elapsed:.1f}s")
    assert max(worst.values()) <= floor, worst
    assert phase_err <= 1e-10
    assert elapsed < 30


def replace_W(state, W):
    from dataclasses import replace

    return replace(state, W=W)


def _strip_timing(obj):
    if isinstance(obj, dict):
        return {k: _strip_timing(v) for k, v in obj.items() if "wall" not in k and k not in ("out", "workers")}
    if isinstance(obj, list):
        return [_strip_timing(v) for v in obj]
    return obj


def _csv_without_timing(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    keep = [i for i, h in enumerate(header) if "wall" not in h]
    return [[row.split(",")[i] for i in keep] for row in lines]


def test_8_determinism(report, tmp_path):
    configs = [
        ExperimentConfig.for_experiment(
            "extraction", trials=4, n_block=300, algorithms=["quickive1", "quickive2", "gradient", "quickice1"]
        ),
        ExperimentConfig.for_experiment("csv_extraction", trials=3, n_block=300, algorithms=["quickive2", "quickice2"]),
        ExperimentConfig.for_experiment("separation", trials=2, n_block=1000, iterations=10),
    ]
    mismatches = []
    for cfg in configs:
        runs = []
        for rep, workers in (("a", 1), ("b", 2)):
            cfg.out, cfg.workers, cfg.seed = str(tmp_path / f"{cfg.experiment}-{rep}"), workers, SEED
            runs.append(run_experiment(cfg))
        if _strip_timing(runs[0]) != _strip_timing(runs[1]):
            mismatches.append(f"{cfg.experiment}/summary.json")
        a, b = tmp_path / f"{cfg.experiment}-a", tmp_path / f"{cfg.experiment}-b"
        for f in sorted(p.name for p in a.glob("*.csv")):
            if _csv_without_timing(a / f) != _csv_without_timing(b / f):
                mismatches.append(f"{cfg.experiment}/{f}")
        json.loads((a / "summary.json").read_text())
    report(8, "determinism", not mismatches, f"serial vs 2-worker reruns; mismatches: {mismatches or 'none'}")
    assert not mismatches
