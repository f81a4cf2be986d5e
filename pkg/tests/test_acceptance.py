"""Acceptance criteria, one test each, at tolerance 1e-9 unless stated.

Each test records a single ``criterion N: PASS|FAIL ...`` line, printed
directly and collected into the terminal summary.
"""

import io
import sys
from pathlib import Path

import numpy as np
import pytest

from oracles import partial_trace_loop
from qmulti.cli import main
from qmulti.ensembles import (random_instrument, random_observable, random_operation,
                              random_state)
from qmulti.instruments import (construct_holevo, construct_kraus, construct_luders,
                                conditioned_observable, instrument_deviation,
                                instrument_distribution, instrument_marginal,
                                instrument_part, measured_observable, reduced_instrument,
                                seq_product_observables, sequential_instruments,
                                tensor_instruments, verify_joint_instrument)
from qmulti.linalg import matrix_units, validate_effect
from qmulti.observables import (Observable, distribution, identity_observable_check,
                                luders_sequential, marginal, observable_deviation, part,
                                reduced_observable, tensor_observables, verify_joint,
                                verify_product_structure)
from qmulti.outcomes import OutcomeMap
from qmulti.sampling import sample_trajectories
from qmulti.scenario import TASK_KINDS, parse_scenario

TOL = 1e-9
SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
ACCEPTANCE_LINES = []


def record(number, title, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def random_shape(rng, min_axes=2, max_axes=3):
    n = int(rng.integers(min_axes, max_axes + 1))
    return tuple(int(m) for m in rng.integers(2, 5, size=n))


def random_map(rng, space, n_labels):
    """A random surjection of ``space`` onto ``n_labels`` labels."""
    size = space.size
    while True:
        values = rng.integers(0, n_labels, size=size)
        if len(set(values.tolist())) == n_labels:
            break
    index = {x: k for k, x in enumerate(space.outcomes())}
    return OutcomeMap.from_function(space, lambda x: f"y{values[index[x]]}")


def test_criterion_01_marginals_are_projection_parts():
    rng = np.random.default_rng(101)
    pairs = exact = joints = 0
    for _ in range(100):
        a = random_observable(rng, int(rng.integers(2, 5)), random_shape(rng))
        marginals, parts = [], []
        for i in range(a.n_axes):
            m = marginal(a, i)
            p = part(a, OutcomeMap.projection(a.space, i))
            pairs += 1
            exact += all(np.array_equal(m[x], p[x]) for x in m.outcomes)
            marginals.append(m)
            parts.append(p)
        joints += verify_joint(a, marginals, TOL).passed and verify_joint(a, parts, TOL).passed
    record(1, "marginal equals projection part exactly and joints verify",
           exact == pairs and joints == 100,
           f"{exact}/{pairs} bit-identical pairs, {joints}/100 joints verified")


def test_criterion_02_reduced_tensor_marginals():
    rng = np.random.default_rng(202)
    worst_own = worst_mixed = 0.0
    identity_ok = True
    for _ in range(50):
        n = int(rng.integers(2, 4))
        dims = [int(d) for d in rng.integers(2, 4 if n == 2 else 3, size=n)]
        parts = [random_observable(rng, d, int(rng.integers(2, 5))) for d in dims]
        t = tensor_observables(parts)
        for i in range(n):
            reduced = reduced_observable(t, i)
            for j in range(n):
                m = marginal(reduced, j)
                if i == j:
                    worst_own = max(worst_own, observable_deviation(m, parts[i]))
                    continue
                weights = identity_observable_check(m, TOL)
                if weights is None:
                    identity_ok = False
                    continue
                for (x,), w in weights.items():
                    want = np.trace(parts[j][x]).real / dims[j]
                    worst_mixed = max(worst_mixed, abs(w - want))
    record(2, "reduced marginals of tensor observables",
           worst_own <= TOL and worst_mixed <= TOL and identity_ok,
           f"own-factor deviation {worst_own:.2e}, mixed weight deviation {worst_mixed:.2e}")


def _is_bijective(space, fs):
    # independent of the library check: distinct coordinate tuples covering the full grid
    tuples = {tuple(f(x)[0] for f in fs) for x in space.outcomes()}
    grid = np.prod([f.target.size for f in fs])
    return len(tuples) == space.size == grid


def test_criterion_03_product_structure():
    rng = np.random.default_rng(303)
    products = 0
    for _ in range(30):
        a = random_observable(rng, int(rng.integers(2, 5)), random_shape(rng))
        report = verify_product_structure(a, [OutcomeMap.projection(a.space, i) for i in range(a.n_axes)], TOL)
        products += report.passed and all(report.bijection[x] == x for x in a.outcomes)
    failures = named = 0
    while failures < 20:
        size = int(rng.integers(3, 9))
        a = random_observable(rng, 2, size)
        fs = [random_map(rng, a.space, int(rng.integers(2, 4))) for _ in range(2)]
        if _is_bijective(a.space, fs):
            continue
        report = verify_product_structure(a, fs, TOL)
        failures += 1
        bad = report.bad_intersection
        members = report.check.members
        named += (not report.passed) and bad is not None and len(members) != 1 and \
            len([x for x in a.outcomes if tuple(f(x)[0] for f in fs) == bad]) == len(members)
    record(3, "product structure of projections; adversarial maps rejected",
           products == 30 and named == 20,
           f"{products}/30 products pass, {named}/20 non-product maps fail with a named intersection")


def test_criterion_04_duality():
    rng = np.random.default_rng(404)
    worst = 0.0
    effects_ok = 0
    for _ in range(200):
        d_in, d_out = (int(v) for v in rng.integers(2, 5, size=2))
        n_kraus = -(-d_in // d_out) + int(rng.integers(0, 2))
        op = random_operation(rng, d_in, d_out, n_kraus=n_kraus, scale=float(rng.uniform(0.3, 1)))
        b = rng.normal(size=(d_in, d_in)) + 1j * rng.normal(size=(d_in, d_in))
        c = rng.normal(size=(d_out, d_out)) + 1j * rng.normal(size=(d_out, d_out))
        worst = max(worst, abs(np.trace(b @ op.dual_apply(c)) - np.trace(c @ op.apply(b))))
        effect = random_observable(rng, d_out, 2)["0"]
        effects_ok += validate_effect(op.dual_apply(effect), TOL).ok
    record(4, "dual operation satisfies the trace pairing and maps effects to effects",
           worst <= TOL and effects_ok == 200,
           f"max pairing gap {worst:.2e}, {effects_ok}/200 dual images are effects")


def test_criterion_05_measured_observables():
    rng = np.random.default_rng(505)
    worst_obs = worst_dist = 0.0
    for kind in ("kraus", "luders", "holevo"):
        for _ in range(5):
            d = int(rng.integers(2, 5))
            if kind == "kraus":
                base = random_instrument(rng, d, int(rng.integers(2, 5)), shape=int(rng.integers(2, 5)),
                                         kraus_per_outcome=int(rng.integers(1, 4)))
                i = construct_kraus({x: list(op.kraus) for x, op in base.items()})
                want = {x: sum(k.conj().T @ k for k in op.kraus) for x, op in base.items()}
            else:
                a = random_observable(rng, d, int(rng.integers(2, 5)))
                if kind == "luders":
                    i = construct_luders(a)
                else:
                    d_out = int(rng.integers(2, 4))
                    i = construct_holevo(a, {x: random_state(rng, d_out) for x in a.outcomes})
                want = dict(a.items())
            measured = measured_observable(i)
            worst_obs = max(worst_obs, max(np.max(np.abs(measured[x] - want[x])) for x in want))
            for _ in range(20):
                rho = random_state(rng, d)
                p_i, p_obs = instrument_distribution(i, rho), distribution(measured, rho)
                worst_dist = max(worst_dist, max(abs(p_i[x] - p_obs[x]) for x in p_i))
    record(5, "instruments measure K*K, A and A; distributions agree",
           worst_obs <= TOL and worst_dist <= TOL,
           f"effect deviation {worst_obs:.2e}, distribution deviation {worst_dist:.2e}")


def test_criterion_06_joint_bi_instruments():
    rng = np.random.default_rng(606)
    worst_inst = worst_obs = 0.0
    for _ in range(20):
        d = int(rng.integers(2, 5))
        m1, m2 = (int(v) for v in rng.integers(2, 4, size=2))
        c = random_observable(rng, d, (int(rng.integers(2, 4)), int(rng.integers(2, 4))))
        alpha = {x: random_state(rng, m1) for x in c.space.axes[0]}
        beta = {y: random_state(rng, m2) for y in c.space.axes[1]}
        gamma = {(x, y): np.kron(alpha[x].matrix, beta[y].matrix) for x, y in c.outcomes}
        j = construct_holevo(c, gamma, out_factors=(m1, m2))
        targets = [construct_holevo(marginal(c, 0), alpha), construct_holevo(marginal(c, 1), beta)]
        report = verify_joint_instrument(j, targets, TOL)
        worst_inst = max(worst_inst, *report.deviations)
        measured = measured_observable(j)
        for k, t in enumerate(targets):
            worst_obs = max(worst_obs, observable_deviation(marginal(measured, k), measured_observable(t)))
        assert report.observables_coexist == (max(report.observables.deviations) <= TOL)
    record(6, "reduced marginals of joint bi-instruments and their measured observables",
           worst_inst <= TOL and worst_obs <= TOL,
           f"reduced marginal deviation {worst_inst:.2e}, measured marginal deviation {worst_obs:.2e}")


def test_criterion_07_tensor_instruments():
    rng = np.random.default_rng(707)
    worst = {"measured": 0.0, "reduced": 0.0, "scaled": 0.0}
    for n in (2, 3, 2, 3):
        ins = [int(v) for v in rng.integers(2, 4 if n == 2 else 3, size=n)]
        outs = [int(v) for v in rng.integers(2, 4 if n == 2 else 3, size=n)]
        parts = [random_instrument(rng, ins[k], outs[k], shape=int(rng.integers(2, 4))) for k in range(n)]
        k_inst = tensor_instruments(parts)
        measured = measured_observable(k_inst)
        hats = [measured_observable(p) for p in parts]
        for x, e in measured.items():
            want = hats[0][x[:1]]
            for k in range(1, n):
                want = np.kron(want, hats[k][x[k:k + 1]])
            worst["measured"] = max(worst["measured"], np.max(np.abs(e - want)))
        big = int(np.prod(ins))
        for i in range(n):
            reduced = reduced_instrument(instrument_marginal(k_inst, i), i)
            others = [k for k in range(n) if k != i]
            for _ in range(20):
                rho = random_state(rng, big).matrix
                local = partial_trace_loop(rho, ins, others)
                for x, op in reduced.items():
                    worst["reduced"] = max(worst["reduced"], np.max(np.abs(op.apply(rho) - parts[i][x].apply(local))))
                rho_i = random_state(rng, ins[i]).matrix
                padded = np.ones((1, 1))
                for k in range(n):
                    padded = np.kron(padded, rho_i if k == i else np.eye(ins[k]))
                scale = np.prod([ins[k] for k in others])
                for x, op in reduced.items():
                    gap = np.max(np.abs(op.apply(padded) / scale - parts[i][x].apply(rho_i)))
                    worst["scaled"] = max(worst["scaled"], gap)
    record(7, "tensor instruments: measured product, reduced marginals, scaled probes",
           max(worst.values()) <= TOL,
           ", ".join(f"{k} {v:.2e}" for k, v in worst.items()))


def test_criterion_08_sequential_holevo():
    rng = np.random.default_rng(808)
    worst = 0.0
    for _ in range(50):
        d, d1, d2 = (int(v) for v in rng.integers(2, 5, size=3))
        a = random_observable(rng, d, int(rng.integers(2, 4)))
        b = random_observable(rng, d1, int(rng.integers(2, 4)))
        alpha = {x: random_state(rng, d1) for x in a.outcomes}
        beta = {y: random_state(rng, d2) for y in b.outcomes}
        seq = sequential_instruments([construct_holevo(a, alpha), construct_holevo(b, beta)])
        c = {x + y: np.trace(alpha[x].matrix @ b[y]).real * a[x] for x in a.outcomes for y in b.outcomes}
        c_obs = Observable(a.space.product(b.space), c)
        expected = construct_holevo(c_obs, {x + y: beta[y] for x in a.outcomes for y in b.outcomes})
        worst = max(worst, instrument_deviation(seq, expected))
    record(8, "sequential product of Holevo instruments is Holevo",
           worst <= TOL, f"matrix-unit deviation {worst:.2e} over 50 pairs")


def test_criterion_09_part_laws():
    rng = np.random.default_rng(909)
    worst_hat = worst_dual = worst_holevo = 0.0
    for _ in range(30):
        d_in, d_out = (int(v) for v in rng.integers(2, 5, size=2))
        i = random_instrument(rng, d_in, d_out, shape=int(rng.integers(3, 5)))
        f = random_map(rng, i.space, int(rng.integers(1, 3)))
        fi = instrument_part(i, f)
        worst_hat = max(worst_hat, observable_deviation(measured_observable(fi), part(measured_observable(i), f)))
        for unit in matrix_units(d_out):
            for y in f.target.outcomes():
                summed = sum(i[x].dual_apply(unit) for x in f.fiber(y))
                worst_dual = max(worst_dual, np.max(np.abs(fi[y].dual_apply(unit) - summed)))
        a = random_observable(rng, d_in, int(rng.integers(3, 5)))
        sigma = random_state(rng, d_out)
        g = random_map(rng, a.space, 2)
        lhs = instrument_part(construct_holevo(a, {x: sigma for x in a.outcomes}), g)
        rhs = construct_holevo(part(a, g), {y: sigma for y in g.target.outcomes()})
        worst_holevo = max(worst_holevo, instrument_deviation(lhs, rhs))
    record(9, "parts commute with measured observables and duals; Holevo constant case",
           max(worst_hat, worst_dual, worst_holevo) <= TOL,
           f"hat {worst_hat:.2e}, dual {worst_dual:.2e}, Holevo {worst_holevo:.2e}")


def test_criterion_10_sequential_observables():
    rng = np.random.default_rng(1010)
    worst = 0.0
    joints = 0
    for _ in range(30):
        d = int(rng.integers(2, 5))
        a = random_observable(rng, d, int(rng.integers(2, 5)))
        b = random_observable(rng, d, int(rng.integers(2, 5)))
        luders = construct_luders(a)
        ab = seq_product_observables(a, luders, b)
        worst = max(worst, observable_deviation(ab, luders_sequential([a, b])))
        joints += verify_joint(ab, [a, conditioned_observable(b, luders, a)], TOL).passed
    record(10, "Lüders sequential product and conditioned coexistence",
           worst <= TOL and joints == 30, f"deviation {worst:.2e}, {joints}/30 joints verified")


def test_criterion_11_sampling():
    rng = np.random.default_rng(1111)
    a = random_observable(rng, 3, 2)
    b = random_observable(rng, 3, 3)
    rho = random_state(rng, 3)
    chain = [construct_luders(a), construct_luders(b)]
    first = sample_trajectories(chain, rho, seed=20240611, n=100_000)
    second = sample_trajectories(chain, rho, seed=20240611, n=100_000)
    zs = first.z_scores()
    worst = max(abs(z) for z in zs.values())
    analytic = instrument_distribution(sequential_instruments(chain), rho)
    same_analytic = all(abs(first.analytic[x] - p) <= TOL for x, p in analytic.items())
    identical = first.sequences == second.sequences and first.digest() == second.digest()
    record(11, "Lüders chain frequencies within 4 sigma; runs reproducible",
           worst <= 4 and identical and same_analytic,
           f"max |z| {worst:.2f}, digest {first.digest()[:16]}, identical runs {identical}")


def _cli(name):
    out, err = io.StringIO(), io.StringIO()
    return main(["run", str(SCENARIOS / name)], out=out, err=err)


def test_criterion_12_cli():
    kinds = {t.kind for t in parse_scenario((SCENARIOS / "all_tasks.json").read_text()).tasks}
    codes = {name: _cli(name) for name in ("all_tasks.json", "broken_observable.json", "failing_joint.json")}
    ok = kinds == set(TASK_KINDS) and codes == {"all_tasks.json": 0, "broken_observable.json": 2,
                                                 "failing_joint.json": 1}
    record(12, "CLI exit codes", ok,
           f"{len(kinds)}/{len(TASK_KINDS)} task kinds covered, exit codes " +
           ", ".join(f"{k}={v}" for k, v in codes.items()))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
