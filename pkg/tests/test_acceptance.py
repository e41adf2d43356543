"""Acceptance criteria, one test per criterion.

Each test records a one-line PASS/FAIL verdict that is printed in the
terminal summary (and to stdout) at the tolerances the criteria demand.
Most criteria are evaluated from the bundled scenarios, which are run once
per session and shared between tests.
"""

from __future__ import annotations

import time

import jax.numpy as jnp
import numpy as np

from conftest import ACCEPTANCE_LINES
from eulerclass import bundle as BU
from eulerclass import compendium as C
from eulerclass import gaussbonnet as GB
from eulerclass import manifolds as MF
from eulerclass.compendium import build_ansatz
from eulerclass.gaussbonnet import levi_civita


def verdict(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number} ({title}): {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def checks_named(report: dict, name: str) -> list[dict]:
    return [c for c in report["checks"] if c["name"] == name]


def test_criterion_1_euler_number_recovery(scenario_runs):
    sphere = []
    for scenario in ("sphere-levi-civita", "sphere-weyl", "sphere-random-ansatz"):
        _, report, _ = scenario_runs(scenario)
        for c in checks_named(report, "euler-number"):
            if c["details"]["corrected"]:
                sphere.append((scenario, c))
    assert len(sphere) == 5  # Levi-Civita, Weyl and three seeded random connections
    sphere_ok = all(abs(c["value"] - 2.0) <= 1e-5 and c["details"]["nodes"] == 64 and c["seconds"] <= 10.0
                    for _, c in sphere)
    torus = MF.torus_chart(2)
    g = MF.flat_metric(torus)
    rng = np.random.default_rng(17)
    torus_values = []
    for a, b, c in [(0.0, 0.0, 0.0), (-0.5, -0.5, 0.5)] + [tuple(rng.uniform(-1, 1, 3)) for _ in range(3)]:
        phi = MF.random_fourier_form(torus, rng, modes=2)
        conn = build_ansatz(g, phi, a, b, c) if (a, b, c) != (0.0, 0.0, 0.0) else levi_civita(g)
        torus_values.append(BU.euler_number(BU.tangent_bundle(g, conn), 64).value)
    torus_ok = max(abs(v) for v in torus_values) <= 1e-6
    worst = max(abs(c["value"] - 2.0) for _, c in sphere)
    slowest = max(c["seconds"] for _, c in sphere)
    verdict(1, "Euler-number recovery", sphere_ok and torus_ok,
            f"sphere max |chi-2| = {worst:.2e} (tol 1e-5), slowest {slowest:.1f} s (limit 10 s); "
            f"flat torus max |chi| = {max(abs(v) for v in torus_values):.2e} (tol 1e-6)")


def test_criterion_2_proof_identity(scenario_runs):
    rows = []
    for scenario in ("sphere-levi-civita", "sphere-weyl", "sphere-random-ansatz", "torus-random-ansatz",
                     "ellipsoid-conformal"):
        rows += checks_named(scenario_runs(scenario)[1], "proof-identity")
    ok = all(r["details"]["pfaffian"] <= 1e-6 and r["details"]["points"] >= 100
             and r["details"]["split_antisymmetric"] < 1e-6 and r["details"]["split_symmetric"] < 1e-6 for r in rows)
    verdict(2, "proof identity", ok and len(rows) == 5,
            f"max Pfaffian gap {max(r['details']['pfaffian'] for r in rows):.2e} (tol 1e-6), max splitting residual "
            f"{max(max(r['details']['split_antisymmetric'], r['details']['split_symmetric']) for r in rows):.2e}")


def test_criterion_3_canonical_connection(scenario_runs):
    metric, projection = [], []
    for scenario in ("sphere-weyl", "sphere-random-ansatz", "torus-random-ansatz"):
        report = scenario_runs(scenario)[1]
        metric += checks_named(report, "canonical-connection")
        projection += checks_named(report, "distance-projection")
    ok = (all(c["value"] < 1e-7 for c in metric)
          and all(c["details"]["samples"] >= 50 and c["residual"] < 1e-9
                  and c["details"]["max_inequality_violation"] <= 0.0 for c in projection))
    verdict(3, "canonical metric connection", ok and len(metric) == 3 and len(projection) == 3,
            f"max non-metricity {max(c['value'] for c in metric):.2e} (tol 1e-7), "
            f"max Pythagoras residual {max(c['residual'] for c in projection):.2e} (tol 1e-9)")


def test_criterion_4_pfaffian_algebra(scenario_runs):
    (c,) = checks_named(scenario_runs("sphere-levi-civita")[1], "pfaffian-props")
    d = c["details"]
    ok = d["samples"] >= 200 and max(d["transpose"], d["symmetric_invisible"], d["antisymmetric_part"]) < 1e-10 \
        and d["pf_squared_vs_det"] < 1e-10
    verdict(4, "Pfaffian algebra", ok,
            f"property residual {max(d['transpose'], d['symmetric_invisible'], d['antisymmetric_part']):.2e}, "
            f"Pf^2 vs det relative {d['pf_squared_vs_det']:.2e} (tol 1e-10, {d['samples']} samples)")


def test_criterion_5_global_gauss_bonnet(scenario_runs):
    rows = []
    for scenario in ("sphere-levi-civita", "sphere-weyl", "sphere-random-ansatz", "ellipsoid-conformal",
                     "torus-random-ansatz", "conformal-torus-weyl"):
        rows += checks_named(scenario_runs(scenario)[1], "global-gb")
    torus = MF.torus_chart(2)
    g = MF.conformal_metric(MF.flat_metric(torus), lambda x: 0.2 * jnp.sin(x[0]) * jnp.cos(x[1]))
    lc = GB.global_gb(GB.SurfaceGeometry(g), 64)
    ok = all(c["residual"] <= 1e-5 and c["details"]["pointwise_density_vs_euler_form"] <= 1e-6 for c in rows)
    ok = ok and abs(lc.integral) <= 1e-5 and len(rows) == 7
    verdict(5, "global Gauss-Bonnet", ok,
            f"max |integral - 2 pi chi| = {max(max(abs(c['residual']) for c in rows), abs(lc.integral)):.2e} "
            f"(tol 1e-5), max pointwise gap {max(c['details']['pointwise_density_vs_euler_form'] for c in rows):.2e}"
            f" (tol 1e-6)")


def test_criterion_6_local_gauss_bonnet(scenario_runs):
    rows = []
    for scenario in ("octant-triangle-local-gb", "latitude-cap-local-gb", "planar-square-local-gb",
                     "corwin-morgan-density"):
        found = checks_named(scenario_runs(scenario)[1], "local-gb")
        assert found
        rows += found
    with_b = [r for r in rows if r["inputs"].get("b_term", "none") != "none"]
    ok = all(r["pass"] and abs(r["residual"]) <= 1e-5 for r in rows) and len(with_b) >= 4
    verdict(6, "local Gauss-Bonnet", ok,
            f"{len(rows)} polygons ({len(with_b)} with a divergence term), "
            f"max |total - 2 pi| = {max(abs(r['residual']) for r in rows):.2e} (tol 1e-5)")


def test_criterion_7_compendium(scenario_runs):
    verify, qe, avg = [], [], []
    for scenario in ("compendium-full", "compendium-4d", "torus-random-ansatz"):
        report = scenario_runs(scenario)[1]
        verify += checks_named(report, "compendium-verify")
        qe += checks_named(report, "quasi-einstein")
        avg += checks_named(report, "averaged-tensors")
    names = set()
    for c in verify:
        names |= {k.split(" ")[0] for k in c["details"]["tensors"]}
    ok = (names == set(C.TENSOR_NAMES) and all(c["details"]["points"] >= 50 for c in verify)
          and all(c["value"] <= 1e-5 for c in verify)
          and all(max(c["details"]["sigma_plus_s"], c["details"]["tau_minus_trace_h"]) <= 1e-8 for c in verify)
          and all(c["details"]["between_branches"] <= 1e-6 for c in qe if "between_branches" in c["details"])
          and all(c["pass"] for c in qe) and avg and all(c["residual"] <= 1e-5 for c in avg))
    verdict(7, "curvature compendium", ok,
            f"{len(names)} tensors on {len(verify)} geometries, worst relative gap "
            f"{max(c['value'] for c in verify):.2e} (tol 1e-5), trace identities "
            f"{max(max(c['details']['sigma_plus_s'], c['details']['tau_minus_trace_h']) for c in verify):.2e} "
            f"(tol 1e-8), branch agreement {max(c['details'].get('between_branches', 0.0) for c in qe):.2e} "
            f"(tol 1e-6), averages {max(c['residual'] for c in avg):.2e} (tol 1e-5)")


def test_criterion_8_coefficient_solver(scenario_runs):
    (c,) = checks_named(scenario_runs("compendium-full")[1], "coefficients")
    worst = 0.0
    gating = True
    for n in range(2, 9):
        for m in [-7.5, -3.0, -(n - 2) if n > 2 else -1.0, -1.0, -0.5, 0.25, 1.0, 2.0, 10.0, "inf"]:
            sol = C.solve_coefficients(n, m)
            for lin, quad in sol.residuals():
                worst = max(worst, lin, quad)
            if n > 2:
                inv_m = 0.0 if m == "inf" else 1.0 / m
                disc = 4 * (n - 1) * (1 + (n - 2) * inv_m)
                gating &= len(sol.solutions) == (2 if disc > 0 else 1 if disc == 0 else 0)
            else:
                gating &= len(sol.solutions) == 1
    ew = all(len(C.solve_coefficients(n, -(n - 2)).solutions) == 1 for n in range(3, 9))
    ok = c["pass"] and worst <= 1e-12 and gating and ew
    verdict(8, "coefficient solver", ok,
            f"max equation residual {max(worst, c['value']):.2e} (tol 1e-12), discriminant gating "
            f"{'consistent' if gating else 'inconsistent'}, Einstein-Weyl unique {ew}")


def test_criterion_9_four_manifold(scenario_runs):
    start = time.monotonic()
    code, report, _ = scenario_runs("product-spheres-4d")
    elapsed = time.monotonic() - start
    rows = checks_named(report, "euler-number")
    total = sum(c["seconds"] for c in report["checks"])
    ok = len(rows) == 2 and all(abs(c["value"] - 4.0) <= 1e-3 for c in rows) and max(total, elapsed) <= 600
    values = ", ".join(f"{c['value']:.7f}" for c in rows)
    verdict(9, "S2 x S2 stretch test", ok,
            f"values {values} (tol 1e-3), "
            f"run time {max(total, elapsed):.0f} s (limit 600 s)")
