"""Structured controllability report over sampled zero-velocity states."""

from __future__ import annotations

import numpy as np

from .controllability import accessibility_rank, classify_brackets, hall_basis
from .errors import DegenerateState
from .scenario import Scenario, sample_initial_q

REPORT_SCHEMA_ID = "emff-controllability/1"
STLC_TOL = 1e-8


def sample_states(scn: Scenario, samples: int, seed: int):
    """Zero-velocity states drawn like the scenario's initial conditions."""
    sw = scn.swarm
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(samples):
        if scn.initial.mode == "explicit":
            q = scn.initial.q.copy()
        else:
            q = sample_initial_q(sw, scn.target, rng, scn.initial.position_radius,
                                 scn.initial.mrp_radius)
        out.append(np.concatenate([q, np.zeros(sw.dim_q)]))
    return out


def _status(ok):
    return "PASS" if ok else "FAIL"


def report_controllability(scn: Scenario, samples: int = 10, seed: int = 0,
                           max_degree: int = 3) -> str:
    """Rank and bad-bracket checks at sampled states, one record per sample.

    The text is a pure function of its inputs, so reruns are byte-identical.
    """
    sw = scn.swarm
    n = sw.n
    words = hall_basis(sw.dim_v + 1, max_degree)
    terms = classify_brackets(max_degree, n_inputs=sw.dim_v)
    n_bad = sum(t.classification == "bad" for t in terms)
    lines = [f"# schema: {REPORT_SCHEMA_ID}",
             f"scenario: {scn.name}",
             f"n: {n}",
             f"state_dim: {12 * n - 6}",
             f"seed: {seed}",
             f"samples: {samples}",
             "rank_tolerance: 1e-08 * sigma_max",
             f"expected_rank: {12 * n - 6}",
             f"momentum_leaf_dim: {12 * n - 9}",
             f"hall_words_up_to_degree_{max_degree}: {len(words)} (bad: {n_bad})",
             ""]
    full_ok, leaf_ok, stlc_ok, skipped, evaluated = 0, 0, 0, 0, 0
    for i, x in enumerate(sample_states(scn, samples, seed), start=1):
        try:
            rep = accessibility_rank(x, sw)
        except DegenerateState as exc:
            skipped += 1
            lines.append(f"sample {i}: SKIPPED DegenerateState: {exc}")
            continue
        evaluated += 1
        bad = [t for t in classify_brackets(max_degree, sw, [x]) if t.classification == "bad"]
        worst = max(max(t.residuals) for t in bad)
        full_ok += rep.passed
        leaf_ok += rep.leaf_passed
        stlc_ok += worst <= STLC_TOL
        lines.append(f"sample {i}: rank={rep.rank} expected={rep.expected} "
                     f"{_status(rep.passed)} leaf_rank={_status(rep.leaf_passed)} "
                     f"bad_bracket_max_residual={worst:.3e} stlc={_status(worst <= STLC_TOL)}")
        lines.append("  singular_values: " + " ".join(f"{s:.6e}" for s in rep.singular_values))
    lines.append("")
    lines.append(f"evaluated: {evaluated}")
    lines.append(f"skipped: {skipped}")
    lines.append(f"accessibility_status: {_status(evaluated > 0 and full_ok == evaluated)} "
                 f"({full_ok}/{evaluated} at rank {12 * n - 6})")
    lines.append(f"momentum_leaf_status: {_status(evaluated > 0 and leaf_ok == evaluated)} "
                 f"({leaf_ok}/{evaluated} at rank {12 * n - 9})")
    lines.append(f"stlc_status: {_status(evaluated > 0 and stlc_ok == evaluated)} "
                 f"({stlc_ok}/{evaluated} with every bad bracket in the good span)")
    return "\n".join(lines) + "\n"
