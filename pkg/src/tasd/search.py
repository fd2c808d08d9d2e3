"""Configuration enumeration for a pattern menu and the selection
algorithms: uniform network-wide search, drop-sorted greedy per layer,
and sparsity-guided selection for activations.

An assignment is a plain dict mapping layer_id to TasdConfig; layers
absent from the dict execute dense.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from .decomp import decompose, drop_metrics
from .errors import EmptyCalibration, MissingStats, SchemaError
from .matrix import NmPattern, TasdConfig, sparsity

Assignment = dict[str, TasdConfig]


@dataclass(frozen=True)
class PatternMenu:
    """The base N:M patterns a target can apply, and how many terms it can
    chain per tensor."""

    m: int
    base_patterns: frozenset[int]
    max_terms: int = 2

    def __post_init__(self):
        object.__setattr__(self, "base_patterns", frozenset(self.base_patterns))
        if self.m < 1 or self.max_terms < 1:
            raise ValueError("menu m and max_terms must be positive")
        if not self.base_patterns:
            raise ValueError("menu needs at least one base pattern")
        for n in self.base_patterns:
            if not 1 <= n <= self.m:
                raise ValueError(f"base pattern {n} outside [1, {self.m}]")


@dataclass
class LayerStats:
    layer_id: str
    weight_sparsity: float | None = None
    act_sparsity_mean: float | None = None
    act_sparsity_p99: float | None = None
    act_magnitude_samples: tuple | None = field(default=None, repr=False)


def enumerate_configs(menu: PatternMenu) -> list[TasdConfig]:
    """All distinct-coverage series buildable from the menu, plus dense,
    sorted by coverage ascending.

    Equal-total multisets collapse to the one with the fewest terms
    (largest first on remaining ties), e.g. a total of 5 on an m=8 menu
    with bases {1,2,4} realizes as 4:8+1:8. A total of m is the dense
    single term.
    """
    best: dict[int, tuple[int, ...]] = {}

    def offer(combo: tuple[int, ...]):
        total = sum(combo)
        if total > menu.m:
            return
        held = best.get(total)
        # fewest terms wins; then the lexicographically largest descending
        if held is None or len(combo) < len(held) or (len(combo) == len(held) and combo > held):
            best[total] = combo

    for r in range(1, menu.max_terms + 1):
        for combo in combinations_with_replacement(
            sorted(menu.base_patterns, reverse=True), r
        ):
            offer(combo)
    offer((menu.m,))  # the implicit dense option

    configs = []
    for total in sorted(best):
        terms = tuple(NmPattern(n, menu.m) for n in best[total])
        configs.append(TasdConfig(terms))
    return configs


def dense_config(menu: PatternMenu) -> TasdConfig:
    return TasdConfig((NmPattern(menu.m, menu.m),))


def is_expressible(config: TasdConfig, menu: PatternMenu) -> bool:
    """Whether the target can execute the series (dense always can)."""
    if config.is_dense:
        return True
    if not config.same_m or config.terms[0].m != menu.m:
        return False
    if len(config.terms) > menu.max_terms or config.sum_n > menu.m:
        return False
    return all(t.n in menu.base_patterns for t in config.terms)


# ---------------------------------------------------------------------------
# weight-side search


def ranked_pairs(workload, menu: PatternMenu):
    """(layer, config) pairs sorted by dropped non-zeros ascending.

    Ties prefer the larger coverage, then earlier layer order. Dense is
    not a pair; it is the starting state of every layer.
    """
    configs = [c for c in enumerate_configs(menu) if not c.is_dense]
    pairs = []
    for li, layer in enumerate(workload.layers):
        if layer.weight is None:
            raise SchemaError(f"layer {layer.layer_id} has no weight matrix")
        for cfg in configs:
            drop = drop_metrics(decompose(layer.weight, cfg)).dropped_nnz_fraction
            pairs.append((drop, -cfg.coverage, li, layer.layer_id, cfg))
    pairs.sort(key=lambda p: (p[0], p[1], p[2]))
    return [(drop, layer_id, cfg) for drop, _, _, layer_id, cfg in pairs]


def layer_wise_greedy(
    workload,
    menu: PatternMenu,
    oracle,
    threshold: float = 0.99,
    skip_and_continue: bool = False,
    trace: list | None = None,
) -> Assignment:
    """Apply drop-sorted (layer, config) pairs until quality falls below
    threshold x baseline; the violating pair is reverted.

    A later pair replaces the layer's earlier config: pairs arrive in
    ascending-drop order, so replacement always escalates. With the
    default stop rule the first violation ends the single pass; with
    ``skip_and_continue`` the pass keeps going past it.
    """
    gate = threshold * workload.baseline_quality
    assignment: Assignment = {}
    for drop, layer_id, cfg in ranked_pairs(workload, menu):
        previous = assignment.get(layer_id)
        assignment[layer_id] = cfg
        quality = oracle.evaluate(workload, assignment)
        applied = quality >= gate
        if not applied:
            if previous is None:
                del assignment[layer_id]
            else:
                assignment[layer_id] = previous
        if trace is not None:
            trace.append(
                {
                    "layer": layer_id,
                    "config": cfg.canonical(),
                    "drop": drop,
                    "quality": quality,
                    "applied": applied,
                }
            )
        if not applied and not skip_and_continue:
            break
    return assignment


def network_wise_search(
    workload,
    menu: PatternMenu,
    oracle,
    threshold: float = 0.99,
    hw=None,
    trace: list | None = None,
):
    """Try every enumerated config uniformly on all layers; return the
    cheapest one whose quality clears threshold x baseline, with its
    quality. Cost is model latency when a hardware description is given,
    total MACs otherwise. Falls back to dense when nothing qualifies.
    """
    gate = threshold * workload.baseline_quality
    best_cfg = None
    best_cost = None
    best_quality = None
    dense_quality = None
    for cfg in enumerate_configs(menu):
        assignment: Assignment = (
            {} if cfg.is_dense else {ly.layer_id: cfg for ly in workload.layers}
        )
        quality = oracle.evaluate(workload, assignment)
        if cfg.is_dense:
            dense_quality = quality
        cost = _assignment_cost(workload, assignment, hw)
        qualified = quality >= gate
        if trace is not None:
            trace.append(
                {
                    "config": cfg.canonical(),
                    "quality": quality,
                    "cost": cost,
                    "qualified": qualified,
                }
            )
        if qualified and (best_cost is None or cost < best_cost):
            best_cfg, best_cost, best_quality = cfg, cost, quality
    if best_cfg is None:
        return dense_config(menu), dense_quality
    return best_cfg, best_quality


def _assignment_cost(workload, assignment: Assignment, hw):
    if hw is None:
        return workload.total_macs(assignment)
    from . import hwmodel  # deferred: hwmodel imports this module

    report, _ = hwmodel.workload_cost(hw, workload, assignment)
    return report.cycles


# ---------------------------------------------------------------------------
# activation-side selection


def sparsity_select(layer_sparsity: float, alpha: float, menu: PatternMenu) -> TasdConfig:
    """Config with the largest approximated sparsity strictly below
    layer_sparsity + alpha; dense when none fits or the target is <= 0."""
    target = layer_sparsity + alpha
    choice = dense_config(menu)
    if target <= 0.0:
        return choice
    best_h = -1.0
    for cfg in enumerate_configs(menu):
        h = cfg.approximated_sparsity
        if h < target and h > best_h:
            best_h = h
            choice = cfg
    return choice


def profile_calibration(samples, layer_id: str = "") -> LayerStats:
    """Mean and p99 sparsity over calibration samples, keeping the raw
    magnitudes for the pseudo-density fallback."""
    samples = list(samples)
    if not samples:
        raise EmptyCalibration(f"no calibration samples for layer {layer_id!r}")
    fractions = [sparsity(s) for s in samples]
    magnitudes = tuple(
        np.abs(np.asarray(s, dtype=np.float64)).ravel() for s in samples
    )
    return LayerStats(
        layer_id=layer_id,
        act_sparsity_mean=float(np.mean(fractions)),
        act_sparsity_p99=float(np.percentile(fractions, 99)),
        act_magnitude_samples=magnitudes,
    )


def pseudo_density(magnitudes, rho: float = 0.99) -> float:
    """Smallest k/len whose k largest magnitudes sum to at least rho of
    the total; 0 for an all-zero (or empty) input."""
    mags = np.abs(np.asarray(list(magnitudes), dtype=np.float64)).ravel()
    if mags.size == 0:
        return 0.0
    csum = np.cumsum(np.sort(mags)[::-1])
    total = float(csum[-1])
    if total <= 0.0:
        return 0.0
    k = int(np.searchsorted(csum, rho * total)) + 1
    return min(k, mags.size) / mags.size


def select_activation_configs(
    stats,
    menu: PatternMenu,
    alpha: float = 0.05,
    rho: float = 0.99,
    relu_based: bool = True,
    statistic: str = "p99",
) -> Assignment:
    """Per-layer sparsity-guided selection.

    ReLU-style layers use their measured sparsity statistic (p99 by
    default, mean on request). Other activations replace sparsity with
    1 - pseudo_density of the sampled magnitudes. Dense picks are left
    out of the assignment.
    """
    if statistic not in ("p99", "mean"):
        raise ValueError(f"statistic must be 'p99' or 'mean', got {statistic!r}")
    assignment: Assignment = {}
    for st in stats:
        if relu_based:
            value = st.act_sparsity_p99 if statistic == "p99" else st.act_sparsity_mean
            if value is None:
                raise MissingStats(
                    f"layer {st.layer_id!r} lacks measured activation sparsity"
                )
        else:
            if not st.act_magnitude_samples:
                raise MissingStats(
                    f"layer {st.layer_id!r} lacks magnitude samples for pseudo-density"
                )
            pseudo = [1.0 - pseudo_density(m, rho) for m in st.act_magnitude_samples]
            value = (
                float(np.percentile(pseudo, 99))
                if statistic == "p99"
                else float(np.mean(pseudo))
            )
        cfg = sparsity_select(value, alpha, menu)
        if not cfg.is_dense:
            assignment[st.layer_id] = cfg
    return assignment


# ---------------------------------------------------------------------------
# assignment serialization


def assignment_to_json(assignment: Assignment) -> dict:
    return {
        layer_id: {"terms": [[t.n, t.m] for t in cfg.terms]}
        for layer_id, cfg in assignment.items()
    }


def assignment_from_json(obj) -> Assignment:
    if not isinstance(obj, dict):
        raise SchemaError("assignment must be a JSON object")
    assignment: Assignment = {}
    for layer_id, entry in obj.items():
        if not isinstance(entry, dict) or "terms" not in entry:
            raise SchemaError(f"assignment entry for {layer_id!r} needs 'terms'")
        try:
            terms = tuple(NmPattern(int(n), int(m)) for n, m in entry["terms"])
            assignment[layer_id] = TasdConfig(terms)
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"bad terms for layer {layer_id!r}: {exc}") from exc
    return assignment


def save_assignment(assignment: Assignment, path) -> None:
    with open(path, "w") as fh:
        json.dump(assignment_to_json(assignment), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_assignment(path) -> Assignment:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: {exc}") from exc
    return assignment_from_json(obj)
