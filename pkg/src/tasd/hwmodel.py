"""Analytical latency/energy/EDP model of a structured-sparse GEMM
accelerator built from a grid of tensor cores with per-block
decomposition units.

Dataflow being modeled: the B operand tiles live in the L2 scratchpad,
C tiles stay in L1 across per-term passes, and each A element is held
stationary in a PE register. A arrives compressed (values plus packed
block indices), B is fetched from DRAM once, and every extra series term
costs one more pass over B in L2 plus a read-modify-write of C in L1.

The energy table ships with illustrative per-access values; the model is
calibrated for relative comparisons (ratios, EDP direction), not joules.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from types import MappingProxyType

from .errors import MixedM, NotExpressible, SchemaError
from .matrix import TasdConfig
from .search import Assignment, PatternMenu, enumerate_configs, is_expressible

COST_CSV_HEADER = "layer,config,cycles,stalls,macs,e_mac,e_rf,e_l1,e_l2,e_dram,e_tasd,edp"

_ENERGY_KEYS = ("mac", "rf_access", "l1_access", "l2_access", "dram_access")


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


@dataclass(frozen=True)
class HwSpec:
    m: int
    base_patterns: frozenset[int]
    max_terms: int
    ttc_count: int
    pe_rows: int
    pe_cols: int
    tasd_units_per_ttc: int
    blocks_out_per_cycle: int
    rf_bytes: int
    l1_bytes: int
    l2_bytes: int
    elem_bytes: int
    energy_pj: MappingProxyType

    def __post_init__(self):
        object.__setattr__(self, "base_patterns", frozenset(self.base_patterns))
        counts = (
            self.m,
            self.max_terms,
            self.ttc_count,
            self.pe_rows,
            self.pe_cols,
            self.tasd_units_per_ttc,
            self.blocks_out_per_cycle,
            self.rf_bytes,
            self.l1_bytes,
            self.l2_bytes,
            self.elem_bytes,
        )
        if any(int(c) <= 0 for c in counts):
            raise SchemaError("hardware counts and capacities must be positive")
        for n in self.base_patterns:
            if not 1 <= n <= self.m:
                raise SchemaError(f"base pattern {n} outside [1, {self.m}]")
        energy = dict(self.energy_pj)
        for key in _ENERGY_KEYS:
            if key not in energy:
                raise SchemaError(f"energy table missing {key!r}")
        # decomposition-unit energy is optional; register-file cost is the
        # closest stand-in for one packed-slot handling step
        energy.setdefault("tasd_unit", energy["rf_access"])
        if any(v < 0 for v in energy.values()):
            raise SchemaError("energy entries must be non-negative")
        object.__setattr__(self, "energy_pj", MappingProxyType(energy))

    @property
    def menu(self) -> PatternMenu:
        return PatternMenu(self.m, self.base_patterns, self.max_terms)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "base_patterns": sorted(self.base_patterns),
            "max_terms": self.max_terms,
            "ttc_count": self.ttc_count,
            "pe_rows": self.pe_rows,
            "pe_cols": self.pe_cols,
            "tasd_units_per_ttc": self.tasd_units_per_ttc,
            "blocks_out_per_cycle": self.blocks_out_per_cycle,
            "rf_bytes": self.rf_bytes,
            "l1_bytes": self.l1_bytes,
            "l2_bytes": self.l2_bytes,
            "elem_bytes": self.elem_bytes,
            "energy_pj": dict(self.energy_pj),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "HwSpec":
        if not isinstance(obj, dict):
            raise SchemaError("hardware spec must be a JSON object")
        try:
            return cls(
                m=int(obj["m"]),
                base_patterns=frozenset(int(n) for n in obj["base_patterns"]),
                max_terms=int(obj["max_terms"]),
                ttc_count=int(obj["ttc_count"]),
                pe_rows=int(obj["pe_rows"]),
                pe_cols=int(obj["pe_cols"]),
                tasd_units_per_ttc=int(obj["tasd_units_per_ttc"]),
                blocks_out_per_cycle=int(obj["blocks_out_per_cycle"]),
                rf_bytes=int(obj["rf_bytes"]),
                l1_bytes=int(obj["l1_bytes"]),
                l2_bytes=int(obj["l2_bytes"]),
                elem_bytes=int(obj["elem_bytes"]),
                energy_pj={k: float(v) for k, v in obj["energy_pj"].items()},
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad hardware spec: {exc}") from exc

    @classmethod
    def from_json(cls, path) -> "HwSpec":
        with open(path) as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}: {exc}") from exc
        return cls.from_dict(obj)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


_ILLUSTRATIVE_ENERGY = {
    "mac": 2.0,
    "rf_access": 0.5,
    "l1_access": 1.0,
    "l2_access": 4.0,
    "dram_access": 80.0,
    "tasd_unit": 0.5,
}


def vegeta_m8() -> HwSpec:
    """Four-core m=8 target: bases {1,2,4}, two chained terms, 16x16 PEs,
    16 decomposition units per core (enough for two blocks per cycle at
    the worst-case sum of n)."""
    return HwSpec(
        m=8,
        base_patterns=frozenset({1, 2, 4}),
        max_terms=2,
        ttc_count=4,
        pe_rows=16,
        pe_cols=16,
        tasd_units_per_ttc=16,
        blocks_out_per_cycle=2,
        rf_bytes=256,
        l1_bytes=64 * 1024,
        l2_bytes=512 * 1024,
        elem_bytes=2,
        energy_pj=dict(_ILLUSTRATIVE_ENERGY),
    )


def stc_m4() -> HwSpec:
    """Single-core m=4 target supporting 2:4 and dense only."""
    return HwSpec(
        m=4,
        base_patterns=frozenset({2}),
        max_terms=1,
        ttc_count=1,
        pe_rows=16,
        pe_cols=16,
        tasd_units_per_ttc=4,
        blocks_out_per_cycle=1,
        rf_bytes=256,
        l1_bytes=32 * 1024,
        l2_bytes=256 * 1024,
        elem_bytes=2,
        energy_pj=dict(_ILLUSTRATIVE_ENERGY),
    )


BUILTIN_SPECS = {"vegeta-m8": vegeta_m8, "stc-m4": stc_m4}


# ---------------------------------------------------------------------------
# pattern support


def expressible(hw: HwSpec) -> list[TasdConfig]:
    """Every series the target can realize, coverage ascending."""
    return enumerate_configs(hw.menu)


def pattern_table(hw: HwSpec) -> list[tuple[int, TasdConfig | None]]:
    """(total n, realization) for every total 1..m; None = unsupported."""
    by_total = {cfg.sum_n: cfg for cfg in expressible(hw)}
    return [(total, by_total.get(total)) for total in range(1, hw.m + 1)]


def decomp_latency(config) -> int:
    """Cycles one decomposition unit needs per block: the sum of n over
    the series (each term's extraction drains n slots)."""
    cfg = config if isinstance(config, TasdConfig) else TasdConfig.parse(config)
    if not cfg.same_m:
        raise MixedM(f"hardware cannot decompose mixed-m series {cfg.canonical()}")
    return cfg.sum_n


def required_tasd_units(hw: HwSpec, config: TasdConfig | None = None) -> int:
    """Units per core for stall-free output: blocks emitted per cycle
    times the per-block latency (worst case m when no config is given)."""
    latency = hw.m if config is None else decomp_latency(config)
    return hw.blocks_out_per_cycle * latency


def tile_n(hw: HwSpec, gemm_k: int, gemm_n: int) -> int:
    """Largest N-tile whose B slice fits L2 and whose C slice fits L1
    alongside one row panel. Deterministic planner input; charged traffic
    follows the stationary dataflow regardless of the tile choice."""
    panel_rows = hw.pe_rows * hw.ttc_count
    by_l2 = hw.l2_bytes // max(1, gemm_k * hw.elem_bytes)
    by_l1 = hw.l1_bytes // max(1, panel_rows * hw.elem_bytes)
    return max(1, min(gemm_n, by_l2, by_l1))


# ---------------------------------------------------------------------------
# cost model


@dataclass(frozen=True)
class CostReport:
    cycles: int
    stall_cycles: int
    mac_count: int
    energy_pj: float
    breakdown: MappingProxyType
    edp: float


def _report(cycles: int, stalls: int, macs: int, breakdown: dict) -> CostReport:
    energy = float(sum(breakdown.values()))
    return CostReport(
        cycles=int(cycles),
        stall_cycles=int(stalls),
        mac_count=int(macs),
        energy_pj=energy,
        breakdown=MappingProxyType(dict(breakdown)),
        edp=energy * int(cycles),
    )


_ZERO_BREAKDOWN = {"mac": 0.0, "rf": 0.0, "l1": 0.0, "l2": 0.0, "dram": 0.0, "tasd_unit": 0.0}


def gemm_cost(
    hw: HwSpec,
    gemm_m: int,
    gemm_n: int,
    gemm_k: int,
    config: TasdConfig | None = None,
    input_sparsity_gating: float | None = None,
) -> CostReport:
    """Cycles, per-level energy, and EDP of one (possibly decomposed) GEMM.

    Dense execution (config None or a single n=m term) bypasses the
    decomposition units entirely: no per-block extraction energy, no
    metadata traffic, no extra C passes. ``input_sparsity_gating`` scales
    MAC energy only (compute cycles are unchanged by gating).
    """
    if min(gemm_m, gemm_n, gemm_k) < 0:
        raise ValueError("GEMM dims must be non-negative")
    if gemm_m == 0 or gemm_n == 0 or gemm_k == 0:
        return _report(0, 0, 0, dict(_ZERO_BREAKDOWN))
    if input_sparsity_gating is not None and not 0.0 <= input_sparsity_gating <= 1.0:
        raise ValueError("input_sparsity_gating must be in [0, 1]")

    dense = config is None or config.is_dense
    if not dense and not is_expressible(config, hw.menu):
        raise NotExpressible(
            f"target (m={hw.m}, bases {sorted(hw.base_patterns)}, "
            f"max {hw.max_terms} terms) cannot run {config.canonical()}"
        )

    m = hw.m
    ns = [] if dense else [t.n for t in config.terms]
    n_terms = 1 if dense else len(ns)
    # K extent of each per-term pass through the PE array
    extents = [gemm_k] if dense else [_ceil_div(gemm_k * n, m) for n in ns]

    panel_rows = hw.pe_rows * hw.ttc_count
    m_passes = _ceil_div(gemm_m, panel_rows)
    n_tiles = _ceil_div(gemm_n, hw.pe_cols)
    compute_cycles = m_passes * n_tiles * sum(extents)

    stalls = 0
    if not dense:
        needed = hw.blocks_out_per_cycle * sum(ns)
        avail = hw.tasd_units_per_ttc
        if needed > avail:
            # output stage throttled to the decomposition throughput
            stalls = _ceil_div(compute_cycles * (needed - avail), avail)
    cycles = compute_cycles + stalls

    macs = gemm_m * gemm_n * sum(extents)

    # A operand: compressed values plus block indices, once per term,
    # DRAM -> L2 -> RF
    a_elems = sum(gemm_m * ext for ext in extents)
    blocks_per_term = gemm_m * _ceil_div(gemm_k, m)
    if dense:
        meta_elems = 0.0
    else:
        bits = max(1, math.ceil(math.log2(m)))
        meta_bytes = sum(
            blocks_per_term * _ceil_div(n * bits, 8) for n in ns
        )
        meta_elems = meta_bytes / hw.elem_bytes
    a_traffic = a_elems + meta_elems

    # B operand: DRAM once; one L2 sweep per term per row panel
    b_dram = gemm_k * gemm_n
    b_l2 = n_terms * m_passes * gemm_k * gemm_n

    # C operand: built in L1, re-read and re-written once per extra term,
    # then drained to DRAM
    c_l1 = gemm_m * gemm_n * (1 + 2 * (n_terms - 1))
    c_dram = gemm_m * gemm_n

    gating = input_sparsity_gating or 0.0
    energy = hw.energy_pj
    tasd_energy = (
        0.0 if dense else blocks_per_term * sum(ns) * energy["tasd_unit"]
    )
    breakdown = {
        "mac": macs * (1.0 - gating) * energy["mac"],
        "rf": a_traffic * energy["rf_access"],
        "l1": c_l1 * energy["l1_access"],
        "l2": (a_traffic + b_l2) * energy["l2_access"],
        "dram": (a_traffic + b_dram + c_dram) * energy["dram_access"],
        "tasd_unit": tasd_energy,
    }
    return _report(cycles, stalls, macs, breakdown)


def workload_cost(
    hw: HwSpec,
    workload,
    assignment: Assignment | None = None,
    gating_stats: dict | None = None,
):
    """Cost every layer under the assignment; returns the aggregate
    report plus per-layer rows ready for the cost CSV."""
    assignment = assignment or {}
    gating_stats = gating_stats or {}
    rows = []
    cycles = stalls = macs = 0
    totals = dict(_ZERO_BREAKDOWN)
    for ly in workload.layers:
        cfg = assignment.get(ly.layer_id)
        report = gemm_cost(
            hw,
            ly.gemm_m,
            ly.gemm_n,
            ly.gemm_k,
            cfg,
            input_sparsity_gating=gating_stats.get(ly.layer_id),
        )
        cycles += report.cycles
        stalls += report.stall_cycles
        macs += report.mac_count
        for key in totals:
            totals[key] += report.breakdown[key]
        rows.append(
            {
                "layer": ly.layer_id,
                "config": cfg.canonical() if cfg is not None else "dense",
                "cycles": report.cycles,
                "stalls": report.stall_cycles,
                "macs": report.mac_count,
                "e_mac": report.breakdown["mac"],
                "e_rf": report.breakdown["rf"],
                "e_l1": report.breakdown["l1"],
                "e_l2": report.breakdown["l2"],
                "e_dram": report.breakdown["dram"],
                "e_tasd": report.breakdown["tasd_unit"],
                "edp": report.edp,
            }
        )
    return _report(cycles, stalls, macs, totals), rows


def render_cost_csv(rows) -> str:
    lines = [COST_CSV_HEADER]
    for row in rows:
        lines.append(
            f"{row['layer']},{row['config']},{row['cycles']},{row['stalls']},"
            f"{row['macs']},{row['e_mac']!r},{row['e_rf']!r},{row['e_l1']!r},"
            f"{row['e_l2']!r},{row['e_dram']!r},{row['e_tasd']!r},{row['edp']!r}"
        )
    return "\n".join(lines) + "\n"
