"""Topologies, running networks and the workloads driven against them."""

from .drivers import (BenchResult, ExchangeReport, ExchangeVerdict, NoiseVerdict, bench, exchange,
                      format_summary, inject_noise, noise_tamper, summarize, write_bench_csv)
from .network import (DEPLOYMENTS, IN_PROCESS, MULTI_PROCESS, InProcessNetwork, MultiProcessNetwork,
                      build_links, ensure_available, up, up_in_process, up_multi_process)
from .report import read_bench_csv, report
from .topology import (LinkSpec, TopologyConfig, ZoneSpec, component_seed, from_dict, linear_topology,
                       load_topology, with_overrides)

__all__ = [
    "BenchResult", "DEPLOYMENTS", "ExchangeReport", "ExchangeVerdict", "IN_PROCESS", "InProcessNetwork",
    "LinkSpec", "MULTI_PROCESS", "MultiProcessNetwork", "NoiseVerdict", "TopologyConfig", "ZoneSpec",
    "bench", "build_links", "component_seed", "ensure_available", "exchange", "format_summary",
    "from_dict", "inject_noise", "linear_topology", "load_topology", "noise_tamper", "read_bench_csv",
    "report", "summarize", "up", "up_in_process", "up_multi_process", "with_overrides", "write_bench_csv",
]
