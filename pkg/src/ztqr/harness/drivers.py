"""Workloads run against a live network: exchanges, benchmarks, noise injection."""

from __future__ import annotations

import base64
import csv
import logging
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from ..errors import ConfigError, HookDisabledError, ZtqrError
from ..fhe import Ciphertext, PublicKey, encrypt, hadd, raw_ciphertext
from ..gf2 import encode, BitKey
from ..metrics import BENCH_COLUMNS, CPU_METHOD, HOMOMORPHIC_OPS, BenchRecord
from ..relay import DELIVERED, PLAINTEXT_BASELINE, ZERO_TRUST
from .network import InProcessNetwork, up_in_process
from .topology import TopologyConfig, component_seed, with_overrides

log = logging.getLogger(__name__)


@dataclass
class ExchangeVerdict:
    index: int
    key_ID: str
    equal: bool
    void_reached_originator: bool
    issued_hex: str = ""
    recovered_hex: str = ""


@dataclass
class ExchangeReport:
    initiator_sae: str
    target_sae: str
    key_bits: int
    verdicts: list[ExchangeVerdict] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.verdicts)

    @property
    def all_equal(self) -> bool:
        return all(v.equal for v in self.verdicts)

    @property
    def equal_count(self) -> int:
        return sum(v.equal for v in self.verdicts)

    @property
    def voids_complete(self) -> bool:
        return all(v.void_reached_originator for v in self.verdicts)


def _bits(item: dict[str, Any], size: int) -> BitKey:
    return BitKey.from_bytes(base64.b64decode(item["key"]), size, origin="recovered")


def exchange(net, initiator_sae: str, target_sae: str, key_bits: int = 256, count: int = 1,
             *, keep_keys: bool = False) -> ExchangeReport:
    """Run ``count`` single-key exchanges and compare what each end receives.

    Relay errors propagate unchanged; they already name the failing hop and
    the exchange.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    directory = net.topology.sae_directory
    for sae in (initiator_sae, target_sae):
        if sae not in directory:
            raise ConfigError(f"topology has no SAE {sae!r}")
    report = ExchangeReport(initiator_sae, target_sae, key_bits)
    origin = directory[initiator_sae]
    alice, bob = net.sae(initiator_sae), net.sae(target_sae)
    for i in range(count):
        net.ensure_keys(1)
        issued = alice.enc_keys(target_sae, 1, key_bits)["keys"][0]
        got = bob.dec_keys(initiator_sae, [issued["key_ID"]])["keys"][0]
        k_issued, k_got = _bits(issued, key_bits), _bits(got, key_bits)
        state = net.relay_state(origin)
        entry = next((e for e in state["pool"] if e["key_ID"] == issued["key_ID"]), None)
        closed = entry is not None and entry["state"] == DELIVERED
        report.verdicts.append(ExchangeVerdict(
            i, issued["key_ID"], k_issued == k_got, closed,
            k_issued.hex() if keep_keys else "", k_got.hex() if keep_keys else ""))
    return report


# ---------------------------------------------------------------------- bench

def mode_of(op_kind: str) -> str:
    return PLAINTEXT_BASELINE if op_kind == "baseline-xor" else ZERO_TRUST


def percentile(values: list[float], q: float) -> float:
    return float(np.percentile(np.asarray(values, dtype=float), q))


def summarize(records: Iterable[BenchRecord]) -> list[dict[str, Any]]:
    """mean/median/p95 of duration and CPU per (relay, op_kind, key_bits, mode)."""
    groups: dict[tuple, list[BenchRecord]] = {}
    for r in records:
        groups.setdefault((r.relay_id, r.op_kind, r.key_bits, mode_of(r.op_kind)), []).append(r)
    rows = []
    for (relay, op, bits, mode), recs in sorted(groups.items()):
        d = [r.duration_ms for r in recs]
        c = [r.cpu_pct for r in recs]
        rows.append({"relay_id": relay, "op_kind": op, "key_bits": bits, "mode": mode, "n": len(recs),
                     "mean_ms": statistics.fmean(d), "median_ms": statistics.median(d),
                     "p95_ms": percentile(d, 95), "mean_cpu_pct": statistics.fmean(c),
                     "payload_bytes": statistics.median(r.payload_bytes for r in recs)})
    return rows


def write_bench_csv(records: Iterable[BenchRecord], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# {CPU_METHOD}\n")
        w = csv.writer(fh)
        w.writerow(BENCH_COLUMNS)
        for r in records:
            row = asdict(r)
            w.writerow([row[c] for c in BENCH_COLUMNS])
    return path


def format_summary(rows: list[dict[str, Any]]) -> str:
    head = f"{'relay':<8} {'op_kind':<13} {'bits':>4} {'mode':<18} {'n':>5} {'mean_ms':>9} " \
           f"{'median_ms':>9} {'p95_ms':>9} {'cpu%':>6} {'payload':>8}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r['relay_id']:<8} {r['op_kind']:<13} {r['key_bits']:>4} {r['mode']:<18} {r['n']:>5} "
                     f"{r['mean_ms']:>9.3f} {r['median_ms']:>9.3f} {r['p95_ms']:>9.3f} "
                     f"{r['mean_cpu_pct']:>6.1f} {r['payload_bytes']:>8.0f}")
    return "\n".join(lines)


@dataclass
class BenchResult:
    records: list[BenchRecord]
    summary: list[dict[str, Any]]
    failures: list[str]
    verdicts: list[ExchangeVerdict]
    csv_path: Path | None = None


def bench(topo: TopologyConfig, iterations: int = 20, key_bits: Iterable[int] = (128, 256),
          modes: Iterable[str] = (ZERO_TRUST, PLAINTEXT_BASELINE), *, initiator: str | None = None,
          target: str | None = None, out: Path | None = None) -> BenchResult:
    """Fresh in-process network per mode; ``iterations`` exchanges per key size.

    Exchange failures are recorded in ``failures`` and the loop carries on.
    """
    saes = sorted(topo.sae_directory)
    initiator = initiator or saes[0]
    target = target or saes[-1]
    records: list[BenchRecord] = []
    failures: list[str] = []
    verdicts: list[ExchangeVerdict] = []
    for mode in modes:
        net = up_in_process(with_overrides(topo, mode=mode))
        try:
            for bits in key_bits:
                for _ in range(iterations):
                    try:
                        verdicts.extend(exchange(net, initiator, target, bits, 1, keep_keys=True).verdicts)
                    except ZtqrError as exc:
                        failures.append(f"{mode}/{bits}: {type(exc).__name__}: {exc}")
            records.extend(net.records())
        finally:
            net.close()
    result = BenchResult(records, summarize(records), failures, verdicts)
    if out is not None:
        result.csv_path = write_bench_csv(records, out)
    return result


# ---------------------------------------------------------------------- noise injection

@dataclass
class NoiseVerdict:
    amplification: int
    error_scale: float
    threshold: int
    injected_per_coeff: int
    predicted_failure: bool
    recovered_equal: bool
    detected_by_harness: bool
    protocol_error: str | None = None

    @property
    def attack_succeeded(self) -> bool:
        return not self.recovered_equal


def noise_tamper(amplification: int, error_scale: float, seed: int = 0):
    """Tamper function for a malicious forwarder.

    Adds ``amplification`` fresh encryptions of the all-zero key plus a raw
    ciphertext whose c1 coefficients all equal ``error_scale * threshold``.
    Every added term encrypts zero, so only the noise changes.  A positive
    shift is used on purpose: with p odd, a shift of -1 turns 0 into p - 1,
    which is even and would leave that bit intact.
    """
    rng = np.random.default_rng(seed)

    def tamper(ct: Ciphertext, pk: PublicKey) -> Ciphertext:
        params = pk.params
        zero = encode(BitKey((0,), "qkd-link"), params)
        for _ in range(amplification):
            ct = hadd(ct, encrypt(pk, zero, rng))
        magnitude = int(round(error_scale * params.decryption_threshold))
        if magnitude:
            ct = hadd(ct, raw_ciphertext(params, [magnitude] * params.n))
        return ct

    return tamper


def inject_noise(topo: TopologyConfig, amplification: int = 0, error_scale: float = 0.0, *,
                 malicious_relay: str | None = None, key_bits: int = 256,
                 hooks_enabled: bool = True, net: InProcessNetwork | None = None) -> NoiseVerdict:
    """One exchange through a relay that inflates the ciphertext noise.

    The relays have no way to notice; only the harness's equality check does.
    """
    if not hooks_enabled:
        raise HookDisabledError("noise injection needs test hooks enabled")
    own = net is None
    if own:
        net = up_in_process(with_overrides(topo, mode=ZERO_TRUST), test_hooks=True)
    try:
        saes = sorted(net.topology.sae_directory)
        alice, bob = saes[0], saes[-1]
        path = net.topology.path(net.topology.sae_directory[alice], net.topology.sae_directory[bob])
        if len(path) < 3 and malicious_relay is None:
            raise ConfigError("noise injection needs at least one forwarding relay")
        bad = malicious_relay or path[len(path) // 2]
        relay = net.relays[bad]
        relay.install_tamper(noise_tamper(amplification, error_scale,
                                          component_seed(net.topology.seed, f"tamper:{bad}")))
        params = relay._dest_key(path[-1]).params
        threshold = params.decryption_threshold
        magnitude = int(round(error_scale * threshold))
        # 2 encryptions at the origin, 2 per forwarder, 1 at the terminal
        fresh_terms = 2 * (len(path) - 1) + 1 + amplification
        predicted = magnitude - fresh_terms * params.fresh_noise_bound() > threshold
        try:
            rep = exchange(net, alice, bob, key_bits, 1)
            equal, err = rep.verdicts[0].equal, None
        except ZtqrError as exc:
            equal, err = False, f"{type(exc).__name__}: {exc}"
        finally:
            relay.install_tamper(None)
        return NoiseVerdict(amplification, error_scale, threshold, magnitude, predicted, equal,
                            detected_by_harness=not equal and err is None, protocol_error=err)
    finally:
        if own:
            net.close()


__all__ = ["BenchResult", "ExchangeReport", "ExchangeVerdict", "HOMOMORPHIC_OPS", "NoiseVerdict", "bench",
           "exchange", "format_summary", "inject_noise", "mode_of", "noise_tamper", "summarize",
           "write_bench_csv"]
