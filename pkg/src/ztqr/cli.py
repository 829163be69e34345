"""``ztqr`` command line."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Sequence

from .errors import ZtqrError
from .fhe import PROFILES

log = logging.getLogger("ztqr")


def _topology(args: argparse.Namespace):
    from .harness import load_topology, with_overrides
    topo = load_topology(args.topology)
    return with_overrides(topo, seed=args.seed, profile=args.profile, mode=args.mode)


def _out(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------- commands

def cmd_up(args: argparse.Namespace) -> int:
    from .harness import up
    topo = _topology(args)
    kw: dict[str, Any] = {}
    if args.deployment == "multi-process":
        kw = {"base_port": args.base_port, "workdir": _out(args) / "network"}
    net = up(topo, args.deployment, **kw)
    try:
        health = net.health()
        for comp, ok in sorted(health.items()):
            print(f"{comp:<20} {'healthy' if ok else 'DOWN'}")
        print(f"{len(topo.relays)} relays, {len(topo.links)} links, registry up "
              f"({args.deployment}, profile {topo.profile}, mode {topo.mode})")
        if args.hold:
            print(f"holding for {args.hold:.0f}s (Ctrl-C to stop)")
            try:
                time.sleep(args.hold)
            except KeyboardInterrupt:
                pass
        return 0 if all(health.values()) else 1
    finally:
        net.close()


def cmd_exchange(args: argparse.Namespace) -> int:
    from .harness import exchange, up
    topo = _topology(args)
    kw = {"base_port": args.base_port} if args.deployment == "multi-process" else {}
    net = up(topo, args.deployment, **kw)
    try:
        rep = exchange(net, args.initiator, args.target, args.bits, args.count)
    finally:
        net.close()
    path = _out(args) / "exchange.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "key_ID", "equal", "void_reached_originator"])
        for v in rep.verdicts:
            w.writerow([v.index, v.key_ID, int(v.equal), int(v.void_reached_originator)])
    print(f"{rep.equal_count}/{rep.count} exchanges recovered the issued key "
          f"({args.bits}-bit, {args.initiator} -> {args.target}); voids complete: {rep.voids_complete}")
    print(f"verdicts written to {path}")
    return 0 if rep.all_equal and rep.voids_complete else 1


def cmd_bench(args: argparse.Namespace) -> int:
    from .harness import bench, format_summary
    from .harness.report import format_tables, report
    topo = _topology(args)
    out = _out(args)
    modes = ["zero-trust", "plaintext-baseline"] if args.modes == "both" else [args.modes]
    res = bench(topo, args.iterations, args.bits, modes, out=out / "bench.csv")
    print(format_summary(res.summary))
    for f in res.failures:
        print(f"exchange failed: {f}", file=sys.stderr)
    mismatches = sum(not v.equal for v in res.verdicts)
    print(f"\n{len(res.records)} records -> {res.csv_path}; {mismatches} key mismatches")
    if args.report:
        rep = report(res.csv_path, out / "report")
        print(format_tables(rep))
        for name, p in rep.figures.items():
            print(f"figure {name}: {p}")
    return 0 if not res.failures and not mismatches else 1


def cmd_inject_noise(args: argparse.Namespace) -> int:
    from .harness import inject_noise
    topo = _topology(args)
    v = inject_noise(topo, args.amplification, args.error_scale, malicious_relay=args.relay,
                     key_bits=args.bits, hooks_enabled=args.test_hooks)
    print(json.dumps({
        "amplification": v.amplification, "error_scale": v.error_scale, "threshold": v.threshold,
        "injected_per_coeff": v.injected_per_coeff, "predicted_failure": v.predicted_failure,
        "recovered_equal": v.recovered_equal, "detected_by_harness": v.detected_by_harness,
        "protocol_error": v.protocol_error}, indent=2))
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    from .harness.report import format_tables, report
    rep = report(Path(args.csv), _out(args))
    print(format_tables(rep))
    for name in rep.tables:
        print(f"{name}: {rep.tables[name]}  {rep.figures[name]}")
    return 0


def cmd_keygen(args: argparse.Namespace) -> int:
    import numpy as np

    from .fhe import gen_params, keygen
    from .relay import write_keypair
    params = gen_params(args.profile or "desk")
    rng = np.random.default_rng(args.seed)
    sk, pk = keygen(params, rng)
    target = Path(args.state_dir) if args.state_dir else _out(args) / "keys"
    write_keypair(target, params, sk, pk)
    print(f"wrote {params.security_profile} keypair (n={params.n}, {params.q.bit_length()}-bit q) to {target}")
    return 0


def cmd_registry(args: argparse.Namespace) -> int:
    from .fhe import serialize_params, serialize_public_key
    from .registry import DirectoryRegistry, create_registry_app, open_registry
    from .relay import load_keypair
    if args.registry_cmd == "serve":
        import uvicorn
        app = create_registry_app(DirectoryRegistry(args.dir))
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
        return 0
    reg = open_registry(args.endpoint)
    if args.registry_cmd == "push":
        params, _, pk = load_keypair(Path(args.state_dir))
        rec = reg.publish(args.relay_id, serialize_public_key(pk), serialize_params(params))
        print(f"published {args.relay_id} digest {rec.content_digest}")
        return 0
    rec = reg.fetch(args.relay_id)
    rec.verify()
    params, _ = rec.load()
    print(json.dumps({"relay_id": rec.relay_id, "digest": rec.content_digest,
                      "profile": params.security_profile, "n": params.n,
                      "q_bits": params.q.bit_length(), "p": params.p}, indent=2))
    if args.save:
        Path(args.save).write_text(json.dumps(rec.to_json()))
    return 0


def cmd_serve_kme(args: argparse.Namespace) -> int:
    import uvicorn

    from .harness.network import build_links, ensure_available
    from .kme_service import create_kme_app
    topo = _topology(args)
    pools, kmes = build_links(topo)

    def advance(seconds: float) -> dict[str, int]:
        return {lid: pool.replenish(seconds) for lid, pool in pools.items()}

    def ensure(number: int) -> dict[str, float]:
        return {"advanced_s": ensure_available(pools, number)}

    uvicorn.run(create_kme_app(kmes, advance, ensure), host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_serve_relay(args: argparse.Namespace) -> int:
    import uvicorn

    from .etsi014 import Etsi014Client
    from .metrics import Recorder
    from .registry import open_registry
    from .relay import HttpTransport, Relay
    from .relay.service import create_relay_app
    topo = _topology(args)
    cfg = topo.relay(args.relay_id)
    cfg.state_dir = Path(args.state_dir) if args.state_dir else None
    cfg.test_hooks = args.test_hooks
    cfg.registry_endpoint = args.registry
    kmes = {ln.link_id: Etsi014Client(f"{args.kme_host}/kme/{ln.kme_id}", sae_id=cfg.relay_id, timeout=120.0)
            for ln in cfg.links}
    peers = json.loads(args.peers) if args.peers else {}
    relay = Relay(cfg, kmes=kmes, registry=open_registry(args.registry), transport=HttpTransport(peers),
                  recorder=Recorder())
    relay.startup()
    uvicorn.run(create_relay_app(relay), host=args.host, port=args.port, log_level="warning")
    return 0


# ---------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ztqr", description="Zero-trust QKD relay network harness.")
    p.add_argument("--topology", help="topology YAML (default: bundled five-relay testbed)")
    p.add_argument("--seed", type=int, help="override the topology seed")
    p.add_argument("--profile", choices=PROFILES, help="FHE security profile")
    p.add_argument("--mode", choices=("zero-trust", "plaintext-baseline"))
    p.add_argument("--out", default="ztqr-out", help="output directory (default: %(default)s)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True,
                           metavar="{up,exchange,bench,inject-noise,report,keygen,registry}")

    def deploy_flags(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--deployment", choices=("in-process", "multi-process"), default="in-process")
        sp.add_argument("--base-port", type=int, default=18400)

    sp = sub.add_parser("up", help="start a network and report component health")
    deploy_flags(sp)
    sp.add_argument("--hold", type=float, default=0.0, help="keep running for this many seconds")
    sp.set_defaults(fn=cmd_up)

    sp = sub.add_parser("exchange", help="run key exchanges and check recovery")
    deploy_flags(sp)
    sp.add_argument("--from", dest="initiator", default="SAE-A")
    sp.add_argument("--to", dest="target", default="SAE-B")
    sp.add_argument("--bits", type=int, default=256, choices=(128, 256))
    sp.add_argument("--count", type=int, default=10)
    sp.set_defaults(fn=cmd_exchange)

    sp = sub.add_parser("bench", help="benchmark both modes and write bench.csv")
    sp.add_argument("--iterations", type=int, default=20)
    sp.add_argument("--bits", type=int, nargs="+", default=[128, 256], choices=(128, 256))
    sp.add_argument("--modes", choices=("both", "zero-trust", "plaintext-baseline"), default="both")
    sp.add_argument("--no-report", dest="report", action="store_false", help="skip tables and figures")
    sp.set_defaults(fn=cmd_bench)

    sp = sub.add_parser("inject-noise", help="noise-injection attack through a malicious forwarder")
    sp.add_argument("--amplification", type=int, default=0, help="extra zero encryptions added")
    sp.add_argument("--error-scale", type=float, default=0.0,
                    help="raw error per coefficient, as a multiple of the decryption threshold")
    sp.add_argument("--relay", help="malicious relay (default: middle of the path)")
    sp.add_argument("--bits", type=int, default=256, choices=(128, 256))
    sp.add_argument("--test-hooks", action="store_true", help="enable the test-only tamper hook")
    sp.set_defaults(fn=cmd_inject_noise)

    sp = sub.add_parser("report", help="aggregate a bench CSV into tables and figures")
    sp.add_argument("csv")
    sp.set_defaults(fn=cmd_report)

    sp = sub.add_parser("keygen", help="provision a relay keypair offline")
    sp.add_argument("--state-dir", help="where to write the keys (default: OUT/keys)")
    sp.set_defaults(fn=cmd_keygen)

    sp = sub.add_parser("registry", help="public-key registry service and client")
    rsub = sp.add_subparsers(dest="registry_cmd", required=True)
    r = rsub.add_parser("serve")
    r.add_argument("--dir", required=True)
    r.add_argument("--host", default="127.0.0.1")
    r.add_argument("--port", type=int, default=18400)
    r = rsub.add_parser("push")
    r.add_argument("--endpoint", required=True)
    r.add_argument("--relay-id", required=True)
    r.add_argument("--state-dir", required=True)
    r = rsub.add_parser("fetch")
    r.add_argument("--endpoint", required=True)
    r.add_argument("--relay-id", required=True)
    r.add_argument("--save", help="write the raw record JSON here")
    sp.set_defaults(fn=cmd_registry)

    sp = sub.add_parser("serve-kme")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, required=True)
    sp.set_defaults(fn=cmd_serve_kme)

    sp = sub.add_parser("serve-relay")
    sp.add_argument("--relay-id", required=True)
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, required=True)
    sp.add_argument("--registry", required=True)
    sp.add_argument("--kme-host", required=True)
    sp.add_argument("--peers", help="JSON map relay_id -> base URL")
    sp.add_argument("--state-dir")
    sp.add_argument("--test-hooks", action="store_true")
    sp.set_defaults(fn=cmd_serve_relay)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except ZtqrError as exc:
        where = "".join(f" [{k}={v}]" for k, v in (("relay", exc.relay_id), ("exchange", exc.exchange_id)) if v)
        print(f"error: {type(exc).__name__}: {exc.message}{where}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
