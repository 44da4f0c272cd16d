"""Command-line interface: gateway run / check-config / detect-vpn / version /
stats / provision / bench."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import metadata

from .config import ConfigError, GatewayConfig, load_config
from .daemon import EXIT_CONFIG, EXIT_OK, EXIT_STARTUP, Gateway
from .model import HTTP_CONNECT, HTTP_FORWARD, SOCKS5
from .provisioning import ProvisioningInfo, generate_qr_payload
from .store import SessionStore, StoreError
from .vpn import detect_vpn


def _load(args) -> GatewayConfig:
    if args.config:
        return load_config(args.config)
    return GatewayConfig()


def cmd_run(args) -> int:
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        config = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return Gateway(config).run()


def cmd_check_config(args) -> int:
    try:
        config = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"config OK: http={config.http_port} socks={config.socks_port} "
          f"control={config.control_port} subnet={config.subnet} "
          f"quota={config.quota.mode}")
    return EXIT_OK


def cmd_detect_vpn(args) -> int:
    egress = None
    if args.config:
        try:
            egress = load_config(args.config).egress
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    status = detect_vpn(egress)
    print(json.dumps(status.as_dict()))
    return EXIT_OK


def cmd_version(_args) -> int:
    try:
        version = metadata.version("proxyshare")
    except metadata.PackageNotFoundError:
        version = "unknown"
    print(f"gateway {version}")
    return EXIT_OK


def cmd_stats(args) -> int:
    try:
        config = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    path = args.store or config.store_path
    try:
        store = SessionStore(path)
    except StoreError as exc:
        print(f"store error: {exc}", file=sys.stderr)
        return EXIT_STARTUP
    try:
        rows = store.client_totals()
    finally:
        store.close()
    if args.json:
        print(json.dumps(rows))
    else:
        for row in rows:
            print(f"{row['identifier']:<12} {row['ip']:<16} "
                  f"up={row['bytes_up']} down={row['bytes_down']} "
                  f"sessions={row['session_count']}")
    return EXIT_OK


def cmd_provision(args) -> int:
    try:
        config = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    from .daemon import lan_facing_address
    info = ProvisioningInfo(
        host=lan_facing_address(config), http_port=config.http_port,
        socks_port=config.socks_port, control_port=config.control_port,
        subnet=str(config.subnet), credentials=config.auth)
    print(generate_qr_payload(info))
    return EXIT_OK


def cmd_bench(args) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    from .bench import LoadTestPlan, OriginServer, run_load_test

    plan = LoadTestPlan(
        client_count=args.clients,
        duration_down=args.down,
        duration_up=args.up,
        protocol=args.protocol,
        link_rate_limit=args.rate_limit,
        repetitions=args.reps)

    if args.proxy:
        proxy_host, _, http_port = args.proxy.partition(":")
        http_port = int(http_port)
        socks_port = args.socks_port
        gateway = None
    else:
        # Self-contained: spin up a loopback gateway for the duration.
        config = _load(args) if args.config else GatewayConfig(
            store_path=":memory:", quota=GatewayConfig().quota)
        gateway = Gateway(config, prober=lambda ip: False)
        gateway.start()
        proxy_host = "127.0.0.1"
        http_port = config.http_port
        socks_port = config.socks_port

    origin = OriginServer().start()
    try:
        report = run_load_test(plan, proxy_host, http_port, socks_port,
                               origin.host, origin.port)
    finally:
        origin.stop()
        if gateway is not None:
            gateway.stop()
    print(report.as_table())
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            json.dump(report.as_dict(), fh, indent=2)
        print(f"wrote {args.json_out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gateway",
        description="Share one upstream (VPN) connection with LAN clients "
                    "over HTTP/HTTPS/SOCKS5, with per-client accounting.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="start the gateway daemon")
    p_run.add_argument("--config", help="path to the config file")
    p_run.add_argument("--verbose", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_check = sub.add_parser("check-config", help="validate a config and exit")
    p_check.add_argument("--config", required=True)
    p_check.set_defaults(func=cmd_check_config)

    p_vpn = sub.add_parser("detect-vpn", help="print VPN status as JSON")
    p_vpn.add_argument("--config")
    p_vpn.set_defaults(func=cmd_detect_vpn)

    p_version = sub.add_parser("version")
    p_version.set_defaults(func=cmd_version)

    p_stats = sub.add_parser("stats", help="dump per-client totals from the store")
    p_stats.add_argument("--config")
    p_stats.add_argument("--store", help="store path (overrides config)")
    p_stats.add_argument("--json", action="store_true")
    p_stats.set_defaults(func=cmd_stats)

    p_prov = sub.add_parser("provision", help="print provisioning artifacts")
    p_prov.add_argument("--config")
    p_prov.add_argument("--qr-text", action="store_true",
                        help="print the QR payload URI (default)")
    p_prov.set_defaults(func=cmd_provision)

    p_bench = sub.add_parser("bench", help="throughput/fairness load test")
    p_bench.add_argument("--clients", type=int, default=3)
    p_bench.add_argument("--down", type=float, default=30.0,
                         help="download phase seconds")
    p_bench.add_argument("--up", type=float, default=30.0,
                         help="upload phase seconds")
    p_bench.add_argument("--reps", type=int, default=5)
    p_bench.add_argument("--rate-limit", type=float, default=None,
                         help="aggregate link cap in bits/second")
    p_bench.add_argument("--protocol", default=HTTP_CONNECT,
                         choices=[HTTP_CONNECT, HTTP_FORWARD, SOCKS5])
    p_bench.add_argument("--proxy", help="host:http_port of a running gateway "
                                         "(default: spawn one on loopback)")
    p_bench.add_argument("--socks-port", type=int, default=1080)
    p_bench.add_argument("--config")
    p_bench.add_argument("--json", dest="json_out", metavar="OUT",
                         help="also write the full report as JSON")
    p_bench.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
