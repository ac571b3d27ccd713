"""Command-line entry point: match, encode, bid, serve, simulate.

Exit status is 0 on success, 2 for bad input (missing or malformed files,
invalid settings) and 1 for anything unexpected.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from tenderbroker import __version__
from tenderbroker.bidding import CompletionLimits, generate_bids
from tenderbroker.matching import (
    AttributeSpace,
    CapabilityMatrix,
    MatchingError,
    RequirementMatrix,
    eligible,
    match_vector,
    unspecified_count,
    validate_requirement_matrix,
)
from tenderbroker.model import (
    ModelError,
    build_attribute_space,
    encode_catalog,
    encode_tender,
    open_requirements,
    parse_catalog,
    parse_description,
)

EXIT_OK, EXIT_INTERNAL, EXIT_INVALID = 0, 1, 2


class UsageError(Exception):
    """Bad input; reported on stderr with exit status 2."""


def _read(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except FileNotFoundError:
        raise UsageError(f"file not found: {path}") from None
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _json(path: str) -> dict:
    try:
        data = json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}") from None
    if not isinstance(data, dict):
        raise UsageError(f"{path}: expected a JSON object")
    return data


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _matrix_text(name: str, entries) -> list[str]:
    return [f"{name} ="] + ["  " + " ".join(f"{int(v):>2d}" for v in row) for row in entries]


def cmd_match(args) -> int:
    capability = CapabilityMatrix.from_dict(_json(args.capability))
    requirement = RequirementMatrix.from_dict(_json(args.requirement))
    if args.space:
        space = AttributeSpace.from_dict(_json(args.space))
        capability.check(space)
        report = validate_requirement_matrix(requirement, space)
        if not report.ok:
            raise UsageError("; ".join(f"row {v.row}: {v.kind}" for v in report.violations))
    mu = list(match_vector(capability, requirement))
    ok = eligible(mu)
    nu = unspecified_count(requirement)
    if args.json:
        _emit({"supplier_id": capability.supplier_id, "tender_id": requirement.tender_id,
               "mu": mu, "eligible": ok, "nu": str(nu)})
    else:
        print(f"mu = [{', '.join(str(v) for v in mu)}]")
        print(f"eligible = {'true' if ok else 'false'}")
    return EXIT_OK


def _catalogs(paths) -> list:
    return [parse_catalog(_read(p)) for p in paths or ()]


def cmd_encode(args) -> int:
    desc = parse_description(_read(args.description))
    catalogs = _catalogs(args.catalog)
    space = AttributeSpace.from_dict(_json(args.space)) if args.space else build_attribute_space(desc, catalogs)
    requirement = encode_tender(desc, space)
    capabilities = [encode_catalog(c, space) for c in catalogs]
    if args.json:
        _emit({
            "attribute_space": space.to_dict(),
            "requirement": requirement.to_dict(),
            "capabilities": [c.to_dict() for c in capabilities],
            "open_requirements": [list(pair) for pair in open_requirements(desc)],
            "nu": str(unspecified_count(requirement)),
        })
        return EXIT_OK
    print(f"attributes ({space.m} x {space.p}):")
    for i, attr in enumerate(space.attributes):
        print(f"  A{i + 1} {attr.name}: {', '.join(attr.realizations)}")
    for line in _matrix_text(f"T[{requirement.tender_id}]", requirement.entries):
        print(line)
    for cap in capabilities:
        for line in _matrix_text(f"C[{cap.supplier_id}]", cap.entries):
            print(line)
    print(f"nu = {unspecified_count(requirement)}")
    return EXIT_OK


class _Tender:
    def __init__(self, tender_id, description):
        self.tender_id = tender_id
        self.description = description


def cmd_bid(args) -> int:
    desc = parse_description(_read(args.tender))
    catalog = parse_catalog(_read(args.catalog))
    space = AttributeSpace.from_dict(_json(args.space)) if args.space else build_attribute_space(desc, [catalog])
    limits = CompletionLimits(args.max_candidates, args.max_depth, args.max_bids)
    bids = generate_bids(_Tender(args.tender_id or desc.id, desc), catalog, space, limits)
    if args.json:
        _emit([b.to_dict() for b in bids])
        return EXIT_OK
    if not bids:
        print(f"{catalog.provider_id}: no bids")
        return EXIT_OK
    for bid in bids:
        print(f"{bid.bid_id}  price={bid.price}  managed={bid.summary['managed_services']}  "
              f"implementations={bid.summary['implementations']}")
    return EXIT_OK


def cmd_serve(args) -> int:
    from tenderbroker.broker.config import load_config

    config = load_config(args.config)
    overrides = {k: v for k, v in (("listen", args.listen), ("log_path", args.log_path)) if v is not None}
    config = replace(config, **overrides)
    if args.print_config:
        _emit(config.to_dict())
        return EXIT_OK

    import uvicorn

    from tenderbroker.broker.api import HttpForwarder, create_app
    from tenderbroker.broker.core import Broker

    broker = Broker.open(config.log_path, fsync=config.fsync, limits=config.limits, forwarder=HttpForwarder())
    uvicorn.run(create_app(broker), host=config.host, port=config.port)
    return EXIT_OK


def cmd_simulate(args) -> int:
    from tenderbroker.simulator import SimulationConfig, run_experiment, write_csvs

    config = SimulationConfig.from_toml(args.config) if args.config else SimulationConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.interval is not None:
        config = replace(config, capability_interval=tuple(args.interval))
    result = run_experiment(config)
    for path in write_csvs(result, args.out_dir):
        print(f"wrote {path}")
    print(f"mean_success = {result.mean_success!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tenderbroker", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("match", help="matching vector and eligibility of a capability/requirement pair")
    p.add_argument("--capability", required=True, help="capability matrix JSON")
    p.add_argument("--requirement", required=True, help="requirement matrix JSON")
    p.add_argument("--space", help="attribute space JSON to check the matrices against")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("encode", help="encode a description (and catalogs) as matrices")
    p.add_argument("--description", required=True, help="service description JSON")
    p.add_argument("--catalog", action="append", help="provider catalog JSON (repeatable)")
    p.add_argument("--space", help="attribute space JSON; built from the inputs when omitted")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("bid", help="generate one provider's bids for a tender")
    p.add_argument("--tender", required=True, help="partial service description JSON")
    p.add_argument("--catalog", required=True, help="provider catalog JSON")
    p.add_argument("--space", help="attribute space JSON; built from the inputs when omitted")
    p.add_argument("--tender-id", help="defaults to the description id")
    p.add_argument("--max-candidates", type=int, default=CompletionLimits.max_candidates)
    p.add_argument("--max-depth", type=int, default=CompletionLimits.max_depth)
    p.add_argument("--max-bids", type=int, default=CompletionLimits.max_bids)
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=cmd_bid)

    p = sub.add_parser("serve", help="run the broker HTTP service")
    p.add_argument("--config", help="TOML settings; TENDERBROKER_* variables override it")
    p.add_argument("--listen", help="host:port")
    p.add_argument("--log-path", help="event log file")
    p.add_argument("--print-config", action="store_true", help="print the effective settings and exit")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("simulate", help="run the Monte Carlo matching experiment and write CSVs")
    p.add_argument("--config", help="TOML simulation settings")
    p.add_argument("--out-dir", required=True, help="directory for success.csv, unspecified.csv, raw.csv")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--interval", type=float, nargs=2, metavar=("LO", "HI"),
                   help="override the capability interval")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ModelError, MatchingError, KeyError, ValueError) as exc:
        print(f"tenderbroker {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"tenderbroker {args.command}: error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # reported, not re-raised: the exit code is the contract
        logging.getLogger("tenderbroker").debug("internal error", exc_info=True)
        print(f"tenderbroker {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
