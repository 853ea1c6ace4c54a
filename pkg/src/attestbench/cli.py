"""Command-line front end.

Exit codes: 0 success (verified, PASS, accept), 1 verification or scenario
failure and transport errors, 2 protocol reject, 3 usage error.
"""

from __future__ import annotations

import argparse
import os
import random
import sys
from pathlib import Path

from . import checker, protocol, scenarios, sim, swatt
from .layout import default_layout, load_layout, validate_layout

EXIT_OK, EXIT_FAIL, EXIT_REJECT, EXIT_USAGE = 0, 1, 2, 3
KEY_ENV = "VRASED_KEY_FILE"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _layout(args, auth: bool):
    if args.layout:
        try:
            layout = load_layout(args.layout)
        except (OSError, ValueError) as e:
            raise UsageError(f"bad layout file: {e}") from None
    else:
        layout = default_layout(auth)
    problems = validate_layout(layout)
    if problems:
        raise UsageError("invalid layout: " + "; ".join(problems))
    if auth and not layout.has_ctr:
        raise UsageError("--auth needs a layout with ctr_min/ctr_max/auth_addr")
    if not auth:
        layout = layout.without_auth()
    return layout


def _read_file(path: str, what: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise UsageError(f"cannot read {what} {path}: {e.strerror}") from None


def _key(args) -> bytes:
    path = args.key or os.environ.get(KEY_ENV)
    if not path:
        raise UsageError(f"no key: pass --key or set {KEY_ENV}")
    key = _read_file(path, "key file")
    if len(key) != swatt.KEY_LEN:
        raise UsageError(f"key file must hold exactly 64 bytes, got {len(key)}")
    return key


def _image(args) -> bytes:
    image = _read_file(args.image, "image")
    if not image:
        raise UsageError("image file is empty")
    return image


def _address(text: str) -> tuple[str, int]:
    try:
        return protocol.parse_address(text)
    except ValueError as e:
        raise UsageError(str(e)) from None


# -- check -------------------------------------------------------------------

def cmd_check(args) -> int:
    layout = _layout(args, args.auth)
    monitor = None
    if args.mutate:
        try:
            mut = checker.Mutation.parse(args.mutate)
            monitor = checker.mutate(checker.composed_monitor(layout), mut)
        except ValueError as e:
            raise UsageError(f"bad mutation: {e}") from None
    try:
        reports = checker.check_all(layout, args.auth, monitor, args.spec or None)
    except ValueError as e:
        raise UsageError(str(e)) from None
    print(checker.CSV_HEADER)
    for r in reports:
        print(checker.csv_line(r))
    failed = [r for r in reports if isinstance(r.result, checker.Counterexample)]
    out_dir = Path(args.out_dir)
    for r in failed:
        path = out_dir / f"counterexample_{r.spec_id:02d}.txt"
        path.write_text(checker.dump_counterexample(r.result, r.spec_id, args.mutate or ""))
        print(f"# spec {r.spec_id:02d} counterexample written to {path}")
    return EXIT_FAIL if failed else EXIT_OK


# -- scenario ----------------------------------------------------------------

def cmd_scenario(args) -> int:
    if args.all == bool(args.name):
        raise UsageError("give a scenario name or --all")
    names = list(scenarios.SCENARIOS) if args.all else [args.name]
    for n in names:
        if n not in scenarios.SCENARIOS:
            raise UsageError(f"unknown scenario {n!r}; known: {', '.join(scenarios.SCENARIOS)}")
    passed = 0
    for n in names:
        r = scenarios.run_scenario(n)
        passed += r.passed
        line = r.line()
        if args.trace_dir:
            path = Path(args.trace_dir) / f"{n}.csv"
            sim.write_trace(r.trace, path)
            line += f" [trace {path}]"
        print(line)
    if len(names) > 1:
        print(f"{passed}/{len(names)} PASS")
    return EXIT_OK if passed == len(names) else EXIT_FAIL


# -- prove / verify ----------------------------------------------------------

def cmd_prove(args) -> int:
    layout = _layout(args, args.auth)
    prover = protocol.Prover(layout, _key(args), _image(args))
    address = _address(args.listen)

    def ready(addr):
        print(f"listening on {addr[0]}:{addr[1]}", flush=True)

    try:
        protocol.serve(prover, address, args.connections or None, ready)
    except OSError as e:
        print(f"transport error: {e}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _region(text: str | None) -> tuple[int, int] | None:
    if text is None:
        return None
    lo, sep, hi = text.partition(":")
    try:
        if not sep:
            raise ValueError
        return int(lo, 0), int(hi, 0)
    except ValueError:
        raise UsageError(f"--region expects lo:hi, got {text!r}") from None


def cmd_verify(args) -> int:
    layout = _layout(args, args.auth)
    region = _region(args.region)
    if region is not None and not args.auth:
        raise UsageError("--region needs --auth")
    verifier = protocol.Verifier(_key(args), _image(args), image_base=layout.ar_min,
                                 auth=args.auth, seed=args.seed)
    address = _address(args.connect)
    rounds = [False, True] if args.reuse_challenge else [False]
    verdict = None
    for reuse in rounds:
        req = verifier.make_request(region, reuse=reuse)
        try:
            reply = protocol.query(address, req, timeout=args.timeout)
        except (OSError, protocol.MalformedFrame) as e:
            print(f"transport error: {e}", file=sys.stderr)
            return EXIT_FAIL
        verdict = verifier.check(req, reply)
        label = "replayed challenge" if reuse else "challenge"
        print(f"{label} {req.chal.hex()}: {'Accept' if verdict.accepted else 'Reject'}"
              + ("" if verdict.accepted else f" ({verdict.reason})"))
    return EXIT_OK if verdict.accepted else EXIT_REJECT


# -- simulate ----------------------------------------------------------------

def _pairs(items, what: str):
    out = []
    for text in items or ():
        parts = text.split(":")
        try:
            out.append(tuple(int(p, 0) for p in parts))
        except ValueError:
            raise UsageError(f"bad {what} {text!r}") from None
    return out


def cmd_simulate(args) -> int:
    layout = _layout(args, args.auth)
    rng = random.Random(args.seed) if args.seed is not None else random.SystemRandom()
    key = _key(args) if (args.key or os.environ.get(KEY_ENV)) else bytes(rng.getrandbits(8) for _ in range(64))
    image = _image(args) if args.image else None
    program = None
    if args.program:
        try:
            program = sim.assemble_for(_read_file(args.program, "program").decode(), layout, sim.PROGRAM_BASE)
        except ValueError as e:
            raise UsageError(f"assembly failed: {e}") from None
    try:
        m = sim.load(layout, program, key=key, ar_contents=image,
                     monitors_enabled=not args.no_monitors)
    except sim.LoadError as e:
        raise UsageError(str(e)) from None
    m.schedule_irq(c for (c,) in _pairs(args.irq, "irq cycle"))
    for item in _pairs(args.dma, "dma event"):
        if len(item) not in (2, 3):
            raise UsageError("--dma expects cycle:addr or cycle:addr:value")
        m.schedule_dma(item[0], sim.DmaOp(item[1], len(item) == 3, item[2] if len(item) == 3 else 0))
    status = EXIT_OK
    if args.attest:
        chal = bytes(rng.getrandbits(8) for _ in range(swatt.CHAL_LEN))
        if layout.has_ctr:
            chal = b"\x00" * 15 + b"\x01" + chal[16:]
        token = swatt.auth_token(key, chal) if layout.has_ctr else None
        out = sim.invoke_attestation(m, chal, token=token, max_cycles=args.max_cycles)
        trace = out.trace
        print(f"attestation: {out.status}")
        if out.mac is not None:
            print(f"mac: {out.mac.hex()}")
            if image is not None:
                verifier = protocol.Verifier(key, image, image_base=m.layout.ar_min, auth=layout.has_ctr)
                ok = verifier.check(protocol.Request(chal, token), protocol.Response(protocol.STATUS_OK, out.mac))
                print(f"verifier: {'Accept' if ok.accepted else 'Reject'}")
                status = EXIT_OK if ok.accepted else EXIT_REJECT
        else:
            status = EXIT_REJECT
    else:
        trace = m.run(args.max_cycles, stop="halt" if args.keep_running else "reset")
    first = trace.first_reset()
    print(f"cycles: {len(trace)}  halted: {m.halted}  first reset: {first if first is not None else '-'}")
    for name, check in (("temporal consistency", sim.check_temporal_consistency),
                        ("key confidentiality", sim.check_key_confidentiality),
                        ("reset behaviour", sim.check_reset_behaviour)):
        res = check(trace)
        print(f"{name}: {'holds' if res.holds else f'violated at cycle {res.cycle} ({res.detail})'}")
    if args.trace_out:
        sim.write_trace(trace, args.trace_out)
        print(f"trace written to {args.trace_out}")
    return status


# -- wiring ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--layout", help="layout file (name = value lines)")
    common.add_argument("--auth", action="store_true", help="authenticated variant with CTR")
    common.add_argument("--seed", type=int, help="seed for all randomness")

    p = _Parser(prog="attestbench", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("check", parents=[common], help="model-check the composed monitor")
    c.add_argument("--spec", type=int, action="append", help="only this spec id (repeatable)")
    c.add_argument("--mutate", help="apply a mutation such as keyac:drop-guard:0 first")
    c.add_argument("--out-dir", default=".", help="where counterexample files go")
    c.set_defaults(func=cmd_check)

    s = sub.add_parser("scenario", parents=[common], help="run shipped simulator scenarios")
    s.add_argument("name", nargs="?")
    s.add_argument("--all", action="store_true")
    s.add_argument("--trace-dir", help="write each monitored trace as CSV here")
    s.set_defaults(func=cmd_scenario)

    for name, func, flag, what in (("prove", cmd_prove, "--listen", "serve attestation requests"),
                                   ("verify", cmd_verify, "--connect", "challenge a prover")):
        q = sub.add_parser(name, parents=[common], help=f"{what} over TCP")
        q.add_argument(flag, required=True, metavar="HOST:PORT")
        q.add_argument("--key", help=f"64-byte key file (default: ${KEY_ENV})")
        q.add_argument("--image", required=True, help="memory image to attest")
        q.set_defaults(func=func)
    sub.choices["prove"].add_argument("--connections", type=int, default=1,
                                      help="connections to serve, 0 = forever")
    v = sub.choices["verify"]
    v.add_argument("--region", help="attest only lo:hi (authenticated variant)")
    v.add_argument("--reuse-challenge", action="store_true",
                   help="test flag: send a second request repeating the first challenge")
    v.add_argument("--timeout", type=float, default=60.0)

    m = sub.add_parser("simulate", parents=[common], help="run a program on the simulated MCU")
    m.add_argument("--program", help="assembler source (default: a single HALT)")
    m.add_argument("--image", help="bytes to place in AR")
    m.add_argument("--key", help="64-byte key file")
    m.add_argument("--attest", action="store_true", help="run one attestation over AR")
    m.add_argument("--irq", action="append", metavar="CYCLE")
    m.add_argument("--dma", action="append", metavar="CYCLE:ADDR[:VALUE]")
    m.add_argument("--no-monitors", action="store_true", help="debug mode: monitors never reset")
    m.add_argument("--max-cycles", type=int, default=200_000)
    m.add_argument("--keep-running", action="store_true",
                   help="do not stop once the machine has come back from a reset")
    m.add_argument("--trace-out", help="write the cycle trace as CSV")
    m.set_defaults(func=cmd_simulate)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"attestbench: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
