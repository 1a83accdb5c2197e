"""Command-line entry point.

Exit codes: 0 when every check passed, 1 when a violation or
non-compliance was found, 2 on usage or parse errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from assemblynet import kvfile
from assemblynet.assembly import MalformedManifest, Verdict, REQUIREMENTS, check_manifest, parse_manifest
from assemblynet.sim import InvalidScenario, check_invariants, load_scenario, run
from assemblynet.sim.metrics import timeline_csv
from assemblynet.throttle import critical_mass
from assemblynet.visibility import BoardFormatError, export_board, first_broken_index, parse_board_export

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2
SEED_ENV = "ASSEMBLYNET_SEED"


@dataclass
class CommandOutcome:
    exit_code: int
    report: str
    artifacts: list[Path] = field(default_factory=list)


def cmd_check(manifest_path: str | Path) -> CommandOutcome:
    path = Path(manifest_path)
    try:
        manifest = parse_manifest(path.read_text(encoding="utf-8"))
    except OSError as exc:
        return CommandOutcome(EXIT_USAGE, f"{path}: {exc.strerror}")
    except UnicodeDecodeError:
        return CommandOutcome(EXIT_USAGE, f"{path}: not UTF-8")
    except kvfile.ParseError as exc:
        return CommandOutcome(EXIT_USAGE, f"{path}:{exc.line}:{exc.column}: {exc.message}")
    except MalformedManifest as exc:
        return CommandOutcome(EXIT_USAGE, f"{path}: malformed manifest: {exc}")
    report = check_manifest(manifest)
    lines = []
    for node in REQUIREMENTS:
        verdict = report.verdicts[node]
        line = f"{node}: {verdict.value.upper()}"
        if verdict is Verdict.FAIL:
            line += f" ({report.reasons[node]})"
        lines.append(line)
    lines.append("overall: " + ("COMPLIANT" if report.compliant else "NON-COMPLIANT"))
    return CommandOutcome(EXIT_OK if report.compliant else EXIT_VIOLATION, "\n".join(lines))


def _summary(trace, violations: list[str]) -> str:
    cfg = trace.config
    m = trace.metrics
    n_crit = critical_mass(cfg.capacity, cfg.rate)
    relation = "below" if cfg.participants < n_crit else "at or above"
    lines = [
        f"seed: {cfg.seed}",
        f"participants: {cfg.participants}",
        f"target capacity: {cfg.capacity} req/s, queue max {cfg.queue_max}",
        f"per-credential rate: {cfg.rate} req/s, burst {cfg.burst}",
        f"critical mass: {n_crit} ({cfg.participants} participants is {relation} it)",
        f"manifest compliant: {'yes' if trace.compliant else 'no'}",
        f"window ends: {m.window_ends}",
        f"first admission: {m.commenced_at}",
        f"availability: {float(m.availability):.6f} ({m.down_ticks} of {m.duration} ticks down)",
    ]
    if m.first_down_at is not None and m.commenced_at is not None:
        lines.append(f"target down after: {m.first_down_at - m.commenced_at} s")
    lines += [
        f"visibility fraction: {m.visibility_fraction}",
        f"offered: {m.offered}, admitted: {m.total_admitted}, delivered: {m.delivered}",
        "rejects: " + (", ".join(f"{k}={v}" for k, v in sorted(m.rejects.items())) or "none"),
        f"revocations: {len(m.revocations)}",
        f"gossip rounds to converge: {m.gossip_rounds}",
        f"board entries: {len(trace.board)}",
        "invariants: " + ("all held" if not violations else f"{len(violations)} violated"),
    ]
    lines += [f"  - {v}" for v in violations]
    return "\n".join(lines) + "\n"


def cmd_simulate(scenario_path: str | Path, out: str | Path | None = None, seed: int | None = None) -> CommandOutcome:
    path = Path(scenario_path)
    try:
        config = load_scenario(path)
    except OSError as exc:
        return CommandOutcome(EXIT_USAGE, f"{path}: {exc.strerror}")
    except kvfile.ParseError as exc:
        return CommandOutcome(EXIT_USAGE, f"{path}:{exc.line}:{exc.column}: {exc.message}")
    except InvalidScenario as exc:
        return CommandOutcome(EXIT_USAGE, f"{path}: invalid scenario: {exc}")
    if seed is None and os.environ.get(SEED_ENV):
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError:
            return CommandOutcome(EXIT_USAGE, f"{SEED_ENV} is not an integer")
    if seed is not None:
        config = dataclasses.replace(config, seed=seed)
    try:
        trace = run(config)
    except InvalidScenario as exc:
        return CommandOutcome(EXIT_USAGE, f"{path}: invalid scenario: {exc}")
    violations = check_invariants(trace)
    summary = _summary(trace, violations)

    out_dir = Path(out) if out is not None else Path(path.stem + "-out")
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {
        "events.log": trace.event_log(),
        "timeline.csv": timeline_csv(trace.metrics),
        "summary.txt": summary,
        "board.txt": export_board(trace.board),
    }
    artifacts = []
    for name, content in files.items():
        target = out_dir / name
        target.write_text(content, encoding="utf-8", newline="\n")
        artifacts.append(target)
    return CommandOutcome(EXIT_VIOLATION if violations else EXIT_OK, summary.rstrip("\n"), artifacts)


def verify_board_text(text: str) -> CommandOutcome:
    try:
        entries = parse_board_export(text)
    except BoardFormatError as exc:
        return CommandOutcome(EXIT_USAGE, f"malformed board export: {exc}")
    broken = first_broken_index(entries)
    if broken is not None:
        return CommandOutcome(EXIT_VIOLATION, f"chain broken at index {broken}")
    return CommandOutcome(EXIT_OK, f"chain intact: {len(entries)} entries")


def verify_board_bytes(data: bytes) -> CommandOutcome:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        return CommandOutcome(EXIT_USAGE, "malformed board export: not UTF-8")
    return verify_board_text(text)


def cmd_board_verify(board_path: str | Path) -> CommandOutcome:
    path = Path(board_path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        return CommandOutcome(EXIT_USAGE, f"{path}: {exc.strerror}")
    return verify_board_bytes(data)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="assemblynet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("check", help="check a manifest against the assembly requirements")
    p.add_argument("file")
    p = sub.add_parser("simulate", help="run a scenario and write its event log and metrics")
    p.add_argument("file")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--seed", type=int)
    p = sub.add_parser("board-verify", help="verify an exported board's hash chain")
    p.add_argument("file")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.command == "check":
        outcome = cmd_check(args.file)
    elif args.command == "simulate":
        outcome = cmd_simulate(args.file, args.out, args.seed)
    else:
        outcome = cmd_board_verify(args.file)
    stream = sys.stdout if outcome.exit_code != EXIT_USAGE else sys.stderr
    print(outcome.report, file=stream)
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
