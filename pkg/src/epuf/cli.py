"""Command-line front end.

Subcommands:
  characterize   measure precision and helper streams for every challenge window
  evaluate       population quality studies -> CSV reports (+ figures)
  keygen         register challenge windows into an enrollment record file
  auth-demo      honest authentication sessions or an attack scenario

Exit codes: 0 success, 2 configuration error, 3 assertion or run failure.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import figures
from .adversary import SCENARIOS, HarnessConfig, run_scenario
from .config import ConfigError, RunConfig, load_config
from .core import InsufficientBits, Precision, select_precision
from .dramsim import build_device, build_population
from .keygen import register_many, windows_for_segment, write_enrollment_records
from .metrics import (
    ber_sweep, characterize_segment, entropy_profile, reliable_bit_distribution,
    uniqueness_study, write_ber_csv, write_entropy_profile_csv,
    write_reliable_bits_csv, write_uniqueness_csv,
)
from .protocol import Server, ServerDb, enroll, run_session

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAILURE = 3


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epuf", description="entropy-feature DRAM PUF toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, descr in (
        ("characterize", "precision and helper-stream characterization"),
        ("evaluate", "population metrics: error rates, yield, uniqueness"),
        ("keygen", "derive enrollment records with secret keys"),
        ("auth-demo", "run authentication sessions or attack scenarios"),
    ):
        cmd = sub.add_parser(name, help=descr)
        cmd.add_argument("--config", type=Path, default=None, help="flat key = value file")
        cmd.add_argument("--seed", type=int, default=None, help="global seed override")
        cmd.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        cmd.add_argument("--theta", type=int, default=None, help="flip-count threshold override")
        cmd.add_argument("--omega", type=int, default=None,
                         help="characterization read count override")
        if name == "evaluate":
            cmd.add_argument("--scope", choices=["all", "inter-segment", "inter-bank", "inter-chip"],
                             default="all", help="uniqueness scope to evaluate")
            cmd.add_argument("--figures", dest="figures", action="store_true", default=None)
            cmd.add_argument("--no-figures", dest="figures", action="store_false")
        if name == "auth-demo":
            cmd.add_argument("--attack", default=None,
                             help=f"adversary scenario: one of {', '.join(SCENARIOS)}")
            cmd.add_argument("--sessions", type=int, default=None)
    return parser


def _load(args) -> RunConfig:
    overrides = {"seed": args.seed, "theta": args.theta, "omega3": args.omega}
    if getattr(args, "figures", None) is not None:
        overrides["figures"] = args.figures
    if getattr(args, "sessions", None) is not None:
        overrides["sessions"] = args.sessions
    return load_config(args.config, overrides)


def _metadata(cfg: RunConfig, extra: dict | None = None) -> dict:
    meta = {"seed": cfg.seed, "theta": cfg.theta, "omega2": cfg.omega2,
            "omega3": cfg.omega3, "pattern": cfg.pattern}
    if extra:
        meta.update(extra)
    return meta


def cmd_characterize(cfg: RunConfig, out: Path) -> int:
    model = build_device(cfg.seed, cfg.geometry(), **cfg.model_knobs())
    pattern = cfg.input_pattern()
    out.mkdir(parents=True, exist_ok=True)
    pinned = cfg.frac_bits if cfg.frac_bits > 0 else None
    records = []
    precision_rows = []
    geo = cfg.geometry()
    for chip in range(geo.chips):
        for bank in range(geo.banks_per_chip):
            for segment in range(geo.segments_per_bank):
                address = (chip, bank, segment)
                if pinned is None:
                    precision = select_precision(model, address, pattern, cfg.omega2)
                else:
                    precision = Precision(0.0, pinned)
                windows = windows_for_segment(model, precision.frac_bits, address)
                segment_records = register_many(
                    model, windows, pattern, omega2=cfg.omega2, omega3=cfg.omega3,
                    theta=cfg.theta, frac_bits=precision.frac_bits,
                    min_qualified=cfg.min_qualified)
                records.extend(segment_records)
                qualified = sum(int(rec.hs_mask.sum()) for rec in segment_records)
                precision_rows.append((chip, bank, segment, precision.dmax,
                                       precision.frac_bits, len(segment_records), qualified))
    if not records:
        print("characterize: no challenge window qualified enough bits", file=sys.stderr)
        return EXIT_FAILURE
    write_enrollment_records(out / f"crp_dev{cfg.seed}.txt", records)
    with open(out / "precision.csv", "w") as fh:
        fh.write("chip,bank,segment,dmax,frac_bits,windows,qualified_bits\n")
        for row in precision_rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")
    with open(out / "characterize_report.json", "w") as fh:
        json.dump(_metadata(cfg, {"crp_records": len(records)}), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"characterize: {len(records)} challenge windows -> {out}")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, out: Path, scope: str) -> int:
    geo = cfg.geometry()
    pattern = cfg.input_pattern()
    out.mkdir(parents=True, exist_ok=True)
    population = build_population(cfg.seed, cfg.devices, geo, **cfg.model_knobs())
    device0 = population[0]

    reports = ber_sweep(device0, (0, 0, 0), pattern, cfg.temperatures,
                        cfg.reads_per_point, cfg.thetas, cfg.omega2, cfg.omega3)
    write_ber_csv(out / "ber.csv", reports)

    sample = population[:min(len(population), 16)]
    sample_chars = [characterize_segment(m, (0, 0, 0), pattern, cfg.omega2, cfg.omega3)
                    for m in sample]
    write_reliable_bits_csv(out / "reliable_bits.csv",
                            reliable_bit_distribution(sample_chars, (*cfg.thetas, 5)))

    uniqueness_reports = []
    if scope in ("all", "inter-chip"):
        chip_chars = sample_chars + [
            characterize_segment(m, (0, 0, 0), pattern, cfg.omega2, cfg.omega3)
            for m in population[len(sample):]]
        uniqueness_reports.append(uniqueness_study(chip_chars, "inter-chip", theta=cfg.theta))
    if scope in ("all", "inter-bank"):
        bank_chars = [characterize_segment(device0, (0, bank, 0), pattern, cfg.omega2, cfg.omega3)
                      for bank in range(geo.banks_per_chip)]
        uniqueness_reports.append(uniqueness_study(bank_chars, "inter-bank", theta=cfg.theta))
    if scope in ("all", "inter-segment"):
        for bank in range(geo.banks_per_chip):
            seg_chars = [characterize_segment(device0, (0, bank, seg), pattern,
                                              cfg.omega2, cfg.omega3)
                         for seg in range(geo.segments_per_bank)]
            uniqueness_reports.append(
                uniqueness_study(seg_chars, "inter-segment", context=f"bank {bank:03b}",
                                 theta=cfg.theta))
    write_uniqueness_csv(out / "uniqueness.csv", uniqueness_reports)

    write_entropy_profile_csv(out / "entropy_profile.csv",
                              entropy_profile(device0, (0, 0, 0), cfg.temperatures, pattern))

    rendered = figures.render_all(out) if cfg.figures else []
    print(f"evaluate: wrote 4 CSV reports and {len(rendered)} figures -> {out}")
    return EXIT_OK


def cmd_keygen(cfg: RunConfig, out: Path) -> int:
    model = build_device(cfg.seed, cfg.geometry(), **cfg.model_knobs())
    pattern = cfg.input_pattern()
    out.mkdir(parents=True, exist_ok=True)
    pinned = cfg.frac_bits if cfg.frac_bits > 0 else None
    geo = cfg.geometry()
    records = []
    for chip in range(geo.chips):
        for bank in range(geo.banks_per_chip):
            for segment in range(geo.segments_per_bank):
                if len(records) >= cfg.n_crps:
                    break
                address = (chip, bank, segment)
                if pinned is None:
                    precision = select_precision(model, address, pattern, cfg.omega2)
                else:
                    precision = Precision(0.0, pinned)
                windows = windows_for_segment(model, precision.frac_bits, address)
                records.extend(register_many(
                    model, windows, pattern, omega2=cfg.omega2, omega3=cfg.omega3,
                    theta=cfg.theta, frac_bits=precision.frac_bits,
                    min_qualified=cfg.min_qualified))
    records = records[:cfg.n_crps]
    if not records:
        print("keygen: no challenge produced enough qualified bits", file=sys.stderr)
        return EXIT_FAILURE
    path = out / f"enrollment_dev{cfg.seed}.txt"
    write_enrollment_records(path, records)
    distinct = len({rec.key for rec in records})
    print(f"keygen: {len(records)} keys ({distinct} distinct) -> {path}")
    return EXIT_OK if distinct == len(records) else EXIT_FAILURE


def cmd_auth_demo(cfg: RunConfig, out: Path, attack: str | None) -> int:
    out.mkdir(parents=True, exist_ok=True)
    if attack is not None:
        harness = HarnessConfig(sessions=cfg.sessions, device_seed=cfg.seed, seed=cfg.seed)
        report = run_scenario(attack, harness)
        path = out / "attack_report.jsonl"
        with open(path, "w") as fh:
            fh.write(report.to_json_line() + "\n")
        print(report.to_json_line())
        print(f"auth-demo: adversary successes {report.adversary_successes}/{report.sessions}"
              f" -> {path}")
        return EXIT_OK if report.adversary_successes == 0 else EXIT_FAILURE

    model = build_device(cfg.seed, cfg.geometry(), f_fail=cfg.f_fail,
                         f_marginal=cfg.f_marginal, density_shape=cfg.density_shape,
                         p_noise_max=0.0)
    db = ServerDb()
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    try:
        row, device = enroll(db, model, f"dev{cfg.seed}", max(cfg.sessions, cfg.n_crps), rng,
                             theta=cfg.theta, omega3=cfg.omega3, min_qualified=cfg.min_qualified)
    except InsufficientBits as exc:
        print(f"auth-demo: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    server = Server(db, np.random.Generator(np.random.PCG64(cfg.seed + 1)))
    transcript = out / "session_transcript.txt"
    accepts = 0
    with open(transcript, "w") as fh:
        for k in range(cfg.sessions):
            temp = cfg.temperatures[k % len(cfg.temperatures)]
            from .protocol import Channel
            channel = Channel()
            result = run_session(device, server, rng.bytes(16), rng.bytes(16), temp, channel)
            fh.write(f"session {k} temperature={temp:g}C accepted={result.accepted}\n")
            for stage, blob in channel.log:
                fh.write(f"  {stage:<9} {len(blob):>3} B {blob.hex()}\n")
            fh.write(f"  overhead  {result.wire_bytes} B (challenge + response)\n")
            if not result.accepted:
                print(f"auth-demo: honest session {k} rejected "
                      f"({result.reject_stage})", file=sys.stderr)
                return EXIT_FAILURE
            if result.wire_bytes != 192:
                print(f"auth-demo: session {k} wire overhead {result.wire_bytes} != 192 B",
                      file=sys.stderr)
                return EXIT_FAILURE
            accepts += 1
    print(f"auth-demo: {accepts}/{cfg.sessions} sessions accepted, overhead 192 B each"
          f" -> {transcript}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _load(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "characterize":
            return cmd_characterize(cfg, args.out)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.out, args.scope)
        if args.command == "keygen":
            return cmd_keygen(cfg, args.out)
        return cmd_auth_demo(cfg, args.out, args.attack)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InsufficientBits, ValueError, RuntimeError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
