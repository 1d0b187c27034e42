"""Command line entry point.

Headless mode walks the scenario goal to completion and prints the statistics
table. Service mode opens the console port and waits for an operator; the
scenario goal is then just a suggestion the console may send or override.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .engine import BehaviorEngine, EngineConfig
from .service import WalkService
from .telemetry import format_statistics
from .terrain import ScenarioError, load_bundled_scenario, load_scenario

log = logging.getLogger("strider")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="strider",
        description="Continuous walking over sensed terrain, simulated end to end.")
    p.add_argument("--scenario", required=True,
                   help="scenario file path, or the name of a bundled scenario")
    p.add_argument("--seed", type=int, default=0, help="base seed for all sensing")
    p.add_argument("--port", type=int, default=8732,
                   help="console port (0 picks a free one)")
    p.add_argument("--autonomous", action="store_true",
                   help="disable both operator review checkpoints")
    p.add_argument("--realtime-factor", type=float, default=1.0,
                   help="sim seconds per wall second; 0 runs as fast as possible")
    p.add_argument("--headless", action="store_true",
                   help="no console port: walk the scenario goal and exit")
    p.add_argument("--out-dir", default=None,
                   help="directory for replay, statistics, and timing files")
    p.add_argument("--sensor-res", choices=("low", "full"), default="low",
                   help="depth camera resolution profile")
    p.add_argument("--dump-frames", action="store_true",
                   help="also write per-frame depth and region images to out-dir")
    p.add_argument("--verbose", action="store_true")
    return p


def _load(scenario_arg: str):
    path = Path(scenario_arg)
    if path.exists():
        return load_scenario(path)
    try:
        return load_bundled_scenario(scenario_arg)
    except (FileNotFoundError, ScenarioError):
        raise SystemExit(f"scenario not found: {scenario_arg}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s")

    try:
        scenario = _load(args.scenario)
    except ScenarioError as err:
        print(f"bad scenario: {err}", file=sys.stderr)
        return 2

    config = EngineConfig(
        base_seed=args.seed,
        autonomous=args.autonomous or args.headless,
        sensor_res=args.sensor_res,
        out_dir=args.out_dir,
        dump_frames=args.dump_frames,
    )
    engine = BehaviorEngine(scenario, config)

    if args.headless:
        try:
            reached = engine.run_to_goal(scenario.goal)
        finally:
            engine.close()
        if engine.last_statistics is not None:
            print(format_statistics(engine.last_statistics), end="")
        if not reached:
            print("goal not reached", file=sys.stderr)
            return 1
        return 0

    service = WalkService(engine, port=args.port,
                          realtime_factor=args.realtime_factor)
    service.start()
    log.info("serving on %s:%d (scenario %s, seed %d)",
             service.host, service.port, scenario.name, args.seed)
    print(f"listening on {service.host}:{service.port}", flush=True)
    try:
        service.serve_forever()
    except KeyboardInterrupt:
        log.info("interrupted")
    finally:
        service.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
