"""Command-line front end: single attacks, batch experiments, and the
classify stub server.

Exit codes: 0 success, 1 configuration/usage error, 2 initialization failure
(an image is not classified as required), 3 oracle transport failure.
"""

import argparse
import json
import sys
from pathlib import Path

from .engine import EngineConfig, run_attack
from .errors import ConfigError, DimensionMismatch, InitializationFailure, OracleFailure
from .fitness import Norm, SuccessPredicate, distance
from .images import load_image, save_png
from .metrics import (
    AttackPair,
    AttackRecord,
    ExperimentSpec,
    area_percent,
    run_experiment,
    write_curve,
)
from .oracle import make_oracle
from .stub_server import make_stub_server

ENGINE_DEFAULTS = {
    "population_size": 10,
    "initialization_rate": 0.35,
    "mutation_rate": 1,
    "query_budget": 10000,
    "seed": 0,
    "norm": "l0",
}

_ENGINE_KEY_TYPES = {
    "population_size": int,
    "mutation_rate": int,
    "query_budget": int,
    "seed": int,
    "initialization_rate": float,
}

_KNOWN_KEYS = set(ENGINE_DEFAULTS) | {"mode", "oracle", "pairs", "workers"}


def parse_config(raw: dict, overrides: dict | None = None) -> dict:
    """Merge defaults, a config-file object, and flag overrides into the
    effective configuration; validates types and value ranges."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config file must hold a JSON object")
    for key in raw:
        if key not in _KNOWN_KEYS:
            raise ConfigError(key, "unknown key")
    effective = dict(ENGINE_DEFAULTS)
    effective.update({"mode": "targeted", "oracle": None, "pairs": [], "workers": 1})
    effective.update(raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            effective[key] = value

    for key, want in _ENGINE_KEY_TYPES.items():
        value = effective[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"must be a number, got {value!r}")
        if want is int and int(value) != value:
            raise ConfigError(key, f"must be an integer, got {value!r}")
        effective[key] = want(value)
    if effective["mode"] not in ("targeted", "untargeted"):
        raise ConfigError("mode", f"must be 'targeted' or 'untargeted', got {effective['mode']!r}")
    try:
        effective["norm"] = Norm(effective["norm"]).value
    except ValueError:
        raise ConfigError("norm", f"must be one of l0/l1/l2, got {effective['norm']!r}") from None
    if not isinstance(effective["workers"], int) or effective["workers"] < 1:
        raise ConfigError("workers", "must be an integer >= 1")
    # range checks live in EngineConfig and raise ConfigError with the key name
    build_engine_config(effective)
    return effective


def build_engine_config(effective: dict) -> EngineConfig:
    return EngineConfig(
        population_size=effective["population_size"],
        initialization_rate=effective["initialization_rate"],
        mutation_rate=effective["mutation_rate"],
        query_budget=effective["query_budget"],
        seed=effective["seed"],
        norm=Norm(effective["norm"]),
    )


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"{path} is not valid JSON: {exc}") from exc


def _engine_overrides(args) -> dict:
    return {
        "population_size": args.population_size,
        "initialization_rate": args.init_rate,
        "mutation_rate": args.mutation_rate,
        "query_budget": args.budget,
        "seed": args.seed,
        "norm": args.norm,
        "mode": args.mode,
    }


def _oracle_spec(effective: dict, args) -> dict:
    spec = effective.get("oracle")
    spec = dict(spec) if isinstance(spec, dict) else {}
    if getattr(args, "oracle_kind", None):
        spec["kind"] = args.oracle_kind
    if getattr(args, "oracle_endpoint", None):
        spec["endpoint"] = args.oracle_endpoint
    if not spec.get("kind"):
        raise ConfigError("oracle.kind", "no oracle configured (config file or --oracle-kind)")
    return spec


def attack_once(args) -> int:
    """Run one attack and write adversarial.png, trace.json, curve.csv."""
    effective = parse_config(_load_config_file(args.config), _engine_overrides(args))
    cfg = build_engine_config(effective)
    oracle_spec = _oracle_spec(effective, args)
    effective["oracle"] = oracle_spec

    x = load_image(args.source)
    x_t = load_image(args.target)
    if effective["mode"] == "targeted":
        if args.target_label is None:
            raise ConfigError("target_label", "required in targeted mode")
        pred = SuccessPredicate.targeted(args.target_label)
    else:
        pred = SuccessPredicate.untargeted(args.label)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with make_oracle(oracle_spec) as oracle:
        result = run_attack(oracle, x, args.label, x_t, pred, cfg)

    area_pixels = int(distance(x.quantize8(), result.adversarial, Norm.L0_PIXELS))
    record = AttackRecord(
        record_id="attack",
        success=True,
        total_queries=result.trace.total_queries,
        setup_queries=result.trace.setup_queries,
        query_budget=cfg.query_budget,
        final_area_pixels=area_pixels,
        final_area_percent=area_percent(area_pixels, x.height, x.width),
        queries_to_best=result.trace.queries_to_best,
        candidate=result.candidate,
    )
    save_png(result.adversarial, out / "adversarial.png")
    write_curve(out / "curve.csv", result.trace, x.height, x.width)
    trace_doc = record.to_json_dict()
    trace_doc["config"] = {k: effective[k] for k in sorted(effective) if k != "pairs"}
    (out / "trace.json").write_text(json.dumps(trace_doc, indent=2) + "\n")
    print(
        f"attack succeeded: area {record.final_area_pixels} px "
        f"({record.final_area_percent:.2f}%), queries to best "
        f"{record.queries_to_best} of {record.total_queries}"
    )
    return 0


def _parse_pairs(effective: dict, base_dir: Path) -> list:
    pairs_raw = effective.get("pairs") or []
    if not isinstance(pairs_raw, list) or not pairs_raw:
        raise ConfigError("pairs", "must be a non-empty list")
    pairs = []
    for k, item in enumerate(pairs_raw):
        if not isinstance(item, dict):
            raise ConfigError(f"pairs[{k}]", "must be an object")
        for required in ("source", "source_label", "target"):
            if required not in item:
                raise ConfigError(f"pairs[{k}].{required}", "required")
        if effective["mode"] == "targeted" and "target_label" not in item:
            raise ConfigError(f"pairs[{k}].target_label", "required in targeted mode")
        pairs.append(
            AttackPair(
                source=str(base_dir / item["source"]),
                source_label=int(item["source_label"]),
                target=str(base_dir / item["target"]),
                target_label=item.get("target_label"),
                pair_id=item.get("id"),
            )
        )
    return pairs


def experiment_cmd(args) -> int:
    effective = parse_config(_load_config_file(args.config), _engine_overrides(args))
    oracle_spec = _oracle_spec(effective, args)
    effective["oracle"] = oracle_spec
    base_dir = Path(args.config).parent if args.config else Path.cwd()
    spec = ExperimentSpec(
        pairs=_parse_pairs(effective, base_dir),
        engine=build_engine_config(effective),
        oracle_spec=oracle_spec,
        mode=effective["mode"],
        output_dir=args.out,
        workers=args.workers if args.workers is not None else effective["workers"],
        config_echo={k: effective[k] for k in sorted(effective)},
    )
    report = run_experiment(spec)
    apa = "-" if report.apa is None else f"{report.apa:.2f}"
    print(
        f"experiment finished: n={report.n_images} ASR {report.asr:.2f}% "
        f"APA {apa} ANQ {report.anq:.1f}"
    )
    return 0


def serve_stub(args) -> int:
    """Serve the classify protocol on a synthetic or scripted oracle."""
    if args.labels:
        spec = {"kind": "scripted", "labels": [int(v) for v in args.labels.split(",")]}
    elif args.oracle == "constant":
        spec = {"kind": "constant", "label": args.label}
    else:
        spec = {"kind": args.oracle}
    oracle = make_oracle(spec)
    try:
        server = make_stub_server(args.host, args.port, oracle, delay_ms=args.delay_ms)
    except OSError as exc:
        print(f"cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return 1
    print(f"listening on {server.endpoint}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def _add_engine_flags(sub):
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--population-size", type=int, dest="population_size")
    sub.add_argument("--init-rate", type=float, dest="init_rate")
    sub.add_argument("--mutation-rate", type=int, dest="mutation_rate")
    sub.add_argument("--budget", type=int, help="query budget for the main loop")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--norm", choices=[n.value for n in Norm])
    sub.add_argument("--mode", choices=["targeted", "untargeted"])
    sub.add_argument("--oracle-kind", dest="oracle_kind")
    sub.add_argument("--oracle-endpoint", dest="oracle_endpoint")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="devopatch",
        description="Decision-based black-box patch attacks via integer differential evolution",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    attack = subs.add_parser("attack", help="attack one source/target image pair")
    _add_engine_flags(attack)
    attack.add_argument("--source", required=True, help="source image (PNG or PPM)")
    attack.add_argument("--target", required=True, help="target image (PNG or PPM)")
    attack.add_argument("--label", type=int, required=True, help="ground-truth label of the source")
    attack.add_argument("--target-label", type=int, dest="target_label")
    attack.add_argument("--out", required=True, help="output directory")
    attack.set_defaults(func=attack_once)

    experiment = subs.add_parser("experiment", help="run a batch of attacks from a config file")
    _add_engine_flags(experiment)
    experiment.add_argument("--out", required=True, help="output directory")
    experiment.add_argument("--workers", type=int, help="parallel attacks (default from config)")
    experiment.set_defaults(func=experiment_cmd)

    stub = subs.add_parser("serve-stub", help="serve a synthetic oracle over HTTP")
    stub.add_argument("--host", default="127.0.0.1")
    stub.add_argument("--port", type=int, default=8080)
    stub.add_argument(
        "--oracle",
        default="quadrant",
        choices=["quadrant", "constant", "dominant-channel"],
    )
    stub.add_argument("--label", type=int, default=0, help="label for the constant oracle")
    stub.add_argument("--labels", help="comma-separated scripted label sequence")
    stub.add_argument("--delay-ms", type=int, default=0, dest="delay_ms")
    stub.set_defaults(func=serve_stub)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DimensionMismatch, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InitializationFailure as exc:
        print(f"initialization failure: {exc}", file=sys.stderr)
        return 2
    except OracleFailure as exc:
        print(f"oracle failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
