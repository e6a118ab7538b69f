"""Command line: one subcommand per experiment kind, plus verify-all.

Exit codes: 0 all checks pass, 2 a statistical check failed, 1 config or
runtime error.
"""

import argparse
import json
import os
import sys
import time

from .experiments import (KINDS, ConfigError, ExperimentConfig, _write_json, default_out_root,
                          run_experiment, write_csv)

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def _parser():
    p = argparse.ArgumentParser(prog="stochwave",
                                description="Lattice experiments for the stochastic wave equation.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--replicas", type=int, default=None, help="override (verify-all: cap) replicas")
        sp.add_argument("--workers", type=int, default=1, help="worker processes")
        sp.add_argument("--resume", action="store_true", help="continue from checkpoints")
        sp.add_argument("--out", default=None,
                        help="output directory (default: $STOCHWAVE_OUT/<name>)")

    for k in KINDS:
        sp = sub.add_parser(k, help="run a %s experiment" % k)
        sp.add_argument("--config", required=True, help="path to config.json")
        common(sp)
    sp = sub.add_parser("verify-all", help="run the whole verification suite")
    sp.add_argument("--config", default=None,
                    help="optional JSON list of suite entry names to run")
    common(sp)
    return p


def _load(args, kind):
    with open(args.config) as fh:
        d = json.load(fh)
    d.setdefault("kind", kind)
    if d["kind"] != kind:
        raise ConfigError("config kind %r does not match subcommand %r" % (d["kind"], kind))
    if args.seed is not None:
        d["seed"] = args.seed
    if args.replicas is not None:
        d["replicas"] = args.replicas
    return ExperimentConfig.from_dict(d)


def _run_one(args):
    cfg = _load(args, args.command)
    out = args.out or os.path.join(default_out_root(), cfg.name or cfg.kind)
    verdict = run_experiment(cfg, out, workers=args.workers, resume=args.resume)
    for c in verdict["checks"]:
        print("%-4s %s  statistic=%s threshold=%s" % ("PASS" if c["pass"] else "FAIL",
                                                    c["test_name"], c["statistic"], c["threshold"]))
    print("verdict: %s (%s)" % ("pass" if verdict["pass"] else "fail", out))
    return EXIT_PASS if verdict["pass"] else EXIT_FAIL


def verify_all(out_root, seed=0, max_replicas=None, workers=1, resume=False, names=None, log=print):
    """Run every suite entry into out_root/<name>/; write the summary results.csv and verdict.json."""
    from .suite import kernel_identity_errors, suite

    os.makedirs(out_root, exist_ok=True)
    rows, verdicts = [], []
    err = float(kernel_identity_errors())
    ok = bool(err <= 1e-12)
    kid = {"experiment": "kernel_identities", "pass": ok,
           "checks": [{"test_name": "max_relative_error", "pass": ok,
                       "statistic": err, "threshold": 1e-12}]}
    verdicts.append(kid)
    for cfg in suite(seed=seed, max_replicas=max_replicas, names=names):
        t0 = time.time()
        v = run_experiment(cfg, os.path.join(out_root, cfg.name), workers=workers, resume=resume)
        log("%-24s %s  %.0fs" % (cfg.name, "pass" if v["pass"] else "FAIL", time.time() - t0))
        verdicts.append(v)
    for v in verdicts:
        for c in v["checks"]:
            rows.append((v["experiment"], c["test_name"], int(c["pass"]),
                         json.dumps(c["statistic"]), json.dumps(c["threshold"])))
    write_csv(os.path.join(out_root, "results.csv"),
              ["experiment", "check", "pass", "statistic", "threshold"], rows)
    summary = {"seed": seed, "max_replicas": max_replicas,
               "pass": all(v["pass"] for v in verdicts),
               "experiments": {v["experiment"]: v["pass"] for v in verdicts}}
    _write_json(os.path.join(out_root, "verdict.json"), summary)
    return summary


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "verify-all":
            names = None
            if args.config:
                with open(args.config) as fh:
                    names = json.load(fh)
            out = args.out or default_out_root()
            s = verify_all(out, seed=args.seed or 0, max_replicas=args.replicas,
                           workers=args.workers, resume=args.resume, names=names)
            print("verify-all: %s (%s)" % ("pass" if s["pass"] else "fail", out))
            return EXIT_PASS if s["pass"] else EXIT_FAIL
        return _run_one(args)
    except (ConfigError, ValueError, OverflowError, OSError, KeyError) as exc:
        print("stochwave: error: %s" % exc, file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
