"""Command-line entry point: generate | train | eval | bench.

Exit codes: 0 success, 2 config error, 3 numeric failure, 4 unsupported
model/optimizer combination.
"""

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import chain_sim, metrics, optim
from .cheb_model import ChebyshevModel, forward_batch as cheb_forward_batch
from .nn_model import NNModel, forward_batch as nn_forward_batch, init_weights
from .signal_core import (DelaySet, RealSequence, SignalError, delay_embed,
                          load_dataset, save_dataset_binary, save_dataset_csv)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_UNSUPPORTED = 4

DEFAULT_CHECKPOINTS = (1000, 2000, 5000, 10000, 20000)


def _config_hash(obj):
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _read_config(path):
    if str(path).endswith(".json"):
        with open(path) as fh:
            return json.load(fh)
    import tomli

    with open(path, "rb") as fh:
        return tomli.load(fh)


def _load_dataset_any(path):
    fmt = "f64le-binary" if str(path).endswith((".bin", ".imd2")) else "csv"
    return load_dataset(path, fmt)


def build_model(cfg, seed=0):
    """Instantiate a canceller from a model-config dict."""
    kind = cfg.get("type")
    delays = DelaySet(tuple(cfg.get("delays", (0, 1, 2))))
    if kind == "chebyshev":
        return ChebyshevModel(delays, int(cfg.get("order", 8)))
    if kind == "nn":
        return init_weights(delays, cfg.get("hidden_widths", (3, 2)),
                            seed=cfg.get("seed", seed),
                            activation=cfg.get("activation", "tanh"))
    raise SignalError(f"unknown model type {kind!r}")


def load_model(path):
    with open(path) as fh:
        d = json.load(fh)
    if d.get("type") == "chebyshev":
        return ChebyshevModel.from_dict(d)
    if d.get("type") == "nn":
        return NNModel.from_dict(d)
    raise SignalError(f"unknown model type in {path}")


def model_forward_batch(model, embedded):
    if isinstance(model, ChebyshevModel):
        return cheb_forward_batch(model, embedded)
    return nn_forward_batch(model, embedded)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_generate(args):
    ofdm_cfg, chain_cfg = chain_sim.load_chain_config(args.config)
    if args.seed is not None:
        ofdm_cfg.seed = args.seed
        chain_cfg.seed = args.seed
    os.makedirs(args.out, exist_ok=True)
    tx = chain_sim.gen_ofdm(ofdm_cfg)
    ds = chain_sim.imd2_chain(tx, chain_cfg)
    if args.format == "binary":
        data_path = os.path.join(args.out, "dataset.bin")
        save_dataset_binary(ds, data_path)
    else:
        data_path = os.path.join(args.out, "dataset.csv")
        save_dataset_csv(ds, data_path)
    resolved = chain_sim.resolved_config_dict(ofdm_cfg, chain_cfg)
    resolved["config_hash"] = _config_hash(resolved)
    with open(os.path.join(args.out, "dataset.config.json"), "w") as fh:
        json.dump(resolved, fh, indent=2, sort_keys=True)
    print(f"wrote {data_path} ({len(ds)} samples)")
    return EXIT_OK


def _checkpoints(args):
    if args.checkpoints:
        cps = tuple(int(c) for c in args.checkpoints.split(","))
        if any(c <= 0 for c in cps) or list(cps) != sorted(set(cps)):
            raise SignalError("checkpoints must be positive, increasing, unique")
        return cps
    return DEFAULT_CHECKPOINTS


def _run_cell(dataset, model_cfg, opt_cfg_dict, checkpoints, seed):
    """Train one (model, optimizer) pair; returns (report dict, model)."""
    method = opt_cfg_dict.get("method", "ls")
    cfg = optim.OptimConfig.from_dict(opt_cfg_dict)
    cfg.seed = opt_cfg_dict.get("seed", seed)
    if method != "ls":
        cfg.max_iters = opt_cfg_dict.get("max_iters", max(checkpoints))
    model = build_model(model_cfg, seed=cfg.seed)
    t0 = time.perf_counter()
    fitted, history = optim.train(model, dataset, method, cfg)
    wall = time.perf_counter() - t0
    supp = {str(cp): -history.nmse_at(cp) for cp in checkpoints}
    return {
        "model": dict(model_cfg),
        "optimizer": {"method": method, **{k: v for k, v in opt_cfg_dict.items() if k != "method"}},
        "checkpoints": list(checkpoints),
        "suppression_db": supp,
        "final_nmse_db": metrics._fmt_db(history.final_nmse_db),
        "seed": cfg.seed,
    }, fitted, history, wall


def cmd_train(args):
    dataset = _load_dataset_any(args.dataset)
    model_cfg = _read_config(args.model_config)
    opt_cfg = _read_config(args.optimizer_config)
    checkpoints = _checkpoints(args)
    seed = args.seed if args.seed is not None else opt_cfg.get("seed", 0)
    os.makedirs(args.out, exist_ok=True)
    try:
        report, fitted, history, wall = _run_cell(dataset, model_cfg, opt_cfg, checkpoints, seed)
    except optim.NonFiniteLossError as e:
        history = getattr(e, "history", None)
        report = {"error": str(e), "status": "aborted"}
        if history is not None and history.records:
            report["last_good"] = history.records[-1]["iter"]
            report["last_good_nmse_db"] = history.records[-1]["nmse_db"]
        with open(os.path.join(args.out, "report.json"), "w") as fh:
            json.dump(report, fh, indent=2)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    report["wall_time_s"] = wall
    report["config_hash"] = _config_hash({"model": model_cfg, "optimizer": opt_cfg,
                                          "checkpoints": list(checkpoints)})
    fitted.save(os.path.join(args.out, "model.json"))
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2)
    with open(os.path.join(args.out, "history.csv"), "w") as fh:
        fh.write("iter,loss,nmse_db,wall_time\n")
        for r in history.records:
            fh.write(f"{r['iter']},{r['loss']!r},{r['nmse_db']!r},{r['wall_time']!r}\n")
    print(f"trained {report['model']['type']}+{report['optimizer']['method']}; "
          f"final NMSE {history.final_nmse_db:.2f} dB" if np.isfinite(history.final_nmse_db)
          else f"trained; final NMSE {history.final_nmse_db}")
    return EXIT_OK


def cmd_eval(args):
    model = load_model(args.model)
    dataset = _load_dataset_any(args.dataset)
    os.makedirs(args.out, exist_ok=True)
    mag_max = float(np.abs(dataset.tx.iq).max())
    if mag_max > model.input_scale * (1.0 + 1e-12):
        print(f"warning: dataset max |tx| {mag_max:g} exceeds model input_scale "
              f"{model.input_scale:g}; magnitudes clipped to 1", file=sys.stderr)
    scaled_mag = delay_embed(
        type(dataset.tx)(dataset.tx.iq / model.input_scale, dataset.tx.sample_rate_hz),
        model.delays)
    embedded = np.minimum(scaled_mag, 1.0)
    y = model_forward_batch(model, embedded)
    targets = dataset.rx.samples[model.delays.max_delay :]
    fs = dataset.rx.sample_rate_hz
    tx_aligned = dataset.tx.iq[model.delays.max_delay :] if args.verbose else None
    report = metrics.nmse(y, targets, tx=tx_aligned)
    with open(os.path.join(args.out, "nmse.json"), "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    seg = 256
    while seg * 2 > len(targets):
        seg //= 2
    rx_psd = metrics.psd_welch(RealSequence(targets, fs), seg)
    res_psd = metrics.psd_welch(RealSequence(targets - y + 0.0, fs), seg) \
        if np.any(targets - y) else rx_psd
    metrics.psd_to_csv(rx_psd, os.path.join(args.out, "psd_rx.csv"))
    metrics.psd_to_csv(res_psd, os.path.join(args.out, "psd_residual.csv"))
    nm = report.to_dict()["nmse_db"]
    print(f"NMSE {nm} dB, suppression {report.to_dict()['suppression_db']} dB "
          f"({report.num_samples} samples)")
    return EXIT_OK


DEFAULT_SUITE_CELLS = (
    # the duplicate T_0 columns across delays make the unregularized Gram
    # singular for K > 1, so the LS cell carries a tiny ridge
    ({"type": "chebyshev", "delays": [0, 1, 2], "order": 8}, {"method": "ls", "lambda": 1e-8}),
    ({"type": "chebyshev", "delays": [0, 1, 2], "order": 8}, {"method": "adam"}),
    ({"type": "chebyshev", "delays": [0, 1, 2], "order": 8}, {"method": "lbfgs"}),
    ({"type": "nn", "delays": [0, 1, 2], "hidden_widths": [3, 2]}, {"method": "ls"}),
    ({"type": "nn", "delays": [0, 1, 2], "hidden_widths": [3, 2]}, {"method": "adam"}),
    ({"type": "nn", "delays": [0, 1, 2], "hidden_widths": [3, 2]}, {"method": "lbfgs"}),
)


def cmd_bench(args):
    suite = _read_config(args.config) if args.config else {}
    seed = args.seed if args.seed is not None else suite.get("seed", 0)
    checkpoints = _checkpoints(args)
    ofdm_cfg = chain_sim.OfdmConfig(**suite.get("ofdm", {}))
    chain_raw = dict(suite.get("chain", {}))
    if "memory_fir" in chain_raw:
        chain_raw["memory_fir"] = tuple(chain_raw["memory_fir"])
    chain_cfg = chain_sim.ChainConfig(**chain_raw)
    ofdm_cfg.seed = seed
    chain_cfg.seed = seed
    cells = [(c["model"], c["optimizer"]) for c in suite["cells"]] \
        if "cells" in suite else [(dict(m), dict(o)) for m, o in DEFAULT_SUITE_CELLS]

    tx = chain_sim.gen_ofdm(ofdm_cfg)
    dataset = chain_sim.imd2_chain(tx, chain_cfg)

    def run(cell):
        model_cfg, opt_cfg = cell
        name = f"{model_cfg['type']}+{opt_cfg.get('method')}"
        try:
            report, _, _, wall = _run_cell(dataset, model_cfg, opt_cfg, checkpoints, seed)
            return name, report["suppression_db"], wall, None
        except optim.UnsupportedCombinationError:
            return name, {str(cp): "N/A" for cp in checkpoints}, 0.0, "N/A"
        except Exception as e:  # partial failure is recorded, run continues
            return name, {str(cp): "FAIL" for cp in checkpoints}, 0.0, str(e)

    workers = max(1, int(os.environ.get("IMD2_THREADS", "1")))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(run, cells))

    suite_cfg = {"ofdm": chain_sim.resolved_config_dict(ofdm_cfg, chain_cfg)["ofdm"],
                 "chain": chain_sim.resolved_config_dict(ofdm_cfg, chain_cfg)["chain"],
                 "checkpoints": list(checkpoints), "seed": seed,
                 "cells": [{"model": m, "optimizer": o} for m, o in cells]}
    out_json = {
        "config_hash": _config_hash(suite_cfg),
        "seed": seed,
        "checkpoints": list(checkpoints),
        "rows": [{"cell": name, "suppression_db": supp, "error": err}
                 for name, supp, _, err in results],
    }
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "bench.json"), "w") as fh:
        json.dump(out_json, fh, indent=2, sort_keys=True)

    widths = [22] + [10] * len(checkpoints)
    header = "cell".ljust(widths[0]) + "".join(str(c).rjust(w) for c, w in zip(checkpoints, widths[1:]))
    lines = [header, "-" * len(header)]
    for name, supp, wall, err in results:
        cells_txt = "".join(
            (f"{supp[str(c)]:.2f}" if isinstance(supp[str(c)], float) else supp[str(c)]).rjust(w)
            for c, w in zip(checkpoints, widths[1:]))
        lines.append(name.ljust(widths[0]) + cells_txt + f"   [{wall:.1f}s]")
    table = "\n".join(lines)
    with open(os.path.join(args.out, "bench.txt"), "w") as fh:
        fh.write(table + "\n")
    print(table)
    return EXIT_OK


# ---------------------------------------------------------------------------

def make_parser():
    p = argparse.ArgumentParser(prog="imd2cancel",
                                description="IMD2 canceller training and benchmarking")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize a transceiver-chain dataset")
    g.add_argument("--config", required=True, help="chain.toml / chain.json")
    g.add_argument("--out", required=True)
    g.add_argument("--format", choices=("csv", "binary"), default="csv")
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="fit a canceller model")
    t.add_argument("--dataset", required=True)
    t.add_argument("--model-config", required=True)
    t.add_argument("--optimizer-config", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--checkpoints", help="comma-separated iteration checkpoints")
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a saved model on a dataset")
    e.add_argument("--model", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--verbose", action="store_true")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="run the model x optimizer comparison suite")
    b.add_argument("--config", help="suite config (optional; default 6-cell suite)")
    b.add_argument("--out", required=True)
    b.add_argument("--checkpoints")
    b.add_argument("--seed", type=int)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except optim.UnsupportedCombinationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (optim.NonFiniteLossError, optim.RankDeficiencyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SignalError, FileNotFoundError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
