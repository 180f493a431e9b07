"""Command-line front end: dataset generation, net training, pricing,
implied vol, surface evaluation, and the recalibration simulator.

Exit codes: 0 success, 1 I/O or file-format failure, 2 configuration or
usage error, 3 numeric or accuracy failure.  ``--threads`` pins the BLAS,
OpenMP, and numba pools; it works because every numerics import in this
module is deferred until after the environment variables are set (the
package itself also loads its submodules lazily).  Results are printed at
17 significant digits, and ``--json`` switches each command to a
machine-readable summary on stdout.  ``CRCVOL_CONFIG`` names a default
config file used when ``--config`` is absent.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys

from .errors import (AccuracyError, ConfigError, CrcvolError, DataGenError,
                     FormatError, NoArbitrageBandError, NumericDomainError,
                     TrainingDivergedError)

_EXIT_IO = 1
_EXIT_CONFIG = 2
_EXIT_NUMERIC = 3

_THREAD_VARS = ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMBA_NUM_THREADS")


def _pin_threads(n) -> None:
    if n is None:
        return
    if n < 1:
        raise ConfigError(f"--threads must be a positive integer, got {n}")
    for var in _THREAD_VARS:
        os.environ[var] = str(n)


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _emit(args, payload: dict, human: str) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print(human)


def _run_config(args):
    from .config import default_config, load_config
    path = getattr(args, "config", None) or os.environ.get("CRCVOL_CONFIG")
    return load_config(path) if path else default_config()


def _path_from(args, attr: str, cfg, key: str, what: str) -> str:
    value = getattr(args, attr, None) or cfg.paths.get(key)
    if not value:
        raise ConfigError(f"{what} required: pass --{attr.replace('_', '-')} "
                          f"or set paths.{key} in the config")
    return value


def _model_pieces(args, cfg):
    """Build (MarketState, HestonParams, JumpSpec) from the model flags."""
    from .affine import HestonParams, JumpSpec, MarketState, flat_jump_spec
    if args.spot <= 0.0:
        raise ConfigError(f"--spot must be positive, got {args.spot}")
    try:
        p = HestonParams(kappa=args.kappa, theta=args.theta, sigma=args.sigma,
                         rho=args.rho, r=args.r, q=args.q)
        state = MarketState(x=math.log(args.spot), v=args.v0)
        for name, vals in (("--nu", args.nu), ("--delta", args.delta)):
            if len(vals) not in (1, 5):
                raise ValueError(f"{name} takes 1 or 5 values, got {len(vals)}")
        if len(args.nu) == 1 and len(args.delta) == 1:
            j = flat_jump_spec(args.intensity, args.nu[0], args.delta[0])
        else:
            nus = args.nu * 5 if len(args.nu) == 1 else args.nu
            deltas = args.delta * 5 if len(args.delta) == 1 else args.delta
            j = JumpSpec(intensity=args.intensity, nus=tuple(nus),
                         deltas=tuple(deltas))
    except ValueError as exc:
        raise ConfigError(str(exc))
    return state, p, j


def _write_loss_csv(path, result) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_loss,lr\n")
        for i, (tr, va, lr) in enumerate(
                zip(result.train_loss, result.val_loss, result.lr)):
            fh.write(f"{i},{tr:.17g},{va:.17g},{lr:.17g}\n")


def cmd_generate(args) -> int:
    cfg = _run_config(args)
    out = _path_from(args, "out", cfg, "out", "output CSV path")
    from .datagen import generate_dataset
    manifest = generate_dataset(args.n, args.seed, cfg.bounds,
                                cfg=cfg.damping, out=out)
    _emit(args, manifest,
          f"wrote {manifest['n_written']} samples to {out} "
          f"({manifest['n_dropped']} dropped, "
          f"{manifest['wall_time_s']:.1f}s)")
    return 0


def cmd_train(args) -> int:
    cfg = _run_config(args)
    data = _path_from(args, "data", cfg, "data", "training data CSV")
    out = _path_from(args, "out", cfg, "out", "weights output path")
    train_cfg = cfg.train
    if args.epochs is not None:
        train_cfg = dataclasses.replace(train_cfg, epochs=args.epochs)
    if args.seed is not None:
        train_cfg = dataclasses.replace(train_cfg, seed=args.seed)

    from .datagen import load_dataset
    from .neural import (build_inverse_net, build_pricing_net, compose_nn3,
                         composed_training_set, load, save, train)
    from .surface import default_grid
    x, y, _ = load_dataset(data)
    grid = default_grid()
    build = build_pricing_net if args.net == "nn1" else build_inverse_net
    try:
        net = build(cfg.bounds, grid, width=args.width,
                    n_main_layers=args.main_layers, seed=train_cfg.seed)
    except ValueError as exc:
        raise ConfigError(str(exc))
    if args.net == "nn1":
        result = train(net, x, y, train_cfg)
    else:
        nn1_path = _path_from(args, "nn1", cfg, "nn1",
                              "frozen forward-net weights")
        nn1 = load(nn1_path)
        composed = compose_nn3(nn1, net)
        cx, cy = composed_training_set(x, y)
        result = train(composed, cx, cy, train_cfg)
    save(net, out)
    loss_path = args.loss_out or out + ".loss.csv"
    _write_loss_csv(loss_path, result)
    payload = {"net": args.net, "weights": out, "loss_csv": loss_path,
               "epochs": train_cfg.epochs, "final_loss": result.final_loss,
               "final_val_loss": result.val_loss[-1] if result.val_loss else None,
               "n_samples": int(x.shape[0]),
               "n_parameters": int(sum(v.size for v in net.params.values()))}
    _emit(args, payload,
          f"trained {args.net} on {x.shape[0]} samples for "
          f"{train_cfg.epochs} epochs; final loss {result.final_loss:.6g}; "
          f"weights -> {out}, losses -> {loss_path}")
    return 0


def cmd_price(args) -> int:
    cfg = _run_config(args)
    state, p, j = _model_pieces(args, cfg)
    from .pricing import call_price, put_price
    fn = put_price if args.put else call_price
    price = fn(state, p, j, args.strike, args.tau, cfg.damping)
    _emit(args, {"price": price, "kind": "put" if args.put else "call",
                 "strike": args.strike, "tau": args.tau}, _fmt(price))
    return 0


def cmd_iv(args) -> int:
    cfg = _run_config(args)
    del cfg
    from .pricing import OptionQuote, implied_vol
    try:
        quote = OptionQuote(strike=args.strike, tau=args.tau,
                            price=args.price,
                            kind="put" if args.put else "call")
    except ValueError as exc:
        raise ConfigError(str(exc))
    vol = implied_vol(quote, args.spot, args.r, args.q)
    _emit(args, {"implied_vol": vol}, _fmt(vol))
    return 0


def cmd_surface(args) -> int:
    cfg = _run_config(args)
    state, p, j = _model_pieces(args, cfg)
    from .surface import (build_surface, check_static_arbitrage, default_grid,
                          write_surface_csv)
    surface = build_surface(state, p, j, default_grid(), cfg.damping)
    report = check_static_arbitrage(surface, p.r, p.q)
    if args.out:
        write_surface_csv(surface, args.out)
    payload = {"out": args.out, "clean": report.clean,
               "max_violation": report.max_violation,
               "n_butterfly": len(report.butterfly),
               "n_calendar": len(report.calendar),
               "vols": [[_fmt(v) for v in row] for row in surface.vols]}
    human = (f"surface {surface.vols.shape[0]}x{surface.vols.shape[1]}: "
             f"arbitrage audit {'clean' if report.clean else 'VIOLATED'} "
             f"(max violation {report.max_violation:.3g})"
             + (f"; wrote {args.out}" if args.out else ""))
    _emit(args, payload, human)
    return 0


def cmd_simulate(args) -> int:
    cfg = _run_config(args)
    state, p, j = _model_pieces(args, cfg)
    sim_cfg = cfg.sim
    if args.steps is not None:
        sim_cfg = dataclasses.replace(sim_cfg, n_steps=args.steps)
    if args.seed is not None:
        sim_cfg = dataclasses.replace(sim_cfg, seed=args.seed)
    nn2_path = _path_from(args, "nn2", cfg, "nn2", "inverse-net weights")
    out_dir = _path_from(args, "out_dir", cfg, "out_dir", "run directory")

    from .neural import load
    from .sim import run
    nn2 = load(nn2_path)
    nn1 = None
    if sim_cfg.surface_engine == "nn1":
        nn1 = load(_path_from(args, "nn1", cfg, "nn1",
                              "forward-net weights (surface_engine=nn1)"))
    records = run(sim_cfg, p, j, state, nn1=nn1, nn2=nn2,
                  damping=cfg.damping, out_dir=out_dir)
    worst = max(r.arb_max_violation for r in records)
    n_recal = sum(1 for r in records if r.recalibrated)
    payload = {"out_dir": out_dir, "steps": len(records) - 1,
               "recalibrations": n_recal, "max_arb_violation": worst,
               "final_delta": records[-1].delta_after}
    _emit(args, payload,
          f"simulated {len(records) - 1} steps -> {out_dir}; "
          f"{n_recal} recalibrations; max arbitrage violation {worst:.3g}")
    return 0


def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("model", "Bates model and market state")
    g.add_argument("--spot", type=float, default=100.0, help="spot level")
    g.add_argument("--v0", type=float, default=0.04,
                   help="initial instantaneous variance")
    g.add_argument("--r", type=float, default=0.02, help="risk-free rate")
    g.add_argument("--q", type=float, default=0.0, help="dividend yield")
    g.add_argument("--kappa", type=float, default=5.0,
                   help="variance mean-reversion speed")
    g.add_argument("--theta", type=float, default=0.04,
                   help="long-run variance level")
    g.add_argument("--sigma", type=float, default=0.3, help="vol of vol")
    g.add_argument("--rho", type=float, default=-0.5,
                   help="spot/variance correlation")
    g.add_argument("--intensity", type=float, default=0.1,
                   help="jump intensity (per year)")
    g.add_argument("--nu", type=float, nargs="+", default=[0.0],
                   help="jump mean log-size: one value or five (per bucket)")
    g.add_argument("--delta", type=float, nargs="+", default=[0.1],
                   help="jump log-size std dev: one value or five")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crcvol",
        description="Consistent-recalibration volatility surface toolkit")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file "
                        "(default: $CRCVOL_CONFIG if set)")
    common.add_argument("--json", action="store_true",
                        help="print a machine-readable JSON summary")
    common.add_argument("--threads", type=int, default=None,
                        help="pin BLAS/OpenMP/numba thread pools")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("generate", parents=[common],
                       help="sample model points and write a training CSV")
    s.add_argument("--n", type=int, required=True, help="samples to draw")
    s.add_argument("--seed", type=int, default=0, help="master seed")
    s.add_argument("--out", help="output CSV path (or paths.out)")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("train", parents=[common],
                       help="train the forward (nn1) or inverse (nn2) net")
    s.add_argument("net", choices=("nn1", "nn2"),
                   help="nn1 fits params->vols; nn2 trains the inverse "
                        "through a frozen nn1")
    s.add_argument("--data", help="training CSV (or paths.data)")
    s.add_argument("--out", help="weights output path (or paths.out)")
    s.add_argument("--nn1", help="frozen nn1 weights, nn2 mode only "
                                 "(or paths.nn1)")
    s.add_argument("--epochs", type=int, default=None,
                   help="override train.epochs")
    s.add_argument("--seed", type=int, default=None,
                   help="override train.seed (also seeds the init)")
    s.add_argument("--width", type=int, default=256, help="hidden width")
    s.add_argument("--main-layers", type=int, default=2,
                   help="number of hidden layers (even: residual cells)")
    s.add_argument("--loss-out", help="per-epoch loss CSV "
                                      "(default: <out>.loss.csv)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("price", parents=[common],
                       help="price one European option by Fourier inversion")
    _add_model_flags(s)
    s.add_argument("--strike", type=float, required=True)
    s.add_argument("--tau", type=float, required=True,
                   help="time to maturity in years")
    s.add_argument("--put", action="store_true",
                   help="price a put instead of a call")
    s.set_defaults(func=cmd_price)

    s = sub.add_parser("iv", parents=[common],
                       help="invert one option price to an implied vol")
    s.add_argument("--price", type=float, required=True)
    s.add_argument("--spot", type=float, required=True)
    s.add_argument("--strike", type=float, required=True)
    s.add_argument("--tau", type=float, required=True)
    s.add_argument("--r", type=float, default=0.0)
    s.add_argument("--q", type=float, default=0.0)
    s.add_argument("--put", action="store_true",
                   help="the price is for a put")
    s.set_defaults(func=cmd_iv)

    s = sub.add_parser("surface", parents=[common],
                       help="evaluate the implied-vol grid and audit it")
    _add_model_flags(s)
    s.add_argument("--out", help="write the surface as CSV")
    s.set_defaults(func=cmd_surface)

    s = sub.add_parser("simulate", parents=[common],
                       help="run the recalibration simulator")
    _add_model_flags(s)
    s.add_argument("--nn1", help="forward-net weights (surface_engine=nn1)")
    s.add_argument("--nn2", help="inverse-net weights (or paths.nn2)")
    s.add_argument("--out-dir", dest="out_dir",
                   help="run directory (or paths.out_dir)")
    s.add_argument("--steps", type=int, default=None,
                   help="override sim.n_steps")
    s.add_argument("--seed", type=int, default=None,
                   help="override sim.seed")
    s.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        _pin_threads(args.threads)
        return args.func(args)
    except ConfigError as exc:
        print(f"crcvol: config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except FormatError as exc:
        print(f"crcvol: format error: {exc}", file=sys.stderr)
        return _EXIT_IO
    except OSError as exc:
        print(f"crcvol: i/o error: {exc}", file=sys.stderr)
        return _EXIT_IO
    except NoArbitrageBandError as exc:
        print(f"crcvol: numeric error: {exc} "
              f"({exc.bound} no-arbitrage bound violated)", file=sys.stderr)
        return _EXIT_NUMERIC
    except (AccuracyError, DataGenError, NumericDomainError,
            TrainingDivergedError) as exc:
        print(f"crcvol: numeric error: {exc}", file=sys.stderr)
        return _EXIT_NUMERIC
    except CrcvolError as exc:
        print(f"crcvol: error: {exc}", file=sys.stderr)
        return _EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
