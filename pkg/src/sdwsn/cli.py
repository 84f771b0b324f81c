"""Command-line entry point ``sdwsn``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .channel import ChannelSpec, ai_fit, psi, state_from_model
from .covmodel import read_matrix, sample_covariances, write_matrix
from .harness.config import ConfigError, ExperimentConfig
from .harness.experiments import RunReport, run
from .harness.io import load_model, save_model
from .linear import linear_fit, linear_pack
from .matalg import InvalidInputError
from .mbi import FitConfig, apply_network, extract_models, mbi_fit
from .sdt import error_exact

U64_MAX = 2**64 - 1


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v <= U64_MAX:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _global_flags(parser, default) -> None:
    parser.add_argument("--seed", type=_u64, default=default,
                        help="random seed (unsigned 64-bit)")
    parser.add_argument("--out", type=Path, default=default, help="output directory")
    parser.add_argument("--format", choices=("csv", "svg", "both"), default=default)


def _data_flags(p) -> None:
    p.add_argument("--x", type=Path, required=True, help="training signal, m x s CSV")
    p.add_argument("--y", type=Path, nargs="+", required=True,
                   help="training observations, one n_j x s CSV per sensor")
    p.add_argument("--r", type=int, nargs="+", required=True, help="rank per sensor")
    p.add_argument("--lifting", choices=("full", "reduced"), default="full")
    p.add_argument("--m-split", type=int, nargs="*", default=())
    p.add_argument("--epsilon", type=float, default=1e-9)
    p.add_argument("--max-iterations", type=int, default=100)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdwsn", description="Second-degree sensor network fitting and experiments."
    )
    _global_flags(parser, None)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    # repeated on each subcommand so the flags may follow it too
    _global_flags(common, argparse.SUPPRESS)

    p = sub.add_parser("run", parents=[common], help="run an experiment from a YAML config")
    p.add_argument("--config", type=Path, required=True)

    p = sub.add_parser("fit-ideal", parents=[common], help="fit over ideal channels from data")
    _data_flags(p)

    p = sub.add_parser("fit-channel", parents=[common], help="fit over noisy channels from data")
    _data_flags(p)
    p.add_argument("--D", type=Path, nargs="+", required=True, help="channel matrix CSV per sensor")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--gamma", type=float, nargs="+", help="white channel noise std per sensor")
    g.add_argument("--eta", type=Path, nargs="+", help="channel noise covariance CSV per sensor")

    p = sub.add_parser("apply", parents=[common], help="reconstruct signals with a saved model")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--y", type=Path, nargs="+", required=True)

    p = sub.add_parser("compare", parents=[common],
                       help="fit second-degree and linear networks on the same data")
    _data_flags(p)
    return parser


def _load_data(a):
    X = read_matrix(a.x)
    Ys = [read_matrix(p) for p in a.y]
    if len(a.r) != len(Ys):
        raise InvalidInputError("--r needs one rank per --y file")
    pack = sample_covariances(X, Ys, a.r, lifting=a.lifting, m_split=a.m_split)
    cfg = FitConfig(epsilon=a.epsilon, max_iterations=a.max_iterations)
    return pack, cfg


def _finish(report: RunReport, out: Path, fmt: str) -> None:
    for path in report.write(out, fmt):
        print(path)
    for name, m in report.methods.items():
        print(f"{name}: mse={m.mse:.10g} iterations={m.iterations} converged={m.converged}")


def cmd_run(a) -> None:
    cfg = ExperimentConfig.load(a.config)
    if a.seed is not None:
        cfg.seed = a.seed
    if a.out is not None:
        cfg.out_dir = a.out
    if a.format is not None:
        cfg.format = a.format
    report = run(cfg)
    _finish(report, cfg.out_dir, cfg.format)
    print(f"wall time: {report.wall_time:.3f} s")


def cmd_fit_ideal(a) -> None:
    pack, cfg = _load_data(a)
    res = mbi_fit(pack, cfg)
    model = extract_models(res, pack)
    out = a.out or Path("out")
    save_model(model, out / "model")
    report = RunReport("fit-ideal")
    report.add("sd", error_exact(res.P, pack), res.trace)
    _finish(report, out, a.format or "csv")


def cmd_fit_channel(a) -> None:
    pack, cfg = _load_data(a)
    D = [read_matrix(p) for p in a.D]
    ch = (ChannelSpec.white(D, a.gamma) if a.gamma is not None
          else ChannelSpec(D=tuple(D), E_eta=tuple(read_matrix(p) for p in a.eta)))
    ideal = extract_models(mbi_fit(pack, cfg), pack)
    st = ai_fit(pack, ch, cfg, state_from_model(ideal))
    out = a.out or Path("out")
    d = out / "model"
    d.mkdir(parents=True, exist_ok=True)
    part = pack.partition
    save_model(ideal, d)  # layout and metadata; T_j, S_j overwritten below
    for j, (T, S) in enumerate(zip(st.T_blocks(part.r), st.S), start=1):
        write_matrix(d / f"T_{j}.csv", T)
        write_matrix(d / f"S_{j}.csv", S)
    report = RunReport("fit-channel")
    report.add("sd", psi(st.T, st.S, ch, pack), st.trace, channel=True)
    _finish(report, out, a.format or "csv")


def cmd_apply(a) -> None:
    model = load_model(a.model)
    Xh = apply_network(model, [read_matrix(p) for p in a.y])
    out = a.out or Path("out")
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "x_hat.csv", Xh)
    print(out / "x_hat.csv")


def cmd_compare(a) -> None:
    pack, cfg = _load_data(a)
    report = RunReport("compare")
    res = mbi_fit(pack, cfg)
    report.add("sd", error_exact(res.P, pack), res.trace)
    lin, tr = linear_fit(pack, cfg)
    report.add("linear", error_exact(lin.F, linear_pack(pack)), tr)
    _finish(report, a.out or Path("out"), a.format or "both")


COMMANDS = {
    "run": cmd_run, "fit-ideal": cmd_fit_ideal, "fit-channel": cmd_fit_channel,
    "apply": cmd_apply, "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    try:
        COMMANDS[a.command](a)
    except (ConfigError, InvalidInputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
