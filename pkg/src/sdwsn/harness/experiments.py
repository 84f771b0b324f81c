"""Reproducible experiment runs and their reports."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..channel import ChannelSpec, ai_fit, psi, state_from_model
from ..covmodel import CovariancePack, gaussian_analytic_covariances, sample_covariances
from ..linear import linear_fit, linear_pack
from ..mbi import FitConfig, FitTrace, apply_network, extract_models, mbi_fit
from ..sdt import error_exact
from . import plots
from .config import ExperimentConfig
from .io import read_image, synthetic_image, write_pgm, write_report_csv

EXAMPLE1_EXX = [[1.0, 0.64, 0.08], [0.64, 1.0, 0.08], [0.08, 0.08, 1.0]]
EXAMPLE5_EXX = [
    [1.000, 0.580, 0.275, 0.450],
    [0.580, 1.000, 0.295, 0.540],
    [0.275, 0.295, 1.000, 0.215],
    [0.450, 0.540, 0.215, 1.000],
]
EXAMPLE5_D = [[[6.0, 6.0], [2.0, 8.0]], [[0.0, 5.0], [0.0, 5.0]]]


@dataclass
class MethodResult:
    mse: float
    iterations: int
    converged: bool
    trace: FitTrace
    channel: bool = False


@dataclass
class RunReport:
    experiment: str
    methods: dict = field(default_factory=dict)
    column_errors: dict = field(default_factory=dict)
    images: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def add(self, name: str, mse: float, trace: FitTrace, channel: bool = False) -> None:
        mse = float(mse)
        if not np.isfinite(mse) or mse < 0:
            raise ArithmeticError(f"{name}: invalid MSE {mse}")
        self.methods[name] = MethodResult(mse, trace.iterations, trace.converged, trace,
                                           channel)

    def mse(self, name: str) -> float:
        return self.methods[name].mse

    def write(self, out_dir, fmt: str = "both") -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        if fmt in ("csv", "both"):
            p = out / "report.csv"
            write_report_csv(p, [(k, v.mse, v.iterations, v.converged)
                                 for k, v in self.methods.items()])
            written.append(p)
            for k, v in self.methods.items():
                p = out / f"trace_{k}.csv"
                if v.channel:
                    v.trace.to_csv(p, "psi", "chosen_candidate")
                else:
                    v.trace.to_csv(p)
                written.append(p)
            if self.column_errors:
                p = out / "column_errors.csv"
                names = list(self.column_errors)
                cols = np.column_stack([self.column_errors[k] for k in names])
                with open(p, "w") as fh:
                    fh.write("column," + ",".join(names) + "\n")
                    for i, row in enumerate(cols, start=1):
                        fh.write(f"{i}," + ",".join(repr(float(v)) for v in row) + "\n")
                written.append(p)
            for k, img in self.images.items():
                p = out / f"{k}.pgm"
                write_pgm(p, img)
                written.append(p)
        if fmt in ("svg", "both"):
            p = out / "mse.svg"
            names = list(self.methods)
            plots.bar_chart(p, names, [self.methods[k].mse for k in names],
                            title=self.experiment)
            written.append(p)
            p = out / "traces.svg"
            plots.line_chart(
                p, {k: (np.arange(len(v.trace.objectives)), v.trace.objectives)
                    for k, v in self.methods.items()},
                "iteration", "objective", title=self.experiment,
            )
            written.append(p)
            if self.column_errors:
                p = out / "column_errors.svg"
                plots.line_chart(
                    p, {k: (np.arange(1, len(e) + 1), e) for k, e in self.column_errors.items()},
                    "column", "squared error", title=self.experiment,
                )
                written.append(p)
        return written


def fit_config(cfg: ExperimentConfig, **defaults) -> FitConfig:
    f = {**defaults, **cfg.fit}
    return FitConfig(epsilon=float(f.get("epsilon", 1e-9)),
                     max_iterations=int(f.get("max_iterations", 100)),
                     init=f.get("init", "sdt"))


def _fit_pair(report: RunReport, pack: CovariancePack, fc: FitConfig, suffix: str = ""):
    """Fit the second-degree and linear networks on the same moments."""
    res = mbi_fit(pack, fc)
    report.add("sd" + suffix, error_exact(res.P, pack), res.trace)
    lin, ltrace = linear_fit(pack, fc)
    report.add("linear" + suffix, error_exact(lin.F, linear_pack(pack)), ltrace)
    return res, lin


def run_example1(cfg: ExperimentConfig) -> RunReport:
    t0 = time.perf_counter()
    E_xx = cfg.E_xx(EXAMPLE1_EXX)
    part = cfg.partition
    sigma = cfg.noise.get("sigma", [0.9, 0.65])
    r = part.get("r", [1, 1])
    pack = gaussian_analytic_covariances(
        E_xx, sigma, r, lifting=part.get("lifting", "reduced"),
        m_split=part.get("m_split", [2, 1] if E_xx.shape[0] == 3 and len(r) == 2 else ()),
    )
    report = RunReport("example1")
    _fit_pair(report, pack, fit_config(cfg, max_iterations=5000))
    report.wall_time = time.perf_counter() - t0
    return report


def run_example2(cfg: ExperimentConfig) -> RunReport:
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    d = cfg.data
    m = int(d.get("m", 8))
    s = int(d.get("samples", 20))
    counts = d.get("sensor_counts", [2, 3])
    beta_all = cfg.noise.get("beta", [0.1, 0.2, 0.3])
    lifting = cfg.partition.get("lifting", "full")
    report = RunReport("example2")
    fc = fit_config(cfg, max_iterations=200)
    for p in counts:
        n = d.get("n", [m] * p)[:p]
        r = cfg.partition.get(f"r_p{p}", [max(m // 4, 1)] * p)
        X = rng.uniform(0.0, 1.0, size=(m, s))
        Ys = []
        for j in range(p):
            A = rng.uniform(0.0, 1.0, size=(n[j], m))
            Ys.append(A @ X + beta_all[j] * rng.standard_normal((n[j], s)))
        pack = sample_covariances(X, Ys, r, lifting=lifting)
        _fit_pair(report, pack, fc, suffix=f"_p{p}")
    report.wall_time = time.perf_counter() - t0
    return report


def example4_data(cfg: ExperimentConfig):
    """Image, noisy observations and the 0-based training column indices."""
    if cfg.image.get("path"):
        X = read_image(cfg.resolve(cfg.image["path"]))
    else:
        X = synthetic_image(int(cfg.image.get("size", 64)))
    rng = np.random.default_rng(cfg.seed)
    beta = cfg.noise.get("beta", [0.2, 0.1])
    Ys = []
    for b in beta:
        A = rng.standard_normal(X.shape)
        Ys.append(A * X + b * rng.standard_normal(X.shape))
    # 1-based even columns 2, 4, ...
    train = np.arange(1, X.shape[1], 2)
    return X, Ys, train


def run_example4(cfg: ExperimentConfig) -> RunReport:
    t0 = time.perf_counter()
    X, Ys, train = example4_data(cfg)
    m = X.shape[0]
    p = len(Ys)
    r = cfg.partition.get("r", [m // 2] * p)
    pack = sample_covariances(X[:, train], [Y[:, train] for Y in Ys], r,
                              lifting=cfg.partition.get("lifting", "full"),
                              m_split=cfg.partition.get("m_split", ()))
    report = RunReport("example4")
    fc = fit_config(cfg, max_iterations=50)
    res, lin = _fit_pair(report, pack, fc)
    X_sd = apply_network(extract_models(res, pack), Ys)
    X_lin = apply_network(lin.model, Ys)
    report.column_errors = {
        "sd": np.sum((X - X_sd) ** 2, axis=0),
        "linear": np.sum((X - X_lin) ** 2, axis=0),
    }
    report.images = {"original": X, "reconstruction_sd": X_sd, "reconstruction_linear": X_lin}
    report.wall_time = time.perf_counter() - t0
    return report


def run_example5(cfg: ExperimentConfig) -> RunReport:
    t0 = time.perf_counter()
    E_xx = cfg.E_xx(EXAMPLE5_EXX)
    part = cfg.partition
    r = part.get("r", [2, 2])
    delta = cfg.noise.get("delta", [0.7, 0.8])
    gamma = cfg.noise.get("gamma", [0.6, 0.5])
    pack = gaussian_analytic_covariances(E_xx, delta, r,
                                         lifting=part.get("lifting", "reduced"),
                                         m_split=part.get("m_split", ()))
    D, E_eta = cfg.channel_matrices(EXAMPLE5_D)
    ch = ChannelSpec(D=tuple(D), E_eta=tuple(E_eta)) if E_eta else ChannelSpec.white(D, gamma)
    fc = fit_config(cfg, max_iterations=200)
    report = RunReport("example5")
    for name, pk in (("sd", pack), ("linear", linear_pack(pack))):
        ideal = mbi_fit(pk, FitConfig(epsilon=fc.epsilon, max_iterations=5000))
        st = ai_fit(pk, ch, fc, state_from_model(extract_models(ideal, pk)))
        report.add(name, psi(st.T, st.S, ch, pk), st.trace, channel=True)
    report.wall_time = time.perf_counter() - t0
    return report


RUNNERS = {
    "example1": run_example1,
    "example2": run_example2,
    "example4": run_example4,
    "example5": run_example5,
}


def run(cfg: ExperimentConfig) -> RunReport:
    return RUNNERS[cfg.experiment](cfg)
