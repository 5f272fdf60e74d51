"""Command line front end.

Subcommands::

    rtbm fit-density --data x.csv --out run/ --nh 3 --bound 50
    rtbm fit-tnn     --data xy.csv --arch 1:3-3-2:1 --out run/
    rtbm classify    --data train.csv --out run/ --nh 2 [--test test.csv]
    rtbm eval        --model run/model.json --data x.csv [--density-out p.csv]
    rtbm theta       --z 0 --omega 6.283185307179586

Models and reports are JSON, data and curves are CSV.  On failure a JSON
error record is printed to stderr and the process exits with 2 (usage),
3 (data) or 4 (numerical failure).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import core, mixture, theta, tnn
from .core import Phase
from .errors import (
    DimensionMismatch,
    EmptyData,
    InvalidConfig,
    ParseError,
    RTBMError,
    UnsupportedDim,
)
from .training import Optimizer, TrainConfig, centre_on_data, nll_cost, train

DEFAULT_CLIP = 20.0


# ---------------------------------------------------------------------------
# input / output helpers


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def ingest_csv(path, clip: float | None = None) -> tuple[np.ndarray, int]:
    """Read a numeric CSV with an optional header row.

    Returns ``(data, n_dropped)`` where ``data`` has one sample per row.
    Rows with any ``|x| >= clip`` are dropped when ``clip`` is given.
    Raises :class:`ParseError` with the 1-based row and column of the first
    non-numeric or non-finite field.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh)]
    numbered = [(i + 1, r) for i, r in enumerate(rows) if any(f.strip() for f in r)]
    if numbered and not all(_is_number(f) for f in numbered[0][1]):
        numbered = numbered[1:]
    if not numbered:
        raise EmptyData(f"{path}: no data rows")
    width = len(numbered[0][1])
    out = np.empty((len(numbered), width))
    for k, (line, r) in enumerate(numbered):
        if len(r) != width:
            raise ParseError(f"row {line}: expected {width} fields, found {len(r)}", line, None)
        for j, f in enumerate(r):
            try:
                x = float(f)
            except ValueError:
                raise ParseError(f"row {line}, column {j + 1}: {f.strip()!r} is not a number",
                                 line, j + 1) from None
            if not math.isfinite(x):
                raise ParseError(f"row {line}, column {j + 1}: non-finite value {f.strip()!r}",
                                 line, j + 1)
            out[k, j] = x
    dropped = 0
    if clip is not None:
        keep = np.all(np.abs(out) < clip, axis=1)
        dropped = int(np.count_nonzero(~keep))
        out = out[keep]
        if out.shape[0] == 0:
            raise EmptyData(f"{path}: every row was clipped")
    return out, dropped


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _csv_text(header: list[str], rows: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for r in np.atleast_2d(rows):
        buf.write(",".join(format(float(x), ".17g") for x in r) + "\n")
    return buf.getvalue()


def _log_density(model, v):
    return mixture.log_likelihood(model, v)


def export_density(model, lo: float, hi: float, points: int, path=None) -> np.ndarray:
    """Tabulate the density on a regular grid.

    Returns rows ``(v, p)`` for one visible unit or ``(v1, v2, p)`` on the
    ``points x points`` product grid for two, and writes them as CSV with a
    header when ``path`` is given.
    """
    if points < 2 or not hi > lo:
        raise InvalidConfig("grid needs hi > lo and at least 2 points")
    n_v = model.n_v
    axis = np.linspace(lo, hi, points)
    if n_v == 1:
        grid = axis[:, None]
        header = ["v", "p"]
    elif n_v == 2:
        a, b = np.meshgrid(axis, axis, indexing="ij")
        grid = np.column_stack([a.ravel(), b.ravel()])
        header = ["v1", "v2", "p"]
    else:
        raise UnsupportedDim(f"density export supports 1 or 2 visible units, model has {n_v}")
    p = np.exp(_log_density(model, grid if n_v > 1 else grid[:, 0]))
    rows = np.column_stack([grid, p])
    if path is not None:
        _atomic_write(path, _csv_text(header, rows))
    return rows


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    if d.get("kind") == "tnn":
        return tnn.TnnNetwork.from_dict(d)
    if d.get("kind") == "feature_classifier":
        raise InvalidConfig("feature classifier files are reports; evaluate with 'classify --test'")
    return mixture.model_from_dict(d)


def model_to_dict(model) -> dict:
    if isinstance(model, tnn.TnnNetwork):
        return model.to_dict()
    return mixture.model_to_dict(model)


# ---------------------------------------------------------------------------
# subcommands


def _config(args) -> TrainConfig:
    kw = dict(optimizer=Optimizer(args.optimizer), bound=args.bound, max_iters=args.max_iters,
              tol=args.tol, seed=args.seed, population=args.population, sigma0=args.sigma0,
              lr=args.lr)
    if getattr(args, "init_scale", None) is not None:
        kw["init_scale"] = args.init_scale
    return TrainConfig(**kw)


def _clip(args):
    return None if args.no_clip else args.clip


def _emit(obj) -> None:
    sys.stdout.write(_json_text(obj))


def cmd_fit_density(args) -> int:
    data, dropped = ingest_csv(args.data, _clip(args))
    n_v = data.shape[1]
    if args.nv is not None and args.nv != n_v:
        raise DimensionMismatch(f"--nv {args.nv} but the data has {n_v} columns")
    config = _config(args)
    phase = Phase(args.phase)
    if args.mixture > 1:
        model = mixture.random_mixture(args.mixture, n_v, args.nh, config.init_scale, args.seed, phase)
    else:
        model = core.init_random(n_v, args.nh, config.init_scale, args.seed, phase,
                                 diagonal_t=config.optimizer != Optimizer.CMAES)
    fitted, report = train(centre_on_data(model, data), data, config)
    out = Path(args.out)
    _atomic_write(out / "model.json", _json_text(model_to_dict(fitted)))
    rep = {"command": "fit-density", "samples": int(data.shape[0]), "dropped_rows": dropped,
           "nll_per_sample": report.final_cost / data.shape[0], **report.to_dict()}
    _atomic_write(out / "report.json", _json_text(rep))
    if n_v <= 2:
        lo, hi, pts = args.grid
        export_density(fitted, lo, hi, int(pts), out / "density.csv")
    _emit({k: rep[k] for k in ("final_cost", "iterations", "nll_per_sample", "dropped_rows")})
    return 0


def _split_xy(data: np.ndarray, n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray]:
    if data.shape[1] != n_in + n_out:
        raise DimensionMismatch(f"data has {data.shape[1]} columns, expected {n_in} inputs + "
                                f"{n_out} targets")
    return data[:, :n_in], data[:, n_in:]


def cmd_fit_tnn(args) -> int:
    data, dropped = ingest_csv(args.data, _clip(args))
    config = _config(args)
    net = tnn.build_network(args.arch, seed=args.seed, phase=Phase(args.phase), loss=tnn.Loss(args.loss),
                            w_scale=args.init_scale if args.init_scale is not None else 1.0)
    x, y = _split_xy(data, net.in_dim, net.out_dim)
    fitted, report = tnn.network_train(net, x, y, config)
    out = Path(args.out)
    _atomic_write(out / "model.json", _json_text(fitted.to_dict()))
    rep = {"command": "fit-tnn", "samples": int(x.shape[0]), "dropped_rows": dropped,
           "n_params": fitted.n_params(), **report.to_dict()}
    _atomic_write(out / "report.json", _json_text(rep))
    grid_x = x
    if args.grid is not None and net.in_dim == 1:
        lo, hi, pts = args.grid
        grid_x = np.linspace(lo, hi, int(pts))[:, None]
    pred = tnn.network_forward(fitted, grid_x)
    header = [f"x{i + 1}" for i in range(net.in_dim)] + [f"y{i + 1}" for i in range(net.out_dim)]
    _atomic_write(out / "predictions.csv", _csv_text(header, np.column_stack([grid_x, pred])))
    _emit({"final_cost": report.final_cost, "iterations": report.iterations, "n_params": fitted.n_params()})
    return 0


def _patches(n_features: int, size: int) -> list[tuple[int, ...]]:
    if size < 1 or n_features % size:
        raise InvalidConfig(f"{n_features} features cannot be split into patches of {size}")
    return [tuple(range(i, i + size)) for i in range(0, n_features, size)]


def cmd_classify(args) -> int:
    data, dropped = ingest_csv(args.data, _clip(args))
    x, labels = data[:, :-1], data[:, -1]
    config = _config(args)
    clf = tnn.feature_classifier_fit(x, labels, _patches(x.shape[1], args.patch_size), n_h=args.nh,
                                     config=config, phase=Phase(args.phase))
    lr = clf.classifier
    doc = {
        "kind": "feature_classifier",
        "patches": [list(p) for p in clf.patches],
        "models": [m.to_dict() for m in clf.models],
        "logistic": {"classes": lr.classes_.tolist(), "coef": lr.coef_.tolist(),
                     "intercept": lr.intercept_.tolist()},
    }
    out = Path(args.out)
    _atomic_write(out / "model.json", _json_text(doc))
    rep = {"command": "classify", "samples": int(x.shape[0]), "dropped_rows": dropped,
           "train_accuracy": clf.score(x, labels)}
    if args.test:
        test, _ = ingest_csv(args.test, _clip(args))
        if test.shape[1] != data.shape[1]:
            raise DimensionMismatch("test data has a different number of columns")
        rep["test_accuracy"] = clf.score(test[:, :-1], test[:, -1])
    _atomic_write(out / "report.json", _json_text(rep))
    _emit(rep)
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model)
    result: dict = {}
    if args.data:
        data, dropped = ingest_csv(args.data, _clip(args))
        result["dropped_rows"] = dropped
        if isinstance(model, tnn.TnnNetwork):
            x, y = _split_xy(data, model.in_dim, model.out_dim)
            result["loss"] = tnn.network_loss(model, x, y)
            if model.out_dim > 1:
                pred = np.argmax(tnn.network_forward(model, x), axis=1)
                result["accuracy"] = float(np.mean(pred == np.argmax(y, axis=1)))
        else:
            if data.shape[1] != model.n_v:
                raise DimensionMismatch(f"model has {model.n_v} visible units, data has {data.shape[1]} columns")
            cost = nll_cost(model, data)
            result["nll"] = cost
            result["nll_per_sample"] = cost / data.shape[0]
    if args.density_out:
        if isinstance(model, tnn.TnnNetwork):
            raise InvalidConfig("density export needs a density model")
        lo, hi, pts = args.grid
        export_density(model, lo, hi, int(pts), args.density_out)
        result["density_csv"] = str(args.density_out)
    _emit(result)
    return 0


def _parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([complex(s.replace(" ", "")) for s in text.split(",")])
    except ValueError:
        raise InvalidConfig(f"cannot parse vector {text!r}") from None


def cmd_theta(args) -> int:
    z = _parse_vector(args.z)
    rows = [_parse_vector(r) for r in args.omega.split(";")]
    if len({len(r) for r in rows}) != 1:
        raise DimensionMismatch("omega rows differ in length")
    omega = np.array(rows)
    if np.all(omega.imag == 0):
        omega = omega.real
    if np.all(z.imag == 0):
        z = z.real
    derivs = []
    if args.derivs:
        for part in args.derivs.split(";"):
            try:
                derivs.append(tuple(int(i) for i in part.split(",")))
            except ValueError:
                raise InvalidConfig(f"cannot parse derivative {part!r}") from None
    if args.naive is not None:
        res = theta.theta_tilde_naive(z, omega, derivs, radius=args.naive)
    else:
        res = theta.theta_tilde(z, omega, derivs)

    def enc(c):
        c = complex(c)
        return {"re": c.real, "im": c.imag}

    val = complex(res.value) * math.exp(res.log_scale) if res.log_scale < 700 else None
    out = {"log_scale": res.log_scale, "value": enc(res.value),
           "theta": enc(val) if val is not None else None,
           "derivs": {",".join(map(str, k)): enc(v) for k, v in res.derivs.items()}}
    _emit(out)
    return 0


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(_json_text({"error": "UsageError", "message": message}))
        self.exit(2)


def _common_train(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="CSV file, one sample per row")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--phase", type=int, choices=(1, 2), default=1)
    p.add_argument("--bound", type=float, default=50.0, help="box bound on every parameter")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--optimizer", choices=[o.value for o in Optimizer], default="cmaes")
    p.add_argument("--population", type=int, default=None, help="CMA-ES population size")
    p.add_argument("--sigma0", type=float, default=1.0, help="CMA-ES initial step size")
    p.add_argument("--lr", type=float, default=0.01, help="learning rate for adam/sgd")
    p.add_argument("--init-scale", type=float, default=None,
                   help="range of the random initialisation")
    _clip_flags(p)


def _clip_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--clip", type=float, default=DEFAULT_CLIP,
                   help="drop rows with any |x| >= CLIP (default 20)")
    p.add_argument("--no-clip", action="store_true", help="keep every row")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rtbm", description="Riemann-Theta Boltzmann machine tools")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit-density", help="fit an RTBM or RTBM mixture by maximum likelihood")
    _common_train(p)
    p.add_argument("--nv", type=int, default=None, help="visible units (checked against the data)")
    p.add_argument("--nh", type=int, default=1, help="hidden units per RTBM")
    p.add_argument("--mixture", type=int, default=1, help="number of mixture components")
    p.add_argument("--grid", type=float, nargs=3, default=(-30.0, 30.0, 2001),
                   metavar=("LO", "HI", "POINTS"), help="density export grid")
    p.set_defaults(func=cmd_fit_density)

    p = sub.add_parser("fit-tnn", help="fit a theta neural network (inputs then targets per row)")
    _common_train(p)
    p.add_argument("--arch", required=True, help="architecture such as 1:3-3-2:1")
    p.add_argument("--loss", choices=[x.value for x in tnn.Loss], default="mse")
    p.add_argument("--grid", type=float, nargs=3, default=None, metavar=("LO", "HI", "POINTS"),
                   help="prediction grid for one-input networks (default: the training inputs)")
    p.set_defaults(func=cmd_fit_tnn)

    p = sub.add_parser("classify", help="patch-RTBM features plus logistic regression "
                                        "(last column is the label)")
    _common_train(p)
    p.add_argument("--nh", type=int, default=2, help="hidden units per patch RTBM")
    p.add_argument("--patch-size", type=int, default=1, help="features per patch")
    p.add_argument("--test", default=None, help="held-out CSV to score")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("eval", help="evaluate a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--density-out", default=None, help="write the density on --grid to this CSV")
    p.add_argument("--grid", type=float, nargs=3, default=(-30.0, 30.0, 2001), metavar=("LO", "HI", "POINTS"))
    _clip_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("theta", help="evaluate the rescaled Riemann theta function")
    p.add_argument("--z", required=True, help="comma separated, complex allowed (e.g. 0,1j)")
    p.add_argument("--omega", required=True, help="rows separated by ';', entries by ','")
    p.add_argument("--derivs", default=None, help="derivative index tuples, e.g. '0;0,1'")
    p.add_argument("--naive", type=int, default=None, metavar="RADIUS",
                   help="use the brute-force box sum instead")
    p.set_defaults(func=cmd_theta)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RTBMError as exc:
        err = {"error": exc.kind, "message": str(exc)}
        if isinstance(exc, ParseError):
            err.update(row=exc.row, col=exc.col)
        sys.stderr.write(_json_text(err))
        return exc.exit_code
    except FileNotFoundError as exc:
        sys.stderr.write(_json_text({"error": "FileNotFound", "message": str(exc)}))
        return 3
    except (json.JSONDecodeError, KeyError) as exc:
        sys.stderr.write(_json_text({"error": "ParseError", "message": f"bad model file: {exc}"}))
        return 3


if __name__ == "__main__":
    sys.exit(main())
