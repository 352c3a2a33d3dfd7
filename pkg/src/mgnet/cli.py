"""Command-line entry points.

Subcommands: gradfield, coupling, adapt (the three experiments), verify
(property checks on a saved model), info (model summary). Exit codes: 0
success, 1 property violation, 2 configuration or input problem, 3
runtime failure during training or evaluation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .errors import (
    ConfigError,
    DegenerateData,
    DimensionMismatch,
    FormatError,
    InvalidSpec,
    MgnError,
    NotPositiveDefinite,
    UnknownActivation,
    UnsupportedFormat,
)
from .gradfield import run_gradfield, true_gradient
from .imaging import adapt_apply, adapt_train, image_pixels, load_image, save_image
from .linalg import cholesky
from .models import (
    ModelSpec,
    forward,
    jacobian,
    load_model,
    param_count,
    save_model,
)
from .seeding import STREAM_TEST, substream
from .training import TrainConfig, chol_logdet_batch
from .transport import (
    COUPLING_CSV_HEADER,
    gaussian_sample,
    random_gaussian,
    run_coupling,
    whitening_map,
    whitening_report,
)
from .textio import write_csv

_MODEL_KEYS = {
    "arch", "n", "hidden", "depth", "modules",
    "activations", "gamma", "diag_scales", "v_rows",
}
_TRAIN_KEYS = {
    "batch_size", "epochs", "learning_rate",
    "adam_beta1", "adam_beta2", "adam_eps", "loss", "seed",
}


# ---------------------------------------------------------------- config


def _load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return doc


def _apply_overrides(doc, assignments):
    """Apply --set key.path=value entries; values parse as JSON when possible."""
    for item in assignments or ():
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = doc
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set {key}: {part!r} is not an object")
        node[parts[-1]] = value
    return doc


def _section(doc, name, allowed, where):
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"{where}: section {name!r} must be an object")
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown {name} keys {sorted(unknown)}")
    return sec


def _check_sections(doc, allowed, where):
    unknown = set(doc) - set(allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown sections {sorted(unknown)}")


def _as_tuple(value):
    return tuple(value) if isinstance(value, list) else value


def _model_spec(section, where, n=None, arch=None):
    kwargs = dict(section)
    if "hidden" in kwargs:
        kwargs["hidden"] = _as_tuple(kwargs["hidden"])
    if "activations" in kwargs:
        kwargs["activations"] = _as_tuple(kwargs["activations"])
    if n is not None:
        if kwargs.setdefault("n", n) != n:
            raise ConfigError(f"{where}: model n={kwargs['n']} conflicts with d={n}")
    if arch is not None:
        if kwargs.setdefault("arch", arch) != arch:
            raise ConfigError(f"{where}: arch {kwargs['arch']!r} under key {arch!r}")
    try:
        return ModelSpec(**kwargs)
    except TypeError as e:
        raise ConfigError(f"{where}: {e}") from None


def _train_config(section, seed_flag, required_loss, where):
    kwargs = dict(section)
    if seed_flag is not None:
        kwargs["seed"] = seed_flag
    kwargs.setdefault("loss", required_loss)
    if kwargs["loss"] != required_loss:
        raise ConfigError(
            f"{where}: this experiment trains with loss {required_loss!r}, "
            f"got {kwargs['loss']!r}"
        )
    try:
        return TrainConfig(**kwargs)
    except TypeError as e:
        raise ConfigError(f"{where}: {e}") from None


def _int_field(sec, key, default, where, minimum=0):
    value = sec.get(key, default)
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ConfigError(f"{where}: {key} must be an int >= {minimum}, got {value!r}")
    return value


def _out_dir(args):
    path = args.out or "."
    os.makedirs(path, exist_ok=True)
    return path


# ------------------------------------------------------------- artifacts


def write_pgm(path, grid):
    """Binary P5 image of a nonnegative grid, scaled so the max is 255."""
    grid = np.asarray(grid, dtype=np.float64)
    peak = float(grid.max()) if grid.size else 0.0
    if peak > 0.0:
        byte = np.floor(grid * (255.0 / peak) + 0.5).astype(np.uint8)
    else:
        byte = np.zeros(grid.shape, dtype=np.uint8)
    header = f"P5\n{grid.shape[1]} {grid.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(byte.tobytes())


def _write_gradfield_artifacts(out, result, model, report):
    axis = result.axis
    rows = []
    for i, x1 in enumerate(axis):
        for j, x2 in enumerate(axis):
            rows.append((x1, x2, result.error_grid[i, j]))
    write_csv(os.path.join(out, "error_grid.csv"), ("x1", "x2", "error"), rows)
    write_pgm(os.path.join(out, "error_grid.pgm"), result.error_grid)

    idx = axis[::5]
    quiver = []
    for x1 in idx:
        for x2 in idx:
            point = np.array([x1, x2])
            t = true_gradient(point)
            p = forward(model, point)
            quiver.append((x1, x2, t[0], t[1], p[0], p[1]))
    write_csv(
        os.path.join(out, "quiver.csv"),
        ("x1", "x2", "true_dx1", "true_dx2", "pred_dx1", "pred_dx2"),
        quiver,
    )
    save_model(model, os.path.join(out, "model.json"))
    report.save_json(os.path.join(out, "train_report.json"))
    report.save_loss_csv(os.path.join(out, "loss.csv"))


def _write_scatter(out, method, x_test, mapped, limit=200):
    d = x_test.shape[1]
    count = min(limit, x_test.shape[0])
    header = (
        ("rank",)
        + tuple(f"x{k + 1}" for k in range(d))
        + tuple(f"y{k + 1}" for k in range(d))
    )
    rows = [
        (rank,) + tuple(x_test[rank]) + tuple(mapped[rank])
        for rank in range(count)
    ]
    write_csv(os.path.join(out, f"scatter_{method}.csv"), header, rows)


# ------------------------------------------------------------- commands


def cmd_gradfield(args):
    doc = _apply_overrides(_load_config(args.config), args.set)
    _check_sections(doc, ("model", "train", "experiment"), args.config)
    model_sec = _section(doc, "model", _MODEL_KEYS, args.config)
    train_sec = _section(doc, "train", _TRAIN_KEYS, args.config)
    exp = _section(doc, "experiment", {"points_per_epoch"}, args.config)

    spec = _model_spec(model_sec, args.config)
    if spec.n != 2:
        raise ConfigError(f"{args.config}: the field benchmark is 2-d, got n={spec.n}")
    cfg = _train_config(train_sec, args.seed, "mae", args.config)
    points = _int_field(exp, "points_per_epoch", 10**6, args.config, minimum=1)

    result, model, report = run_gradfield(spec, cfg, cfg.seed, points_per_epoch=points)
    out = _out_dir(args)
    _write_gradfield_artifacts(out, result, model, report)
    print(f"mse_db={result.mse_db:.6f} params={result.param_count}")
    return 0


def cmd_coupling(args):
    doc = _apply_overrides(_load_config(args.config), args.set)
    _check_sections(doc, ("model", "train", "experiment"), args.config)
    train_sec = _section(doc, "train", _TRAIN_KEYS, args.config)
    exp = _section(
        doc,
        "experiment",
        {"d", "data_seed", "train_samples", "test_samples", "eig_range", "mean_scale"},
        args.config,
    )
    model_sec = doc.get("model", {})
    if not isinstance(model_sec, dict) or not model_sec:
        raise ConfigError(f"{args.config}: model section must map method name to spec")
    unknown = set(model_sec) - {"cmgn", "mmgn"}
    if unknown:
        raise ConfigError(f"{args.config}: unknown coupling methods {sorted(unknown)}")

    d = _int_field(exp, "d", 0, args.config, minimum=1)
    data_seed = _int_field(exp, "data_seed", 7, args.config)
    train_samples = _int_field(exp, "train_samples", 200_000, args.config, minimum=1)
    test_samples = _int_field(exp, "test_samples", 100_000, args.config, minimum=1)
    eig_range = exp.get("eig_range", [0.5, 2.5])
    mean_scale = exp.get("mean_scale", 1.0)
    cfg = _train_config(train_sec, args.seed, "flow_nll", args.config)

    if not isinstance(eig_range, (list, tuple)) or len(eig_range) != 2:
        raise ConfigError(f"{args.config}: eig_range must be [low, high]")
    data = random_gaussian(d, data_seed, eig_range=tuple(eig_range), mean_scale=mean_scale)
    out = _out_dir(args)
    x_test = gaussian_sample(data, test_samples, substream(cfg.seed, STREAM_TEST))
    x_head = x_test[:200]

    reports = [whitening_report(data, test_samples=test_samples, seed=cfg.seed)]
    _write_scatter(out, "whitening", x_head, whitening_map(data, x_head))
    for method in sorted(model_sec):
        sec = model_sec[method]
        if not isinstance(sec, dict):
            raise ConfigError(f"{args.config}: model.{method} must be an object")
        unknown = set(sec) - _MODEL_KEYS
        if unknown:
            raise ConfigError(f"{args.config}: unknown model.{method} keys {sorted(unknown)}")
        spec = _model_spec(sec, args.config, n=d, arch=method)
        report, model, treport = run_coupling(
            spec, data, cfg,
            train_samples=train_samples, test_samples=test_samples, seed=cfg.seed,
        )
        reports.append(report)
        _write_scatter(out, method, x_head, forward(model, x_head))
        save_model(model, os.path.join(out, f"model_{method}.json"))
        treport.save_json(os.path.join(out, f"train_report_{method}.json"))
        treport.save_loss_csv(os.path.join(out, f"loss_{method}.csv"))

    write_csv(
        os.path.join(out, "coupling.csv"),
        COUPLING_CSV_HEADER,
        [r.row() for r in reports],
    )
    for r in reports:
        print(
            f"{r.method}: nll={r.nll:.6f} (bound {r.entropy_bound:.6f}) "
            f"cost={r.cost:.6f} (optimal {r.optimal_cost:.6f})"
        )
    return 0


def cmd_adapt(args):
    doc = _apply_overrides(_load_config(args.config), args.set)
    _check_sections(doc, ("model", "train", "experiment"), args.config)
    model_sec = _section(doc, "model", _MODEL_KEYS, args.config)
    train_sec = _section(doc, "train", _TRAIN_KEYS, args.config)
    exp = _section(
        doc, "experiment", {"source", "target", "apply_to", "max_pixels"}, args.config
    )

    base = os.path.dirname(os.path.abspath(args.config))
    for key in ("source", "target"):
        if not isinstance(exp.get(key), str):
            raise ConfigError(f"{args.config}: experiment.{key} must be an image path")
    source_path = os.path.join(base, exp["source"])
    target_path = os.path.join(base, exp["target"])
    apply_path = os.path.join(base, exp["apply_to"]) if "apply_to" in exp else source_path
    max_pixels = _int_field(exp, "max_pixels", 100_000, args.config, minimum=1)

    spec = _model_spec(model_sec, args.config, n=3)
    cfg = _train_config(train_sec, args.seed, "flow_nll", args.config)

    source = load_image(source_path)
    target = load_image(target_path)
    apply_to = source if apply_path == source_path else load_image(apply_path)

    result, model, report = adapt_train(
        image_pixels(source), image_pixels(target), spec, cfg, cfg.seed,
        max_pixels=max_pixels,
    )
    out = _out_dir(args)
    save_image(os.path.join(out, "adapted.png"), adapt_apply(model, apply_to))
    save_model(model, os.path.join(out, "model.json"))
    write_csv(
        os.path.join(out, "kl.csv"),
        ("epoch", "kl"),
        list(enumerate(result.kl_history)),
    )
    report.save_json(os.path.join(out, "train_report.json"))
    report.save_loss_csv(os.path.join(out, "loss.csv"))
    print(f"final_kl={result.final_kl:.6f} pixels={result.pixels_used}")
    return 0


# -------------------------------------------------------------- verify


def _verify_spec(model):
    gamma = model.gamma
    if not (isinstance(gamma, float) and np.isfinite(gamma) and gamma >= 0.0):
        return f"gamma must be finite and >= 0, stored value is {gamma!r}"
    return None


def _first_bad_psd(jac, shift):
    """Index of the first Jacobian whose shifted form fails Cholesky."""
    shifted = jac + shift * np.eye(jac.shape[-1])
    try:
        chol_logdet_batch(shifted)
        return None
    except NotPositiveDefinite:
        for i in range(shifted.shape[0]):
            try:
                cholesky(shifted[i])
            except NotPositiveDefinite:
                return i
        return 0


def _run_verify(model, path, seed, report=print):
    failures = 0

    def suite(name, ok, total, detail=None):
        nonlocal failures
        report(f"{name}: {ok}/{total} ok")
        if ok != total:
            failures += 1
            if detail is not None:
                report(f"  FAIL {name} on model {path}: {detail}")

    msg = _verify_spec(model)
    suite("spec", 0 if msg else 1, 1, msg)
    if msg is not None:
        # parameter-level violation; pointwise suites would be misleading
        return 1

    n = model.n
    rng = substream(seed, STREAM_TEST)
    points = 2.0 * rng.standard_normal((10_000, n))
    jac = jacobian(model, points)

    asym = np.abs(jac - np.swapaxes(jac, -1, -2)).max(axis=(-1, -2))
    bad = int(np.sum(asym > 1e-10))
    worst = int(np.argmax(asym))
    suite(
        "symmetry", points.shape[0] - bad, points.shape[0],
        None if bad == 0 else f"max |J - J^T| = {asym[worst]:.3e} at x={points[worst].tolist()}",
    )

    idx = _first_bad_psd(jac, 1e-8)
    suite(
        "psd", points.shape[0] if idx is None else idx, points.shape[0],
        None if idx is None else f"J + 1e-8 I not PD at x={points[idx].tolist()}",
    )
    if model.gamma > 0.0:
        idx = _first_bad_psd(jac, 1e-8 - model.gamma)
        suite(
            "psd_gamma_floor", points.shape[0] if idx is None else idx, points.shape[0],
            None if idx is None else
            f"J - gamma I + 1e-8 I not PD at x={points[idx].tolist()}",
        )

    x, y = 2.0 * rng.standard_normal((2, 10_000, n))
    gap = np.sum((forward(model, x) - forward(model, y)) * (x - y), axis=-1)
    bad = int(np.sum(gap < -1e-8))
    worst = int(np.argmin(gap))
    suite(
        "monotonicity", x.shape[0] - bad, x.shape[0],
        None if bad == 0 else
        f"(g(x)-g(y)).(x-y) = {gap[worst]:.3e} at x={x[worst].tolist()}, y={y[worst].tolist()}",
    )

    base = points[:20]
    h = 1e-6
    fd = np.empty((base.shape[0], n, n))
    for j in range(n):
        xp = base.copy()
        xm = base.copy()
        xp[:, j] += h
        xm[:, j] -= h
        fd[:, :, j] = (forward(model, xp) - forward(model, xm)) / (2.0 * h)
    ref = jacobian(model, base)
    scale = max(1.0, float(np.abs(ref).max()))
    err = np.abs(fd - ref).max(axis=(-1, -2)) / scale
    bad = int(np.sum(err > 1e-5))
    worst = int(np.argmax(err))
    suite(
        "jacobian_fd", base.shape[0] - bad, base.shape[0],
        None if bad == 0 else f"relative FD error {err[worst]:.3e} at x={base[worst].tolist()}",
    )

    if n == 2:
        a, b = 0.0, 1.0
        corners = [(a, a), (b, a), (b, b), (a, b), (a, a)]
        t = np.linspace(0.0, 1.0, 10_001)[:, None]
        total = 0.0
        norms = []
        for (sx, sy), (ex, ey) in zip(corners[:-1], corners[1:]):
            start = np.array([sx, sy])
            delta = np.array([ex - sx, ey - sy])
            g = forward(model, start + t * delta)
            total += float(np.trapezoid(g @ delta, dx=1.0 / (t.shape[0] - 1)))
            norms.append(np.sqrt(np.sum(g * g, axis=-1)))
        tol = 1e-6 * max(1.0, float(np.mean(np.concatenate(norms))))
        ok = abs(total) <= tol
        suite(
            "conservativity", int(ok), 1,
            None if ok else f"loop integral {total:.3e} exceeds {tol:.3e}",
        )

    return 1 if failures else 0


def cmd_verify(args):
    model = load_model(args.model)
    return _run_verify(model, args.model, 42 if args.seed is None else args.seed)


def cmd_info(args):
    model = load_model(args.model)
    print(f"path: {args.model}")
    print(f"architecture: {model.arch}")
    print(f"n: {model.n}")
    if model.arch == "cmgn":
        print(f"depth: {model.depth}")
        print(f"hidden: {model.hidden}")
        print(f"activations: {','.join(f.name for f in model.families)}")
        print(f"diag_scales: {model.raw_scales is not None}")
    else:
        print(f"modules: {len(model.modules)}")
        print(f"widths: {','.join(str(m.weight.shape[0]) for m in model.modules)}")
        print(f"activations: {','.join(m.family.name for m in model.modules)}")
    print(f"v_rows: {model.v_factor.shape[0]}")
    print(f"gamma: {model.gamma!r}")
    print(f"params: {param_count(model)}")
    return 0


# ---------------------------------------------------------------- main


def _add_run_options(sub):
    sub.add_argument("--config", required=True, help="JSON run configuration")
    sub.add_argument("--seed", type=int, default=None, help="override the training seed")
    sub.add_argument("--out", default=None, help="artifact directory (default .)")
    sub.add_argument(
        "--set", action="append", metavar="KEY=VALUE",
        help="override a config entry (dotted path, JSON value)",
    )


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="mgnet",
        description="Monotone-gradient networks: experiments and model tools.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("gradfield", help="train on the synthetic gradient field")
    _add_run_options(sub)
    sub.set_defaults(func=cmd_gradfield)

    sub = subs.add_parser("coupling", help="Gaussian optimal-coupling experiment")
    _add_run_options(sub)
    sub.set_defaults(func=cmd_coupling)

    sub = subs.add_parser("adapt", help="color-domain adaptation between images")
    _add_run_options(sub)
    sub.set_defaults(func=cmd_adapt)

    sub = subs.add_parser("verify", help="check map properties of a saved model")
    sub.add_argument("--model", required=True, help="model JSON file")
    sub.add_argument("--seed", type=int, default=None, help="test-point seed")
    sub.set_defaults(func=cmd_verify)

    sub = subs.add_parser("info", help="print a saved model summary")
    sub.add_argument("--model", required=True, help="model JSON file")
    sub.set_defaults(func=cmd_info)

    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (
        ConfigError,
        FormatError,
        UnsupportedFormat,
        InvalidSpec,
        UnknownActivation,
        DimensionMismatch,
        DegenerateData,
        OSError,
    ) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except MgnError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
