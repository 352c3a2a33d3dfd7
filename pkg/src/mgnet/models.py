"""Monotone gradient networks.

Two architectures, each a vector field g: R^n -> R^n that is by
construction the gradient of a convex potential (symmetric PSD Jacobian
everywhere, hence monotone and conservative):

Cascaded (cmgn): one shared weight W drives a chain of pre-activations

    z_0 = W x + b_0
    z_l = W x + sigma_l(z_{l-1}) + b_l          l = 1 .. L-1
    g(x) = W^T sigma_L(z_{L-1}) + V^T V x + b_L + gamma x

so the Jacobian is W^T (sum of suffix products of the activation slopes) W
+ V^T V + gamma I, a sum of PSD sandwiches.

Modular (mmgn): K independent modules, each scaling its own gradient term
by the (nonnegative) sum of activation potentials:

    z_k = W_k x + b_k
    g(x) = a + V^T V x + gamma x + sum_k s_k(z_k) W_k^T sigma_k(z_k)

with s_k the potential sum and sigma_k = s_k' elementwise. Its Jacobian is
V^T V + gamma I + sum_k [ s_k(z_k) W_k^T diag(sigma_k'(z_k)) W_k
+ (W_k^T sigma_k(z_k)) (W_k^T sigma_k(z_k))^T ], again PSD term by term.

Optional per-layer diagonal scalings (cascaded only) multiply the W x
input and each sigma output elementwise; they are stored raw and pushed
through softplus so the effective scale stays nonnegative no matter what
the optimizer does. gamma is a fixed hyperparameter, never trained: any
gamma > 0 makes the Jacobian >= gamma I and the map invertible.

All forward/Jacobian code is written against the dual-dispatch math, so
the same path serves plain evaluation and forward-mode differentiation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from .activations import apply_vec, get_family, softplus
from .dual import matT
from .errors import (
    DimensionMismatch,
    FormatError,
    InvalidModel,
    InvalidSpec,
    NoConvergence,
    UnknownActivation,
)
from .linalg import cholesky, chol_solve
from .seeding import STREAM_INIT, substream

FORMAT_VERSION = 1

# softplus(RAW_UNIT_SCALE) == 1: the neutral initialization for diag scales.
RAW_UNIT_SCALE = math.log(math.expm1(1.0))


@dataclass(frozen=True)
class ModelSpec:
    """Validated description of a model to initialize.

    hidden is the layer width (cmgn) or per-module widths (mmgn, an int
    meaning all K modules share it). activations is one family name or a
    list with one entry per activation application (L for cmgn, K for
    mmgn). v_rows is the row count r of the V factor (defaults to n).
    """

    arch: str
    n: int
    hidden: Union[int, tuple]
    depth: int = 0
    modules: int = 0
    activations: Union[str, tuple] = "logcosh_tanh"
    gamma: float = 0.0
    diag_scales: bool = False
    v_rows: Optional[int] = None

    def __post_init__(self):
        if self.arch not in ("cmgn", "mmgn"):
            raise InvalidSpec(f"unknown architecture {self.arch!r}")
        if not isinstance(self.n, int) or self.n < 1:
            raise InvalidSpec(f"n must be a positive int, got {self.n!r}")
        if not (isinstance(self.gamma, (int, float)) and math.isfinite(self.gamma)):
            raise InvalidSpec(f"gamma must be finite, got {self.gamma!r}")
        if self.gamma < 0:
            raise InvalidSpec(f"gamma must be >= 0, got {self.gamma}")
        r = self.n if self.v_rows is None else self.v_rows
        if not isinstance(r, int) or r < 1:
            raise InvalidSpec(f"v_rows must be a positive int, got {self.v_rows!r}")
        if self.arch == "cmgn":
            if not isinstance(self.depth, int) or self.depth < 1:
                raise InvalidSpec(f"cmgn depth must be >= 1, got {self.depth!r}")
            if not isinstance(self.hidden, int) or self.hidden < 1:
                raise InvalidSpec(f"cmgn hidden must be a positive int, got {self.hidden!r}")
            for name in self.activation_names():
                get_family(name)
        else:
            if not isinstance(self.modules, int) or self.modules < 1:
                raise InvalidSpec(f"mmgn modules must be >= 1, got {self.modules!r}")
            if self.diag_scales:
                raise InvalidSpec("diag_scales is a cmgn feature")
            for h in self.module_widths():
                if not isinstance(h, int) or h < 1:
                    raise InvalidSpec(f"module width must be a positive int, got {h!r}")
            for name in self.activation_names():
                if not get_family(name).prop2_eligible:
                    raise InvalidSpec(f"mmgn modules need a potential family, got {name!r}")

    def activation_names(self):
        count = self.depth if self.arch == "cmgn" else self.modules
        names = self.activations
        if isinstance(names, str):
            return (names,) * count
        names = tuple(names)
        if len(names) != count:
            raise InvalidSpec(f"need {count} activation names, got {len(names)}")
        return names

    def module_widths(self):
        if isinstance(self.hidden, int):
            return (self.hidden,) * self.modules
        widths = tuple(self.hidden)
        if len(widths) != self.modules:
            raise InvalidSpec(f"need {self.modules} module widths, got {len(widths)}")
        return widths

    @property
    def r(self):
        return self.n if self.v_rows is None else self.v_rows


@dataclass(frozen=True)
class CmgnModel:
    weight: object  # (h, n), shared across layers
    biases: tuple  # L vectors of shape (h,)
    bias_out: object  # (n,)
    v_factor: object  # (r, n)
    families: tuple
    raw_scales: Optional[tuple]  # L+1 vectors of shape (h,), pre-softplus
    gamma: float

    @property
    def arch(self):
        return "cmgn"

    @property
    def n(self):
        return self.weight.shape[1]

    @property
    def hidden(self):
        return self.weight.shape[0]

    @property
    def depth(self):
        return len(self.biases)


@dataclass(frozen=True)
class MgnModule:
    weight: object  # (h_k, n)
    bias: object  # (h_k,)
    family: object


@dataclass(frozen=True)
class MmgnModel:
    bias_out: object  # (n,)
    v_factor: object  # (r, n)
    modules: tuple
    gamma: float

    @property
    def arch(self):
        return "mmgn"

    @property
    def n(self):
        return self.v_factor.shape[1]


def param_count(model):
    """Number of trainable parameters (gamma is fixed, not counted)."""
    if isinstance(model, CmgnModel):
        total = model.weight.shape[0] * model.weight.shape[1]
        total += sum(b.shape[0] for b in model.biases)
        total += model.bias_out.shape[0]
        total += model.v_factor.shape[0] * model.v_factor.shape[1]
        if model.raw_scales is not None:
            total += sum(s.shape[0] for s in model.raw_scales)
        return total
    total = model.bias_out.shape[0]
    total += model.v_factor.shape[0] * model.v_factor.shape[1]
    for mod in model.modules:
        total += mod.weight.shape[0] * mod.weight.shape[1] + mod.bias.shape[0]
    return total


def _v_init(r, n):
    v = np.zeros((r, n))
    d = 1.0 / math.sqrt(n)
    for i in range(min(r, n)):
        v[i, i] = d
    return v


def init_params(spec, seed):
    """Fresh model for a spec: uniform(+-sqrt(1/n)) weights, zero biases,
    V = (1/sqrt(n)) I padded/truncated to r x n, unit effective scales."""
    rng = substream(seed, STREAM_INIT)
    bound = math.sqrt(1.0 / spec.n)
    names = spec.activation_names()
    if spec.arch == "cmgn":
        h, n, ell = spec.hidden, spec.n, spec.depth
        weight = rng.uniform(-bound, bound, size=(h, n))
        biases = tuple(np.zeros(h) for _ in range(ell))
        scales = (
            tuple(np.full(h, RAW_UNIT_SCALE) for _ in range(ell + 1))
            if spec.diag_scales
            else None
        )
        model = CmgnModel(
            weight=weight,
            biases=biases,
            bias_out=np.zeros(n),
            v_factor=_v_init(spec.r, n),
            families=tuple(get_family(a) for a in names),
            raw_scales=scales,
            gamma=float(spec.gamma),
        )
    else:
        mods = []
        for h, name in zip(spec.module_widths(), names):
            w = rng.uniform(-bound, bound, size=(h, spec.n))
            mods.append(MgnModule(weight=w, bias=np.zeros(h), family=get_family(name)))
        model = MmgnModel(
            bias_out=np.zeros(spec.n),
            v_factor=_v_init(spec.r, spec.n),
            modules=tuple(mods),
            gamma=float(spec.gamma),
        )
    _freeze(model)
    return model


def _freeze(model):
    for arr in _arrays(model):
        arr.setflags(write=False)


def _arrays(model):
    if isinstance(model, CmgnModel):
        yield model.weight
        yield from model.biases
        yield model.bias_out
        yield model.v_factor
        if model.raw_scales is not None:
            yield from model.raw_scales
    else:
        yield model.bias_out
        yield model.v_factor
        for mod in model.modules:
            yield mod.weight
            yield mod.bias


def _gram(v):
    return matT(v) @ v


def _sym(j):
    return 0.5 * (j + matT(j))


def _effective_scales(model):
    if model.raw_scales is None:
        return None
    return [softplus(s) for s in model.raw_scales]


def cmgn_forward_batch(model, x):
    scales = _effective_scales(model)
    wt = matT(model.weight)
    wx = x @ wt
    z = wx * scales[0] + model.biases[0] if scales else wx + model.biases[0]
    for ell in range(1, model.depth):
        u = apply_vec(model.families[ell - 1], z, "first")
        if scales:
            z = (wx + u) * scales[ell] + model.biases[ell]
        else:
            z = wx + u + model.biases[ell]
    top = apply_vec(model.families[model.depth - 1], z, "first")
    if scales:
        top = top * scales[model.depth]
    out = top @ model.weight + x @ _gram(model.v_factor) + model.bias_out
    if model.gamma:
        out = out + model.gamma * x
    return out


def cmgn_jacobian_batch(model, x):
    scales = _effective_scales(model)
    ell_count = model.depth
    wt = matT(model.weight)
    wx = x @ wt
    zs = [wx * scales[0] + model.biases[0] if scales else wx + model.biases[0]]
    for ell in range(1, ell_count):
        u = apply_vec(model.families[ell - 1], zs[-1], "first")
        if scales:
            zs.append((wx + u) * scales[ell] + model.biases[ell])
        else:
            zs.append(wx + u + model.biases[ell])
    # E = sum over l of s_{l-1} * prod_{i=l..L} (s_i * sigma_i'(z_{i-1})),
    # accumulated with suffix products from the top layer down.
    suffix = None
    diag = None
    for ell in range(ell_count, 0, -1):
        slope = apply_vec(model.families[ell - 1], zs[ell - 1], "second")
        if scales:
            slope = slope * scales[ell]
        suffix = slope if suffix is None else suffix * slope
        contrib = suffix * scales[ell - 1] if scales else suffix
        diag = contrib if diag is None else diag + contrib
    scaled_rows = diag[..., :, None] * model.weight
    j = matT(scaled_rows) @ model.weight + _gram(model.v_factor)
    if model.gamma:
        j = j + model.gamma * np.eye(model.n)
    return _sym(j)


def mmgn_forward_batch(model, x):
    out = x @ _gram(model.v_factor) + model.bias_out
    if model.gamma:
        out = out + model.gamma * x
    for mod in model.modules:
        z = x @ matT(mod.weight) + mod.bias
        sval = apply_vec(mod.family, z, "potential-sum")
        u = apply_vec(mod.family, z, "first") @ mod.weight
        out = out + sval[..., None] * u
    return out


def mmgn_jacobian_batch(model, x):
    j = None
    for mod in model.modules:
        z = x @ matT(mod.weight) + mod.bias
        sval = apply_vec(mod.family, z, "potential-sum")
        slope = apply_vec(mod.family, z, "second")
        sandwich = matT(slope[..., :, None] * mod.weight) @ mod.weight
        u = apply_vec(mod.family, z, "first") @ mod.weight
        term = sval[..., None, None] * sandwich + u[..., :, None] * u[..., None, :]
        j = term if j is None else j + term
    gram = _gram(model.v_factor)
    if model.gamma:
        gram = gram + model.gamma * np.eye(model.n)
    if j is None:
        # no modules: the Jacobian is the same constant at every point, but
        # callers still expect one matrix per batch row
        if isinstance(gram, np.ndarray) and isinstance(x, np.ndarray):
            return np.broadcast_to(_sym(gram), x.shape[:-1] + gram.shape).copy()
        return _sym(gram)
    return _sym(j + gram)


def forward_batch(model, x):
    if isinstance(model, CmgnModel):
        return cmgn_forward_batch(model, x)
    return mmgn_forward_batch(model, x)


def jacobian_batch(model, x):
    if isinstance(model, CmgnModel):
        return cmgn_jacobian_batch(model, x)
    return mmgn_jacobian_batch(model, x)


def _as_batch(model, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if x.shape[-1] != model.n:
        raise DimensionMismatch(f"input dim {x.shape[-1]} != model dim {model.n}")
    return (x[None, :] if single else x), single


def forward(model, x):
    """Evaluate g(x); accepts one point (n,) or a batch (B, n)."""
    xb, single = _as_batch(model, x)
    out = forward_batch(model, xb)
    return out[0] if single else out


def jacobian(model, x):
    """Jacobian of g at x; (n, n) for one point, (B, n, n) for a batch."""
    xb, single = _as_batch(model, x)
    j = jacobian_batch(model, xb)
    return j[0] if single else j


def invert(model, y, tol=1e-9, max_iters=200, max_halvings=30):
    """Solve g(x) = y by damped Newton; needs gamma > 0 (strong monotonicity).

    Converges when ||g(x) - y||_inf <= tol; step halving backs off until the
    residual 2-norm decreases.
    """
    if model.gamma <= 0:
        raise InvalidModel("invert requires gamma > 0")
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (model.n,):
        raise DimensionMismatch(f"target shape {y.shape} != ({model.n},)")
    x = y / (model.gamma + 1.0)
    for _ in range(max_iters):
        r = forward(model, x) - y
        if float(np.max(np.abs(r))) <= tol:
            return x
        low = cholesky(jacobian(model, x))
        dx = chol_solve(low, r)
        rnorm = float(r @ r)
        step = 1.0
        for _ in range(max_halvings):
            xn = x - step * dx
            rn = forward(model, xn) - y
            if float(rn @ rn) < rnorm:
                x = xn
                break
            step *= 0.5
        else:
            raise NoConvergence("step halving failed to reduce the residual")
    raise NoConvergence(f"no convergence to tol={tol} in {max_iters} iterations")


class ParamView:
    """Flat float64 view of a model's trainable parameters.

    Segment order (cmgn): weight, biases 0..L-1, bias_out, v_factor,
    raw_scales 0..L when present. (mmgn): bias_out, v_factor, then each
    module's weight and bias. gamma and the activation families are
    structure, not parameters. unflatten accepts a plain vector or a
    DualArray and rebuilds a model with fields of matching kind.
    """

    def __init__(self, model):
        self._template = model
        self._shapes = []
        for arr in _arrays(model):
            self._shapes.append(arr.shape)
        self.size = sum(int(np.prod(s)) for s in self._shapes)

    def flatten(self, model):
        parts = [np.asarray(a, dtype=np.float64).ravel() for a in _arrays(model)]
        return np.concatenate(parts) if parts else np.zeros(0)

    def _segments(self, vec):
        out = []
        offset = 0
        for shape in self._shapes:
            size = int(np.prod(shape))
            out.append(vec[offset : offset + size].reshape(shape))
            offset += size
        if offset != (vec.shape[0] if hasattr(vec, "shape") else len(vec)):
            raise DimensionMismatch(f"expected {self.size} parameters")
        return out

    def unflatten(self, vec):
        segs = self._segments(vec)
        t = self._template
        if isinstance(t, CmgnModel):
            i = 0
            weight = segs[i]
            i += 1
            biases = tuple(segs[i + k] for k in range(t.depth))
            i += t.depth
            bias_out = segs[i]
            i += 1
            v_factor = segs[i]
            i += 1
            raw = None
            if t.raw_scales is not None:
                raw = tuple(segs[i + k] for k in range(t.depth + 1))
            return replace(
                t,
                weight=weight,
                biases=biases,
                bias_out=bias_out,
                v_factor=v_factor,
                raw_scales=raw,
            )
        bias_out, v_factor = segs[0], segs[1]
        mods = []
        i = 2
        for mod in t.modules:
            mods.append(replace(mod, weight=segs[i], bias=segs[i + 1]))
            i += 2
        return replace(t, bias_out=bias_out, v_factor=v_factor, modules=tuple(mods))


def save_model(model, path):
    """Write a model as JSON; floats keep their exact float64 value."""
    if isinstance(model, CmgnModel):
        doc = {
            "format_version": FORMAT_VERSION,
            "architecture": "cmgn",
            "n": int(model.n),
            "hidden": int(model.hidden),
            "depth": int(model.depth),
            "v_rows": int(model.v_factor.shape[0]),
            "gamma": float(model.gamma),
            "activations": [f.name for f in model.families],
            "params": {
                "weight": model.weight.tolist(),
                "biases": [b.tolist() for b in model.biases],
                "bias_out": model.bias_out.tolist(),
                "v_factor": model.v_factor.tolist(),
                "raw_scales": None
                if model.raw_scales is None
                else [s.tolist() for s in model.raw_scales],
            },
        }
    else:
        doc = {
            "format_version": FORMAT_VERSION,
            "architecture": "mmgn",
            "n": int(model.n),
            "v_rows": int(model.v_factor.shape[0]),
            "gamma": float(model.gamma),
            "params": {
                "bias_out": model.bias_out.tolist(),
                "v_factor": model.v_factor.tolist(),
            },
            "modules": [
                {
                    "activation": mod.family.name,
                    "hidden": int(mod.weight.shape[0]),
                    "weight": mod.weight.tolist(),
                    "bias": mod.bias.tolist(),
                }
                for mod in model.modules
            ],
        }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _expect(doc, key, kinds):
    if key not in doc:
        raise FormatError(f"missing field {key!r}")
    val = doc[key]
    if not isinstance(val, kinds):
        raise FormatError(f"field {key!r} has wrong type")
    return val


def _array_field(obj, shape, what):
    try:
        arr = np.asarray(obj, dtype=np.float64)
    except (TypeError, ValueError):
        raise FormatError(f"{what} is not numeric") from None
    if arr.shape != shape:
        raise FormatError(f"{what} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise FormatError(f"{what} has non-finite entries")
    return arr


def _file_family(name):
    try:
        return get_family(str(name))
    except UnknownActivation as e:
        raise FormatError(str(e)) from None


def load_model(path):
    """Read a model written by save_model.

    Structural problems, including activation names not in the catalog,
    raise FormatError. Values are not semantically validated here (that is
    the verify suite's job), so a hand-corrupted file can load into a model
    that violates the PSD guarantee.
    """
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise FormatError(f"not a valid model file: {e}") from None
    if not isinstance(doc, dict):
        raise FormatError("model file must hold an object")
    version = _expect(doc, "format_version", int)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format_version {version}")
    arch = _expect(doc, "architecture", str)
    n = _expect(doc, "n", int)
    r = _expect(doc, "v_rows", int)
    gamma = float(_expect(doc, "gamma", (int, float)))
    if n < 1 or r < 1:
        raise FormatError("dimensions must be positive")
    params = _expect(doc, "params", dict)
    if arch == "cmgn":
        h = _expect(doc, "hidden", int)
        depth = _expect(doc, "depth", int)
        if h < 1 or depth < 1:
            raise FormatError("dimensions must be positive")
        names = _expect(doc, "activations", list)
        if len(names) != depth:
            raise FormatError(f"expected {depth} activations, got {len(names)}")
        families = tuple(_file_family(a) for a in names)
        raw_biases = _expect(params, "biases", list)
        if len(raw_biases) != depth:
            raise FormatError(f"expected {depth} bias vectors")
        raw_scales = params.get("raw_scales")
        if raw_scales is not None:
            if not isinstance(raw_scales, list) or len(raw_scales) != depth + 1:
                raise FormatError(f"expected {depth + 1} scale vectors")
            raw_scales = tuple(
                _array_field(s, (h,), f"raw_scales[{i}]") for i, s in enumerate(raw_scales)
            )
        model = CmgnModel(
            weight=_array_field(params.get("weight"), (h, n), "weight"),
            biases=tuple(
                _array_field(b, (h,), f"biases[{i}]") for i, b in enumerate(raw_biases)
            ),
            bias_out=_array_field(params.get("bias_out"), (n,), "bias_out"),
            v_factor=_array_field(params.get("v_factor"), (r, n), "v_factor"),
            families=families,
            raw_scales=raw_scales,
            gamma=gamma,
        )
    elif arch == "mmgn":
        mods = []
        for i, entry in enumerate(_expect(doc, "modules", list)):
            if not isinstance(entry, dict):
                raise FormatError(f"modules[{i}] must be an object")
            h = _expect(entry, "hidden", int)
            if h < 1:
                raise FormatError("dimensions must be positive")
            family = _file_family(_expect(entry, "activation", str))
            mods.append(
                MgnModule(
                    weight=_array_field(entry.get("weight"), (h, n), f"modules[{i}].weight"),
                    bias=_array_field(entry.get("bias"), (h,), f"modules[{i}].bias"),
                    family=family,
                )
            )
        model = MmgnModel(
            bias_out=_array_field(params.get("bias_out"), (n,), "bias_out"),
            v_factor=_array_field(params.get("v_factor"), (r, n), "v_factor"),
            modules=tuple(mods),
            gamma=gamma,
        )
    else:
        raise FormatError(f"unknown architecture {arch!r}")
    _freeze(model)
    return model
