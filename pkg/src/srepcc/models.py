"""Sub-network generators for the original, simplified and SR-enabled coding models."""

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from . import autograd as ag
from .errors import ConfigError
from .layers import (
    GTSpConv, IRBSpec, ModelSpec, ParameterStore, SpConv, count_parameters,
    init_parameters, load_parameters, run_items, save_parameters,
)
from .sparse import CoordSet, SparseTensor, restrict

LAMBDAS = (0.05, 0.025, 0.01, 0.005, 0.0025)
STANDARD_WIDTHS = (32, 64, 128)
SIMPLIFICATIONS = ("none", "latent_only", "latent_and_hyper", "all_channels")
LATENT_STRIDE = 8
HYPER_FACTOR = 4
SCALE_BOUNDS = (0.04, 256.0)
CODING_SUBNETS = ("analysis", "synthesis", "hyper_analysis", "hyper_mean", "hyper_scale", "hyper_prior")
SR_SUBNETS = {2: "sr2", 4: "sr4"}
SR_KERNELS = {2: 3, 4: 5}


@dataclass(frozen=True)
class ModelConfig:
    latent_channels: int = 16
    hyper_channels: int = 16
    widths: tuple = STANDARD_WIDTHS
    simplification: str = "latent_and_hyper"
    lambda_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if self.simplification not in SIMPLIFICATIONS:
            raise ConfigError(f"unknown simplification {self.simplification!r}")
        if len(self.widths) != 3:
            raise ConfigError("widths must list three channel counts")
        if not 0 <= self.lambda_id < len(LAMBDAS):
            raise ConfigError(f"lambda_id must be in 0..{len(LAMBDAS) - 1}")
        n, h = self.latent_channels, self.hyper_channels
        if n < 1 or h < 1:
            raise ConfigError("channel counts must be positive")
        if self.simplification == "none" and not (n == h == 128 and self.widths == STANDARD_WIDTHS):
            raise ConfigError("the unsimplified model uses N = H = 128 and standard widths")
        if self.simplification == "latent_only" and h != 128:
            raise ConfigError("latent_only keeps 128 hyper channels")
        if self.simplification == "latent_and_hyper" and n != h:
            raise ConfigError("latent_and_hyper uses N = H")
        if self.simplification == "all_channels" and (n != h or self.widths != (n, n, n)):
            raise ConfigError("all_channels uses uniform(N) widths with N = H")

    @property
    def lam(self):
        return LAMBDAS[self.lambda_id]

    def to_dict(self):
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: (tuple(v) if k == "widths" else v) for k, v in d.items()})


def original_config():
    return ModelConfig(128, 128, STANDARD_WIDTHS, "none")


def simplified_config():
    return ModelConfig(16, 16, STANDARD_WIDTHS, "latent_and_hyper")


def tiny_config(lambda_id=0):
    return ModelConfig(16, 16, (8, 16, 32), "latent_and_hyper", lambda_id)


def table5_config(approach, n):
    if approach == "latent_only":
        return ModelConfig(n, 128, STANDARD_WIDTHS, approach)
    if approach == "latent_and_hyper":
        return ModelConfig(n, n, STANDARD_WIDTHS, approach)
    if approach == "all_channels":
        return ModelConfig(n, n, (n, n, n), approach)
    raise ConfigError(f"unknown simplification approach {approach!r}")


def build_model(cfg):
    """ModelSpec for every sub-network of the SR-enabled coding model."""
    w1, w2, w3 = cfg.widths
    n, h = cfg.latent_channels, cfg.hyper_channels
    relu = "relu"
    specs = {
        "analysis": ModelSpec("analysis", (
            SpConv(3, 1, w1, 2, activation=relu), IRBSpec(w1),
            SpConv(3, w1, w2, 2, activation=relu), IRBSpec(w2),
            SpConv(3, w2, w3, 2, activation=relu), IRBSpec(w3),
            SpConv(1, w3, n, 1, bias=False),
        )),
        "synthesis": ModelSpec("synthesis", (
            GTSpConv(2, n, w3, 2, activation=relu), IRBSpec(w3),
            GTSpConv(2, w3, w2, 2, activation=relu), IRBSpec(w2),
            GTSpConv(2, w2, w1, 2, activation=relu), IRBSpec(w1),
            SpConv(1, w1, 1, 1, bias=False, activation="sigmoid"),
        )),
        "hyper_analysis": ModelSpec("hyper_analysis", (
            SpConv(3, n, h, 1, activation=relu),
            SpConv(3, h, h, 2, activation=relu),
            SpConv(3, h, h, 2, bias=False),
        )),
    }
    for name in ("hyper_mean", "hyper_scale"):
        specs[name] = ModelSpec(name, (
            GTSpConv(2, h, h, 2, activation=relu),
            GTSpConv(2, h, h, 2, activation=relu),
            SpConv(3, h, n, 1, bias=True),
        ))
    for sf, name in SR_SUBNETS.items():
        specs[name] = ModelSpec(name, (
            GTSpConv(SR_KERNELS[sf], w1, w1, sf, activation=relu),
            IRBSpec(w1),
            SpConv(1, w1, 1, 1, bias=False, activation="sigmoid"),
        ))
    return specs


def coding_parameters(specs):
    return sum(count_parameters(specs[k])[0] for k in CODING_SUBNETS if k in specs)


class CodingModel:
    """Sub-network specs plus their parameters, with the coding-path forward passes."""

    def __init__(self, cfg, params=None, seed=0):
        self.cfg = cfg
        self.specs = build_model(cfg)
        if params is None:
            rng = np.random.default_rng(seed)
            params = ParameterStore()
            for spec in self.specs.values():
                init_parameters(params, spec, rng)
            params.add("hyper_prior.log_scale", np.zeros((1, 1, cfg.hyper_channels)))
        self.params = params

    def parameters(self, subnets):
        return self.params.subset(tuple(s + "." for s in subnets))

    def hyper_scales(self):
        return ag.exp_clamped(_reshape_row(self.params["hyper_prior.log_scale"]), *SCALE_BOUNDS)

    def analysis(self, x):
        return run_items(self.specs["analysis"], self.params, x)

    def hyper_analysis(self, y):
        return run_items(self.specs["hyper_analysis"], self.params, y)

    def hyper_synthesis(self, z_hat, latent_set):
        """(mu, sigma) at the rows of ``latent_set``."""
        out = []
        for name in ("hyper_mean", "hyper_scale"):
            spec = self.specs[name]
            t = run_items(spec, self.params, z_hat, stop=-1)
            t = restrict(t, latent_set)
            out.append(run_items(spec, self.params, t, start=-1).feats)
        mu, raw_scale = out
        return mu, ag.exp_clamped(raw_scale, *SCALE_BOUNDS)

    def synthesis(self, y_hat):
        """Features feeding the classifier and per-candidate occupancy probabilities."""
        spec = self.specs["synthesis"]
        feats = run_items(spec, self.params, y_hat, stop=-1)
        probs = run_items(spec, self.params, feats, start=-1)
        return feats, probs.feats

    def sr_branch(self, sf, pruned, out_size, period=1 << 20):
        """Up-sample pruned Synthesis features by ``sf``; candidates are clipped to the block."""
        spec = self.specs[SR_SUBNETS[sf]]
        # scaling by a power of two keeps Morton order, so rows stay aligned
        cset = pruned.cset.cached(("scaled", sf), lambda: CoordSet(pruned.coords * sf, stride=sf, presorted=True))
        scaled = SparseTensor(cset, pruned.feats)
        t = run_items(spec, self.params, scaled, stop=1, clip=(out_size, period))
        t = run_items(spec, self.params, t, start=1)
        return t.cset, t.feats


def _reshape_row(v):
    # keep the (1, 1, H) parameter differentiable while exposing it as (1, H)
    return ag.record(v.value.reshape(1, -1), (v,), lambda g: (g.reshape(v.shape),))


# ---------------------------------------------------------------------------
# model directories: config.json plus one lambda{K}.srps per trained model


def checkpoint_name(lambda_id):
    return f"lambda{int(lambda_id)}.srps"


def save_model(model, directory, extra=None):
    os.makedirs(directory, exist_ok=True)
    cfg = model.cfg.to_dict()
    cfg.pop("lambda_id")
    cfg.update(extra or {})
    path = os.path.join(directory, "config.json")
    with open(path, "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
    save_parameters(model.params, os.path.join(directory, checkpoint_name(model.cfg.lambda_id)))


def read_model_config(directory):
    path = os.path.join(directory, "config.json")
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no model config at {path}")
    with open(path) as fh:
        return json.load(fh)


def available_models(directory):
    return sorted(
        k for k in range(len(LAMBDAS)) if os.path.isfile(os.path.join(directory, checkpoint_name(k)))
    )


def load_model(directory, lambda_id):
    raw = read_model_config(directory)
    fields = {k: raw[k] for k in ("latent_channels", "hyper_channels", "widths", "simplification") if k in raw}
    cfg = ModelConfig.from_dict({**fields, "lambda_id": int(lambda_id)})
    path = os.path.join(directory, checkpoint_name(lambda_id))
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no checkpoint {path}")
    params = load_parameters(path)
    model = CodingModel(cfg, params)
    missing = _missing_entries(model)
    if missing:
        raise ConfigError(f"checkpoint {path} lacks {len(missing)} parameters, e.g. {missing[0]}")
    return model


def _missing_entries(model):
    need = ["hyper_prior.log_scale"]
    for spec in model.specs.values():
        for qname, layer in spec.param_layers():
            need.append(qname + ".weight")
            if layer.bias:
                need.append(qname + ".bias")
    return [k for k in need if k not in model.params]
