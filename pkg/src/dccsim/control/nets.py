"""Policy and value networks plus their binary serialization format.

Each control level gets one Gaussian policy (tanh-squashed mean mapped onto
the level's action range, state-independent learned log-std) and one value
network of the same MLP shape with a scalar head. The low and cooling levels
share parameters across DCs: their observations are location-agnostic, so one
network serves every DC.

Parameters serialize to a binary file with an 8-byte magic header, little-
endian float32 payload, and a JSON sidecar describing shapes; round-trips are
bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

POLICY_MAGIC = b"DCCPOL01"
DEFAULT_HIDDEN = (64, 64)

# How the squashed mean maps onto raw actions, per level.
OUT_MODES = ("unit", "logit")
TOP_LOGIT_SPAN = 5.0


def _mlp(in_dim: int, hidden, out_dim: int) -> nn.Sequential:
    layers = []
    prev = in_dim
    for width in hidden:
        layers += [nn.Linear(prev, width), nn.Tanh()]
        prev = width
    layers.append(nn.Linear(prev, out_dim))
    return nn.Sequential(*layers)


def _orthogonal_init(module: nn.Module, final_gain: float) -> None:
    linear = [m for m in module.modules() if isinstance(m, nn.Linear)]
    for i, layer in enumerate(linear):
        gain = final_gain if i == len(linear) - 1 else float(np.sqrt(2.0))
        nn.init.orthogonal_(layer.weight, gain=gain)
        nn.init.zeros_(layer.bias)


class GaussianPolicy(nn.Module):
    """MLP producing a Gaussian over raw actions with a squashed mean."""

    def __init__(self, obs_dim: int, act_dim: int, hidden=DEFAULT_HIDDEN,
                 out_mode: str = "unit", log_std_init: float = -0.5):
        super().__init__()
        if out_mode not in OUT_MODES:
            raise ValueError(f"unknown out_mode {out_mode!r}")
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.hidden = tuple(hidden)
        self.out_mode = out_mode
        self.net = _mlp(obs_dim, hidden, act_dim)
        self.log_std = nn.Parameter(torch.full((act_dim,), float(log_std_init)))
        _orthogonal_init(self.net, final_gain=0.01)

    def mean(self, obs: torch.Tensor) -> torch.Tensor:
        raw = torch.tanh(self.net(obs))
        if self.out_mode == "unit":
            return 0.5 * (raw + 1.0)
        return TOP_LOGIT_SPAN * raw

    def distribution(self, obs: torch.Tensor) -> torch.distributions.Normal:
        mean = self.mean(obs)
        std = torch.exp(self.log_std).expand_as(mean)
        return torch.distributions.Normal(mean, std)

    def log_prob(self, obs: torch.Tensor, actions: torch.Tensor) -> torch.Tensor:
        return self.distribution(obs).log_prob(actions).sum(-1)

    def entropy(self, obs: torch.Tensor) -> torch.Tensor:
        return self.distribution(obs).entropy().sum(-1)


class ValueNet(nn.Module):
    def __init__(self, obs_dim: int, hidden=DEFAULT_HIDDEN):
        super().__init__()
        self.obs_dim = obs_dim
        self.hidden = tuple(hidden)
        self.net = _mlp(obs_dim, hidden, 1)
        _orthogonal_init(self.net, final_gain=1.0)

    def forward(self, obs: torch.Tensor) -> torch.Tensor:
        return self.net(obs).squeeze(-1)


@dataclass
class LevelNets:
    """The trainable pieces of one control level."""

    policy: GaussianPolicy
    value: ValueNet

    def clone_state(self) -> dict:
        return {
            "policy": {k: v.clone() for k, v in self.policy.state_dict().items()},
            "value": {k: v.clone() for k, v in self.value.state_dict().items()},
        }

    def load_state(self, snapshot: dict) -> None:
        self.policy.load_state_dict(snapshot["policy"])
        self.value.load_state_dict(snapshot["value"])

    def parameters(self):
        yield from self.policy.parameters()
        yield from self.value.parameters()


def make_level_nets(obs_dim: int, act_dim: int, out_mode: str,
                    hidden=DEFAULT_HIDDEN, log_std_init: float = -0.5) -> LevelNets:
    return LevelNets(
        policy=GaussianPolicy(obs_dim, act_dim, hidden, out_mode, log_std_init),
        value=ValueNet(obs_dim, hidden),
    )


def save_policy_params(nets: dict[str, LevelNets], path) -> None:
    """Write all level parameters to ``path`` (+ a ``.json`` sidecar)."""
    path = Path(path)
    layout = []
    blobs = []
    offset = 0
    meta_levels = {}
    for level in sorted(nets):
        ln = nets[level]
        meta_levels[level] = {
            "obs_dim": ln.policy.obs_dim,
            "act_dim": ln.policy.act_dim,
            "hidden": list(ln.policy.hidden),
            "out_mode": ln.policy.out_mode,
        }
        for component, module in (("policy", ln.policy), ("value", ln.value)):
            state = module.state_dict()
            for name in sorted(state):
                tensor = state[name].detach().to(torch.float32).contiguous()
                arr = tensor.numpy()
                blobs.append(arr.astype("<f4", copy=False).tobytes())
                layout.append({
                    "level": level,
                    "component": component,
                    "name": name,
                    "shape": list(tensor.shape),
                    "offset": offset,
                    "numel": int(tensor.numel()),
                })
                offset += tensor.numel() * 4
    with open(path, "wb") as fh:
        fh.write(POLICY_MAGIC)
        for blob in blobs:
            fh.write(blob)
    sidecar = {
        "format": POLICY_MAGIC.decode("ascii"),
        "levels": meta_levels,
        "layout": layout,
    }
    with open(path.with_suffix(path.suffix + ".json"), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=1)


def load_policy_params(path) -> dict[str, LevelNets]:
    """Rebuild level networks from a saved parameter file."""
    path = Path(path)
    with open(path.with_suffix(path.suffix + ".json"), encoding="utf-8") as fh:
        sidecar = json.load(fh)
    if sidecar.get("format") != POLICY_MAGIC.decode("ascii"):
        raise ValueError(f"{path}: unknown policy format {sidecar.get('format')!r}")
    raw = path.read_bytes()
    if raw[:8] != POLICY_MAGIC:
        raise ValueError(f"{path}: bad magic header")
    payload = raw[8:]

    nets: dict[str, LevelNets] = {}
    for level, meta in sidecar["levels"].items():
        nets[level] = make_level_nets(
            meta["obs_dim"], meta["act_dim"], meta["out_mode"],
            hidden=tuple(meta["hidden"]),
        )
    states: dict[tuple[str, str], dict] = {}
    for entry in sidecar["layout"]:
        start = entry["offset"]
        end = start + entry["numel"] * 4
        arr = np.frombuffer(payload[start:end], dtype="<f4").reshape(entry["shape"])
        key = (entry["level"], entry["component"])
        states.setdefault(key, {})[entry["name"]] = torch.from_numpy(arr.copy())
    for (level, component), state in states.items():
        module = nets[level].policy if component == "policy" else nets[level].value
        module.load_state_dict(state)
    return nets
