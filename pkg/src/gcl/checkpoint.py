"""Binary training checkpoints.

Layout: magic ``GCLC``, version u32, header length u64, UTF-8 JSON header,
then the raw little-endian float64 parameter/optimizer arrays concatenated in
header order.  The header carries the config, both networks' layer dims and
activations, the epoch counter, and the training RNG states, so a save/load
cycle is bit-exact and a run can resume deterministically.
"""

import json
import struct
from dataclasses import asdict

import numpy as np

from .engine import GclConfig, Trainer
from .nn import DenseLayer, Network
from .optim import RmsProp

CHECKPOINT_MAGIC = b"GCLC"
CHECKPOINT_VERSION = 1


def _net_meta(net):
    return {
        "dims": net.layer_dims,
        "activations": [layer.activation for layer in net.layers],
    }


def _collect_arrays(trainer):
    arrays = []
    for prefix, net in (("gen", trainer.gen), ("disc", trainer.disc)):
        for i, p in enumerate(net.parameters()):
            arrays.append((f"{prefix}.p{i}", p))
    for prefix, opt in (("gen_opt", trainer.gen_opt), ("disc_opt", trainer.disc_opt)):
        sq, mom = opt.state_arrays()
        for i, a in enumerate(sq):
            arrays.append((f"{prefix}.sq{i}", a))
        for i, a in enumerate(mom):
            arrays.append((f"{prefix}.mom{i}", a))
    return arrays


def save_checkpoint(trainer, path):
    arrays = _collect_arrays(trainer)
    header = {
        "cfg": asdict(trainer.cfg),
        "d": trainer.d,
        "epoch": trainer.epoch,
        "gen": _net_meta(trainer.gen),
        "disc": _net_meta(trainer.disc),
        "forced_videos": sorted(trainer.forced_videos),
        "rng": {
            "shuffle": trainer.shuffle_rng.bit_generator.state,
            "nl": trainer.nl_rng.bit_generator.state,
            "ws": trainer.ws_rng.bit_generator.state,
        },
        "arrays": [
            {"name": name, "shape": list(a.shape)} for name, a in arrays
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IQ", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _build_network(meta):
    dims, acts = meta["dims"], meta["activations"]
    layers = [
        DenseLayer(np.zeros((dims[i], dims[i + 1])), np.zeros(dims[i + 1]), acts[i])
        for i in range(len(acts))
    ]
    return Network(layers)


def load_checkpoint(path):
    """Rebuild a Trainer-equivalent state bundle from a checkpoint file.

    Returns a ``LoadedCheckpoint`` whose networks, optimizer accumulators,
    and RNG streams are byte-identical to the saved ones.
    """
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        version, header_len = struct.unpack("<IQ", fh.read(12))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        arrays = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise ValueError(f"{path}: truncated checkpoint payload")
            arrays[spec["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after checkpoint payload")

    cfg = GclConfig(**header["cfg"])
    gen = _build_network(header["gen"])
    disc = _build_network(header["disc"])
    for prefix, net in (("gen", gen), ("disc", disc)):
        for i, p in enumerate(net.parameters()):
            p[...] = arrays[f"{prefix}.p{i}"]
    gen_opt = RmsProp(gen.parameters(), cfg.lr, cfg.momentum)
    disc_opt = RmsProp(disc.parameters(), cfg.lr, cfg.momentum)
    for prefix, opt in (("gen_opt", gen_opt), ("disc_opt", disc_opt)):
        for i in range(len(opt.params)):
            opt.square_avg[i][...] = arrays[f"{prefix}.sq{i}"]
            opt.momentum_buf[i][...] = arrays[f"{prefix}.mom{i}"]
    rngs = {}
    for name in ("shuffle", "nl", "ws"):
        rng = np.random.default_rng(0)
        rng.bit_generator.state = header["rng"][name]
        rngs[name] = rng
    return LoadedCheckpoint(
        cfg=cfg,
        d=header["d"],
        epoch=header["epoch"],
        gen=gen,
        disc=disc,
        gen_opt=gen_opt,
        disc_opt=disc_opt,
        rngs=rngs,
        forced_videos=frozenset(header["forced_videos"]),
    )


class LoadedCheckpoint:
    def __init__(self, cfg, d, epoch, gen, disc, gen_opt, disc_opt, rngs,
                 forced_videos):
        self.cfg = cfg
        self.d = d
        self.epoch = epoch
        self.gen = gen
        self.disc = disc
        self.gen_opt = gen_opt
        self.disc_opt = disc_opt
        self.rngs = rngs
        self.forced_videos = forced_videos

    def restore_trainer(self, records, manifest):
        """Rebind the loaded state to data, overwriting the fresh trainer."""
        trainer = Trainer(records, manifest, self.cfg)
        trainer.gen = self.gen
        trainer.disc = self.disc
        trainer.gen_opt = self.gen_opt
        trainer.disc_opt = self.disc_opt
        trainer.shuffle_rng = self.rngs["shuffle"]
        trainer.nl_rng = self.rngs["nl"]
        trainer.ws_rng = self.rngs["ws"]
        trainer.epoch = self.epoch
        trainer.forced_videos = self.forced_videos
        return trainer
