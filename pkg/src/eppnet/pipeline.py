"""Config, manifest and the staged workspace pipeline.

Stages run in order prepare -> derive -> parsemap -> train -> eval -> fuse
-> report. Each writes its artifacts under ``<workspace>/<stage>/`` plus a
``stage.json`` marker holding a hash of its inputs and of every output, so
a rerun with unchanged inputs is skipped.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import jsonschema
import numpy as np

from . import checkpoint, fusion, modalities, netpbm
from . import parsemap as pm
from . import skeleton_io as sio
from .branches import (
    ArrayDataset,
    CnnConfig,
    CnnModel,
    FeatureMapDataset,
    GcnConfig,
    GcnModel,
    ScoreMatrix,
    build_adjacency,
    evaluate_branch,
    images_to_input,
    read_scores,
    train_branch,
    write_scores,
)
from .errors import ConfigError, MissingScores, StageDependencyMissing
from .optim import OptimizerConfig
from .rng import derive_seed

log = logging.getLogger("eppnet")

STAGES = ("prepare", "derive", "parsemap", "train", "eval", "fuse", "report")
MODALITY_ORDER = ("J", "B", "JM", "BM", "P")
SKELETON_KINDS = ("J", "B", "JM", "BM")
FUSION_ROWS = (
    ("J", "B"),
    ("J", "B", "JM", "BM"),
    ("J", "P"),
    ("B", "P"),
    ("J", "B", "P"),
    ("J", "B", "JM", "BM", "P"),
)

DEFAULT_CONFIG = {
    "workspace": "workspace",
    "joint_count": 25,
    "topology": None,
    "max_bodies": 2,
    "T_fixed": 64,
    "seed": 0,
    "modalities": list(MODALITY_ORDER),
    "weights": dict(fusion.DEFAULT_WEIGHTS),
    "fusion": "raw",
    "split": None,
    "parsemap": {"frames": 9, "tile_size": 160, "grid": [3, 3], "labels": pm.LIP_LABELS,
                 "input_size": 96, "train_random": True, "augment_delta": 0.2},
    "gcn": {"blocks": 10, "channels": [16, 32], "temporal_kernel": 9},
    "cnn": {"blocks": 4, "channels": [8, 16, 32, 32]},
    "train": {
        "gcn": {"learning_rate": 0.1, "momentum": 0.9, "weight_decay": 4e-4,
                "schedule": [[35, 0.1], [55, 0.1]], "epochs": 65, "batch_size": 64,
                "clip_norm": None, "stop_at_accuracy": None},
        "cnn": {"learning_rate": 0.03, "momentum": 0.9, "weight_decay": 4e-4,
                "schedule": [], "epochs": 45, "batch_size": 64, "clip_norm": None, "stop_at_accuracy": None},
    },
}


# -- config ------------------------------------------------------------------

def _schema() -> dict:
    return json.loads((resources.files("eppnet") / "data" / "config_schema.json").read_text())


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_weights(text: str, mods: Sequence[str]) -> dict:
    """``2,2,1`` (aligned with ``mods``) or ``J=2,P=1``."""
    parts = [p.strip() for p in text.split(",") if p.strip()]
    try:
        if parts and all("=" in p for p in parts):
            return {k.strip(): float(v) for k, v in (p.split("=", 1) for p in parts)}
        if len(parts) != len(mods):
            raise ConfigError(f"{len(parts)} weights given for modalities {','.join(mods)}")
        return dict(zip(mods, (float(p) for p in parts)))
    except ValueError:
        raise ConfigError(f"cannot parse weights {text!r}") from None


@dataclass(frozen=True, eq=False)
class PipelineConfig:
    """Effective config (defaults resolved, paths absolute)."""

    values: dict

    @classmethod
    def from_dict(cls, raw: dict, base_dir=".", overrides: dict | None = None) -> "PipelineConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        raw = _merge(raw, {k: v for k, v in (overrides or {}).items() if v is not None})
        try:
            jsonschema.validate(raw, _schema())
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config {where}: {exc.message}") from None
        v = _merge(DEFAULT_CONFIG, raw)
        base = Path(base_dir).resolve()
        v["manifest"] = str((base / v["manifest"]).resolve())
        v["workspace"] = str((base / v["workspace"]).resolve())
        if v["topology"]:
            v["topology"] = str((base / v["topology"]).resolve())
        if v["split"] and not v["split"]["train_ids"].startswith("builtin:"):
            v["split"]["train_ids"] = str((base / v["split"]["train_ids"]).resolve())
        v["modalities"] = [m for m in MODALITY_ORDER if m in v["modalities"]]
        cfg = cls(v)
        cfg._check()
        return cfg

    @classmethod
    def load(cls, path, overrides: dict | None = None) -> "PipelineConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(raw, path.parent, overrides)

    def _check(self) -> None:
        v = self.values
        if v["gcn"]["temporal_kernel"] % 2 == 0:
            raise ConfigError("gcn temporal_kernel must be odd")
        if len(v["cnn"]["channels"]) != v["cnn"]["blocks"]:
            raise ConfigError("cnn channels must list one width per block")
        if v["joint_count"] != sio.NTU_JOINTS and not v["topology"]:
            raise ConfigError(f"joint_count {v['joint_count']} needs an explicit topology file")
        rows, cols = v["parsemap"]["grid"]
        if v["parsemap"]["frames"] > rows * cols:
            raise ConfigError(f"{v['parsemap']['frames']} frames do not fit a {rows}x{cols} grid")
        active = [m for m in self.modalities if self.weights.get(m, 0) > 0]
        if not active:
            raise ConfigError("every selected modality has weight 0")

    # accessors
    def __getitem__(self, key):
        return self.values[key]

    @property
    def workspace(self) -> Path:
        return Path(self.values["workspace"])

    @property
    def modalities(self) -> list:
        return list(self.values["modalities"])

    @property
    def weights(self) -> dict:
        return {m: float(self.values["weights"].get(m, 0.0)) for m in MODALITY_ORDER}

    def topology(self) -> modalities.BoneTopology:
        topo = (modalities.read_topology(self.values["topology"]) if self.values["topology"]
                else modalities.ntu_topology())
        if topo.num_vertices != self.values["joint_count"]:
            raise ConfigError(f"topology has {topo.num_vertices} joints, config says {self.values['joint_count']}")
        return topo

    def optimizer(self, branch: str) -> OptimizerConfig:
        t = self.values["train"][branch]
        return OptimizerConfig(t["learning_rate"], t["momentum"], t["weight_decay"],
                               tuple(tuple(s) for s in t["schedule"]))

    def gcn_config(self) -> GcnConfig:
        g = self.values["gcn"]
        return GcnConfig(self.values["classes"], g["blocks"], tuple(g["channels"]), g["temporal_kernel"])

    def cnn_config(self) -> CnnConfig:
        c = self.values["cnn"]
        return CnnConfig(self.values["classes"], c["blocks"], tuple(c["channels"]))

    def to_json(self) -> str:
        return json.dumps(self.values, indent=1, sort_keys=True) + "\n"


# -- manifest ----------------------------------------------------------------

@dataclass(frozen=True)
class Entry:
    sample_id: str
    label: int
    split: str
    skeleton_path: Path
    parsing_dir: Path | None
    bbox_path: Path | None


def _split_ids(spec: dict) -> set:
    ref = spec["train_ids"]
    if ref.startswith("builtin:"):
        text = (resources.files("eppnet") / "data" / "splits" / f"{ref[8:]}.txt").read_text()
    else:
        try:
            text = Path(ref).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read split list {ref}: {exc}") from None
    ids = set()
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        try:
            ids.update(int(tok) for tok in line.split())
        except ValueError:
            raise ConfigError(f"split list {ref}: non-integer id in {line!r}") from None
    return ids


def load_manifest(cfg: PipelineConfig) -> list:
    """Validated manifest entries in file order; the config split list, if any, overrides ``split``."""
    path = Path(cfg["manifest"])
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"manifest not found: {path}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from None
    rows = doc.get("entries") if isinstance(doc, dict) else None
    if not isinstance(rows, list):
        raise ConfigError(f"{path}: expected an object with an 'entries' list")
    need_parsing = "P" in cfg.modalities
    split_ids = _split_ids(cfg["split"]) if cfg["split"] else None
    base = path.parent
    entries, seen = [], set()
    for i, row in enumerate(rows):
        try:
            sid, label = str(row["sample_id"]), row["label"]
            split = row.get("split", "train")
            skel = base / row["skeleton_path"]
            pdir = base / row["parsing_dir"] if row.get("parsing_dir") else None
            bbox = base / row["bbox_path"] if row.get("bbox_path") else None
        except (KeyError, TypeError):
            raise ConfigError(f"{path}: entry {i} lacks sample_id/label/skeleton_path") from None
        if sid in seen:
            raise ConfigError(f"{path}: duplicate sample_id {sid}")
        seen.add(sid)
        if not isinstance(label, int) or not 0 <= label < cfg["classes"]:
            raise ConfigError(f"{path}: {sid} label {label!r} outside [0, {cfg['classes']})")
        if split_ids is not None:
            fields = sio.parse_sample_name(sid)
            if fields is None:
                raise ConfigError(f"{sid}: split lists need SsssCcccPpppRrrrAaaa sample names")
            split = "train" if fields[cfg["split"]["key"]] in split_ids else "test"
        if split not in ("train", "test"):
            raise ConfigError(f"{path}: {sid} has split {split!r}")
        if not skel.is_file():
            raise ConfigError(f"{sid}: skeleton file {skel} does not exist")
        if need_parsing:
            if pdir is None or not pdir.is_dir():
                raise ConfigError(f"{sid}: parsing directory {pdir} does not exist")
            if bbox is None or not bbox.is_file():
                raise ConfigError(f"{sid}: bbox file {bbox} does not exist")
        entries.append(Entry(sid, label, split, skel, pdir, bbox))
    if not entries:
        raise ConfigError(f"{path}: manifest has no entries")
    return entries


# -- workspace bookkeeping ---------------------------------------------------

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def threads() -> int:
    raw = os.environ.get("EPPNET_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"EPPNET_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError("EPPNET_THREADS must be >= 0")
    return n


def _map(fn, items: Iterable) -> list:
    """Ordered map, threaded when EPPNET_THREADS > 0."""
    n = threads()
    if n == 0:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


class Workspace:
    def __init__(self, root):
        self.root = Path(root)

    def dir(self, stage: str) -> Path:
        return self.root / stage

    def marker_path(self, stage: str) -> Path:
        return self.dir(stage) / "stage.json"

    def marker(self, stage: str) -> dict | None:
        try:
            return json.loads(self.marker_path(stage).read_text())
        except (OSError, json.JSONDecodeError):
            return None

    def require(self, stage: str, needed_by: str) -> dict:
        m = self.marker(stage)
        if m is None:
            raise StageDependencyMissing(
                f"stage {needed_by!r} needs {stage!r} outputs in {self.dir(stage)}; run it first")
        for rel in m["outputs"]:
            if not (self.dir(stage) / rel).is_file():
                raise StageDependencyMissing(f"{stage} output {rel} is missing; rerun {stage!r}")
        return m

    def is_current(self, stage: str, input_hash: str) -> bool:
        m = self.marker(stage)
        if m is None or m.get("input_hash") != input_hash:
            return False
        d = self.dir(stage)
        return all((d / rel).is_file() and _sha256(d / rel) == h for rel, h in m["outputs"].items())

    def seal(self, stage: str, input_hash: str, outputs: Sequence[str]) -> None:
        d = self.dir(stage)
        hashes = {rel: _sha256(d / rel) for rel in sorted(outputs)}
        doc = {"stage": stage, "input_hash": input_hash, "outputs": hashes}
        self.marker_path(stage).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")

    def output_digest(self, stage: str) -> str:
        return _digest(self.marker(stage)["outputs"])


# -- stages ------------------------------------------------------------------

def _load_samples(ws: Workspace) -> list:
    return json.loads((ws.dir("prepare") / "samples.json").read_text())


def _split_index(samples: list, split: str) -> np.ndarray:
    return np.array([i for i, s in enumerate(samples) if s["split"] == split], dtype=np.int64)


def _stage_prepare(cfg: PipelineConfig, ws: Workspace, entries: list):
    T, M, V = cfg["T_fixed"], cfg["max_bodies"], cfg["joint_count"]

    def one(e: Entry):
        pose = sio.load_pose(e.skeleton_path, T, M, joint_count=V)
        return pose

    poses = _map(one, entries)
    out = ws.dir("prepare")
    np.save(out / "poses.npy", np.stack(poses).astype(np.float32))
    samples = [{"sample_id": e.sample_id, "label": e.label, "split": e.split} for e in entries]
    (out / "samples.json").write_text(json.dumps(samples, indent=1) + "\n")
    return ["poses.npy", "samples.json"]


def _stage_derive(cfg: PipelineConfig, ws: Workspace, entries: list):
    poses = np.load(ws.dir("prepare") / "poses.npy")
    topo = cfg.topology()
    kinds = [m for m in cfg.modalities if m in SKELETON_KINDS]
    per_sample = _map(lambda p: modalities.derive_all(p, topo), list(poses))
    outs = []
    for kind in kinds:
        np.save(ws.dir("derive") / f"{kind}.npy", np.stack([d[kind] for d in per_sample]))
        outs.append(f"{kind}.npy")
    return outs


def _raw_parsing(cfg: PipelineConfig, entries: list, index=None) -> tuple:
    chosen = entries if index is None else [entries[i] for i in index]

    def one(e: Entry):
        maps = pm.read_label_maps(e.parsing_dir, e.sample_id)
        boxes = pm.parse_bboxes(e.bbox_path.read_text(), len(maps))
        return maps, boxes

    loaded = _map(one, chosen)
    return [m for m, _ in loaded], [b for _, b in loaded]


def _stage_parsemap(cfg: PipelineConfig, ws: Workspace, entries: list):
    p = cfg["parsemap"]
    palette = pm.make_palette(p["labels"])
    sel = pm.FrameSelection(pm.TEST_UNIFORM, p["frames"])

    def one(e: Entry):
        maps = pm.read_label_maps(e.parsing_dir, e.sample_id)
        boxes = pm.parse_bboxes(e.bbox_path.read_text(), len(maps))
        fmap = pm.build_feature_map(maps, boxes, sel, palette, p["tile_size"], tuple(p["grid"]))
        netpbm.write_ppm(ws.dir("parsemap") / f"{e.sample_id}.ppm", fmap.pixels)
        return f"{e.sample_id}.ppm"

    return _map(one, entries)


def gcn_model(cfg: PipelineConfig, kind: str) -> GcnModel:
    """Freshly initialized graph branch for one skeleton modality."""
    topo = cfg.topology()
    adj = build_adjacency(topo.edges(), topo.num_vertices)
    return GcnModel(cfg.gcn_config(), adj, seed=derive_seed(cfg["seed"], f"init/{kind}"))


def cnn_model(cfg: PipelineConfig) -> CnnModel:
    """Freshly initialized parsing branch."""
    return CnnModel(cfg.cnn_config(), seed=derive_seed(cfg["seed"], "init/P"))


def train_kwargs(cfg: PipelineConfig, branch: str) -> dict:
    """Loop settings for ``train_branch`` from the config's train section."""
    t = cfg["train"][branch]
    return {"epochs": t["epochs"], "batch_size": t["batch_size"], "clip_norm": t["clip_norm"],
            "stop_at_accuracy": t["stop_at_accuracy"]}


def feature_map_dataset(cfg: PipelineConfig, entries: list, index, train: bool) -> FeatureMapDataset:
    p = cfg["parsemap"]
    maps, boxes = _raw_parsing(cfg, entries, index)
    return FeatureMapDataset(
        maps, boxes, np.array([entries[i].label for i in index], dtype=np.int64),
        tuple(entries[i].sample_id for i in index), pm.make_palette(p["labels"]),
        frames=p["frames"], tile_size=p["tile_size"], grid=tuple(p["grid"]),
        input_size=p["input_size"], train_random=p["train_random"] and train,
        augment_delta=p["augment_delta"] if train else 0.0,
        seed=derive_seed(cfg["seed"], "parsemap"))


def _stage_train(cfg: PipelineConfig, ws: Workspace, entries: list):
    samples = _load_samples(ws)
    idx = _split_index(samples, "train")
    labels = np.array([samples[i]["label"] for i in idx], dtype=np.int64)
    ids = [samples[i]["sample_id"] for i in idx]
    out, outs = ws.dir("train"), []
    for kind in cfg.modalities:
        log.info("train %s on %d samples", kind, len(idx))
        if kind == "P":
            model = cnn_model(cfg)
            data = feature_map_dataset(cfg, entries, idx, train=True)
            branch = "cnn"
        else:
            model = gcn_model(cfg, kind)
            x = np.load(ws.dir("derive") / f"{kind}.npy")[idx]
            model.fit_input_scale(x)
            data = ArrayDataset(x, labels, ids)
            branch = "gcn"
        history = train_branch(model, data, cfg.optimizer(branch),
                               seed=derive_seed(cfg["seed"], f"train/{kind}"), **train_kwargs(cfg, branch))
        checkpoint.save(out / f"{kind}.eppn", model.state_dict())
        (out / f"{kind}.history.json").write_text(json.dumps(history, indent=1) + "\n")
        outs += [f"{kind}.eppn", f"{kind}.history.json"]
    return outs


def _stage_eval(cfg: PipelineConfig, ws: Workspace, entries: list):
    samples = _load_samples(ws)
    idx = _split_index(samples, "test")
    labels = np.array([samples[i]["label"] for i in idx], dtype=np.int64)
    ids = tuple(samples[i]["sample_id"] for i in idx)
    outs = []
    for kind in cfg.modalities:
        state = checkpoint.load(ws.dir("train") / f"{kind}.eppn")
        if kind == "P":
            model = cnn_model(cfg)
            model.load_state_dict(state)
            size = cfg["parsemap"]["input_size"]
            imgs = [netpbm.read_ppm(ws.dir("parsemap") / f"{sid}.ppm") for sid in ids]
            if size:
                imgs = [pm.resize_nearest(im, size, size) for im in imgs]
            x = images_to_input(np.stack(imgs)) if imgs else np.zeros((0, 3, 1, 1), np.float32)
        else:
            model = gcn_model(cfg, kind)
            model.load_state_dict(state)
            x = np.load(ws.dir("derive") / f"{kind}.npy")[idx]
        sm = evaluate_branch(model, ArrayDataset(x, labels, ids), kind)
        write_scores(ws.dir("eval") / f"scores_{kind}.csv", sm)
        outs.append(f"scores_{kind}.csv")
    return outs


# -- fusion rows and the report ----------------------------------------------

@dataclass(frozen=True, eq=False)
class ReportRow:
    name: str
    weights: dict
    metrics: fusion.Metrics
    fused: ScoreMatrix | None = None


def _softmax(sm: ScoreMatrix) -> ScoreMatrix:
    s = sm.scores.astype(np.float64)
    e = np.exp(s - s.max(axis=1, keepdims=True))
    return ScoreMatrix(sm.sample_ids, e / e.sum(axis=1, keepdims=True), sm.modality, sm.labels)


def report_rows(scores: dict, weights: dict, K: int, mode: str = "raw") -> list:
    """Unimodal rows then the standard fusion combinations that are fully available."""
    if not scores:
        raise MissingScores("no evaluation scores to report")
    if mode == "softmax":
        scores = {m: _softmax(s) for m, s in scores.items()}
    avail = [m for m in MODALITY_ORDER if m in scores]
    combos = [(m,) for m in avail] + [c for c in FUSION_ROWS if all(m in scores for m in c)]
    rows = []
    for combo in combos:
        w = {m: (1.0 if len(combo) == 1 else weights.get(m, 0.0)) for m in combo}
        if not any(v > 0 for v in w.values()):
            continue
        fused = fusion.late_fuse([scores[m] for m in combo], [w[m] for m in combo])
        truth = scores[combo[0]].labels
        metrics = fusion.compute_metrics(fusion.decide(fused), truth, K)
        rows.append(ReportRow("+".join(combo), w, metrics, fused))
    return rows


def format_report(rows: Sequence[ReportRow], K: int, mode: str = "raw") -> str:
    n = int(rows[0].metrics.confusion.sum()) if rows else 0
    lines = ["eppnet modality report", f"classes {K}", f"test samples {n}", f"fusion {mode}", "",
             f"{'row':<16} {'weights':<28} top1"]
    for r in rows:
        w = ",".join(f"{m}={v:g}" for m, v in r.weights.items())
        lines.append(f"{r.name:<16} {w:<28} {r.metrics.top1:.6f}")
    return "\n".join(lines) + "\n"


def _row_json(r: ReportRow) -> dict:
    return {"name": r.name, "weights": r.weights, "top1": r.metrics.top1,
            "per_class_accuracy": [None if np.isnan(v) else float(v) for v in r.metrics.per_class_accuracy],
            "confusion": r.metrics.confusion.tolist()}


def _rows_from_json(doc: dict) -> list:
    """Rows without fused scores, rebuilt from metrics.json."""
    rows = []
    for d in doc["rows"]:
        conf = np.array(d["confusion"], dtype=np.int64)
        per = np.array([np.nan if v is None else v for v in d["per_class_accuracy"]])
        rows.append(ReportRow(d["name"], d["weights"], fusion.Metrics(d["top1"], per, conf)))
    return rows


def _eval_scores(ws: Workspace, mods: Sequence[str]) -> dict:
    scores = {}
    for m in mods:
        path = ws.dir("eval") / f"scores_{m}.csv"
        if not path.is_file():
            raise MissingScores(f"no evaluation scores for {m} at {path}")
        scores[m] = read_scores(path, m)
    return scores


def _stage_fuse(cfg: PipelineConfig, ws: Workspace, entries: list):
    scores = _eval_scores(ws, cfg.modalities)
    rows = report_rows(scores, cfg.weights, cfg["classes"], cfg["fusion"])
    outs = []
    for r in rows:
        write_scores(ws.dir("fuse") / f"scores_{r.name}.csv", r.fused)
        outs.append(f"scores_{r.name}.csv")
    doc = {"classes": cfg["classes"], "fusion": cfg["fusion"], "rows": [_row_json(r) for r in rows]}
    (ws.dir("fuse") / "metrics.json").write_text(json.dumps(doc, indent=1) + "\n")
    return outs + ["metrics.json"]


def write_report(out_dir, rows: Sequence[ReportRow], K: int, mode: str = "raw") -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(format_report(rows, K, mode))
    files = ["report.txt"]
    for r in rows:
        for p in fusion.write_confusion(out / f"confusion_{r.name}", r.metrics.confusion):
            files.append(p.name)
    return files


def _stage_report(cfg: PipelineConfig, ws: Workspace, entries: list):
    doc = json.loads((ws.dir("fuse") / "metrics.json").read_text())
    return write_report(ws.dir("report"), _rows_from_json(doc), doc["classes"], doc["fusion"])


_RUNNERS = {
    "prepare": _stage_prepare, "derive": _stage_derive, "parsemap": _stage_parsemap,
    "train": _stage_train, "eval": _stage_eval, "fuse": _stage_fuse, "report": _stage_report,
}


def _upstream(cfg: PipelineConfig, stage: str) -> list:
    p = "P" in cfg.modalities
    skel = any(m in SKELETON_KINDS for m in cfg.modalities)
    deps = {
        "prepare": [],
        "derive": ["prepare"],
        "parsemap": ["prepare"],
        "train": (["derive"] if skel else ["prepare"]) + (["parsemap"] if p else []),
        "eval": ["train"] + (["derive"] if skel else []) + (["parsemap"] if p else []),
        "fuse": ["eval"],
        "report": ["fuse"],
    }
    return deps[stage]


def _config_slice(cfg: PipelineConfig, stage: str) -> dict:
    v = cfg.values
    keys = {
        "prepare": ["classes", "joint_count", "max_bodies", "T_fixed", "split", "modalities"],
        "derive": ["topology", "modalities"],
        "parsemap": ["parsemap"],
        "train": ["seed", "modalities", "topology", "gcn", "cnn", "train", "parsemap"],
        "eval": ["modalities", "parsemap"],
        "fuse": ["modalities", "weights", "fusion", "classes"],
        "report": [],
    }[stage]
    out = {k: v[k] for k in keys}
    for k in ("topology",):
        if k in out and out[k]:
            out[k] = _sha256(Path(out[k]))
    if out.get("split"):
        out["split"] = {"key": v["split"]["key"], "ids": sorted(_split_ids(v["split"]))}
    return out


def _source_digest(cfg: PipelineConfig, entries: list) -> str:
    """Hash of every raw input file the manifest references."""
    h = hashlib.sha256()
    for e in entries:
        h.update(e.sample_id.encode() + b"\0" + str(e.label).encode() + e.split.encode())
        h.update(_sha256(e.skeleton_path).encode())
        if "P" in cfg.modalities:
            for f in sorted(e.parsing_dir.glob(f"{e.sample_id}_f*.pgm")):
                h.update(f.name.encode() + _sha256(f).encode())
            h.update(_sha256(e.bbox_path).encode())
    return h.hexdigest()


def stage_plan(cfg: PipelineConfig, stage: str) -> list:
    if stage == "all":
        return [s for s in STAGES if s != "parsemap" or "P" in cfg.modalities]
    if stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}; choose from {', '.join(STAGES + ('all',))}")
    return [stage]


def run(cfg: PipelineConfig, stage: str = "all") -> dict:
    """Run one stage or the whole chain; returns {stage: 'ran' | 'cached'}."""
    ws = Workspace(cfg.workspace)
    ws.root.mkdir(parents=True, exist_ok=True)
    (ws.root / "effective_config.json").write_text(cfg.to_json())
    entries = load_manifest(cfg)
    status = {}
    for st in stage_plan(cfg, stage):
        deps = _upstream(cfg, st)
        ups = {d: ws.require(d, st) for d in deps}
        if st == "parsemap" and "P" not in cfg.modalities:
            raise ConfigError("parsemap stage requested but modality P is not selected")
        inputs = {"stage": st, "config": _config_slice(cfg, st),
                  "upstream": {d: _digest(m["outputs"]) for d, m in ups.items()}}
        if st == "prepare":
            inputs["sources"] = _source_digest(cfg, entries)
        input_hash = _digest(inputs)
        if ws.is_current(st, input_hash):
            log.info("%s: up to date", st)
            status[st] = "cached"
            continue
        log.info("%s: running", st)
        d = ws.dir(st)
        d.mkdir(parents=True, exist_ok=True)
        ws.marker_path(st).unlink(missing_ok=True)
        outputs = _RUNNERS[st](cfg, ws, entries)
        ws.seal(st, input_hash, outputs)
        status[st] = "ran"
    return status


def report(workspace, modalities_: Sequence[str] | None = None, weights: dict | None = None,
           mode: str | None = None) -> list:
    """Rebuild the report directly from a workspace's evaluation scores."""
    ws = Workspace(workspace)
    eff = ws.root / "effective_config.json"
    base = json.loads(eff.read_text()) if eff.is_file() else {}
    K_default = base.get("classes")
    if modalities_ is None:
        mods = [m for m in MODALITY_ORDER if (ws.dir("eval") / f"scores_{m}.csv").is_file()]
        if base.get("modalities"):
            mods = [m for m in mods if m in base["modalities"]]
    else:
        mods = [m for m in MODALITY_ORDER if m in modalities_]
    if not mods:
        raise MissingScores(f"no evaluation scores under {ws.dir('eval')}")
    scores = _eval_scores(ws, mods)
    w = {**fusion.DEFAULT_WEIGHTS, **base.get("weights", {}), **(weights or {})}
    K = K_default or next(iter(scores.values())).num_classes
    mode = mode or base.get("fusion", "raw")
    rows = report_rows(scores, w, K, mode)
    return write_report(ws.dir("report"), rows, K, mode)
