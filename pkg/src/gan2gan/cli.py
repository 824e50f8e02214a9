"""Command-line orchestration of the pipeline.

Subcommands: synthesize, extract, train-wgan, train-denoiser, denoise,
evaluate.  Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical
failure.  Stages are idempotent: rerunning with the same config against
existing outputs is a no-op with a notice.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import g2g, noise, wavelet, wgan
from .checkpoint import load_tensors, save_tensors
from .errors import DataError, NumericalError, UsageError
from .metrics import EvalReport, config_fingerprint, psnr, ssim

DESK_SYNTH = {"count": 12, "size": 64}
PAPER_SYNTH = {"count": 48, "size": 256}
DESK_EXTRACT = {"patch_size": 32, "stride": None, "max_patches": 2000}
PAPER_EXTRACT = {"patch_size": 96, "stride": None, "max_patches": 100000}


def _load_config_file(path):
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file is not valid JSON: {exc}") from exc


class RunConfig:
    """Resolved configuration: preset defaults, config-file overrides, then
    CLI flag overrides.  The fingerprint hashes everything except paths."""

    def __init__(self, preset: str, seed: int, noise_spec: str | None, overrides: dict):
        if preset not in ("desk", "paper"):
            raise UsageError(f"unknown preset {preset!r}; choose desk or paper")
        self.preset = preset
        self.seed = seed
        self.noise_spec = noise_spec
        self.overrides = overrides

        self.synth = dict(DESK_SYNTH if preset == "desk" else PAPER_SYNTH)
        self.synth.update(overrides.get("synthesize", {}))
        self.extract = dict(DESK_EXTRACT if preset == "desk" else PAPER_EXTRACT)
        self.extract.update(overrides.get("extract", {}))
        wcfg = wgan.WganConfig.desk() if preset == "desk" else wgan.WganConfig.paper()
        self.wgan = dataclasses.replace(wcfg, **overrides.get("wgan", {}))
        gcfg = g2g.G2GConfig.desk() if preset == "desk" else g2g.G2GConfig.paper()
        self.g2g = dataclasses.replace(gcfg, **overrides.get("g2g", {}))

    def fingerprint(self) -> str:
        payload = {
            "preset": self.preset,
            "seed": self.seed,
            "noise_spec": self.noise_spec,
            "synthesize": self.synth,
            "extract": self.extract,
            "wgan": dataclasses.asdict(self.wgan),
            "g2g": dataclasses.asdict(self.g2g),
        }
        return config_fingerprint(payload)


def _write_meta(out_dir: Path, stage: str, cfg: "RunConfig"):
    meta = {
        "stage": stage,
        "config_fingerprint": cfg.fingerprint(),
        "noise_spec": cfg.noise_spec,
    }
    (out_dir / f"{stage}.meta.json").write_text(json.dumps(meta, indent=2))


def _stage_done(out_dir: Path, stage: str, fingerprint: str, outputs) -> bool:
    meta_path = out_dir / f"{stage}.meta.json"
    if not meta_path.exists():
        return False
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError:
        return False
    if meta.get("config_fingerprint") != fingerprint:
        return False
    return all(Path(p).exists() for p in outputs)


def _sync_upstream(cfg: "RunConfig", path: Path, stage: str):
    """Adopt the upstream noise spec when unset, then verify fingerprints."""
    meta_path = path / f"{stage}.meta.json"
    if not meta_path.exists():
        return
    meta = json.loads(meta_path.read_text())
    if cfg.noise_spec is None:
        cfg.noise_spec = meta.get("noise_spec")
    if meta.get("config_fingerprint") != cfg.fingerprint():
        raise DataError(
            f"config fingerprint mismatch with {meta_path}: upstream stage "
            f"was run with a different configuration"
        )


def _save_png(path, img: np.ndarray):
    arr = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    data = np.round(arr * 255.0).astype(np.uint8)
    Image.fromarray(data).save(path)


def _load_png(path) -> np.ndarray:
    img = Image.open(path)
    arr = np.asarray(img, dtype=np.float64) / 255.0
    return arr


def _list_pngs(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise DataError(f"directory not found: {directory} (run the prior stage?)")
    files = sorted(directory.glob("*.png"))
    if not files:
        raise DataError(f"no PNG images in {directory}")
    return files


# ---------------------------------------------------------------------------
# stages

def cmd_synthesize(cfg: RunConfig, args) -> int:
    if cfg.noise_spec is None:
        raise UsageError("synthesize requires --noise")
    model = noise.parse_noise_spec(cfg.noise_spec)
    out = Path(args.out)
    fp = cfg.fingerprint()
    manifest_path = out / "manifest.json"
    if _stage_done(out, "synthesize", fp, [manifest_path]):
        print(f"synthesize: outputs up to date in {out}, skipping")
        return 0
    (out / "clean").mkdir(parents=True, exist_ok=True)
    (out / "noisy").mkdir(parents=True, exist_ok=True)

    if args.clean_dir:
        cleans = [( _load_png(p), p.stem) for p in _list_pngs(Path(args.clean_dir))]
    else:
        from .toy import make_toy_images
        imgs = make_toy_images(cfg.synth["count"], cfg.synth["size"], seed=cfg.seed)
        cleans = [(img, f"toy{idx:03d}") for idx, img in enumerate(imgs)]

    entries = []
    for idx, (clean, name) in enumerate(cleans):
        noisy = noise.corrupt(clean, model, seed=cfg.seed * 100003 + idx)
        _save_png(out / "clean" / f"{name}.png", clean)
        _save_png(out / "noisy" / f"{name}.png", noisy)
        entries.append({"image_id": name, "seed": cfg.seed * 100003 + idx})

    manifest = {
        "noise_spec": cfg.noise_spec,
        "noise_model": dataclasses.asdict(model),
        "seed": cfg.seed,
        "images": entries,
        "config_fingerprint": fp,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    _write_meta(out, "synthesize", cfg)
    print(f"synthesize: wrote {len(entries)} images to {out}")
    return 0


def _read_manifest(corpus: Path) -> dict:
    manifest_path = corpus / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"missing {manifest_path} (run synthesize first)")
    return json.loads(manifest_path.read_text())


def cmd_extract(cfg: RunConfig, args) -> int:
    corpus = Path(args.corpus)
    out = Path(args.out)
    _sync_upstream(cfg, corpus, "synthesize")
    fp = cfg.fingerprint()
    ckpt = out / "noise_patches.ckpt"
    if _stage_done(out, "extract", fp, [ckpt]):
        print(f"extract: outputs up to date in {out}, skipping")
        return 0
    manifest = _read_manifest(corpus)
    lam = args.lam
    if lam is None:
        lam = cfg.extract.get("lam")
    if lam is None:
        lam = noise.default_lambda(noise.parse_noise_spec(manifest["noise_spec"]))
    ecfg = wavelet.ExtractionConfig(
        patch_size=cfg.extract["patch_size"],
        stride=cfg.extract["stride"],
        rule=wavelet.DwtRule(lam),
        max_patches=cfg.extract["max_patches"],
    )
    images = [(_load_png(p), p.stem) for p in _list_pngs(corpus / "noisy")]
    patches = wavelet.extract_noise_patches(images, ecfg)
    out.mkdir(parents=True, exist_ok=True)
    tensors = {f"noise_patch/{i}": p.values for i, p in enumerate(patches)}
    save_tensors(ckpt, tensors)
    _write_meta(out, "extract", cfg)
    print(f"extract: {len(patches)} noise patches (lambda={lam}) -> {ckpt}")
    return 0


def _noise_patch_pool(ckpt_path: Path) -> np.ndarray:
    tensors = load_tensors(ckpt_path)
    patches = [tensors[k] for k in sorted(tensors, key=lambda k: int(k.split("/")[1]))
               if k.startswith("noise_patch/")]
    if not patches:
        raise DataError(f"no noise patches in {ckpt_path}")
    return np.stack([p.transpose(2, 0, 1) for p in patches])


def _noisy_image_pool(corpus: Path) -> np.ndarray:
    imgs = []
    for p in _list_pngs(corpus / "noisy"):
        a = _load_png(p)
        if a.ndim == 2:
            a = a[:, :, None]
        imgs.append(a.transpose(2, 0, 1))
    return np.stack(imgs)


def cmd_train_wgan(cfg: RunConfig, args) -> int:
    corpus = Path(args.corpus)
    patches_dir = Path(args.patches)
    out = Path(args.out)
    _sync_upstream(cfg, patches_dir, "extract")
    fp = cfg.fingerprint()
    bundle_path = out / "wgan_bundle.ckpt"
    if _stage_done(out, "train_wgan", fp, [bundle_path]):
        print(f"train-wgan: outputs up to date in {out}, skipping")
        return 0
    noise_pool = _noise_patch_pool(patches_dir / "noise_patches.ckpt")
    noisy_pool = _noisy_image_pool(corpus)
    out.mkdir(parents=True, exist_ok=True)
    bundle = wgan.train_wgan(noisy_pool, noise_pool, cfg.wgan, seed=cfg.seed,
                             trace_path=out / "wgan_trace.csv")
    bundle.save(bundle_path)
    _write_meta(out, "train_wgan", cfg)
    print(f"train-wgan: bundle -> {bundle_path}")
    return 0


def _load_bundle(cfg: RunConfig, path: Path) -> wgan.WganBundle:
    if not path.exists():
        raise DataError(f"missing bundle {path} (run train-wgan first)")
    bundle = wgan.build_bundle(cfg.wgan, seed=0)
    bundle.load(path)
    return bundle


def cmd_train_denoiser(cfg: RunConfig, args) -> int:
    corpus = Path(args.corpus)
    bundle_dir = Path(args.bundle)
    out = Path(args.out)
    _sync_upstream(cfg, bundle_dir, "train_wgan")
    fp = cfg.fingerprint()
    model_path = out / "denoiser.ckpt"
    if _stage_done(out, "train_denoiser", fp, [model_path]):
        print(f"train-denoiser: outputs up to date in {out}, skipping")
        return 0
    bundle = _load_bundle(cfg, bundle_dir / "wgan_bundle.ckpt")
    images = [_load_png(p) for p in _list_pngs(corpus / "noisy")]
    out.mkdir(parents=True, exist_ok=True)
    model = g2g.train_g2g(images, bundle, cfg.g2g, seed=cfg.seed,
                          trace_path=out / "g2g_trace.csv")
    model = g2g.iterate_g2g(images, bundle, model, cfg.g2g, seed=cfg.seed,
                            trace_path=out / "g2g_iter_trace.csv")
    model.trained_noise_tag = cfg.noise_spec or ""
    model.save(model_path)
    _write_meta(out, "train_denoiser", cfg)
    print(f"train-denoiser: model -> {model_path}")
    return 0


def cmd_denoise(cfg: RunConfig, args) -> int:
    model_dir = Path(args.model)
    out = Path(args.out)
    _sync_upstream(cfg, model_dir, "train_denoiser")
    fp = cfg.fingerprint()
    model_path = model_dir / "denoiser.ckpt"
    if not model_path.exists():
        raise DataError(f"missing model {model_path} (run train-denoiser first)")
    files = _list_pngs(Path(args.input))
    if _stage_done(out, "denoise", fp, [out / f.name for f in files]):
        print(f"denoise: outputs up to date in {out}, skipping")
        return 0
    model = g2g.DenoiserModel(cfg.g2g, seed=0)
    model.load(model_path)
    out.mkdir(parents=True, exist_ok=True)
    for f in files:
        _save_png(out / f.name, g2g.denoise(model, _load_png(f)))
    _write_meta(out, "denoise", cfg)
    print(f"denoise: {len(files)} images -> {out}")
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    clean_dir = Path(args.clean)
    test_dir = Path(args.denoised)
    out_path = Path(args.out) if args.out else None
    clean_files = {p.name: p for p in _list_pngs(clean_dir)}
    rows = []
    for f in _list_pngs(test_dir):
        if f.name not in clean_files:
            continue
        a = _load_png(f)
        b = _load_png(clean_files[f.name])
        rows.append((f.stem, psnr(a, b), ssim(a, b)))
    if not rows:
        raise DataError(f"no matching image names between {clean_dir} and {test_dir}")
    report = EvalReport(rows, config_fingerprint=cfg.fingerprint())
    print(report.to_table())
    if out_path is not None:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(report.to_json())
        print(f"evaluate: report -> {out_path}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gan2gan",
        description="Blind denoising via generated noisy-image pairs",
    )
    parser.add_argument("--config", help="JSON config file with section overrides")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--preset", choices=("desk", "paper"), default="desk")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="build a noisy corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--noise", help="noise spec, e.g. gauss:25")
    p.add_argument("--clean-dir", help="PNG directory (default: builtin toy set)")

    p = sub.add_parser("extract", help="extract pure-noise patches")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lam", type=float, help="extraction rule lambda")

    p = sub.add_parser("train-wgan", help="train the generative model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--patches", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-denoiser", help="Noise2Noise training on pairs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("denoise", help="apply a trained denoiser")
    p.add_argument("--input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="PSNR/SSIM against clean references")
    p.add_argument("--clean", required=True)
    p.add_argument("--denoised", required=True)
    p.add_argument("--out", help="JSON report path")

    return parser


COMMANDS = {
    "synthesize": cmd_synthesize,
    "extract": cmd_extract,
    "train-wgan": cmd_train_wgan,
    "train-denoiser": cmd_train_denoiser,
    "denoise": cmd_denoise,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        overrides = _load_config_file(args.config)
        noise_spec = getattr(args, "noise", None) or overrides.get("noise_spec")
        cfg = RunConfig(args.preset, args.seed, noise_spec, overrides)
        return COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
