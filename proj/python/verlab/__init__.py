"""Python bindings for the verlab core.

Also documents the run-directory contract model adapters write against.
"""

import json
from pathlib import Path

from ._verlab import *  # noqa: F401,F403
from ._verlab import (
    FORMAT_VERSION,
    canonical_manifest,
    load_manifest as _load_manifest,
    write_entropy_trace,
    write_step_attention,
)

MANIFEST_FILE = "manifest.json"
ENTROPY_FILE = "entropy.trace"
HEADMASK_FILE = "headmask.json"


def step_file_name(step: int) -> str:
    return f"steps/step_{step}.attn"


def load_manifest(run_dir) -> dict:
    return json.loads(_load_manifest(Path(run_dir)))


def write_run(run_dir, *, model_id, num_layers, num_heads, grid_h, grid_w, steps, entropies,
              vocab_size, patch_size=28, token_to_patch=None):
    """Writes a run directory the way a model adapter does.

    `steps` maps decode step -> (layers, heads, tokens) array in visual-token order.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": FORMAT_VERSION,
        "model_id": model_id,
        "num_layers": num_layers,
        "num_heads": num_heads,
        "visual_token_count": grid_h * grid_w,
        "patch_size_px": patch_size,
        "grid_h": grid_h,
        "grid_w": grid_w,
        "recorded_steps": sorted(steps),
        "vocab_size": vocab_size,
        "files": {str(t): step_file_name(t) for t in sorted(steps)},
    }
    if token_to_patch is not None:
        manifest["token_to_patch"] = list(token_to_patch)
    text = canonical_manifest(json.dumps(manifest))
    (run_dir / MANIFEST_FILE).write_text(text)
    for t, attn in steps.items():
        write_step_attention(run_dir, t, attn)
    write_entropy_trace(run_dir, list(entropies))
    return json.loads(text)
