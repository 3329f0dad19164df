"""Wire protocol for an out-of-process reward provider.

Request:  JSON {"session": str, "frames": [per-view PNG base64], "candidate_id": int}
Response: JSON {"reward": float in [0, 1], "rationale": str}

On timeout or any transport/format error the caller falls back to the
rule-based reward; the failure is logged, never raised.
"""

from __future__ import annotations

import base64
import json
import logging
import urllib.error
import urllib.request

import cv2
import numpy as np

log = logging.getLogger(__name__)


def encode_frames_png(frames: np.ndarray) -> list[str]:
    """[K, 3, H, W] floats in [0, 1] -> per-view base64 PNG strings."""
    out = []
    for img in frames:
        bgr = (np.transpose(img, (1, 2, 0))[:, :, ::-1] * 255.0).round().astype(np.uint8)
        ok, buf = cv2.imencode(".png", bgr)
        if not ok:
            raise RuntimeError("PNG encoding failed")
        out.append(base64.b64encode(buf.tobytes()).decode("ascii"))
    return out


class ExternalRewardClient:
    def __init__(self, url: str, timeout: float = 5.0):
        self.url = url
        self.timeout = timeout

    def score(self, session: str, frames: np.ndarray,
              candidate_id: int) -> tuple[float, str] | None:
        """Reward from the external provider, or None to use the fallback."""
        payload = json.dumps({
            "session": session,
            "frames": encode_frames_png(frames),
            "candidate_id": candidate_id,
        }).encode()
        req = urllib.request.Request(
            self.url, data=payload, headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                data = json.loads(resp.read())
            reward = float(data["reward"])
            if not 0.0 <= reward <= 1.0:
                raise ValueError(f"reward {reward} outside [0, 1]")
            return reward, str(data.get("rationale", ""))
        except (urllib.error.URLError, TimeoutError, ValueError, KeyError,
                json.JSONDecodeError, OSError) as exc:
            log.warning("external reward provider failed (%s); using rule-based "
                        "fallback", exc)
            return None
