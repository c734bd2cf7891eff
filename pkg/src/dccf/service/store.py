"""Disk-backed session registry.

Each session is a directory (composite.png, mask.png, optional gt.png,
stack.dccf once fitted, params.json) so a service restart brings every
session back.  The in-memory side keeps decoded images plus a per-session
lock: a fit holds the lock for its whole duration, renders take it briefly,
and a second concurrent fit is refused instead of queued.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .. import imaging_io
from ..filters import FilterStack
from ..image import Mask, RgbImage
from ..interact import Adjustments
from ..resample import downsample_area, fit_max_side

PREVIEW_MAX_SIDE = 512


class SessionNotFound(KeyError):
    pass


class FitInProgress(RuntimeError):
    pass


@dataclass
class Session:
    id: str
    directory: Path
    composite: RgbImage
    mask: Mask
    gt: Optional[RgbImage]
    stack: Optional[FilterStack] = None
    report: Optional[dict] = None
    adjustments: Optional[dict] = None
    lock: threading.Lock = field(default_factory=threading.Lock)
    _preview: Optional[RgbImage] = None

    @property
    def fitted(self) -> bool:
        return self.stack is not None

    def preview_composite(self) -> RgbImage:
        if self._preview is None:
            h, w = self.composite.data.shape[:2]
            ph, pw = fit_max_side(h, w, PREVIEW_MAX_SIDE)
            if (ph, pw) == (h, w):
                self._preview = self.composite
            else:
                self._preview = RgbImage(downsample_area(self.composite.data, ph, pw))
        return self._preview

    def persist_state(self) -> None:
        payload = {
            "fitted": self.fitted,
            "report": self.report,
            "adjustments": self.adjustments,
        }
        imaging_io._atomic_write(
            self.directory / "params.json", json.dumps(payload, indent=2).encode()
        )

    def adjustments_obj(self) -> Adjustments:
        if not self.adjustments:
            return Adjustments()
        return Adjustments.from_dict(self.adjustments)


class SessionStore:
    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, Session] = {}
        self._registry_lock = threading.Lock()
        self._load_existing()

    def _load_existing(self) -> None:
        for directory in sorted(self.root.iterdir()):
            if not directory.is_dir():
                continue
            try:
                self._sessions[directory.name] = self._load_session(directory)
            except Exception:
                continue  # skip unreadable/partial session dirs

    def _load_session(self, directory: Path) -> Session:
        composite = imaging_io.load_image(directory / "composite.png")
        mask = imaging_io.load_mask(directory / "mask.png")
        gt_path = directory / "gt.png"
        gt = imaging_io.load_image(gt_path) if gt_path.exists() else None
        session = Session(directory.name, directory, composite, mask, gt)
        state_path = directory / "params.json"
        if state_path.exists():
            state = json.loads(state_path.read_text())
            session.report = state.get("report")
            session.adjustments = state.get("adjustments")
            stack_path = directory / "stack.dccf"
            if state.get("fitted") and stack_path.exists():
                session.stack = imaging_io.load_stack(stack_path)
        return session

    def create(self, composite: RgbImage, mask: Mask, gt: Optional[RgbImage]) -> Session:
        session_id = uuid.uuid4().hex[:12]
        directory = self.root / session_id
        directory.mkdir(parents=True)
        imaging_io.save_image(composite, directory / "composite.png")
        imaging_io._atomic_write(
            directory / "mask.png",
            imaging_io.encode_png(imaging_io.to_uint8(mask.data)),
        )
        if gt is not None:
            imaging_io.save_image(gt, directory / "gt.png")
        session = Session(session_id, directory, composite, mask, gt)
        session.persist_state()
        with self._registry_lock:
            self._sessions[session_id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._registry_lock:
            try:
                return self._sessions[session_id]
            except KeyError:
                raise SessionNotFound(session_id) from None

    def set_stack(self, session: Session, stack: FilterStack, report: dict) -> FilterStack:
        """Persist the fitted stack, then reload it so the in-memory copy is
        float32-canonical and matches what the CLI reads from the same file."""
        path = session.directory / "stack.dccf"
        imaging_io.save_stack(stack, path)
        session.stack = imaging_io.load_stack(path)
        session.report = report
        session.persist_state()
        return session.stack
