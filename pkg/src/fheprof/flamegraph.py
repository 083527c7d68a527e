"""Call-stack folding and FlameGraph SVG rendering.

Stack acquisition delegates to the OS sampling profiler; this module's
contract starts at the profiler's textual stack dump (``perf script``
style), which is parsed into StackSample streams, folded into the de facto
``frame1;frame2;... N`` line format, and rendered as a standalone SVG whose
box widths are proportional to inclusive sample weight.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import EmptyProfileError

FOLD_SEPARATOR = ";"
DEFAULT_SAMPLING_HZ = 99  # offset from timer harmonics

# perf script frame line: "<addr> <symbol> (<dso>)" with leading whitespace.
_FRAME_RE = re.compile(r"^\s+([0-9a-fA-F]+)\s+(.+?)(?:\s+\((.*)\))?$")


@dataclass(frozen=True)
class StackSample:
    """One sampled call stack, outermost frame first."""

    frames: tuple[str, ...]
    weight: int = 1

    def __post_init__(self):
        if not self.frames:
            raise ValueError("a stack sample needs at least one frame")
        if self.weight < 1:
            raise ValueError("sample weight must be >= 1")


@dataclass
class FoldedProfile:
    """Merged stacks: semicolon-joined frame path -> total sample weight."""

    lines: dict[str, int]
    total_weight: int = field(init=False)

    def __post_init__(self):
        self.total_weight = sum(self.lines.values())


def sanitize_frame(name: str) -> str:
    """Frame names may not contain the fold separator or newlines."""
    cleaned = name.replace(FOLD_SEPARATOR, "_").replace("\n", "_").replace("\r", "_")
    return cleaned.strip() or "_"


def ingest(samples: Iterable[StackSample]) -> FoldedProfile:
    """Fold a finite sample stream; identical paths merge by weight sum."""
    lines: dict[str, int] = {}
    for sample in samples:
        path = FOLD_SEPARATOR.join(sanitize_frame(f) for f in sample.frames)
        lines[path] = lines.get(path, 0) + sample.weight
    if not lines:
        raise EmptyProfileError("no stack samples to fold")
    return FoldedProfile(dict(sorted(lines.items())))


def parse_perf_script(text: str) -> Iterator[StackSample]:
    """Parse ``perf script`` textual stack dumps into samples.

    Records are blank-line separated: one header line (process, time,
    event) followed by frame lines, innermost first. Unresolvable frames
    ("[unknown]") are kept so weight conservation holds.
    """
    frames: list[str] = []
    for line in text.splitlines():
        if not line.strip():
            if frames:
                yield StackSample(frames=tuple(reversed(frames)))
                frames = []
            continue
        match = _FRAME_RE.match(line)
        if match:
            symbol = match.group(2).strip()
            # Strip the instruction offset ("+0x1a2") perf appends.
            symbol = re.sub(r"\+0x[0-9a-fA-F]+$", "", symbol)
            frames.append(sanitize_frame(symbol))
        # Non-frame, non-blank lines are record headers; nothing to keep.
    if frames:
        yield StackSample(frames=tuple(reversed(frames)))


def fold_lines(profile: FoldedProfile) -> str:
    """Folded text form: one ``path weight`` line, sorted, newline-terminated."""
    return "".join(
        f"{path} {weight}\n" for path, weight in sorted(profile.lines.items())
    )


def top_functions(profile: FoldedProfile, k: int) -> list[tuple[str, float]]:
    """Functions ranked by inclusive sample fraction (paths containing them)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not profile.lines:
        raise EmptyProfileError("profile is empty")
    inclusive: dict[str, int] = {}
    for path, weight in profile.lines.items():
        for frame in set(path.split(FOLD_SEPARATOR)):
            inclusive[frame] = inclusive.get(frame, 0) + weight
    ranked = sorted(inclusive.items(), key=lambda item: (-item[1], item[0]))
    return [(name, weight / profile.total_weight) for name, weight in ranked[:k]]


# -- SVG rendering -----------------------------------------------------------


@dataclass
class _Node:
    frame: str
    inclusive: int = 0
    children: dict[str, "_Node"] = field(default_factory=dict)


def _build_tree(profile: FoldedProfile) -> _Node:
    root = _Node(frame="", inclusive=profile.total_weight)
    for path, weight in profile.lines.items():
        node = root
        for frame in path.split(FOLD_SEPARATOR):
            child = node.children.get(frame)
            if child is None:
                child = node.children[frame] = _Node(frame=frame)
            child.inclusive += weight
            node = child
    return root


def _color(frame: str, seed: int) -> str:
    digest = hashlib.sha256(f"{seed}:{frame}".encode()).digest()
    r = 205 + digest[0] % 50
    g = 60 + digest[1] % 120
    b = digest[2] % 60
    return f"rgb({r},{g},{b})"


IMAGE_WIDTH = 1200.0
ROW_HEIGHT = 17.0
TOP_PAD = 40.0


def render_svg(profile: FoldedProfile, title: str, palette_seed: int = 0) -> str:
    """Deterministic icicle-layout FlameGraph SVG.

    One rectangle per (path prefix, depth); width is proportional to the
    prefix's inclusive weight, siblings are laid out in lexicographic
    order, and each rect carries a <title> with path, samples, and share.
    """
    if not profile.lines:
        raise EmptyProfileError("profile is empty")
    root = _build_tree(profile)
    total = float(profile.total_weight)
    max_depth = max(path.count(FOLD_SEPARATOR) for path in profile.lines) + 1
    height = TOP_PAD + ROW_HEIGHT * max_depth + 10.0

    rects: list[str] = []

    def emit(node: _Node, depth: int, x: float, path: str) -> None:
        width = IMAGE_WIDTH * node.inclusive / total
        pct = 100.0 * node.inclusive / total
        y = TOP_PAD + depth * ROW_HEIGHT
        label = _escape(f"{path} ({node.inclusive} samples, {pct:.2f}%)")
        rects.append(
            f'<g><title>{label}</title>'
            f'<rect x="{x:.4f}" y="{y:.1f}" width="{width:.4f}" '
            f'height="{ROW_HEIGHT - 1:.1f}" fill="{_color(node.frame, palette_seed)}" '
            f'rx="2"/></g>'
        )
        child_x = x
        for frame in sorted(node.children):
            child = node.children[frame]
            emit(child, depth + 1, child_x, f"{path}{FOLD_SEPARATOR}{frame}" if path else frame)
            child_x += IMAGE_WIDTH * child.inclusive / total

    x = 0.0
    for frame in sorted(root.children):
        child = root.children[frame]
        emit(child, 0, x, frame)
        x += IMAGE_WIDTH * child.inclusive / total

    header = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{IMAGE_WIDTH:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {IMAGE_WIDTH:.0f} {height:.0f}">\n'
        f'<rect x="0" y="0" width="{IMAGE_WIDTH:.0f}" height="{height:.0f}" '
        f'fill="#f8f8f8"/>\n'
        f'<text x="{IMAGE_WIDTH / 2:.0f}" y="24" text-anchor="middle" '
        f'font-family="monospace" font-size="15">{_escape(title)} '
        f"({profile.total_weight} samples)</text>\n"
    )
    return header + "\n".join(rects) + "\n</svg>\n"


def write_outputs(
    profile: FoldedProfile, out_dir: Path, stem: str, title: str, palette_seed: int = 0
) -> tuple[Path, Path]:
    """Write the folded text file and the SVG; returns both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    folded_path = out_dir / f"{stem}.folded"
    svg_path = out_dir / f"{stem}.svg"
    folded_path.write_text(fold_lines(profile))
    svg_path.write_text(render_svg(profile, title, palette_seed))
    return folded_path, svg_path


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    )
