"""Multimodal token-sequence serialization: pack, parse, and limits.

Three layouts are supported, all composed from image blocks, timestamped
video-frame blocks, and text spans:

  image      I_1 \\n I_2 \\n ... \\n I_N \\n X
  video      (<t_1> V_1),(<t_2> V_2),...,(<t_M> V_M) \\n X
  streaming  video runs and text spans interleaved, "\\n" per switch

Visual blocks render as explicit placeholder markers carrying their
token count (this library has no embedding table), e.g. ``[[IMG:256]]``
written with the white-bracket glyphs. Timestamps render as
``Time: {t}s`` with at most one fractional digit; frame timestamps are
quantized to 0.1 s at construction so the wire form is lossless.

Two serializations exist: the display form above (human-readable,
byte-stable) and a record form for line-delimited files, in which text
spans are length-prefixed so "," and "\\n" inside text cannot collide
with separators. Both forms round-trip through ``parse_sequence`` /
``parse_record``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

VISUAL_TOKEN_LIMIT = 10_240
CONTEXT_LIMIT = 16_384

_IMG_MARKER_RE = re.compile(r"⟦IMG:(\d+)⟧")
_VID_ITEM_RE = re.compile(r"Time: (\d+(?:\.\d)?)s⟦VID:(\d+)⟧")
_IMG_LINE_RE = re.compile(r"^⟦IMG:(\d+)⟧$")
_MARKER_CHARS = ("⟦", "⟧")


class SequenceError(ValueError):
    """Malformed sequence input or serialized text."""


class LimitError(SequenceError):
    """A sequence exceeds the visual or total token limit."""

    def __init__(self, limit_name: str, limit: int, actual: int):
        self.limit_name = limit_name
        self.limit = limit
        self.actual = actual
        super().__init__(
            f"{limit_name} limit exceeded: {actual} > {limit} (over by {actual - limit})"
        )


def quantize_timestamp(t: float) -> float:
    """Snap a timestamp to the 0.1 s wire precision (half away from zero)."""
    if t < 0:
        raise SequenceError(f"timestamp must be >= 0, got {t}")
    return int(t * 10 + 0.5) / 10


def format_timestamp(t: float) -> str:
    """Shortest-decimal rendering: '7' for integers, else one digit like '2.5'."""
    deci = int(round(t * 10))
    if deci % 10 == 0:
        return str(deci // 10)
    return f"{deci // 10}.{deci % 10}"


@dataclass(frozen=True)
class ImageBlock:
    token_count: int

    def __post_init__(self) -> None:
        if self.token_count < 1:
            raise SequenceError(f"token_count must be >= 1, got {self.token_count}")


@dataclass(frozen=True)
class FrameBlock:
    timestamp: float
    token_count: int

    def __post_init__(self) -> None:
        if self.token_count < 1:
            raise SequenceError(f"token_count must be >= 1, got {self.token_count}")
        object.__setattr__(self, "timestamp", quantize_timestamp(self.timestamp))


@dataclass(frozen=True)
class TextSpan:
    text: str

    def __post_init__(self) -> None:
        for ch in _MARKER_CHARS:
            if ch in self.text:
                raise SequenceError(f"text spans may not contain the reserved marker glyph {ch!r}")


SequenceElement = Union[ImageBlock, FrameBlock, TextSpan]


@dataclass(frozen=True)
class TokenSequence:
    """An ordered multimodal sequence with its token accounting.

    ``visual_tokens`` counts image/frame block tokens; ``total_tokens``
    adds the text side, where every text character, rendered timestamp
    character, and separator counts as one token (a deterministic proxy
    for a real tokenizer, which is out of scope).
    """

    elements: tuple[SequenceElement, ...]
    visual_tokens: int
    total_tokens: int

    @classmethod
    def build(
        cls,
        elements: Iterable[SequenceElement],
        *,
        visual_limit: int = VISUAL_TOKEN_LIMIT,
        total_limit: int = CONTEXT_LIMIT,
    ) -> "TokenSequence":
        elems = tuple(elements)
        for prev, cur in zip(elems, elems[1:]):
            if isinstance(prev, TextSpan) and isinstance(cur, TextSpan):
                raise SequenceError("adjacent text spans are not allowed; merge them")
            if isinstance(prev, FrameBlock) and isinstance(cur, FrameBlock):
                # Adjacent frames render as one comma-joined run, which
                # must carry increasing timestamps to stay parseable.
                if cur.timestamp <= prev.timestamp:
                    raise SequenceError(
                        f"frame timestamps must be strictly increasing, "
                        f"got {prev.timestamp} then {cur.timestamp}"
                    )
        visual = sum(e.token_count for e in elems if not isinstance(e, TextSpan))
        display, marker_chars = _render_display(elems)
        total = visual + len(display) - marker_chars
        if visual > visual_limit:
            raise LimitError("visual token", visual_limit, visual)
        if total > total_limit:
            raise LimitError("total token", total_limit, total)
        return cls(elems, visual, total)

    def display(self) -> str:
        return _render_display(self.elements)[0]

    def record(self) -> str:
        return serialize_record(self.elements)


def _marker(element: SequenceElement) -> str:
    if isinstance(element, ImageBlock):
        return f"⟦IMG:{element.token_count}⟧"
    if isinstance(element, FrameBlock):
        return f"⟦VID:{element.token_count}⟧"
    raise TypeError(f"not a visual block: {element!r}")


def _render_display(elements: Sequence[SequenceElement]) -> tuple[str, int]:
    """Display string plus the number of characters spent on markers.

    Segments (an image line, a run of consecutive frames, a text span)
    are joined by "\\n"; frames inside a run are joined by ",".
    """
    segments: list[str] = []
    marker_chars = 0
    i = 0
    while i < len(elements):
        e = elements[i]
        if isinstance(e, TextSpan):
            segments.append(e.text)
            i += 1
        elif isinstance(e, ImageBlock):
            m = _marker(e)
            marker_chars += len(m)
            segments.append(m)
            i += 1
        else:
            run = []
            while i < len(elements) and isinstance(elements[i], FrameBlock):
                frame = elements[i]
                m = _marker(frame)
                marker_chars += len(m)
                run.append(f"Time: {format_timestamp(frame.timestamp)}s{m}")
                i += 1
            segments.append(",".join(run))
    return "\n".join(segments), marker_chars


def _check_frame_order(frames: Sequence[FrameBlock]) -> None:
    for prev, cur in zip(frames, frames[1:]):
        if cur.timestamp <= prev.timestamp:
            raise SequenceError(
                f"frame timestamps must be strictly increasing, got {prev.timestamp} then {cur.timestamp}"
            )


def pack_image_sequence(
    images: Sequence[ImageBlock],
    text: Union[TextSpan, str],
    *,
    visual_limit: int = VISUAL_TOKEN_LIMIT,
    total_limit: int = CONTEXT_LIMIT,
) -> str:
    """Serialize images followed by a trailing text span (display form)."""
    span = text if isinstance(text, TextSpan) else TextSpan(text)
    seq = TokenSequence.build(
        list(images) + [span], visual_limit=visual_limit, total_limit=total_limit
    )
    return seq.display()


def pack_video_sequence(
    frames: Sequence[FrameBlock],
    text: Union[TextSpan, str],
    *,
    visual_limit: int = VISUAL_TOKEN_LIMIT,
    total_limit: int = CONTEXT_LIMIT,
) -> str:
    """Serialize timestamped frames followed by a trailing text span."""
    span = text if isinstance(text, TextSpan) else TextSpan(text)
    seq = TokenSequence.build(
        list(frames) + [span], visual_limit=visual_limit, total_limit=total_limit
    )
    return seq.display()


StreamSegment = Union[Sequence[FrameBlock], TextSpan, str]


def pack_streaming(
    segments: Sequence[StreamSegment],
    *,
    visual_limit: int = VISUAL_TOKEN_LIMIT,
    total_limit: int = CONTEXT_LIMIT,
) -> str:
    """Serialize an interleaved stream of video runs and text spans."""
    elements: list[SequenceElement] = []
    for seg in segments:
        if isinstance(seg, (TextSpan, str)):
            elements.append(seg if isinstance(seg, TextSpan) else TextSpan(seg))
        else:
            frames = list(seg)
            if len(frames) == 0:
                raise SequenceError("empty video run in streaming input")
            elements.extend(frames)
    seq = TokenSequence.build(elements, visual_limit=visual_limit, total_limit=total_limit)
    return seq.display()


def parse_sequence(
    data: str,
    *,
    visual_limit: int = VISUAL_TOKEN_LIMIT,
    total_limit: int = CONTEXT_LIMIT,
) -> TokenSequence:
    """Parse display-form text back into a TokenSequence.

    Each line is an image block, a comma-joined frame run, or text;
    consecutive text lines merge into one span (a text span may itself
    contain newlines). Marker glyphs outside a well-formed block are a
    parse error, as is a frame run missing its "," separators.
    """
    if data == "":
        return TokenSequence.build([], visual_limit=visual_limit, total_limit=total_limit)

    elements: list[SequenceElement] = []
    text_lines: list[str] = []

    def flush_text() -> None:
        if text_lines:
            elements.append(TextSpan("\n".join(text_lines)))
            text_lines.clear()

    for line in data.split("\n"):
        img = _IMG_LINE_RE.match(line)
        if img:
            flush_text()
            elements.append(ImageBlock(int(img.group(1))))
            continue
        if any(ch in line for ch in _MARKER_CHARS):
            # Marker glyphs are reserved, so this line must be a
            # well-formed frame run; anything else is malformed input.
            frames = _parse_frame_run(line)
            flush_text()
            elements.extend(frames)
            continue
        text_lines.append(line)
    flush_text()
    return TokenSequence.build(elements, visual_limit=visual_limit, total_limit=total_limit)


def _parse_frame_run(line: str) -> list[FrameBlock]:
    """Parse a comma-joined run of 'Time: <t>s[[VID:n]]' items."""
    pos = 0
    frames: list[FrameBlock] = []
    while True:
        m = _VID_ITEM_RE.match(line, pos)
        if not m:
            raise SequenceError(f"malformed timestamp tag in frame run at column {pos}: {line!r}")
        frames.append(FrameBlock(float(m.group(1)), int(m.group(2))))
        pos = m.end()
        if pos == len(line):
            break
        if line[pos] != ",":
            raise SequenceError(f"expected ',' between frames at column {pos}: {line!r}")
        pos += 1
    _check_frame_order(frames)
    return frames


# --- record form -----------------------------------------------------------
#
# One record per line; elements joined by ",". Image blocks are "I<n>",
# frame blocks "V<t>:<n>", text spans "T<len>:<chars>" where <len> is the
# character count of the raw text (which may itself contain "," or "\n";
# the scanner consumes exactly <len> characters).

_REC_INT = re.compile(r"\d+")
_REC_TIME = re.compile(r"\d+(?:\.\d)?")


def serialize_record(elements: Sequence[SequenceElement]) -> str:
    parts = []
    for e in elements:
        if isinstance(e, ImageBlock):
            parts.append(f"I{e.token_count}")
        elif isinstance(e, FrameBlock):
            parts.append(f"V{format_timestamp(e.timestamp)}:{e.token_count}")
        else:
            parts.append(f"T{len(e.text)}:{e.text}")
    return ",".join(parts)


def parse_record(
    line: str,
    *,
    visual_limit: int = VISUAL_TOKEN_LIMIT,
    total_limit: int = CONTEXT_LIMIT,
) -> TokenSequence:
    """Parse one record-form line back into a TokenSequence."""
    elements: list[SequenceElement] = []
    pos = 0
    n = len(line)
    while pos < n:
        tag = line[pos]
        pos += 1
        if tag == "I":
            m = _REC_INT.match(line, pos)
            if not m:
                raise SequenceError(f"malformed image block at column {pos}: {line!r}")
            elements.append(ImageBlock(int(m.group())))
            pos = m.end()
        elif tag == "V":
            m = _REC_TIME.match(line, pos)
            if not m or m.end() >= n or line[m.end()] != ":":
                raise SequenceError(f"malformed frame block at column {pos}: {line!r}")
            t = float(m.group())
            m2 = _REC_INT.match(line, m.end() + 1)
            if not m2:
                raise SequenceError(f"malformed frame token count at column {m.end() + 1}: {line!r}")
            elements.append(FrameBlock(t, int(m2.group())))
            pos = m2.end()
        elif tag == "T":
            m = _REC_INT.match(line, pos)
            if not m or m.end() >= n or line[m.end()] != ":":
                raise SequenceError(f"malformed text span at column {pos}: {line!r}")
            length = int(m.group())
            start = m.end() + 1
            if start + length > n:
                raise SequenceError(f"text span overruns record: {line!r}")
            elements.append(TextSpan(line[start : start + length]))
            pos = start + length
        else:
            raise SequenceError(f"unknown element tag {tag!r} at column {pos - 1}: {line!r}")
        if pos < n:
            if line[pos] != ",":
                raise SequenceError(f"expected ',' at column {pos}: {line!r}")
            pos += 1
            if pos == n:
                raise SequenceError(f"dangling separator at end of record: {line!r}")
    return TokenSequence.build(elements, visual_limit=visual_limit, total_limit=total_limit)
