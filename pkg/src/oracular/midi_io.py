"""Standard MIDI File ingestion and emission on an 8th-note piano-roll grid.

The parser is self-contained (no third-party MIDI library) and total: any
byte string either yields an :class:`SmfDocument` or raises a subclass of
:class:`MidiError`.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

NUM_PITCHES = 128
STEPS_PER_QUARTER = 2  # 8th-note resolution
FRAME_STEPS = 4  # half a bar of 8th notes
FRAMES_PER_BATCH = 16  # 8 bars
DEFAULT_TEMPO = 500_000  # microseconds per quarter, 120 BPM
DEFAULT_TPQ = 480
MAX_STEPS = 1 << 18  # 32768 bars; longer grids are refused rather than allocated


class MidiError(ValueError):
    """Base class for everything the SMF reader can reject."""


class MalformedHeader(MidiError):
    pass


class TruncatedChunk(MidiError):
    pass


class UnsupportedFormat(MidiError):
    pass


class MalformedEvent(MidiError):
    pass


class EmptyDocument(MidiError):
    """Raised by :func:`quantize` when a file carries no notes."""


class TooLong(MidiError):
    """Raised by :func:`quantize` when the grid would exceed ``MAX_STEPS``."""


@dataclass(frozen=True)
class NoteEvent:
    pitch: int
    onset: int
    duration: int
    velocity: int = 100
    channel: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch out of range: {self.pitch}")
        if not 1 <= self.velocity <= 127:
            raise ValueError(f"velocity out of range: {self.velocity}")
        if not 0 <= self.channel <= 15:
            raise ValueError(f"channel out of range: {self.channel}")
        if self.duration <= 0:
            raise ValueError(f"duration must be positive: {self.duration}")
        if self.onset < 0:
            raise ValueError(f"negative onset: {self.onset}")


@dataclass
class SmfDocument:
    ticks_per_quarter: int
    tracks: list[list[NoteEvent]]
    tempo_changes: list[tuple[int, int]] = field(default_factory=list)
    end_tick: int = 0  # latest End-of-Track tick over all tracks

    @property
    def notes(self) -> list[NoteEvent]:
        return sorted((n for t in self.tracks for n in t), key=lambda n: (n.onset, n.pitch))


@dataclass
class PianoRoll:
    """Binary (num_steps x 128) grid, one row per 8th note."""

    grid: np.ndarray
    beats_per_bar: int = 4

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid)
        if grid.ndim != 2 or grid.shape[1] != NUM_PITCHES:
            raise ValueError(f"piano-roll must be (steps, 128), got {grid.shape}")
        if grid.shape[0] < 1:
            raise ValueError("piano-roll needs at least one step")
        if not np.isin(grid, (0, 1)).all():
            raise ValueError("piano-roll entries must be 0 or 1")
        self.grid = grid.astype(np.uint8)

    @property
    def num_steps(self) -> int:
        return self.grid.shape[0]

    @property
    def steps_per_bar(self) -> int:
        return self.beats_per_bar * STEPS_PER_QUARTER

    @property
    def num_bars(self) -> float:
        return self.num_steps / self.steps_per_bar

    def truncate(self, num_steps: int) -> PianoRoll:
        return PianoRoll(self.grid[:num_steps].copy(), self.beats_per_bar)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PianoRoll):
            return NotImplemented
        return self.grid.shape == other.grid.shape and bool((self.grid == other.grid).all())


@dataclass
class FrameSequence:
    """Non-overlapping 4-step windows of a roll, shaped (num_frames, 4, 128, 1)."""

    frames: np.ndarray
    source_steps: int
    frames_per_batch: int = FRAMES_PER_BATCH

    def __len__(self) -> int:
        return self.frames.shape[0]

    def batches(self) -> Iterator[np.ndarray]:
        """Full batches only; a trailing partial batch is dropped."""
        for start in range(0, len(self) - self.frames_per_batch + 1, self.frames_per_batch):
            yield self.frames[start:start + self.frames_per_batch]

    @property
    def num_full_batches(self) -> int:
        return len(self) // self.frames_per_batch

    def to_grid(self) -> np.ndarray:
        steps = self.frames.reshape(-1, self.frames.shape[2])
        return steps[: self.source_steps]


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


class _Reader:
    def __init__(self, data: bytes, pos: int = 0, end: int | None = None):
        self.data = data
        self.pos = pos
        self.end = len(data) if end is None else end

    def remaining(self) -> int:
        return self.end - self.pos

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > self.end:
            raise TruncatedChunk(f"need {n} bytes at offset {self.pos}, chunk ends at {self.end}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def byte(self) -> int:
        return self.take(1)[0]

    def varlen(self) -> int:
        value = 0
        for _ in range(4):
            b = self.byte()
            value = (value << 7) | (b & 0x7F)
            if not b & 0x80:
                return value
        raise MalformedEvent(f"variable-length quantity longer than 4 bytes at offset {self.pos}")


def read_varlen(data: bytes) -> int:
    """Decode one variable-length quantity from the start of ``data``."""
    return _Reader(bytes(data)).varlen()


def encode_varlen(value: int) -> bytes:
    if value < 0 or value > 0x0FFFFFFF:
        raise ValueError(f"value not representable as a MIDI varlen: {value}")
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


_DATA_LENGTHS = {0x80: 2, 0x90: 2, 0xA0: 2, 0xB0: 2, 0xC0: 1, 0xD0: 1, 0xE0: 2}


def _parse_track(reader: _Reader, tempos: list[tuple[int, int]]) -> tuple[list[NoteEvent], int]:
    notes: list[NoteEvent] = []
    # open notes per (channel, pitch): FIFO of (onset, velocity)
    open_notes: dict[tuple[int, int], list[tuple[int, int]]] = {}
    tick = 0
    status = None

    def close(channel: int, pitch: int, at: int) -> None:
        queue = open_notes.get((channel, pitch))
        if not queue:
            return  # stray note-off
        onset, velocity = queue.pop(0)
        if at > onset:
            notes.append(NoteEvent(pitch, onset, at - onset, velocity, channel))

    while reader.remaining() > 0:
        tick += reader.varlen()
        first = reader.byte()
        if first == 0xFF:
            meta_type = reader.byte()
            payload = reader.take(reader.varlen())
            if meta_type == 0x2F:
                break
            if meta_type == 0x51:
                if len(payload) != 3:
                    raise MalformedEvent("tempo meta event must carry 3 bytes")
                tempos.append((tick, int.from_bytes(payload, "big")))
            continue
        if first in (0xF0, 0xF7):
            reader.take(reader.varlen())
            status = None
            continue
        if first >= 0xF1:
            raise MalformedEvent(f"system common/realtime byte 0x{first:02X} inside a track")

        if first & 0x80:
            status = first
            data = [reader.byte() for _ in range(_DATA_LENGTHS[first & 0xF0])]
        else:
            if status is None:
                raise MalformedEvent(f"running status without a prior status at offset {reader.pos - 1}")
            data = [first] + [reader.byte() for _ in range(_DATA_LENGTHS[status & 0xF0] - 1)]
        if any(b & 0x80 for b in data):
            raise MalformedEvent(f"data byte with high bit set at offset {reader.pos}")

        kind, channel = status & 0xF0, status & 0x0F
        if kind == 0x90 and data[1] > 0:
            open_notes.setdefault((channel, data[0]), []).append((tick, data[1]))
        elif kind == 0x80 or kind == 0x90:
            close(channel, data[0], tick)

    # unmatched note-ons run to the end of the track
    for (channel, pitch), queue in sorted(open_notes.items()):
        while queue:
            close(channel, pitch, tick)
    notes.sort(key=lambda n: (n.onset, n.pitch, n.channel))
    return notes, tick


def parse_smf(data: bytes) -> SmfDocument:
    """Parse SMF format 0 or 1 bytes into note events (velocity-0 note-on is a note-off)."""
    data = bytes(data)
    reader = _Reader(data)
    if reader.remaining() < 8 or reader.take(4) != b"MThd":
        raise MalformedHeader("missing MThd magic")
    (length,) = struct.unpack(">I", reader.take(4))
    if length < 6:
        raise MalformedHeader(f"MThd length {length} < 6")
    header = _Reader(data, reader.pos, reader.pos + length)
    if header.end > len(data):
        raise TruncatedChunk("MThd chunk runs past end of file")
    fmt, ntracks, division = struct.unpack(">HHH", header.take(6))
    reader.pos = header.end
    if fmt == 2:
        raise UnsupportedFormat("SMF format 2 (independent sequences) is not supported")
    if fmt not in (0, 1):
        raise MalformedHeader(f"unknown SMF format {fmt}")
    if division & 0x8000:
        raise UnsupportedFormat("SMPTE time division is not supported")
    if division == 0:
        raise MalformedHeader("ticks per quarter must be positive")

    tracks: list[list[NoteEvent]] = []
    tempos: list[tuple[int, int]] = []
    end_tick = 0
    while len(tracks) < ntracks and reader.remaining() > 0:
        chunk_type = reader.take(4)
        (chunk_len,) = struct.unpack(">I", reader.take(4))
        if reader.pos + chunk_len > len(data):
            raise TruncatedChunk(f"{chunk_type!r} chunk of {chunk_len} bytes runs past end of file")
        body = _Reader(data, reader.pos, reader.pos + chunk_len)
        reader.pos += chunk_len
        if chunk_type != b"MTrk":
            continue  # alien chunks are skipped per the SMF rules
        notes, last_tick = _parse_track(body, tempos)
        tracks.append(notes)
        end_tick = max(end_tick, last_tick)
    if len(tracks) < ntracks:
        raise TruncatedChunk(f"header announces {ntracks} tracks, found {len(tracks)}")

    tempos.sort()
    return SmfDocument(division, tracks, tempos, end_tick)


def read_midi(path) -> SmfDocument:
    with open(path, "rb") as fh:
        return parse_smf(fh.read())


# ---------------------------------------------------------------------------
# Grid conversion
# ---------------------------------------------------------------------------


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def quantize(doc: SmfDocument) -> PianoRoll:
    """Merge every track onto one binary 8th-note grid."""
    notes = doc.notes
    if not notes:
        raise EmptyDocument("document contains no notes")
    step = doc.ticks_per_quarter / STEPS_PER_QUARTER
    spans = []
    for note in notes:
        start = _round_half_up(note.onset / step)
        length = max(1, _round_half_up(note.duration / step))
        spans.append((note.pitch, start, start + length))
    num_steps = max(max(end for _, _, end in spans), _round_half_up(doc.end_tick / step))
    if num_steps > MAX_STEPS:
        raise TooLong(f"{num_steps} steps exceeds the {MAX_STEPS}-step limit")
    grid = np.zeros((num_steps, NUM_PITCHES), dtype=np.uint8)
    for pitch, start, end in spans:
        grid[start:end, pitch] = 1
    return PianoRoll(grid)


def piano_roll_to_frames(roll: PianoRoll, frame_steps: int = FRAME_STEPS) -> FrameSequence:
    num_frames = -(-roll.num_steps // frame_steps)
    padded = np.zeros((num_frames * frame_steps, NUM_PITCHES), dtype=np.uint8)
    padded[: roll.num_steps] = roll.grid
    frames = padded.reshape(num_frames, frame_steps, NUM_PITCHES, 1)
    return FrameSequence(frames, roll.num_steps)


def frames_to_piano_roll(frames: np.ndarray) -> PianoRoll:
    frames = np.asarray(frames)
    return PianoRoll(frames.reshape(-1, frames.shape[2]))


# ---------------------------------------------------------------------------
# Writing
# ---------------------------------------------------------------------------


def _runs(column: np.ndarray) -> list[tuple[int, int]]:
    padded = np.concatenate(([0], column.astype(np.int8), [0]))
    edges = np.flatnonzero(np.diff(padded))
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


def write_smf(roll: PianoRoll, ticks_per_quarter: int = DEFAULT_TPQ, velocity: int = 100) -> bytes:
    """Emit a format-0 file; each maximal run of active cells becomes one note."""
    if ticks_per_quarter <= 0 or ticks_per_quarter % STEPS_PER_QUARTER or ticks_per_quarter > 0x7FFF:
        raise ValueError(f"ticks_per_quarter must be a positive even value < 32768, got {ticks_per_quarter}")
    step = ticks_per_quarter // STEPS_PER_QUARTER

    events: list[tuple[int, int, int]] = []  # (tick, order, pitch); offs sort before ons
    for pitch in range(NUM_PITCHES):
        for start, end in _runs(roll.grid[:, pitch]):
            events.append((start * step, 1, pitch))
            events.append((end * step, 0, pitch))
    events.sort()

    body = bytearray()
    body += b"\x00\xff\x51\x03" + DEFAULT_TEMPO.to_bytes(3, "big")
    body += b"\x00\xff\x58\x04\x04\x02\x18\x08"  # 4/4
    tick = 0
    status = None
    for at, is_on, pitch in events:
        body += encode_varlen(at - tick)
        tick = at
        if status != 0x90:
            body.append(0x90)
            status = 0x90
        body += bytes((pitch, velocity if is_on else 0))
    body += encode_varlen(roll.num_steps * step - tick) + b"\xff\x2f\x00"

    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, ticks_per_quarter)
    return header + b"MTrk" + struct.pack(">I", len(body)) + bytes(body)


def write_midi(roll: PianoRoll, path, ticks_per_quarter: int = DEFAULT_TPQ) -> None:
    with open(path, "wb") as fh:
        fh.write(write_smf(roll, ticks_per_quarter))
