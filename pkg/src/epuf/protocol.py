"""Device <-> server mutual authentication over enrolled challenge windows.

Three fixed-size messages per session:

  device -> server  id || N                                   (32 B)
  server -> device  A || V1 || Ch || HS                      (128 B)
  device -> server  E || V2                                   (64 B)

with A = ((M xor rnd) || rnd) xor K,   V1 = h(M, rnd, N, HS, Ch, K),
     E = (D || next_id) xor h(K),      V2 = h(D, rnd, next_id, K).

The device keeps nothing between sessions except its rotating 128-bit
pseudo-ID; the key K is rebuilt from a fresh PUF read each time. The
server consumes one enrolled challenge per issued message: a challenge
that has been sent is burned whether or not the session completes, so no
challenge value ever appears in two server messages.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import InsufficientBits, generate_ef
from .dramsim import DeviceModel, InputPattern, ReadCondition, read_segment
from .hashing import hash_fields
from .keygen import (
    Challenge, CrpRecord, derive_key, enumerate_windows, register_many,
    read_enrollment_records, write_enrollment_records,
)

ID_BYTES = 16
NONCE_BYTES = 16
FIELD_BYTES = 32
WIRE_FRAC_BITS = 5       # 8 bits per bitmap row; 32 rows form one 256-bit window

AUTH_INIT_BYTES = 32
SERVER_CHALLENGE_BYTES = 128
DEVICE_RESPONSE_BYTES = 64


class CrpExhausted(RuntimeError):
    """All enrolled challenges consumed; the device must re-enroll."""


def xor_bytes(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise ValueError("xor operands must have equal length")
    return bytes(x ^ y for x, y in zip(a, b))


# --- wire messages ---------------------------------------------------------

@dataclass(frozen=True)
class MsgAuthInit:
    device_id: bytes
    nonce: bytes

    def encode(self) -> bytes:
        return self.device_id + self.nonce

    @classmethod
    def decode(cls, blob: bytes) -> "MsgAuthInit":
        if len(blob) != AUTH_INIT_BYTES:
            raise ValueError("auth-init message must be 32 bytes")
        return cls(blob[:ID_BYTES], blob[ID_BYTES:])


@dataclass(frozen=True)
class MsgServerChallenge:
    a: bytes
    v1: bytes
    challenge: bytes
    hs: bytes

    def encode(self) -> bytes:
        return self.a + self.v1 + self.challenge + self.hs

    @classmethod
    def decode(cls, blob: bytes) -> "MsgServerChallenge":
        if len(blob) != SERVER_CHALLENGE_BYTES:
            raise ValueError("server-challenge message must be 128 bytes")
        return cls(blob[0:32], blob[32:64], blob[64:96], blob[96:128])


@dataclass(frozen=True)
class MsgDeviceResponse:
    e: bytes
    v2: bytes

    def encode(self) -> bytes:
        return self.e + self.v2

    @classmethod
    def decode(cls, blob: bytes) -> "MsgDeviceResponse":
        if len(blob) != DEVICE_RESPONSE_BYTES:
            raise ValueError("device-response message must be 64 bytes")
        return cls(blob[:32], blob[32:])


# --- server ----------------------------------------------------------------

@dataclass
class ServerDbRow:
    handle: str
    current_id: bytes
    crps: list[CrpRecord]
    cursor: int = 0


@dataclass
class _Session:
    handle: str
    key: bytes
    rnd: bytes
    control_msg: bytes
    consumed: bool = False


@dataclass
class Accept:
    report: bytes        # D recovered from the device
    control_msg: bytes   # M that was delivered


class ServerDb:
    def __init__(self):
        self.rows: dict[str, ServerDbRow] = {}

    def add_row(self, handle: str, device_id: bytes, crps: list[CrpRecord],
                append: bool = False, reset_cursor: bool = False) -> ServerDbRow:
        row = self.rows.get(handle)
        if row is None or not append:
            row = ServerDbRow(handle, device_id, list(crps))
            self.rows[handle] = row
        else:
            row.crps.extend(crps)
            row.current_id = device_id
            if reset_cursor:
                row.cursor = 0
        return row

    def find_by_id(self, device_id: bytes) -> ServerDbRow | None:
        for row in self.rows.values():
            if row.current_id == device_id:
                return row
        return None

    def save(self, directory):
        from pathlib import Path
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "server_state.txt", "w") as fh:
            for handle in sorted(self.rows):
                row = self.rows[handle]
                fh.write(f"{handle} {row.current_id.hex()} {row.cursor}\n")
                write_enrollment_records(directory / f"crp_{handle}.txt", row.crps)

    @classmethod
    def load(cls, directory) -> "ServerDb":
        from pathlib import Path
        directory = Path(directory)
        db = cls()
        with open(directory / "server_state.txt") as fh:
            for line in fh:
                handle, id_hex, cursor = line.split()
                crps = read_enrollment_records(directory / f"crp_{handle}.txt")
                row = ServerDbRow(handle, bytes.fromhex(id_hex), crps, int(cursor))
                db.rows[handle] = row
        return db


class Server:
    def __init__(self, db: ServerDb, rng: np.random.Generator):
        self.db = db
        self.rng = rng

    def respond(self, msg: MsgAuthInit, control_msg: bytes) -> tuple[MsgServerChallenge, _Session] | None:
        """Issue the next challenge, or drop silently for an unknown ID.

        The selected challenge is consumed immediately: once on the wire it
        is never reissued, even if the session later fails.
        """
        row = self.db.find_by_id(msg.device_id)
        if row is None:
            return None
        if row.cursor >= len(row.crps):
            raise CrpExhausted(f"device {row.handle} has no unused challenges")
        crp = row.crps[row.cursor]
        row.cursor += 1
        rnd = self.rng.bytes(NONCE_BYTES)
        key = crp.key
        a = xor_bytes(xor_bytes(control_msg, rnd) + rnd, key)
        hs_wire = np.packbits(crp.hs_mask).tobytes()
        ch_wire = crp.challenge.encode()
        v1 = hash_fields(control_msg, rnd, msg.nonce, hs_wire, ch_wire, key)
        session = _Session(row.handle, key, rnd, control_msg)
        return MsgServerChallenge(a, v1, ch_wire, hs_wire), session

    def finalize(self, session: _Session | None, msg: MsgDeviceResponse) -> Accept | None:
        """Verify the device response; commit the rotated ID only on success."""
        if session is None or session.consumed:
            return None
        session.consumed = True
        plain = xor_bytes(msg.e, hash_fields(session.key))
        report, next_id = plain[:ID_BYTES], plain[ID_BYTES:]
        expected_v2 = hash_fields(report, session.rnd, next_id, session.key)
        if expected_v2 != msg.v2:
            return None
        self.db.rows[session.handle].current_id = next_id
        return Accept(report, session.control_msg)


# --- device ----------------------------------------------------------------

class EpufHandle:
    """Device-side PUF access at the wire profile's fixed-point precision.

    Counts logical operations for cost instrumentation; reads of noise-free
    models are memoized per (address, temperature) since their bitmaps are
    nonce-independent.
    """

    def __init__(self, model: DeviceModel, pattern: InputPattern = InputPattern(),
                 frac_bits: int = WIRE_FRAC_BITS):
        self.model = model
        self.pattern = pattern
        self.frac_bits = frac_bits
        self.counters = {"epuf_reads": 0, "hash_evals": 0, "xor_ops": 0}
        self._noise_free = model.f_marginal == 0.0 or model.p_noise_max == 0.0
        self._cache: dict[tuple, np.ndarray] = {}

    def reset_counters(self):
        for key in self.counters:
            self.counters[key] = 0

    def ef_bits(self, address, temperature: float, nonce: int) -> np.ndarray:
        self.counters["epuf_reads"] += 1
        key = (address, temperature)
        if self._noise_free and key in self._cache:
            return self._cache[key]
        bmp = read_segment(self.model, *address,
                           ReadCondition(temperature, nonce, self.pattern))
        bits = generate_ef(bmp, self.frac_bits).bits
        if self._noise_free:
            self._cache[key] = bits
        return bits


@dataclass
class _Pending:
    nonce: bytes
    next_id: bytes | None = None


class Device:
    """Holds only the rotating pseudo-ID between sessions."""

    def __init__(self, epuf: EpufHandle, initial_id: bytes, rng: np.random.Generator):
        self.epuf = epuf
        self.current_id = initial_id
        self.rng = rng
        self.temperature = 25.0
        self.pending: _Pending | None = None

    def _fresh_read_nonce(self) -> int:
        return int.from_bytes(self.rng.bytes(8), "big")

    def start(self) -> MsgAuthInit:
        self.pending = _Pending(self.rng.bytes(NONCE_BYTES))
        return MsgAuthInit(self.current_id, self.pending.nonce)

    def process(self, msg: MsgServerChallenge, report: bytes) -> MsgDeviceResponse | None:
        """Authenticate the server and answer, or reject without state change."""
        if self.pending is None:
            return None
        try:
            challenge = Challenge.decode(msg.challenge)
            challenge.validate(self.epuf.model, self.epuf.frac_bits)
        except (ValueError, IndexError):
            return None
        ef_bits = self.epuf.ef_bits(challenge.address, self.temperature,
                                    self._fresh_read_nonce())
        hs_mask = np.unpackbits(np.frombuffer(msg.hs, dtype=np.uint8))
        lo, hi = challenge.window_offset, challenge.window_offset + challenge.window_bits
        response = ef_bits[lo:hi][hs_mask == 1]
        self.epuf.counters["xor_ops"] += 1    # helper-stream application
        key = derive_key(response)
        self.epuf.counters["hash_evals"] += 1
        plain = xor_bytes(msg.a, key)
        self.epuf.counters["xor_ops"] += 1
        masked_m, rnd = plain[:ID_BYTES], plain[ID_BYTES:]
        control_msg = xor_bytes(masked_m, rnd)
        expected_v1 = hash_fields(control_msg, rnd, self.pending.nonce, msg.hs,
                                  msg.challenge, key)
        self.epuf.counters["hash_evals"] += 1
        if expected_v1 != msg.v1:
            return None
        next_id = self.rng.bytes(ID_BYTES)
        hashed_key = hash_fields(key)
        self.epuf.counters["hash_evals"] += 1
        e = xor_bytes(report + next_id, hashed_key)
        self.epuf.counters["xor_ops"] += 1
        v2 = hash_fields(report, rnd, next_id, key)
        self.epuf.counters["hash_evals"] += 1
        self.current_id = next_id
        self.pending = None
        return MsgDeviceResponse(e, v2)


# --- enrollment and session driving ----------------------------------------

def enroll(db: ServerDb, model: DeviceModel, handle: str, n_crps: int,
           rng: np.random.Generator, pattern: InputPattern = InputPattern(),
           omega3: int = 50, theta: int = 0, sweep=None, min_qualified: int = 128,
           append: bool = False, reset_cursor: bool = False) -> tuple[ServerDbRow, Device]:
    """Register n_crps challenge windows and hand both sides their state.

    Runs over the simulated secure channel: the server learns the challenges,
    helper streams, keys, and initial ID; the device keeps only the ID.
    """
    epuf = EpufHandle(model, pattern)
    by_segment: dict[tuple, list[Challenge]] = {}
    for ch in enumerate_windows(model, WIRE_FRAC_BITS):
        by_segment.setdefault(ch.address, []).append(ch)
    segments = list(by_segment)
    crps: list[CrpRecord] = []
    # characterize segments lazily, in seeded order, until enough windows qualify
    for seg_i in rng.permutation(len(segments)):
        if len(crps) >= n_crps:
            break
        group = by_segment[segments[seg_i]]
        records = register_many(model, group, pattern, omega3=omega3, theta=theta,
                                sweep=sweep, frac_bits=WIRE_FRAC_BITS,
                                min_qualified=min_qualified)
        for rec_i in rng.permutation(len(records)):
            if len(crps) >= n_crps:
                break
            crps.append(records[rec_i])
    if len(crps) < n_crps:
        raise InsufficientBits(
            f"geometry offers only {len(crps)} viable challenges, need {n_crps}")
    initial_id = rng.bytes(ID_BYTES)
    row = db.add_row(handle, initial_id, crps, append=append, reset_cursor=reset_cursor)
    return row, Device(epuf, initial_id, rng)


@dataclass
class SessionResult:
    accepted: bool
    wire_bytes: int = 0          # server-challenge + device-response only
    accept: Accept | None = None
    reject_stage: str = ""


class Channel:
    """In-memory duplex channel; an adversary may rewrite or drop each message.

    Hooks receive (stage, raw_bytes) and return raw bytes or None to drop.
    Stages: init, challenge, response.
    """

    def __init__(self, hook=None):
        self.hook = hook
        self.log: list[tuple[str, bytes]] = []

    def deliver(self, stage: str, blob: bytes) -> bytes | None:
        self.log.append((stage, blob))
        if self.hook is not None:
            return self.hook(stage, blob)
        return blob


def run_session(device: Device, server: Server, control_msg: bytes, report: bytes,
                temperature: float = 25.0, channel: Channel | None = None) -> SessionResult:
    """Drive one authentication attempt end to end over the wire codecs."""
    if channel is None:
        channel = Channel()
    device.temperature = temperature

    blob = channel.deliver("init", device.start().encode())
    if blob is None:
        return SessionResult(False, reject_stage="init-dropped")
    issued = server.respond(MsgAuthInit.decode(blob), control_msg)
    if issued is None:
        return SessionResult(False, reject_stage="unknown-id")
    challenge_msg, session = issued

    blob = channel.deliver("challenge", challenge_msg.encode())
    if blob is None:
        return SessionResult(False, reject_stage="challenge-dropped")
    wire = len(blob)
    response = device.process(MsgServerChallenge.decode(blob), report)
    if response is None:
        return SessionResult(False, wire, reject_stage="device-reject")

    blob = channel.deliver("response", response.encode())
    if blob is None:
        return SessionResult(False, wire, reject_stage="response-dropped")
    wire += len(blob)
    accept = server.finalize(session, MsgDeviceResponse.decode(blob))
    if accept is None:
        return SessionResult(False, wire, reject_stage="server-reject")
    return SessionResult(True, wire, accept)
