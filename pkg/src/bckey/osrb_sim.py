"""Finite-blocklength random-binning key agreement.

Every sequence ``u^n`` gets three independent uniform bin indices
``(s, w, c)``: the secret key, the helper data and a public index. The
encoder draws ``u^n`` symbolwise from ``P_{U|X~}``; the decoder searches the
``(w, c)`` bin for the sequence with the largest posterior given ``y^n``.
The chosen-secret variant one-time-pads an embedded key with ``s``.

Sequences over an alphabet of size ``q`` are indexed lexicographically with
the first symbol most significant, matching :func:`product_channel`.

Random streams are counter-based (Philox) and keyed by ``(seed, stream)``:
binning, encoder randomness, source/channel noise and chosen secrets never
share a stream.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .bc_model import SourceBcModel
from .info_core import (
    Channel,
    ResourceLimitError,
    conditional_mutual_information,
    entropy_array,
    mutual_information_joint,
)

MAX_BINNING_SEQUENCES = 2**24
MAX_EXACT_SEQUENCES = 2**12
MAX_EXACT_TABLE = 2**26
TIE_TOL = 1e-9

STREAM_BINNING = 0
STREAM_ENCODER = 1
STREAM_CHANNEL = 2
STREAM_SECRET = 3

_MASK64 = (1 << 64) - 1


class EpsilonTooLargeError(ValueError):
    """The rate back-off leaves no positive key rate."""


def counter_rng(seed: int, stream: int, block: int = 0) -> np.random.Generator:
    """Generator whose ``k``-th 64-bit output is a fixed function of ``(seed, stream, block, k)``."""
    key = np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)
    counter = np.array([0, block & _MASK64, 0, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def sequence_digits(size: int, n: int) -> np.ndarray:
    """All ``size**n`` sequences as rows of symbols, in index order."""
    idx = np.arange(size**n)
    powers = size ** np.arange(n - 1, -1, -1)
    return (idx[:, None] // powers[None, :]) % size


def sequence_index(symbols: np.ndarray, size: int) -> np.ndarray | int:
    symbols = np.asarray(symbols)
    powers = size ** np.arange(symbols.shape[-1] - 1, -1, -1)
    out = (symbols * powers).sum(axis=-1)
    return int(out) if out.ndim == 0 else out


# -- per-letter statistics ---------------------------------------------


@dataclass(frozen=True, eq=False)
class LetterStats:
    """Single-letter tables of the designed joint ``P_{U X~ X Y}``."""

    p_u: np.ndarray
    p_ux: np.ndarray
    p_uy: np.ndarray
    log_post_uy: np.ndarray  # log P(u | y), indexed [u, y]
    h_u: float
    h_u_given_y: float
    h_u_given_x: float
    h_u_given_xt: float
    mi_uy: float
    mi_ux: float
    mi_uxt: float


def letter_stats(model: SourceBcModel, aux: Channel) -> LetterStats:
    j = model.joint_with_aux(aux)  # [u, x~, x, y]
    p_u = j.sum(axis=(1, 2, 3))
    p_ux = j.sum(axis=(1, 3))
    p_uy = j.sum(axis=(1, 2))
    p_ut = j.sum(axis=(2, 3))
    p_y = p_uy.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        post = np.where(p_y[None, :] > 0, p_uy / np.where(p_y > 0, p_y, 1.0)[None, :], 1.0 / len(p_u))
        log_post = np.where(post > 0, np.log(np.where(post > 0, post, 1.0)), -np.inf)
    h_u = float(entropy_array(p_u))
    h_u_y = float(entropy_array(p_uy) - entropy_array(p_y))
    h_u_x = float(entropy_array(p_ux) - entropy_array(p_ux.sum(axis=0)))
    h_u_t = float(entropy_array(p_ut) - entropy_array(p_ut.sum(axis=0)))
    return LetterStats(
        p_u=p_u,
        p_ux=p_ux,
        p_uy=p_uy,
        log_post_uy=log_post,
        h_u=h_u,
        h_u_given_y=h_u_y,
        h_u_given_x=h_u_x,
        h_u_given_xt=h_u_t,
        mi_uy=mutual_information_joint(p_uy),
        mi_ux=mutual_information_joint(p_ux),
        mi_uxt=mutual_information_joint(p_ut),
    )


class RateChoice(NamedTuple):
    rate_s: float
    rate_w: float
    rate_c: float
    sw_slack: float  # R_c + R_w - H(U|Y)
    independence_slack: float  # H(U) - R_s - R_w - R_c
    public_slack: float  # H(U|X~) - R_c


def choose_rates(model: SourceBcModel, aux: Channel, epsilon: float) -> RateChoice:
    """Rates ``I(U;Y)-2e``, ``I(U;X~)-I(U;Y)+2e``, ``H(U|X~)-e`` and their slacks.

    Raises
    ------
    EpsilonTooLargeError
        If the key rate would not be positive.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    st = letter_stats(model, aux)
    rate_s = st.mi_uy - 2 * epsilon
    if rate_s <= 0:
        raise EpsilonTooLargeError(
            f"epsilon={epsilon} too large: I(U;Y)={st.mi_uy:.6g} leaves key rate {rate_s:.6g}"
        )
    rate_w = st.mi_uxt - st.mi_uy + 2 * epsilon
    rate_c = st.h_u_given_xt - epsilon
    return RateChoice(
        rate_s,
        rate_w,
        rate_c,
        sw_slack=rate_c + rate_w - st.h_u_given_y,
        independence_slack=st.h_u - (rate_s + rate_w + rate_c),
        public_slack=st.h_u_given_xt - rate_c,
    )


# -- the code ---------------------------------------------------------


def index_size(n: int, rate: float) -> int:
    return max(1, int(round(2.0 ** (n * rate))))


@dataclass(frozen=True, eq=False)
class BinningCode:
    n: int
    u_size: int
    rate_s: float
    rate_w: float
    rate_c: float
    s_size: int
    w_size: int
    c_size: int
    s: np.ndarray
    w: np.ndarray
    c: np.ndarray
    seed: int

    @property
    def n_sequences(self) -> int:
        return self.u_size**self.n

    @property
    def bin_ids(self) -> np.ndarray:
        """Joint helper/public index ``w * |C| + c`` of every sequence."""
        return self.w * self.c_size + self.c

    @property
    def realized_rates(self) -> tuple[float, float, float]:
        return (
            math.log2(self.s_size) / self.n,
            math.log2(self.w_size) / self.n,
            math.log2(self.c_size) / self.n,
        )

    def bins(self, index: int) -> tuple[int, int, int]:
        return int(self.s[index]), int(self.w[index]), int(self.c[index])

    def members(self, w: int, c: int) -> np.ndarray:
        return np.flatnonzero((self.w == w) & (self.c == c))


def build_binning(
    n: int, u_size: int, rates: tuple[float, float, float] | RateChoice, seed: int
) -> BinningCode:
    """Draw independent uniform ``(s, w, c)`` for every ``u^n``."""
    if n < 1 or u_size < 1:
        raise ValueError("n and u_size must be positive")
    if u_size**n > MAX_BINNING_SEQUENCES:
        raise ResourceLimitError(f"{u_size}**{n} sequences exceed the binning budget of 2**24")
    rate_s, rate_w, rate_c = (float(r) for r in tuple(rates)[:3])
    sizes = np.array([index_size(n, rate_s), index_size(n, rate_w), index_size(n, rate_c)])
    draws = counter_rng(seed, STREAM_BINNING).random((u_size**n, 3))
    idx = np.minimum((draws * sizes).astype(np.int64), sizes - 1)
    s, w, c = (np.ascontiguousarray(idx[:, k]) for k in range(3))
    for arr in (s, w, c):
        arr.flags.writeable = False
    return BinningCode(
        n, u_size, rate_s, rate_w, rate_c,
        int(sizes[0]), int(sizes[1]), int(sizes[2]),
        s, w, c, seed,
    )


def _check_code(code: BinningCode, model: SourceBcModel, aux: Channel) -> None:
    if aux.input_size != model.xtilde_size or aux.output_size != code.u_size:
        raise ValueError(
            f"auxiliary channel is {aux.input_size}->{aux.output_size}, "
            f"expected {model.xtilde_size}->{code.u_size}"
        )


def _sample_rows(matrix: np.ndarray, given: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling of ``matrix[given]`` rows."""
    cdf = np.cumsum(matrix, axis=1)
    out = (uniforms[..., None] >= cdf[given]).sum(axis=-1)
    return np.minimum(out, matrix.shape[1] - 1)


class Encoding(NamedTuple):
    u: np.ndarray
    s: int
    w: int
    c: int


def encode_gs(
    code: BinningCode, model: SourceBcModel, aux: Channel, xt: np.ndarray, seed: int
) -> Encoding:
    """Draw ``u^n`` symbolwise from ``P_{U|X~}`` and look up its bins."""
    _check_code(code, model, aux)
    xt = np.asarray(xt, dtype=np.int64)
    if xt.shape != (code.n,) or np.any(xt < 0) or np.any(xt >= model.xtilde_size):
        raise ValueError("x~^n has the wrong length or out-of-range symbols")
    u = _sample_rows(aux.matrix, xt, counter_rng(seed, STREAM_ENCODER).random(code.n))
    s, w, c = code.bins(sequence_index(u, code.u_size))
    return Encoding(u, s, w, c)


def _pick(scores: np.ndarray) -> np.ndarray:
    """Row of the maximum per column; near-ties go to the first row."""
    best = scores.max(axis=0)
    return np.argmax(scores >= best[None] - TIE_TOL, axis=0)


def _member_scores(log_post: np.ndarray, digits: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sum of ``log P(u_i | y_i)`` accumulated left to right, shape ``(members, batch)``."""
    y = np.atleast_2d(y)
    acc = np.zeros((digits.shape[0], y.shape[0]))
    for i in range(digits.shape[1]):
        acc = acc + log_post[digits[:, i][:, None], y[:, i][None, :]]
    return acc


class Decoding(NamedTuple):
    u_hat: np.ndarray | None
    s_hat: int | None

    @property
    def failed(self) -> bool:
        return self.u_hat is None


def decode_sw(
    code: BinningCode,
    model: SourceBcModel,
    aux: Channel,
    y: np.ndarray,
    w: int,
    c: int,
    stats: LetterStats | None = None,
) -> Decoding:
    """Maximum-posterior sequence in bin ``(w, c)`` given ``y^n``.

    An empty bin is a decoding failure, returned as ``Decoding(None, None)``.
    """
    _check_code(code, model, aux)
    if not (0 <= w < code.w_size and 0 <= c < code.c_size):
        raise ValueError(f"bin ({w}, {c}) outside the code's index ranges")
    members = code.members(w, c)
    if members.size == 0:
        return Decoding(None, None)
    stats = stats or letter_stats(model, aux)
    digits = sequence_digits(code.u_size, code.n)[members]
    scores = _member_scores(stats.log_post_uy, digits, np.asarray(y, dtype=np.int64))
    k = int(_pick(scores)[0])
    return Decoding(digits[k], int(code.s[members[k]]))


class CsRun(NamedTuple):
    padded_key: int  # (s' + s) mod |S|
    w: int
    c: int
    s_hat: int | None
    s_prime: int
    s_prime_hat: int | None


def run_cs(
    code: BinningCode,
    model: SourceBcModel,
    aux: Channel,
    s_embedded: int,
    xt: np.ndarray,
    seed: int,
    y: np.ndarray | None = None,
    key_space: int | None = None,
) -> CsRun:
    """Chosen-secret round trip: pad ``s`` with the generated key, then undo it.

    ``y`` defaults to a draw from ``P(y | x~)`` on the channel stream.
    """
    if key_space is not None and key_space != code.s_size:
        raise ValueError(
            f"embedded key space {key_space} differs from generated key space {code.s_size}"
        )
    if not 0 <= s_embedded < code.s_size:
        raise ValueError(f"embedded key {s_embedded} outside [0, {code.s_size})")
    enc = encode_gs(code, model, aux, xt, seed)
    padded = (enc.s + s_embedded) % code.s_size
    if y is None:
        xt = np.asarray(xt, dtype=np.int64)
        y = _sample_rows(
            model.p_y_given_xtilde.matrix, xt, counter_rng(seed, STREAM_CHANNEL).random(code.n)
        )
    dec = decode_sw(code, model, aux, y, enc.w, enc.c)
    s_hat = None if dec.failed else (padded - dec.s_hat) % code.s_size
    return CsRun(padded, enc.w, enc.c, s_hat, enc.s, dec.s_hat)


# -- evaluation -------------------------------------------------------


@dataclass
class SimReport:
    scheme: str  # "gs" or "cs"
    mode: str  # "exact" or "monte_carlo"
    n: int
    seed: int
    s_size: int
    w_size: int
    c_size: int
    requested_rates: tuple[float, float, float]
    realized_rates: tuple[float, float, float]
    error_prob: float
    key_entropy: float
    uniformity_deficit: float
    secrecy_leak: float | None = None  # I(S;W|C)
    privacy_leak: float | None = None  # I(X^n;W|C)
    secrecy_leak_unconditional: float | None = None  # I(S;W)
    privacy_leak_unconditional: float | None = None  # I(X^n;W)
    key_public_leak: float | None = None  # I(S;C)
    pad_leak: float | None = None  # I(S; S'+S | W', C'), chosen secret only
    trials: int | None = None
    error_stderr: float | None = None

    def to_json(self) -> dict:
        out = asdict(self)
        out["requested_rates"] = list(self.requested_rates)
        out["realized_rates"] = list(self.realized_rates)
        return out


def _kron_vec(v: np.ndarray, n: int) -> np.ndarray:
    out = v
    for _ in range(n - 1):
        out = np.multiply.outer(out, v).ravel()
    return out


def _kron_mat(m: np.ndarray, n: int) -> np.ndarray:
    out = m
    for _ in range(n - 1):
        out = np.kron(out, m)
    return out


def _kron_logsum(lm: np.ndarray, n: int) -> np.ndarray:
    out = lm
    a, b = lm.shape
    for _ in range(n - 1):
        out = (out[:, None, :, None] + lm[None, :, None, :]).reshape(out.shape[0] * a, -1)
    return out


def _exact_guard(code: BinningCode, model: SourceBcModel) -> None:
    nu = code.n_sequences
    if (
        nu > MAX_EXACT_SEQUENCES
        or model.x_size**code.n * nu > MAX_EXACT_TABLE
        or model.y_size**code.n * nu > MAX_EXACT_TABLE
    ):
        raise ResourceLimitError(
            f"exact evaluation at n={code.n} exceeds the enumeration budget; "
            "use monte_carlo mode"
        )


def _decoder_table(code: BinningCode, log_post_seq: np.ndarray) -> np.ndarray:
    """``table[b, y^n]`` = decoded key for joint bin ``b``; -1 for empty bins."""
    bins = code.bin_ids
    n_bins = code.w_size * code.c_size
    table = np.full((n_bins, log_post_seq.shape[1]), -1, dtype=np.int64)
    order = np.argsort(bins, kind="stable")
    bounds = np.searchsorted(bins[order], np.arange(n_bins + 1))
    for b in range(n_bins):
        members = order[bounds[b] : bounds[b + 1]]
        if members.size:
            table[b] = code.s[members[_pick(log_post_seq[members])]]
    return table


class _ExactTables(NamedTuple):
    stats: LetterStats
    p_swc: np.ndarray  # [s, w, c]
    p_xwc: np.ndarray  # [x^n, w, c]
    p_xswc: np.ndarray | None  # [x^n, s, w, c]
    p_uy_seq: np.ndarray  # [u^n, y^n]
    decoded: np.ndarray  # [bin, y^n]


def _exact_tables(code: BinningCode, model: SourceBcModel, aux: Channel, with_key: bool):
    _check_code(code, model, aux)
    _exact_guard(code, model)
    st = letter_stats(model, aux)
    n = code.n
    p_u_seq = _kron_vec(st.p_u, n)
    flat = (code.s * code.w_size + code.w) * code.c_size + code.c
    p_swc = np.bincount(
        flat, weights=p_u_seq, minlength=code.s_size * code.w_size * code.c_size
    ).reshape(code.s_size, code.w_size, code.c_size)

    p_ux_seq = _kron_mat(st.p_ux, n)  # [u^n, x^n]
    nx = p_ux_seq.shape[1]
    p_wcx = np.zeros((code.w_size * code.c_size, nx))
    np.add.at(p_wcx, code.bin_ids, p_ux_seq)
    p_xwc = p_wcx.T.reshape(nx, code.w_size, code.c_size)
    p_xswc = None
    if with_key:
        p_sbx = np.zeros((code.s_size * code.w_size * code.c_size, nx))
        np.add.at(p_sbx, flat, p_ux_seq)
        p_xswc = p_sbx.T.reshape(nx, code.s_size, code.w_size, code.c_size)

    p_uy_seq = _kron_mat(st.p_uy, n)
    decoded = _decoder_table(code, _kron_logsum(st.log_post_uy, n))
    return _ExactTables(st, p_swc, p_xwc, p_xswc, p_uy_seq, decoded)


def _report_base(code: BinningCode, scheme: str, mode: str) -> dict:
    return dict(
        scheme=scheme,
        mode=mode,
        n=code.n,
        seed=code.seed,
        s_size=code.s_size,
        w_size=code.w_size,
        c_size=code.c_size,
        requested_rates=(code.rate_s, code.rate_w, code.rate_c),
        realized_rates=code.realized_rates,
    )


def evaluate_exact(code: BinningCode, model: SourceBcModel, aux: Channel) -> SimReport:
    """Reliability, secrecy, privacy and uniformity of a GS code by full enumeration."""
    t = _exact_tables(code, model, aux, with_key=False)
    p_s = t.p_swc.sum(axis=(1, 2))
    key_entropy = float(entropy_array(p_s))
    p_xw_c = t.p_xwc

    s_hat = t.decoded[code.bin_ids]  # [u^n, y^n]
    wrong = s_hat != code.s[:, None]
    error = float(np.sum(t.p_uy_seq * wrong))

    return SimReport(
        **_report_base(code, "gs", "exact"),
        error_prob=min(max(error, 0.0), 1.0),
        key_entropy=key_entropy,
        uniformity_deficit=math.log2(code.s_size) - key_entropy,
        secrecy_leak=conditional_mutual_information(t.p_swc),
        privacy_leak=conditional_mutual_information(p_xw_c),
        secrecy_leak_unconditional=mutual_information_joint(t.p_swc.sum(axis=2)),
        privacy_leak_unconditional=mutual_information_joint(p_xw_c.sum(axis=2)),
        key_public_leak=mutual_information_joint(t.p_swc.sum(axis=1)),
    )


def evaluate_exact_cs(code: BinningCode, model: SourceBcModel, aux: Channel) -> SimReport:
    """Chosen-secret counterpart of :func:`evaluate_exact`.

    The embedded key is uniform on ``[0, |S|)`` and independent of the source.
    The stored helper is ``(t, w')`` with ``t = s' + s mod |S|``; leakages
    condition on the public index ``c'``.
    """
    tab = _exact_tables(code, model, aux, with_key=True)
    k = code.s_size
    shift = (np.arange(k)[None, :] - np.arange(k)[:, None]) % k  # [s, t] -> s' = t - s
    # P(s, t, w, c) = P_S(s) P_{S'W'C'}(t - s, w, c)
    p_stwc = tab.p_swc[shift] / k
    # P(x, t, w, c) = sum_s' P(x, s', w, c) / |S|  for uniform independent s
    p_xtwc = tab.p_xswc.sum(axis=1, keepdims=True).repeat(k, axis=1) / k

    s_prime_hat = tab.decoded[code.bin_ids]  # [u^n, y^n]
    error = 0.0
    for s in range(k):
        padded = (code.s + s) % k
        s_hat = np.where(s_prime_hat < 0, -1, (padded[:, None] - s_prime_hat) % k)
        error += float(np.sum(tab.p_uy_seq * (s_hat != s))) / k

    p_s = p_stwc.sum(axis=(1, 2, 3))
    key_entropy = float(entropy_array(p_s))
    # helper (t, w') flattened into one variable, conditioning on c'
    p_s_h_c = p_stwc.reshape(k, k * code.w_size, code.c_size)
    p_x_h_c = p_xtwc.reshape(p_xtwc.shape[0], k * code.w_size, code.c_size)
    # I(S; T | W', C') with (W', C') merged into one conditioning variable
    p_s_t_wc = p_stwc.reshape(k, k, code.w_size * code.c_size)
    return SimReport(
        **_report_base(code, "cs", "exact"),
        error_prob=min(max(error, 0.0), 1.0),
        key_entropy=key_entropy,
        uniformity_deficit=math.log2(k) - key_entropy,
        secrecy_leak=conditional_mutual_information(p_s_h_c),
        privacy_leak=conditional_mutual_information(p_x_h_c),
        secrecy_leak_unconditional=mutual_information_joint(p_s_h_c.sum(axis=2)),
        privacy_leak_unconditional=mutual_information_joint(p_x_h_c.sum(axis=2)),
        key_public_leak=mutual_information_joint(p_stwc.sum(axis=(1, 2))),
        pad_leak=conditional_mutual_information(p_s_t_wc),
    )


def evaluate_monte_carlo(
    code: BinningCode,
    model: SourceBcModel,
    aux: Channel,
    trials: int,
    seed: int,
    scheme: str = "gs",
) -> SimReport:
    """Estimate error probability and key entropy from ``trials`` protocol runs.

    Leakage fields stay ``None``: plug-in mutual information over large
    helper alphabets is biased.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if scheme not in ("gs", "cs"):
        raise ValueError(f"unknown scheme {scheme!r}")
    _check_code(code, model, aux)
    n = code.n
    ch = counter_rng(seed, STREAM_CHANNEL)
    x = _sample_rows(model.px.probs[None, :], np.zeros((trials, n), dtype=np.int64), ch.random((trials, n)))
    pair = _sample_rows(model.bc.matrix, x, ch.random((trials, n)))
    xt, y = pair // model.y_size, pair % model.y_size
    u = _sample_rows(aux.matrix, xt, counter_rng(seed, STREAM_ENCODER).random((trials, n)))
    u_idx = sequence_index(u, code.u_size)
    s_true = code.s[u_idx]
    b = code.bin_ids[u_idx]

    st = letter_stats(model, aux)
    y_idx = sequence_index(y, model.y_size)
    bins = code.bin_ids
    keys = b.astype(np.int64) * (model.y_size**n) + y_idx
    uniq, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    decoded = np.empty(uniq.size, dtype=np.int64)
    uniq_bins = b[first]
    all_digits = sequence_digits(code.u_size, n) if code.n_sequences <= 2**16 else None
    for bin_id in np.unique(uniq_bins):
        sel = np.flatnonzero(uniq_bins == bin_id)
        members = np.flatnonzero(bins == bin_id)
        digits = (
            all_digits[members]
            if all_digits is not None
            else (members[:, None] // code.u_size ** np.arange(n - 1, -1, -1)) % code.u_size
        )
        scores = _member_scores(st.log_post_uy, digits, y[first[sel]])
        decoded[sel] = code.s[members[_pick(scores)]]
    s_hat = decoded[inverse.ravel()]

    if scheme == "gs":
        wrong = s_hat != s_true
        key = s_true
    else:
        secret = np.minimum(
            (counter_rng(seed, STREAM_SECRET).random(trials) * code.s_size).astype(np.int64),
            code.s_size - 1,
        )
        padded = (s_true + secret) % code.s_size
        recovered = (padded - s_hat) % code.s_size
        wrong = recovered != secret
        key = secret
    err = float(np.mean(wrong))
    counts = np.bincount(key, minlength=code.s_size) / trials
    key_entropy = float(entropy_array(counts))
    return SimReport(
        **_report_base(code, scheme, "monte_carlo"),
        error_prob=err,
        key_entropy=key_entropy,
        uniformity_deficit=math.log2(code.s_size) - key_entropy,
        trials=trials,
        error_stderr=math.sqrt(err * (1 - err) / trials),
    )
