"""32-bit multi-symbol range coder (carry-propagating encoder, integer only).

Symbols are coded as (cumulative frequency, frequency, total) triples with
total <= 2**16.  The leading cache byte, which is always zero, is not written,
and termination emits a single byte: the decoder reads zeros past the end of
the stream, so any value of the final interval with zero low-order bytes is
enough to identify it.  The decoder raises :class:`TruncatedError` if it needs
more than three such padding bytes, which only happens on a cut stream.
"""

from bisect import bisect_right

from ..errors import DecodeError, TruncatedError

TOP = 1 << 24
MASK32 = 0xFFFFFFFF
MAX_TOTAL = 1 << 16
PAD_LIMIT = 3


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = MASK32
        self.cache = 0
        self.cache_size = 1
        self.out = bytearray()
        self._first = True

    def _shift_low(self):
        low = self.low
        if low < 0xFF000000 or low > MASK32:
            carry = low >> 32
            temp = self.cache
            while True:
                byte = (temp + carry) & 0xFF
                if self._first:
                    if byte:
                        raise AssertionError("range coder lead byte must be zero")
                    self._first = False
                else:
                    self.out.append(byte)
                temp = 0xFF
                self.cache_size -= 1
                if self.cache_size == 0:
                    break
            self.cache = (low >> 24) & 0xFF
        self.cache_size += 1
        self.low = (low & 0x00FFFFFF) << 8

    def encode(self, cum, freq, total):
        r = self.range // total
        self.low += r * cum
        self.range = r * freq
        while self.range < TOP:
            self.range <<= 8
            self._shift_low()

    def encode_uniform(self, value, bits=16):
        self.encode(value, 1, 1 << bits)

    def finish(self):
        # smallest multiple of 2**24 inside [low, low + range)
        self.low = (self.low + 0xFFFFFF) & ~0xFFFFFF
        self._shift_low()
        self._shift_low()
        return bytes(self.out)


class RangeDecoder:
    def __init__(self, data):
        self.data = data
        self.pos = 0
        self.range = MASK32
        self.code = 0
        for _ in range(4):
            self.code = (self.code << 8) | self._byte()

    def _byte(self):
        if self.pos < len(self.data):
            b = self.data[self.pos]
        else:
            if self.pos - len(self.data) >= PAD_LIMIT:
                raise TruncatedError("range-coded stream ended early")
            b = 0
        self.pos += 1
        return b

    def target(self, total):
        self.range //= total
        t = self.code // self.range
        if t >= total:
            raise DecodeError("corrupt range-coded stream")
        return t

    def consume(self, cum, freq):
        self.code -= cum * self.range
        self.range *= freq
        while self.range < TOP:
            self.code = ((self.code << 8) | self._byte()) & MASK32
            self.range <<= 8

    def decode_uniform(self, bits=16):
        v = self.target(1 << bits)
        self.consume(v, 1)
        return v


class StaticModel:
    """Fixed frequency table; ``cum`` has len(freqs) + 1 entries."""

    def __init__(self, freqs):
        self.freqs = [int(f) for f in freqs]
        if any(f <= 0 for f in self.freqs):
            raise ValueError("every symbol needs a positive frequency")
        cum = [0]
        for f in self.freqs:
            cum.append(cum[-1] + f)
        if cum[-1] > MAX_TOTAL:
            raise ValueError("total frequency exceeds 2**16")
        self.cum = cum
        self.total = cum[-1]

    def encode(self, enc, sym):
        enc.encode(self.cum[sym], self.freqs[sym], self.total)

    def decode(self, dec):
        t = dec.target(self.total)
        sym = bisect_right(self.cum, t) - 1
        dec.consume(self.cum[sym], self.freqs[sym])
        return sym


class AdaptiveModel:
    """Adaptive frequency model: +increment per coded symbol, halved when the total reaches ``limit``."""

    def __init__(self, nsym=256, increment=32, limit=1 << 15):
        self.freqs = [1] * nsym
        self.total = nsym
        self.increment = increment
        self.limit = limit

    def _update(self, sym):
        self.freqs[sym] += self.increment
        self.total += self.increment
        if self.total >= self.limit:
            self.freqs = [(f + 1) >> 1 for f in self.freqs]
            self.total = sum(self.freqs)

    def encode(self, enc, sym):
        cum = sum(self.freqs[:sym])
        enc.encode(cum, self.freqs[sym], self.total)
        self._update(sym)

    def decode(self, dec):
        t = dec.target(self.total)
        cum = 0
        for sym, f in enumerate(self.freqs):
            if cum + f > t:
                break
            cum += f
        dec.consume(cum, self.freqs[sym])
        self._update(sym)
        return sym


def range_encode(symbols, models):
    """Encode ``symbols[i]`` with ``models[i]`` (a single model is reused)."""
    enc = RangeEncoder()
    if not isinstance(models, (list, tuple)):
        models = [models] * len(symbols)
    for s, m in zip(symbols, models):
        m.encode(enc, s)
    return enc.finish()


def range_decode(data, models, count=None):
    if not isinstance(models, (list, tuple)):
        if count is None:
            raise ValueError("count is required with a single shared model")
        models = [models] * count
    dec = RangeDecoder(data)
    return [m.decode(dec) for m in models]
