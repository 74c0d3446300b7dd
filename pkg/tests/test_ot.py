"""Oblivious-transfer oracles: fixed-exponent algebra, round trips, statistics."""

import hashlib
import random

import pytest
from gmpy2 import mpz, powmod
from scipy import stats

from prk.ot import (
    RFC3526_GROUP14_P,
    TEST_PRIME_256,
    OtCorruptionError,
    OtGroup,
    OtReceiverState,
    OtSenderState,
    default_group,
    ot_receiver_choose,
    ot_receiver_decrypt,
    ot_sender_encrypt,
    ot_sender_init,
    test_group as _make_test_group,
    unwrap_message,
    wrap_message,
)


class _SeqRng:
    """random.Random stand-in yielding a preset randrange sequence."""

    def __init__(self, values):
        self._values = list(values)

    def randrange(self, lo, hi):
        v = self._values.pop(0)
        assert lo <= v < hi
        return v


TOY = OtGroup(mpz(23), mpz(5))


class TestGroups:
    def test_default_group_is_2048_bit_safe_prime(self):
        g = default_group()
        assert g.prime_modulus == RFC3526_GROUP14_P
        assert g.prime_modulus.bit_length() == 2048
        assert g.generator == 2

    def test_test_group_is_256_bit(self):
        g = _make_test_group()
        assert g.prime_modulus == TEST_PRIME_256
        assert g.prime_modulus.bit_length() == 256

    def test_generator_in_prime_order_subgroup(self):
        # safe prime p = 2q+1; g must satisfy g^q = 1
        for g in (default_group(), _make_test_group()):
            q = (g.prime_modulus - 1) // 2
            assert powmod(g.generator, q, g.prime_modulus) == 1

    def test_unknown_hash_rejected(self):
        with pytest.raises(ValueError):
            OtGroup(mpz(23), mpz(5), hash_id="md5")


class TestFixedExponentAlgebra:
    def test_sender_init_example(self):
        # a=3, p=23, g=5: A = 125 mod 23 = 10
        state, A = ot_sender_init(TOY, _SeqRng([3]))
        assert A == 10
        assert state.a == 3

    def test_receiver_chosen_slot(self):
        # b=2, position 1 chosen: B = 5^2 mod 23 = 2
        state, elements = ot_receiver_choose(TOY, 10, {1}, 1, _SeqRng([2]))
        assert elements == [2]
        assert state.chosen_positions == frozenset({1})

    def test_receiver_unchosen_slot(self):
        # b=2, position 1 not chosen: B = 10 * 25 mod 23 = 20
        _, elements = ot_receiver_choose(TOY, 10, set(), 1, _SeqRng([2]))
        assert elements == [20]

    def test_key_consistency_chosen(self):
        # chosen slot: sender Hash(B^a) == receiver Hash(A^b), both g^{ab}
        group = _make_test_group()
        rng = random.Random(1)
        sender, A = ot_sender_init(group, rng)
        state, elements = ot_receiver_choose(group, A, {1}, 1, rng)
        sender_key = group.hash_element(powmod(elements[0], sender.a, group.prime_modulus))
        receiver_key = group.hash_element(powmod(A, state.blinding[0], group.prime_modulus))
        assert sender_key == receiver_key

    def test_key_inconsistency_unchosen(self):
        group = _make_test_group()
        rng = random.Random(2)
        sender, A = ot_sender_init(group, rng)
        state, elements = ot_receiver_choose(group, A, set(), 1, rng)
        sender_key = group.hash_element(powmod(elements[0], sender.a, group.prime_modulus))
        receiver_key = group.hash_element(powmod(A, state.blinding[0], group.prime_modulus))
        assert sender_key != receiver_key

    def test_sender_elements_in_range(self):
        group = _make_test_group()
        rng = random.Random(3)
        for _ in range(20):
            _, A = ot_sender_init(group, rng)
            assert 1 < A < group.prime_modulus

    def test_distinct_inits(self):
        group = _make_test_group()
        rng = random.Random(4)
        values = {int(ot_sender_init(group, rng)[1]) for _ in range(1000)}
        assert len(values) == 1000

    def test_out_of_range_position(self):
        with pytest.raises(ValueError):
            ot_receiver_choose(TOY, 10, {0}, 4, _SeqRng([2]))
        with pytest.raises(ValueError):
            ot_receiver_choose(TOY, 10, {5}, 4, _SeqRng([2]))


class TestSymmetricWrap:
    def test_round_trip_1kib(self):
        key = hashlib.sha256(b"key").digest()
        message = bytes(range(256)) * 4
        assert len(message) == 1024
        assert unwrap_message(key, wrap_message(key, message)) == message

    def test_wrong_key_fails_tag(self):
        key = hashlib.sha256(b"key").digest()
        other = hashlib.sha256(b"other").digest()
        assert unwrap_message(other, wrap_message(key, b"secret")) is None

    def test_tampered_ciphertext_fails_tag(self):
        key = hashlib.sha256(b"key").digest()
        wrapped = bytearray(wrap_message(key, b"secret"))
        wrapped[5] ^= 1
        assert unwrap_message(key, bytes(wrapped)) is None

    def test_truncated_rejected(self):
        key = hashlib.sha256(b"key").digest()
        wrapped = wrap_message(key, b"secret")
        assert unwrap_message(key, wrapped[:-1]) is None
        assert unwrap_message(key, b"") is None

    def test_empty_message(self):
        key = hashlib.sha256(b"key").digest()
        assert unwrap_message(key, wrap_message(key, b"")) == b""

    def test_wire_shape(self):
        key = hashlib.sha256(b"key").digest()
        wrapped = wrap_message(key, b"abc")
        assert len(wrapped) == 4 + 3 + 16
        assert int.from_bytes(wrapped[:4], "big") == 3


def _session(group, rng, chosen, k_prime, messages):
    sender, A = ot_sender_init(group, rng)
    state, elements = ot_receiver_choose(group, A, chosen, k_prime, rng)
    wrapped = ot_sender_encrypt(group, sender, elements, messages)
    return sender, A, state, elements, wrapped


class TestProtocolRoundTrip:
    def test_one_of_two(self):
        group = _make_test_group()
        rng = random.Random(10)
        msgs = [b"first", b"second"]
        sender, A, state, elements, wrapped = _session(group, rng, {2}, 2, msgs)
        assert ot_receiver_decrypt(group, state, A, wrapped) == [(2, b"second")]
        # the receiver's key for the unchosen slot fails verification
        bad_key = group.hash_element(powmod(mpz(A), state.blinding[0], group.prime_modulus))
        assert unwrap_message(bad_key, wrapped[0]) is None

    def test_full_session_2048_group(self):
        # one paper-scale transcript: k=5 out of k'=160 in the 2048-bit group
        group = default_group()
        rng = random.Random(11)
        k_prime = 160
        msgs = [b"doc-%d" % i for i in range(k_prime)]
        chosen = {3, 17, 58, 99, 160}
        _, A, state, elements, wrapped = _session(group, rng, chosen, k_prime, msgs)
        assert len(elements) == k_prime and len(wrapped) == k_prime
        out = ot_receiver_decrypt(group, state, A, wrapped)
        assert out == [(pos, b"doc-%d" % (pos - 1)) for pos in sorted(chosen)]

    def test_randomized_sessions(self):
        group = _make_test_group()
        rng = random.Random(12)
        for _ in range(50):
            k_prime = rng.randrange(1, 65)
            k = rng.randrange(0, k_prime + 1)
            chosen = set(rng.sample(range(1, k_prime + 1), k))
            msgs = [rng.randbytes(rng.randrange(0, 64)) for _ in range(k_prime)]
            sender, A, state, elements, wrapped = _session(group, rng, chosen, k_prime, msgs)
            out = dict(ot_receiver_decrypt(group, state, A, wrapped))
            assert set(out) == chosen
            for pos in chosen:
                assert out[pos] == msgs[pos - 1]
            # every unchosen slot fails under the receiver's derivable key
            for pos in set(range(1, k_prime + 1)) - chosen:
                key = group.hash_element(
                    powmod(mpz(A), state.blinding[pos - 1], group.prime_modulus)
                )
                assert unwrap_message(key, wrapped[pos - 1]) is None

    def test_empty_chosen_set(self):
        group = _make_test_group()
        rng = random.Random(13)
        _, A, state, _, wrapped = _session(group, rng, set(), 3, [b"a", b"b", b"c"])
        assert ot_receiver_decrypt(group, state, A, wrapped) == []

    def test_corruption_raises(self):
        group = _make_test_group()
        rng = random.Random(14)
        _, A, state, _, wrapped = _session(group, rng, {1}, 2, [b"a", b"b"])
        tampered = [bytes([wrapped[0][0] ^ 1]) + wrapped[0][1:], wrapped[1]]
        with pytest.raises(OtCorruptionError):
            ot_receiver_decrypt(group, state, A, tampered)

    def test_length_mismatches(self):
        group = _make_test_group()
        rng = random.Random(15)
        sender, A = ot_sender_init(group, rng)
        state, elements = ot_receiver_choose(group, A, {1}, 3, rng)
        with pytest.raises(ValueError):
            ot_sender_encrypt(group, sender, elements, [b"a", b"b"])
        wrapped = ot_sender_encrypt(group, sender, elements, [b"a", b"b", b"c"])
        with pytest.raises(ValueError):
            ot_receiver_decrypt(group, state, A, wrapped[:2])

    def test_greedy_receiver_decrypts_everything(self):
        # semi-honest caveat: marking every slot chosen recovers all documents;
        # the protocol does not (and cannot) prevent this
        group = _make_test_group()
        rng = random.Random(16)
        k_prime = 8
        msgs = [b"m%d" % i for i in range(k_prime)]
        chosen = set(range(1, k_prime + 1))
        _, A, state, _, wrapped = _session(group, rng, chosen, k_prime, msgs)
        out = dict(ot_receiver_decrypt(group, state, A, wrapped))
        assert [out[i] for i in range(1, k_prime + 1)] == msgs


class TestReceiverPrivacy:
    def test_blinded_elements_indistinguishable(self):
        # B_i distribution must not depend on the chosen bit: chi-square over
        # 64 value buckets between the c=0 and c=1 populations
        group = _make_test_group()
        rng = random.Random(17)
        _, A = ot_sender_init(group, rng)
        samples = {True: [], False: []}
        for chosen in (True, False):
            for _ in range(10_000):
                _, elements = ot_receiver_choose(
                    group, A, {1} if chosen else set(), 1, rng
                )
                samples[chosen].append(int(elements[0]) % 64)
        counts = [
            [samples[c].count(b) for b in range(64)] for c in (True, False)
        ]
        result = stats.chi2_contingency(counts)
        assert result.pvalue > 0.01


class TestCommunicationAccounting:
    def test_transcript_element_counts(self):
        # exactly 1 number (A) + k' numbers (B) + k' wrapped documents
        group = _make_test_group()
        rng = random.Random(18)
        k_prime = 13
        msgs = [b"x" * 10] * k_prime
        _, A, state, elements, wrapped = _session(group, rng, {2, 5}, k_prime, msgs)
        numbers_sent = 1 + len(elements)
        assert numbers_sent == 1 + k_prime
        assert len(wrapped) == k_prime
