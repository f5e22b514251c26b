import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bckey import osrb_sim as sim
from bckey.bc_model import SourceBcModel
from bckey.info_core import Channel, ProbVector, ResourceLimitError, bsc
from bckey.region import aux_information, bsc_aux
from bckey.scenarios import bsc_example

from .conftest import random_channel
from .oracles import aux_atoms, bc_atoms, h, marginal, osrb_full_joint

# scipy.stats.chi2.ppf(0.999, 127), frozen
CHI2_999_DF127 = 181.9930452197729


def noiseless_model():
    return SourceBcModel.from_separate_measurements(
        ProbVector.uniform(2), Channel.identity(2), Channel.identity(2)
    )


def code_with_sizes(n, u_size, sizes, seed):
    rates = [math.log2(k) / n for k in sizes]
    code = sim.build_binning(n, u_size, rates, seed)
    assert (code.s_size, code.w_size, code.c_size) == tuple(sizes)
    return code


def oracle_for(code, model, aux):
    return osrb_full_joint(
        model.px.probs.tolist(),
        model.bc.matrix.tolist(),
        model.xtilde_size,
        model.y_size,
        aux.matrix.tolist(),
        code.n,
        lambda i: int(code.s[i]),
        lambda i: int(code.w[i]),
        lambda i: int(code.c[i]),
        code.s_size,
    )


class TestPrng:
    def test_counter_rng_reproducible(self):
        a = sim.counter_rng(5, 1).random(8)
        np.testing.assert_array_equal(a, sim.counter_rng(5, 1).random(8))
        assert not np.array_equal(a, sim.counter_rng(5, 2).random(8))
        assert not np.array_equal(a, sim.counter_rng(6, 1).random(8))

    def test_large_seed(self):
        sim.counter_rng(2**64 - 1, 0).random(2)

    def test_sequence_index_roundtrip(self):
        d = sim.sequence_digits(3, 4)
        np.testing.assert_array_equal(sim.sequence_index(d, 3), np.arange(81))
        assert sim.sequence_index([1, 0, 2], 3) == 11


class TestLetterStats:
    def test_against_oracle(self, rng):
        m = SourceBcModel(
            ProbVector(random_channel(rng, 1, 3)[0]), Channel(random_channel(rng, 3, 4)), 2, 2
        )
        aux = Channel(random_channel(rng, 2, 3))
        stats = sim.letter_stats(m, aux)
        atoms = aux_atoms(bc_atoms(m.px.probs, m.bc.matrix.tolist(), 2, 2), aux.matrix.tolist())
        assert stats.h_u == pytest.approx(h(marginal(atoms, (0,)).values()), abs=1e-12)
        h_y = h(marginal(atoms, (3,)).values())
        assert stats.h_u_given_y == pytest.approx(h(marginal(atoms, (0, 3)).values()) - h_y, abs=1e-12)
        np.testing.assert_allclose(np.exp(stats.log_post_uy).sum(axis=0), 1.0, atol=1e-12)


class TestChooseRates:
    def test_constant_aux(self, single_model):
        with pytest.raises(sim.EpsilonTooLargeError):
            sim.choose_rates(single_model, Channel([[0.5, 0.5], [0.5, 0.5]]), 0.01)

    def test_nonpositive_epsilon(self, single_model):
        with pytest.raises(ValueError):
            sim.choose_rates(single_model, bsc_aux(0.1), 0.0)

    def test_example_rates(self, single_model):
        aux = bsc_aux(0.1)
        mi = aux_information(single_model, aux)
        r = sim.choose_rates(single_model, aux, 0.01)
        assert r.rate_s == pytest.approx(mi.mi_uy - 0.02, abs=1e-12)
        assert r.rate_w == pytest.approx(mi.mi_uxt - mi.mi_uy + 0.02, abs=1e-12)
        # H(U|X~) = H_b(0.1) for the uniform BSC test channel
        assert r.rate_c == pytest.approx(h([0.1, 0.9]) - 0.01, abs=1e-12)
        for slack in (r.sw_slack, r.independence_slack, r.public_slack):
            assert slack == pytest.approx(0.01, abs=1e-12)

    def test_small_epsilon_limit(self, single_model):
        aux = bsc_aux(0.1)
        r = sim.choose_rates(single_model, aux, 1e-9)
        assert r.rate_s == pytest.approx(aux_information(single_model, aux).mi_uy, abs=1e-8)


class TestBinning:
    def test_trivial(self):
        code = sim.build_binning(1, 2, (0.0, 0.0, 0.0), 0)
        assert (code.s_size, code.w_size, code.c_size) == (1, 1, 1)
        assert not code.s.any() and not code.w.any() and not code.c.any()

    def test_deterministic(self):
        a = sim.build_binning(4, 2, (0.3, 0.4, 0.2), 42)
        b = sim.build_binning(4, 2, (0.3, 0.4, 0.2), 42)
        for k in "swc":
            np.testing.assert_array_equal(getattr(a, k), getattr(b, k))
        c = sim.build_binning(10, 2, (0.3, 0.4, 0.2), 43)
        assert not np.array_equal(c.s, sim.build_binning(10, 2, (0.3, 0.4, 0.2), 42).s)

    def test_index_ranges_and_readonly(self):
        code = code_with_sizes(6, 3, (5, 3, 7), 1)
        assert code.s.max() < 5 and code.w.max() < 3 and code.c.max() < 7
        with pytest.raises(ValueError):
            code.s[0] = 1

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_occupancy_chi_square(self, seed):
        code = code_with_sizes(8, 2, (4, 4, 8), seed)
        cells = (code.s * 4 + code.w) * 8 + code.c
        counts = np.bincount(cells, minlength=128)
        expected = 256 / 128
        assert np.sum((counts - expected) ** 2 / expected) < CHI2_999_DF127

    def test_guard(self):
        with pytest.raises(ResourceLimitError):
            sim.build_binning(25, 2, (0.1, 0.1, 0.1), 0)

    def test_realized_rates(self):
        code = code_with_sizes(4, 2, (2, 4, 1), 0)
        assert code.realized_rates == (0.25, 0.5, 0.0)


class TestEncoder:
    def test_deterministic_aux(self, single_model):
        code = sim.build_binning(5, 2, (0.2, 0.2, 0.2), 0)
        flip = Channel([[0.0, 1.0], [1.0, 0.0]])
        xt = np.array([0, 1, 1, 0, 1])
        for seed in range(5):
            np.testing.assert_array_equal(sim.encode_gs(code, single_model, flip, xt, seed).u, 1 - xt)

    def test_bsc_zero(self, single_model):
        code = sim.build_binning(6, 2, (0.2, 0.2, 0.2), 0)
        xt = np.array([1, 0, 0, 1, 1, 1])
        enc = sim.encode_gs(code, single_model, bsc(0.0), xt, 9)
        np.testing.assert_array_equal(enc.u, xt)
        assert (enc.s, enc.w, enc.c) == code.bins(sim.sequence_index(xt, 2))

    def test_bad_input(self, single_model):
        code = sim.build_binning(3, 2, (0.2, 0.2, 0.2), 0)
        with pytest.raises(ValueError):
            sim.encode_gs(code, single_model, bsc(0.1), [0, 2, 0], 0)
        with pytest.raises(ValueError):
            sim.encode_gs(code, single_model, bsc(0.1), [0, 1], 0)
        with pytest.raises(ValueError):
            sim.encode_gs(code, single_model, Channel.identity(3), [0, 1, 0], 0)

    def test_joint_statistics(self):
        # 10^5 symbol encodings: 10^4 blocks of length 10
        model = SourceBcModel.from_separate_measurements(
            ProbVector([0.3, 0.7]), bsc(0.2), bsc(0.1)
        )
        aux = Channel([[0.6, 0.3, 0.1], [0.2, 0.2, 0.6]])
        code = sim.build_binning(10, 3, (0.0, 0.0, 0.0), 0)
        rng = np.random.default_rng(11)
        counts = np.zeros((3, 2))
        blocks = 10_000
        for seed in range(blocks):
            xt = (rng.random(10) < model.p_xtilde.probs[1]).astype(int)
            u = sim.encode_gs(code, model, aux, xt, seed).u
            np.add.at(counts, (u, xt), 1)
        total = blocks * 10
        p = (aux.matrix * model.p_xtilde.probs[:, None]).T
        sigma = np.sqrt(total * p * (1 - p))
        assert np.all(np.abs(counts - total * p) <= 3 * sigma)


def _noisy_setup(n=6, seed=3):
    model = bsc_example(0.15, 1)
    aux = bsc_aux(0.1)
    code = code_with_sizes(n, 2, (2, 4, 4), seed)
    return model, aux, code


class TestDecoder:
    def test_noiseless_always_recovers(self):
        m = noiseless_model()
        aux = Channel.identity(2)
        code = code_with_sizes(6, 2, (4, 2, 2), 5)
        for idx in range(64):
            u = sim.sequence_digits(2, 6)[idx]
            s, w, c = code.bins(idx)
            dec = sim.decode_sw(code, m, aux, u, w, c)
            np.testing.assert_array_equal(dec.u_hat, u)
            assert dec.s_hat == s

    def test_single_candidate(self, single_model):
        code = code_with_sizes(3, 2, (1, 2, 4), 0)
        aux = bsc_aux(0.1)
        for w, c in itertools.product(range(2), range(4)):
            members = code.members(w, c)
            if members.size == 1:
                y = 1 - sim.sequence_digits(2, 3)[members[0]]  # adversarial output
                dec = sim.decode_sw(code, single_model, aux, y, w, c)
                assert sim.sequence_index(dec.u_hat, 2) == members[0]
                break
        else:
            pytest.skip("no singleton bin in this code")

    def test_empty_bin_is_failure(self, single_model):
        code = code_with_sizes(2, 2, (1, 3, 3), 0)
        occupied = set(zip(code.w.tolist(), code.c.tolist()))
        w, c = next((w, c) for w in range(3) for c in range(3) if (w, c) not in occupied)
        dec = sim.decode_sw(code, single_model, bsc_aux(0.1), [0, 0], w, c)
        assert dec.failed and dec.s_hat is None

    def test_out_of_range_bin(self, single_model):
        code = code_with_sizes(2, 2, (1, 2, 2), 0)
        with pytest.raises(ValueError):
            sim.decode_sw(code, single_model, bsc_aux(0.1), [0, 0], 2, 0)

    def test_matches_exhaustive_search(self):
        model, aux, code = _noisy_setup()
        p_uy = model.joint_with_aux(aux).sum(axis=(1, 2))
        post = p_uy / p_uy.sum(axis=0, keepdims=True)
        seqs = list(itertools.product(range(2), repeat=6))
        rng = np.random.default_rng(0)
        for _ in range(40):
            y = rng.integers(0, 2, 6)
            w, c = int(rng.integers(4)), int(rng.integers(4))
            best, best_p = None, -1.0
            for i, u in enumerate(seqs):
                if code.w[i] == w and code.c[i] == c:
                    p = math.prod(post[a, b] for a, b in zip(u, y))
                    if p > best_p * (1 + 1e-9):
                        best, best_p = i, p
            dec = sim.decode_sw(code, model, aux, y, w, c)
            got = None if dec.failed else sim.sequence_index(dec.u_hat, 2)
            assert got == best


class TestChosenSecret:
    def test_pad_algebra(self):
        m = noiseless_model()
        aux = Channel.identity(2)
        code = code_with_sizes(4, 2, (4, 2, 2), 1)
        xt = np.array([1, 0, 1, 1])
        for s in range(4):
            run = sim.run_cs(code, m, aux, s, xt, seed=0)
            assert run.s_prime_hat == run.s_prime
            assert run.padded_key == (run.s_prime + s) % 4
            assert run.s_hat == s

    def test_trivial_key(self, single_model):
        code = code_with_sizes(4, 2, (1, 2, 2), 1)
        for seed in range(10):
            assert sim.run_cs(code, single_model, bsc_aux(0.2), 0, [0, 1, 0, 1], seed).s_hat == 0

    def test_correct_iff_gs_correct(self):
        model, aux, code = _noisy_setup()
        rng = np.random.default_rng(2)
        for seed in range(30):
            xt = rng.integers(0, 2, 6)
            y = rng.integers(0, 2, 6)
            run = sim.run_cs(code, model, aux, seed % 2, xt, seed, y=y)
            assert (run.s_hat == seed % 2) == (run.s_prime_hat == run.s_prime)

    def test_cardinality_mismatch(self, single_model):
        code = code_with_sizes(4, 2, (2, 2, 2), 1)
        with pytest.raises(ValueError):
            sim.run_cs(code, single_model, bsc_aux(0.1), 0, [0, 0, 0, 0], 0, key_space=3)
        with pytest.raises(ValueError):
            sim.run_cs(code, single_model, bsc_aux(0.1), 2, [0, 0, 0, 0], 0)


METRICS = (
    "error_prob",
    "key_entropy",
    "uniformity_deficit",
    "secrecy_leak",
    "privacy_leak",
    "secrecy_leak_unconditional",
    "privacy_leak_unconditional",
    "key_public_leak",
)


class TestExact:
    def test_single_key(self, single_model):
        code = code_with_sizes(4, 2, (1, 3, 2), 0)
        rep = sim.evaluate_exact(code, single_model, bsc_aux(0.1))
        assert rep.secrecy_leak == pytest.approx(0, abs=1e-12)
        assert rep.uniformity_deficit == pytest.approx(0, abs=1e-12)
        assert rep.error_prob == 0.0

    def test_single_helper(self, single_model):
        code = code_with_sizes(4, 2, (2, 1, 3), 0)
        rep = sim.evaluate_exact(code, single_model, bsc_aux(0.1))
        assert rep.privacy_leak == pytest.approx(0, abs=1e-12)
        assert rep.secrecy_leak == pytest.approx(0, abs=1e-12)

    def test_noiseless_is_error_free(self):
        code = code_with_sizes(5, 2, (4, 2, 2), 0)
        rep = sim.evaluate_exact(code, noiseless_model(), Channel.identity(2))
        assert rep.error_prob == 0.0

    @pytest.mark.parametrize("seed", [0, 7])
    def test_matches_full_joint_oracle(self, single_model, seed):
        aux = bsc_aux(0.1)
        code = sim.build_binning(4, 2, sim.choose_rates(single_model, aux, 0.05), seed)
        ref = oracle_for(code, single_model, aux)
        gs = sim.evaluate_exact(code, single_model, aux)
        for name in METRICS:
            assert getattr(gs, name) == pytest.approx(ref[name], abs=1e-9), name
        cs = sim.evaluate_exact_cs(code, single_model, aux)
        assert cs.error_prob == pytest.approx(ref["cs_error_prob"], abs=1e-9)
        assert cs.secrecy_leak == pytest.approx(ref["cs_secrecy_leak"], abs=1e-9)
        assert cs.privacy_leak == pytest.approx(ref["cs_privacy_leak"], abs=1e-9)
        assert cs.pad_leak == pytest.approx(ref["cs_pad_leak"], abs=1e-9)

    def test_ternary_oracle(self, rng):
        model = SourceBcModel(
            ProbVector(random_channel(rng, 1, 2)[0]), Channel(random_channel(rng, 2, 4)), 2, 2
        )
        aux = Channel(random_channel(rng, 2, 3))
        code = code_with_sizes(3, 3, (3, 2, 2), 4)
        ref = oracle_for(code, model, aux)
        rep = sim.evaluate_exact(code, model, aux)
        for name in METRICS:
            assert getattr(rep, name) == pytest.approx(ref[name], abs=1e-9), name

    def test_cs_error_equals_gs(self):
        model, aux, code = _noisy_setup(6, 11)
        gs = sim.evaluate_exact(code, model, aux)
        cs = sim.evaluate_exact_cs(code, model, aux)
        assert cs.error_prob == pytest.approx(gs.error_prob, abs=1e-12)

    def test_guard(self, single_model):
        code = sim.build_binning(13, 2, (0.1, 0.1, 0.1), 0)
        with pytest.raises(ResourceLimitError):
            sim.evaluate_exact(code, single_model, bsc_aux(0.1))

    def test_report_invariants(self, single_model):
        aux = bsc_aux(0.1)
        for seed in range(5):
            code = sim.build_binning(6, 2, sim.choose_rates(single_model, aux, 0.05), seed)
            rep = sim.evaluate_exact(code, single_model, aux)
            assert 0.0 <= rep.error_prob <= 1.0
            assert rep.key_entropy >= 0 and rep.privacy_leak >= 0
            assert rep.secrecy_leak <= rep.key_entropy + 1e-12

    def test_deterministic(self, single_model):
        aux = bsc_aux(0.1)
        runs = [
            sim.evaluate_exact(sim.build_binning(6, 2, (0.3, 0.4, 0.4), 8), single_model, aux).to_json()
            for _ in range(2)
        ]
        assert runs[0] == runs[1]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_one_time_pad_bound(seed):
    rng = np.random.default_rng(seed)
    model = SourceBcModel(
        ProbVector(random_channel(rng, 1, 2)[0]), Channel(random_channel(rng, 2, 4)), 2, 2
    )
    aux = Channel(random_channel(rng, 2, 2))
    sizes = tuple(int(k) for k in rng.integers(1, 5, 3))
    code = code_with_sizes(4, 2, sizes, seed)
    gs = sim.evaluate_exact(code, model, aux)
    cs = sim.evaluate_exact_cs(code, model, aux)
    assert cs.pad_leak <= gs.uniformity_deficit + gs.key_public_leak + gs.secrecy_leak + 1e-9


class TestMonteCarlo:
    def test_rejects_zero_trials(self, single_model):
        code = sim.build_binning(4, 2, (0.2, 0.2, 0.2), 0)
        with pytest.raises(ValueError):
            sim.evaluate_monte_carlo(code, single_model, bsc_aux(0.1), 0, 0)

    def test_noiseless(self):
        code = code_with_sizes(6, 2, (4, 2, 2), 0)
        rep = sim.evaluate_monte_carlo(code, noiseless_model(), Channel.identity(2), 2000, 1)
        assert rep.error_prob == 0.0
        assert rep.secrecy_leak is None and rep.privacy_leak is None

    @pytest.mark.parametrize("scheme", ["gs", "cs"])
    def test_agrees_with_exact(self, single_model, scheme):
        aux = bsc_aux(0.1)
        code = sim.build_binning(8, 2, sim.choose_rates(single_model, aux, 0.05), 3)
        exact = sim.evaluate_exact(code, single_model, aux).error_prob
        trials = 40_000
        mc = sim.evaluate_monte_carlo(code, single_model, aux, trials, 5, scheme=scheme)
        sigma = math.sqrt(exact * (1 - exact) / trials)
        assert abs(mc.error_prob - exact) <= 3 * sigma

    def test_deterministic(self, single_model):
        code = sim.build_binning(6, 2, (0.3, 0.3, 0.3), 0)
        a = sim.evaluate_monte_carlo(code, single_model, bsc_aux(0.1), 500, 2).to_json()
        b = sim.evaluate_monte_carlo(code, single_model, bsc_aux(0.1), 500, 2).to_json()
        assert a == b
