import pytest

from identiscope import symexpr as sx
from identiscope.bench import corpus_dir
from identiscope.errors import RetriesExhausted
from identiscope.lie_orc import (
    LieCache,
    SymbolicOptions,
    analyze_symbolic,
    build_matrix,
    classify_columns,
    extended_lie_derivative,
    rank_by_random_eval,
)
from identiscope.model import augment, load_model, parse_model

P = 2147483647

DECAY = "model decay\nstates x\nparams th\nddt x = -th*x\noutput y = x\n"
SUMRATES = "model sumrates\nstates x\nparams th1 th2\nddt x = -(th1+th2)*x\noutput y = x\n"
SCALING = "model scaling\nstates x\nparams th c\nddt x = th*x\noutput y = c*x\n"


def _aug(src):
    return augment(parse_model(src))


# --------------------------------------------------------------------------
# extended Lie derivative
# --------------------------------------------------------------------------

def test_lie_of_state_along_decay_field():
    A = _aug(DECAY)
    x, th = (sx.sym(s) for s in A.z)
    assert extended_lie_derivative(x, A) == sx.mul(sx.NEG_ONE, th, x)


def test_lie_of_constant_is_zero():
    A = _aug(DECAY)
    assert extended_lie_derivative(sx.const(5), A) is sx.ZERO


def test_lie_c2m_a_output_by_hand_chain_rule():
    md = load_model(corpus_dir() / "c2m_a.idm")
    A = augment(md)
    y = A.outputs[0]  # x1/V
    got = extended_lie_derivative(y, A)
    # (dphi/dx1) * F_x1 with dphi/dx1 = 1/V
    by_hand = sx.div(A.F[0], sx.sym(md.params[3]))
    assert got == sx.simplify(by_hand)


def test_lie_constant_input_contributes_no_derivative_terms():
    src = "model m\nstates x\ninputs u constant\nddt x = -x + u\noutput y = u*x\n"
    A = _aug(src)
    u = sx.sym(A.model.known_inputs[0].symbol)
    x = sx.sym(A.z[0])
    # L(u*x) = u * (-x + u); no u' term because u is constant
    assert extended_lie_derivative(A.outputs[0], A) == sx.simplify(u * (-x + u))


def test_lie_generic_input_introduces_next_derivative():
    src = "model m\nstates x\ninputs u\nddt x = -x + u\noutput y = u*x\n"
    A = _aug(src)
    spec = A.model.known_inputs[0]
    u, u1 = sx.sym(spec.symbol), sx.sym(spec.symbol.derivative(1))
    x = sx.sym(A.z[0])
    assert extended_lie_derivative(A.outputs[0], A) == sx.simplify(u * (-x + u) + u1 * x)


# --------------------------------------------------------------------------
# matrix construction
# --------------------------------------------------------------------------

def test_build_matrix_decay_level1():
    A = _aug(DECAY)
    M = build_matrix(A, 1)
    x, th = (sx.sym(s) for s in A.z)
    assert M.shape == (2, 2)
    assert M.rows[0] == [sx.ONE, sx.ZERO]
    assert M.rows[1] == [sx.mul(sx.NEG_ONE, th), sx.mul(sx.NEG_ONE, x)]


def test_build_matrix_level0_has_m_rows(corpus_entries):
    for entry in corpus_entries[:6]:
        A = augment(load_model(entry.path))
        M = build_matrix(A, 0)
        assert M.shape == (len(A.outputs), A.n_z)


def test_build_matrix_sumrates_identical_param_columns():
    A = _aug(SUMRATES)
    M = build_matrix(A, 1)
    x = sx.sym(A.z[0])
    th1, th2 = sx.sym(A.z[1]), sx.sym(A.z[2])
    assert M.rows[0] == [sx.ONE, sx.ZERO, sx.ZERO]
    minus_x = sx.mul(sx.NEG_ONE, x)
    assert M.rows[1] == [sx.simplify(-(th1 + th2)), minus_x, minus_x]


def test_lie_cache_extends_incrementally():
    A = _aug(DECAY)
    cache = LieCache(A)
    M1 = build_matrix(A, 1, cache)
    M2 = build_matrix(A, 2, cache)
    assert M2.rows[: len(M1.rows)] == M1.rows
    assert len(cache.lies) == 3


# --------------------------------------------------------------------------
# randomized rank
# --------------------------------------------------------------------------

def test_rank_decay_full():
    A = _aug(DECAY)
    M = build_matrix(A, 1)
    assert rank_by_random_eval(M, 3, 0, P) == 2
    assert M.rank_estimate.rank == 2
    assert M.rank_estimate.prime == P


def test_rank_sumrates_capped_by_identical_columns():
    A = _aug(SUMRATES)
    for level in (1, 2):
        M = build_matrix(A, level)
        assert rank_by_random_eval(M, 3, 0, P) == 2


def test_rank_zero_matrix():
    src = "model m\nstates x\nddt x = -x\noutput y = 7\n"
    A = _aug(src)
    M = build_matrix(A, 1)
    assert rank_by_random_eval(M, 2, 0, P) == 0


def test_rank_retries_exhausted_on_denominator_divisible_by_p():
    # The output carries a literal constant 1/p, which vanishes mod p at
    # every evaluation point.
    src = f"model m\nstates x\nparams k\nddt x = -k*x\noutput y = x/{P}\n"
    A = _aug(src)
    M = build_matrix(A, 1)
    with pytest.raises(RetriesExhausted):
        rank_by_random_eval(M, 1, 0, P)


# --------------------------------------------------------------------------
# classification
# --------------------------------------------------------------------------

def test_classify_full_rank_skips_column_tests():
    A = _aug(DECAY)
    M = build_matrix(A, 1)
    r = rank_by_random_eval(M, 3, 0, P)
    verdicts = classify_columns(M, r, 3, 0, P)
    assert verdicts[A.z[0]] == "observable"
    assert verdicts[A.z[1]] == "SLI"


def test_classify_sumrates_by_column_deletion():
    A = _aug(SUMRATES)
    M = build_matrix(A, 2)
    r = rank_by_random_eval(M, 3, 0, P)
    assert r == 2
    verdicts = classify_columns(M, r, 3, 0, P)
    assert verdicts[A.z[0]] == "observable"  # deleting x drops rank to 1
    assert verdicts[A.z[1]] == "SU"          # th1 column redundant
    assert verdicts[A.z[2]] == "SU"


def test_classify_scaling_toy_hand_derived():
    rep = analyze_symbolic(parse_model(SCALING))
    assert rep.verdicts == {"x": "unobservable", "th": "SLI", "c": "SU"}


# --------------------------------------------------------------------------
# full analysis
# --------------------------------------------------------------------------

def test_analyze_decay():
    rep = analyze_symbolic(parse_model(DECAY))
    assert rep.rank == 2 and rep.n_z == 2
    assert rep.stop_reason == "full_rank"
    assert rep.ranks_by_level == [1, 2]
    assert rep.verdicts == {"x": "observable", "th": "SLI"}


def test_analyze_sumrates_saturates():
    rep = analyze_symbolic(parse_model(SUMRATES))
    assert rep.rank == 2 and rep.n_z == 3
    assert rep.stop_reason == "saturation"
    assert rep.verdicts == {"x": "observable", "th1": "SU", "th2": "SU"}


def test_analyze_single_measured_state_stops_at_level0():
    rep = analyze_symbolic(parse_model("model m\nstates x\nddt x = -x\noutput y = x\n"))
    assert rep.rank == 1 == rep.n_z
    assert rep.ranks_by_level == [1]
    assert rep.verdicts == {"x": "observable"}


def test_full_rank_implies_all_identifiable(reports_by_key):
    for (model, engine), rep in reports_by_key.items():
        if engine != "symbolic" or rep.status != "ok":
            continue
        if rep.rank == rep.n_z:
            assert all(v in ("observable", "SLI", "reconstructible")
                       for v in rep.verdicts.values()), model


def test_rank_monotone_in_level(reports_by_key):
    for (model, engine), rep in reports_by_key.items():
        if engine != "symbolic" or rep.status != "ok":
            continue
        ranks = rep.ranks_by_level
        assert all(a <= b for a, b in zip(ranks, ranks[1:])), model
        assert ranks[-1] <= rep.n_z


def test_saturation_rank_stable_two_extra_levels():
    # Once the rank stalls, computing extra levels never increases it.
    for src in (SUMRATES, SCALING):
        md = parse_model(src)
        A = augment(md)
        rep = analyze_symbolic(md)
        if rep.stop_reason != "saturation":
            continue
        k_stop = len(rep.ranks_by_level) - 1
        cache = LieCache(A)
        for extra in (1, 2):
            M = build_matrix(A, k_stop + extra, cache)
            assert rank_by_random_eval(M, 3, 0, P) == rep.rank


def test_determinism_identical_reports():
    md = parse_model(SCALING)
    a = analyze_symbolic(md, SymbolicOptions(seed=3))
    b = analyze_symbolic(md, SymbolicOptions(seed=3))
    da, db = a.to_dict(include_timing=False), b.to_dict(include_timing=False)
    assert da == db


def test_max_level_stop_reason():
    md = parse_model(SUMRATES)
    rep = analyze_symbolic(md, SymbolicOptions(max_level=0))
    assert rep.stop_reason == "max_level"
    assert rep.ranks_by_level == [1]


def test_transcendental_warning_on_nonrational_model():
    md = load_model(corpus_dir() / "competition.idm")
    rep = analyze_symbolic(md)
    assert any("transcendental" in w for w in rep.warnings)
    assert rep.status == "ok"
