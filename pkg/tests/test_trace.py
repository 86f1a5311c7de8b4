import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chcsim.model import POPULARITY_SUM_TOL, Request, Topology
from chcsim.trace import (
    RequestTrace,
    TraceFormatError,
    estimate_popularity,
    generate_zipf_trace,
    parse_trace,
    save_trace,
    trace_from_counts,
    trace_to_text,
    zipf_popularity,
)


def topo(num_cells=4):
    return Topology(num_cells, (0,) * num_cells, 0, (1,) * num_cells)


def spearman(a, b):
    def ranks(x):
        order = np.argsort(np.asarray(x))
        r = np.empty(len(x))
        r[order] = np.arange(len(x))
        return r

    return float(np.corrcoef(ranks(a), ranks(b))[0, 1])


class TestParse:
    def test_single_line(self):
        text = "seq,cell,file,user\n1,1,42,u7\n"
        trace = parse_trace(io.StringIO(text), topo())
        assert len(trace) == 1
        assert trace[0] == Request(1, 1, 42, "u7")

    def test_header_only(self):
        trace = parse_trace(io.StringIO("seq,cell,file,user\n"), topo())
        assert len(trace) == 0

    def test_cell_out_of_range_reports_line(self):
        text = "seq,cell,file,user\n1,1,1,u1\n2,9,1,u1\n"
        with pytest.raises(TraceFormatError, match="cell out of range at line 3"):
            parse_trace(io.StringIO(text), topo(4))

    def test_file_out_of_range_with_catalog(self):
        from chcsim.model import Catalog

        text = "seq,cell,file,user\n1,1,5,\n"
        catalog = Catalog.uniform(3, 1, [0.5, 0.25, 0.25])
        with pytest.raises(TraceFormatError, match="file out of range at line 2"):
            parse_trace(io.StringIO(text), topo(), catalog)

    def test_seq_must_increase(self):
        text = "seq,cell,file,user\n5,1,1,\n5,1,2,\n"
        with pytest.raises(TraceFormatError, match="seq not strictly increasing at line 3"):
            parse_trace(io.StringIO(text), topo())

    def test_bad_header(self):
        with pytest.raises(TraceFormatError, match="line 1"):
            parse_trace(io.StringIO("nope\n1,1,1,\n"), topo())

    def test_non_integer_field(self):
        with pytest.raises(TraceFormatError, match="line 2"):
            parse_trace(io.StringIO("seq,cell,file,user\nx,1,1,\n"), topo())


class TestRoundTrip:
    def test_bit_exact_roundtrip(self):
        trace = RequestTrace([1, 5, 9], [1, 2, 4], [10, 20, 30], ["a", None, "c"])
        text = trace_to_text(trace)
        again = parse_trace(io.StringIO(text), topo())
        assert trace_to_text(again) == text
        assert again[1].user is None

    @given(
        st.lists(
            st.tuples(st.integers(1, 4), st.integers(1, 50), st.booleans()),
            max_size=30,
        )
    )
    @settings(max_examples=50, deadline=None)
    def test_roundtrip_property(self, rows):
        seqs = list(range(1, len(rows) + 1))
        cells = [c for c, _, _ in rows]
        files = [f for _, f, _ in rows]
        users = [f"u{i}" if flag else None for i, (_, _, flag) in enumerate(rows)]
        trace = RequestTrace(seqs, cells, files, users)
        text = trace_to_text(trace)
        again = parse_trace(io.StringIO(text), topo())
        assert trace_to_text(again) == text

    def test_file_roundtrip(self, tmp_path):
        trace = RequestTrace([1, 2], [1, 1], [1, 2])
        path = tmp_path / "t.csv"
        save_trace(trace, path)
        raw = path.read_bytes()
        assert raw == b"seq,cell,file,user\n1,1,1,\n2,1,2,\n"
        again = parse_trace(path, topo(1))
        assert save_and_read(again) == raw


def save_and_read(trace):
    buf = io.StringIO()
    from chcsim.trace import _write_stream

    _write_stream(trace, buf)
    return buf.getvalue().encode()


class TestZipf:
    def test_zipf_popularity_closed_form(self):
        p = zipf_popularity(100, 1.0)
        harmonic = sum(1.0 / i for i in range(1, 101))
        assert p[0] == pytest.approx(1.0 / harmonic, rel=1e-12)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)

    def test_exponent_zero_is_uniform(self):
        p = zipf_popularity(50, 0.0)
        assert np.allclose(p, 1.0 / 50)

    def test_same_seed_same_trace(self):
        a = generate_zipf_trace(5000, 100, 0.8, topo(), seed=42)
        b = generate_zipf_trace(5000, 100, 0.8, topo(), seed=42)
        assert np.array_equal(a.files, b.files)
        assert np.array_equal(a.cells, b.cells)
        c = generate_zipf_trace(5000, 100, 0.8, topo(), seed=43)
        assert not np.array_equal(c.files, a.files)

    def test_uniform_chisquare_sanity(self):
        # exponent 0: per-file counts ~ multinomial uniform
        n, F = 10**6, 100
        trace = generate_zipf_trace(n, F, 0.0, topo(), seed=7)
        counts = np.bincount(trace.files, minlength=F + 1)[1:]
        expected = n / F
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        dof = F - 1
        assert chi2 < dof + 6.0 * math.sqrt(2 * dof)
        assert counts.max() / counts.min() < 1.05

    def test_rank_one_frequency_matches_zipf_mass(self):
        # exponent 1, F=100: p_1 = 1/H_100, binomial 3-sigma bound
        n, F = 10**6, 100
        trace = generate_zipf_trace(n, F, 1.0, topo(), seed=11)
        p1 = 1.0 / sum(1.0 / i for i in range(1, F + 1))
        observed = float((trace.files == 1).sum()) / n
        sigma = math.sqrt(p1 * (1 - p1) / n)
        assert abs(observed - p1) <= 3.0 * sigma

    def test_cells_uniform(self):
        trace = generate_zipf_trace(10**5, 10, 0.8, topo(4), seed=3)
        counts = np.bincount(trace.cells, minlength=5)[1:]
        assert counts.min() > 0.2 * 10**5


class TestEstimatePopularity:
    def test_simple_counts(self):
        trace = RequestTrace([1, 2, 3], [1, 1, 1], [1, 1, 2])
        p = estimate_popularity(trace, 4)
        assert p.tolist() == [2 / 3, 1 / 3, 0.0, 0.0]

    def test_single_request_is_one_hot(self):
        trace = RequestTrace([1], [1], [3])
        assert estimate_popularity(trace, 4).tolist() == [0.0, 0.0, 1.0, 0.0]

    def test_empty_trace_is_an_error(self):
        with pytest.raises(ValueError):
            estimate_popularity(RequestTrace([], [], []), 4)

    def test_output_is_a_valid_popularity(self):
        trace = generate_zipf_trace(20000, 50, 0.8, topo(), seed=1)
        p = estimate_popularity(trace, 50)
        assert abs(float(p.sum()) - 1.0) <= POPULARITY_SUM_TOL
        assert (p >= 0).all()

    def test_correlates_with_generator(self):
        n, F = 10**6, 1000
        trace = generate_zipf_trace(n, F, 0.8, topo(), seed=5)
        estimated = estimate_popularity(trace, F)
        rho = spearman(estimated, zipf_popularity(F, 0.8))
        assert rho > 0.9


class TestSplitAndCounts:
    def test_split(self):
        trace = RequestTrace(range(1, 11), [1] * 10, list(range(1, 11)))
        head, tail = trace.split(0.3)
        assert len(head) == 3 and len(tail) == 7
        assert head.files.tolist() == [1, 2, 3]

    def test_trace_from_counts_matches_distribution(self):
        t = topo(3)
        trace = trace_from_counts([2, 0, 1], t)
        assert len(trace) == 9  # 3 requests per cell, 3 cells
        p = estimate_popularity(trace, 3)
        assert p.tolist() == [2 / 3, 0.0, 1 / 3]
        for cell in (1, 2, 3):
            sel = trace.files[trace.cells == cell]
            assert sorted(sel.tolist()) == [1, 1, 3]
        assert trace.seqs.tolist() == list(range(1, 10))
