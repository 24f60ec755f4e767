import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from jmie.data import (Dataset, DatasetError, SubjectRecord, dataset_to_strings,
                       intermediate_indicator, load_dataset, save_dataset,
                       time_since_intermediate)


def test_indicator_examples():
    assert intermediate_indicator(2, 5) == 0
    assert intermediate_indicator(5, 5) == 1  # closed boundary
    assert intermediate_indicator(7, None) == 0


def test_time_since_examples():
    assert time_since_intermediate(3, 5) == 0.0
    assert time_since_intermediate(5, 5) == 0.0
    assert time_since_intermediate(7.5, 5) == 2.5
    assert time_since_intermediate(9, None) == 0.0


@given(st.floats(0, 100), st.floats(0, 100), st.floats(0.01, 100))
def test_indicator_nondecreasing_in_t(t1, t2, rho):
    lo, hi = sorted((t1, t2))
    assert intermediate_indicator(lo, rho) <= intermediate_indicator(hi, rho)


@given(st.floats(0, 100), st.floats(0.01, 100))
def test_time_since_piecewise_linear(t, rho):
    v = time_since_intermediate(t, rho)
    assert v >= 0
    if t <= rho:
        assert v == 0.0
    else:
        assert v == pytest.approx(t - rho)
    # slope 0 then 1: small forward step
    h = 1e-6
    step = time_since_intermediate(t + h, rho) - v
    assert step == pytest.approx(0.0 if t + h <= rho else min(h, t + h - rho), abs=1e-9)


def _subject(sid="s1", **kw):
    defaults = dict(event_time=10.0, event_indicator=1, intermediate_time=4.0,
                    baseline_covariates=[0.5], measurement_times=[0.0, 2.0, 5.0],
                    measurement_values=[1.0, 2.0, 3.0])
    defaults.update(kw)
    return SubjectRecord(id=sid, **defaults)


def test_subject_invariants():
    with pytest.raises(DatasetError):
        _subject(measurement_times=[0.0, 2.0, 11.0])  # beyond event time
    with pytest.raises(DatasetError):
        _subject(measurement_times=[2.0, 1.0, 3.0])  # not sorted
    with pytest.raises(DatasetError):
        _subject(event_indicator=2)
    with pytest.raises(DatasetError):
        _subject(intermediate_time=0.0)
    # measurement exactly at the event time is retained
    s = _subject(measurement_times=[0.0, 2.0, 10.0])
    assert s.n_measurements == 3


def test_dataset_unique_ids_and_covariate_dim():
    s1, s2 = _subject("a"), _subject("a")
    with pytest.raises(DatasetError):
        Dataset((s1, s2), ("x",))
    with pytest.raises(DatasetError):
        Dataset((_subject("a", baseline_covariates=[1.0, 2.0]),), ("x",))


SUBJ_CSV = """id,event_time,event_indicator,intermediate_time,age
s1,10,1,,0.5
"""
MEAS_CSV = """id,time,value
s1,2,30.5
"""


def test_load_minimal():
    ds = load_dataset(io.StringIO(SUBJ_CSV), io.StringIO(MEAS_CSV))
    assert len(ds) == 1
    s = ds.subjects[0]
    assert s.n_measurements == 1
    assert s.intermediate_time is None
    assert ds.covariate_names == ("age",)
    assert s.baseline_covariates[0] == 0.5


def test_load_rejects_bad_rows():
    bad_meas = "id,time,value\ns1,11,1.0\n"
    with pytest.raises(DatasetError, match="row 2"):
        load_dataset(io.StringIO(SUBJ_CSV), io.StringIO(bad_meas))
    dup = "id,time,value\ns1,2,1.0\ns1,2,1.5\n"
    with pytest.raises(DatasetError, match="duplicate"):
        load_dataset(io.StringIO(SUBJ_CSV), io.StringIO(dup))
    neg = "id,time,value\ns1,-1,1.0\n"
    with pytest.raises(DatasetError, match="negative"):
        load_dataset(io.StringIO(SUBJ_CSV), io.StringIO(neg))
    with pytest.raises(DatasetError, match="missing columns"):
        load_dataset(io.StringIO("id,event_time\ns1,10\n"), io.StringIO(MEAS_CSV))


def _datasets_equal(a: Dataset, b: Dataset) -> bool:
    if a.covariate_names != b.covariate_names or len(a) != len(b):
        return False
    for sa, sb in zip(a.subjects, b.subjects):
        if sa.id != sb.id or sa.event_time != sb.event_time:
            return False
        if sa.event_indicator != sb.event_indicator:
            return False
        if (sa.intermediate_time is None) != (sb.intermediate_time is None):
            return False
        if sa.intermediate_time is not None and sa.intermediate_time != sb.intermediate_time:
            return False
        if not np.array_equal(sa.baseline_covariates, sb.baseline_covariates):
            return False
        if not np.array_equal(sa.measurement_times, sb.measurement_times):
            return False
        if not np.array_equal(sa.measurement_values, sb.measurement_values):
            return False
    return True


def test_round_trip(rng):
    subjects = []
    for i in range(7):
        n = int(rng.integers(0, 5))
        times = np.sort(rng.uniform(0, 8, n))
        subjects.append(SubjectRecord(
            id=f"s{i}", event_time=float(8 + rng.uniform(0, 2)),
            event_indicator=int(rng.integers(0, 2)),
            intermediate_time=float(rng.uniform(1, 7)) if rng.random() < 0.5 else None,
            baseline_covariates=rng.normal(size=2),
            measurement_times=times, measurement_values=rng.normal(size=n)))
    ds = Dataset(tuple(subjects), ("age", "sex"))
    scsv, mcsv = dataset_to_strings(ds)
    back = load_dataset(io.StringIO(scsv), io.StringIO(mcsv))
    assert _datasets_equal(ds, back)
    # a second round trip is byte-identical
    scsv2, mcsv2 = dataset_to_strings(back)
    assert (scsv, mcsv) == (scsv2, mcsv2)
