import math

import numpy as np
import pytest

from bubblefit import (
    Classification,
    FitDiagnostics,
    FitResult,
    GeneratorSpec,
    LpplParams,
    ScanSpec,
    UsageError,
    generate,
    scan_parameter,
    write_scan_csv,
)
from bubblefit.lppl import window_objective
from bubblefit.sensitivity import ScanCurve

from conftest import canonical_params, series_from_values, window_of


def fake_fit(params: LpplParams) -> FitResult:
    """Wrap bare parameters in the result shape the scanner consumes."""
    diag = FitDiagnostics(rmse=0.0, is_precursor=True, monotone_increasing=True,
                          violation_dates=(), validity_ratio=1.5,
                          raw_fit_valid=True)
    return FitResult(params=params, diagnostics=diag,
                     seed_used=params.theta(), function_evaluations=1,
                     converged=True, classification=Classification.PRECURSOR)


@pytest.fixture(scope="module")
def clean_window():
    return window_of(generate(GeneratorSpec(canonical_params(), 150, 0.0, 4)))


@pytest.fixture(scope="module")
def clean_fit(clean_window):
    params = canonical_params()
    value = window_objective(clean_window)(params.theta())
    diag = FitDiagnostics(rmse=value, is_precursor=True,
                          monotone_increasing=True, violation_dates=(),
                          validity_ratio=1.2, raw_fit_valid=True)
    return FitResult(params=params, diagnostics=diag, seed_used=params.theta(),
                     function_evaluations=1, converged=True,
                     classification=Classification.PRECURSOR)


class TestScanSpec:
    def test_rejects_even_steps(self):
        with pytest.raises(UsageError):
            ScanSpec("beta", 0.33, 0.1, steps=100)

    def test_rejects_tiny_step_count(self):
        with pytest.raises(UsageError):
            ScanSpec("beta", 0.33, 0.1, steps=1)

    def test_rejects_unknown_parameter(self):
        with pytest.raises(UsageError):
            ScanSpec("alpha", 0.33, 0.1)

    def test_grid_center_is_exact(self):
        spec = ScanSpec("omega", 6.3612345, 0.7, steps=41)
        grid = spec.grid()
        assert grid[20] == 6.3612345

    def test_refined_grid_shares_abscissae_exactly(self):
        coarse = ScanSpec("t2c", 30.0, 7.3, steps=51).grid()
        fine = ScanSpec("t2c", 30.0, 7.3, steps=101).grid()
        assert np.array_equal(coarse, fine[::2])


class TestScanParameter:
    def test_center_sample_equals_fit_rmse_exactly(self, clean_fit,
                                                   clean_window):
        spec = ScanSpec("beta", clean_fit.params.beta, 0.2, steps=21)
        curve = scan_parameter(clean_fit, clean_window, spec)
        assert curve.rmse[10] == clean_fit.diagnostics.rmse

    def test_beta_scan_has_global_minimum_at_truth(self, clean_fit,
                                                   clean_window):
        spec = ScanSpec("beta", 0.33, 0.25, steps=101)
        curve = scan_parameter(clean_fit, clean_window, spec)
        values = np.array([math.inf if r is None else r for r in curve.rmse])
        assert int(values.argmin()) == 50
        assert values[50] == pytest.approx(0.0, abs=1e-9)

    def test_refinement_agrees_on_shared_samples(self, clean_fit, clean_window):
        coarse = scan_parameter(clean_fit, clean_window,
                                ScanSpec("omega", 6.36, 1.0, steps=21))
        fine = scan_parameter(clean_fit, clean_window,
                              ScanSpec("omega", 6.36, 1.0, steps=41))
        assert coarse.values == fine.values[::2]
        assert coarse.rmse == fine.rmse[::2]

    def test_t2c_below_one_is_undefined_not_fatal(self, clean_fit,
                                                  clean_window):
        spec = ScanSpec("t2c", 2.0, 3.0, steps=7)  # samples -1 .. 5
        curve = scan_parameter(clean_fit, clean_window, spec)
        undefined = [v for v, r in zip(curve.values, curve.rmse) if r is None]
        assert undefined == [v for v in curve.values if v < 1.0]

    def test_flat_curve_on_zero_variance_data(self):
        window = window_of(series_from_values(np.full(60, 750.0)))
        params = canonical_params(a=750.0, b=0.0, c=0.0)
        curve = scan_parameter(fake_fit(params), window,
                               ScanSpec("omega", 6.0, 2.0, steps=15))
        # flat up to solver roundoff (values are ~1e-14 relative to the data)
        assert all(r == pytest.approx(0.0, abs=1e-9) for r in curve.rmse)

    def test_reoptimize_never_worse_than_fixed(self, clean_fit, clean_window):
        spec = ScanSpec("beta", 0.33, 0.1, steps=5)
        fixed = scan_parameter(clean_fit, clean_window, spec)
        freed = scan_parameter(clean_fit, clean_window, spec, reoptimize=True)
        for held, re_opt in zip(fixed.rmse, freed.rmse):
            assert re_opt <= held + 1e-9


class TestScanCsv:
    def test_csv_layout_and_empty_rmse(self, tmp_path):
        curve = ScanCurve("t2c", (0.5, 1.0, 2.0), (None, 0.25, 0.5))
        out = tmp_path / "scan.csv"
        write_scan_csv(curve, out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "param,value,rmse"
        assert lines[1] == "t2c,0.5,"
        assert lines[2] == "t2c,1.0,0.25"
