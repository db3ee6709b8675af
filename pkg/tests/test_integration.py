import math
from unittest.mock import patch

import numpy as np
import pytest
from scipy.integrate import quad

from app.constants import DEFAULT_ALPHAS, DEFAULT_FUNCTIONS, DEFAULT_PRESETS, DILATION_LAMBDAS
from app.dilation import DilationStructure, QuasiNorm, make_norm
from app.errors import (
    BudgetExceededError,
    ConfigurationError,
    DegenerateFunctionError,
    DomainError,
    IntegrandError,
)
from app.functionals import (
    Budgets,
    TestFunction,
    dilate_function,
    entropy_dilation_shift,
    evaluate_functionals,
    kos_rhs,
    shannon_rhs,
)
from app.integrate import (
    IntegrationResult,
    RadialIntegrand,
    compare_sphere_measures,
    qmc_integral,
    radial_integral,
    sphere_measure,
)
from app.library import build_function
from app.presets import Preset, resolve_preset
from app.sharp_constants import kos_constant, sharp_constants
from app.specfun import log_beta, log_gamma
from app.verify import (
    SuiteConfig,
    kos_deficit,
    lambda_optimization_check,
    run_suite,
    scan,
    shannon_deficit,
    shannon_via_b_deficit,
)

ACCEPTANCE_PRESETS = ("abelian:1", "abelian:2", "abelian:3", "anisotropic:1,2@max", "heisenberg")


@pytest.fixture
def euclidean_line() -> QuasiNorm:
    return make_norm(DilationStructure(weights=(1.0,)), "weighted_p", p=2.0)


@pytest.fixture
def euclidean_plane() -> QuasiNorm:
    return make_norm(DilationStructure(weights=(1.0, 1.0)), "weighted_p", p=2.0)


@pytest.fixture
def line_preset(euclidean_line: QuasiNorm) -> Preset:
    return Preset(label="abelian:1", norm=euclidean_line)


@pytest.fixture(params=ACCEPTANCE_PRESETS)
def preset(request: pytest.FixtureRequest) -> Preset:
    return resolve_preset(request.param)


class TestRadialQuadrature:
    def test_exponential(self) -> None:
        result = radial_integral(RadialIntegrand(lambda r: math.exp(-r), 1.0))
        assert result.value == pytest.approx(1.0, rel=1e-10)
        assert result.evaluations > 0

    def test_gaussian_in_the_plane(self) -> None:
        result = radial_integral(RadialIntegrand(lambda r: math.exp(-r * r), 2.0))
        assert result.value == pytest.approx(0.5, rel=1e-10)

    @pytest.mark.parametrize(
        "q,alpha", [(1.0, 2.0), (3.0, 1.5), (4.0, 2.0), (1.5, 0.7), (7.0, 5.0)]
    )
    def test_stretched_exponential_is_gamma(self, q: float, alpha: float) -> None:
        result = radial_integral(RadialIntegrand(lambda r: float(np.exp(-np.power(r, alpha))), q))
        expected = math.exp(log_gamma(q / alpha)) / alpha
        assert result.value == pytest.approx(expected, rel=1e-9)

    @pytest.mark.parametrize("q,alpha", [(1.0, 1.5), (1.0, 2.0), (3.0, 2.0), (4.0, 3.0)])
    def test_power_law_tail_is_beta(self, q: float, alpha: float) -> None:
        result = radial_integral(
            RadialIntegrand(lambda r: float((1.0 + np.power(r, alpha)) ** -q), q)
        )
        alpha_conj = alpha / (alpha - 1.0)
        expected = math.exp(log_beta(q / alpha, q / alpha_conj)) / alpha
        assert result.value == pytest.approx(expected, rel=1e-8)

    def test_rejects_tolerance_out_of_range(self) -> None:
        with pytest.raises(DomainError):
            radial_integral(RadialIntegrand(lambda r: math.exp(-r), 1.0), rel_tol=0.1)

    @patch("app.integrate.quad")
    def test_budget_exhaustion_carries_partial(self, mock_quad) -> None:
        mock_quad.return_value = (
            0.75,
            0.5,
            {"neval": 21},
            "The maximum number of subdivisions (200) has been achieved.",
        )
        with pytest.raises(BudgetExceededError) as excinfo:
            radial_integral(RadialIntegrand(lambda r: math.exp(-r), 1.0), max_evaluations=10_000)
        assert excinfo.value.partial.value == 0.75
        assert excinfo.value.partial.evaluations >= 21


class TestQuasiMonteCarlo:
    @pytest.mark.slow
    def test_max_ball_volume(self) -> None:
        qn = make_norm(DilationStructure(weights=(1.0, 1.0)), "max")
        result = qmc_integral(qn.structure, lambda x: (qn(x) < 1.0).astype(np.float64))
        assert result.value == pytest.approx(4.0, rel=1e-2)
        assert abs(result.value - 4.0) <= 5.0 * result.abs_error_estimate + 1e-3

    @pytest.mark.slow
    def test_normalized_gaussian(self, euclidean_plane: QuasiNorm) -> None:
        result = qmc_integral(
            euclidean_plane.structure, lambda x: np.exp(-math.pi * euclidean_plane(x) ** 2)
        )
        assert result.value == pytest.approx(1.0, rel=1e-3)

    @pytest.mark.slow
    def test_koranyi_ball_volume(self) -> None:
        qn = resolve_preset("heisenberg").norm
        result = qmc_integral(qn.structure, lambda x: (qn(x) < 1.0).astype(np.float64))
        assert result.value == pytest.approx(math.pi**2 / 2.0, rel=1e-2)

    def test_deterministic_and_thread_independent(self, euclidean_plane: QuasiNorm) -> None:
        def f(x: np.ndarray) -> np.ndarray:
            return np.exp(-euclidean_plane(x) ** 2)

        s = euclidean_plane.structure
        serial = qmc_integral(s, f, samples=2**12, seed=5, workers=1)
        again = qmc_integral(s, f, samples=2**12, seed=5, workers=1)
        threaded = qmc_integral(s, f, samples=2**12, seed=5, workers=4)
        assert serial == again == threaded
        assert qmc_integral(s, f, samples=2**12, seed=6) != serial

    def test_non_finite_integrand(self, euclidean_plane: QuasiNorm) -> None:
        with pytest.raises(IntegrandError):
            qmc_integral(
                euclidean_plane.structure, lambda x: np.full(x.shape[0], np.nan), samples=2**10
            )

    def test_too_few_samples(self, euclidean_plane: QuasiNorm) -> None:
        with pytest.raises(DomainError):
            qmc_integral(euclidean_plane.structure, lambda x: np.ones(x.shape[0]), samples=100)


class TestSphereMeasure:
    def test_analytic_values(self, euclidean_plane: QuasiNorm) -> None:
        assert sphere_measure(euclidean_plane).value == pytest.approx(2.0 * math.pi, rel=1e-14)
        assert sphere_measure(resolve_preset("anisotropic:1,2@max").norm).value == pytest.approx(
            12.0, rel=1e-14
        )
        koranyi = sphere_measure(resolve_preset("heisenberg").norm)
        assert koranyi.value == pytest.approx(19.7392088022, rel=1e-11)
        assert koranyi.std_error == 0.0

    def test_unknown_method(self, euclidean_plane: QuasiNorm) -> None:
        with pytest.raises(ConfigurationError):
            sphere_measure(euclidean_plane, "spherical_design")

    @pytest.mark.slow
    @pytest.mark.parametrize("name", ["abelian:2", "anisotropic:1,2@max", "heisenberg"])
    def test_monte_carlo_routes_agree(self, name: str) -> None:
        comparison = compare_sphere_measures(resolve_preset(name).norm, label=name)
        analytic = comparison.analytic.value
        for estimate in (comparison.ball_volume_mc, comparison.gauss_weight_mc):
            assert estimate.value == pytest.approx(analytic, rel=1e-2)
            assert abs(estimate.value - analytic) <= 3.0 * estimate.std_error
        assert comparison.agreement


class TestFunctionals:
    def test_extremizer_anchors(self, euclidean_line: QuasiNorm) -> None:
        values = evaluate_functionals(build_function("extremizer", euclidean_line, 2.0), 2.0)
        assert values.l1 == pytest.approx(1.0, rel=1e-8)
        assert values.entropy == pytest.approx(0.5, abs=1e-8)
        assert values.moment_alpha == pytest.approx(1.0 / (2.0 * math.pi), rel=1e-8)

    def test_cauchy_entropy(self, euclidean_line: QuasiNorm) -> None:
        values = evaluate_functionals(build_function("cauchy", euclidean_line, 2.0), 2.0)
        assert values.l1 == pytest.approx(1.0, rel=1e-8)
        assert values.entropy == pytest.approx(2.53102424697, abs=1e-8)
        assert math.isinf(values.moment_alpha)

    def test_extremizer_normalization(self, preset: Preset) -> None:
        for alpha in DEFAULT_ALPHAS:
            values = evaluate_functionals(build_function("extremizer", preset.norm, alpha), alpha)
            assert values.l1 == pytest.approx(1.0, rel=1e-8)

    def test_kos_profile_normalization(self, preset: Preset) -> None:
        for alpha in DEFAULT_ALPHAS:
            values = evaluate_functionals(build_function("kos-profile", preset.norm, alpha), alpha)
            assert values.l1 == pytest.approx(1.0, rel=1e-8)

    @pytest.mark.parametrize("c", [1e-3, 1.0, 1e3])
    def test_scalar_multiples(self, euclidean_plane: QuasiNorm, c: float) -> None:
        u = build_function("gaussian:c=1", euclidean_plane, 2.0)
        base = evaluate_functionals(u, 2.0)
        scaled = evaluate_functionals(u.scaled(c), 2.0)
        assert scaled.entropy == pytest.approx(base.entropy, abs=1e-9)
        assert scaled.l1 == pytest.approx(c * base.l1, rel=1e-9)
        assert scaled.moment_alpha == pytest.approx(c * base.moment_alpha, rel=1e-9)
        consts = sharp_constants(euclidean_plane, 2.0)
        assert shannon_rhs(scaled, consts) == pytest.approx(shannon_rhs(base, consts), abs=1e-9)

    @pytest.mark.parametrize("name", ["abelian:1", "anisotropic:1,2@max", "heisenberg"])
    def test_scaling_ladder(self, name: str) -> None:
        qn = resolve_preset(name).norm
        q, alpha = qn.structure.q, 2.0
        u = build_function("gaussian:c=1", qn, alpha)
        base = evaluate_functionals(u, alpha)
        for lam in DILATION_LAMBDAS:
            dilated = evaluate_functionals(dilate_function(u, lam), alpha)
            assert dilated.l1 == pytest.approx(base.l1, rel=1e-8)
            shift = dilated.entropy - base.entropy
            assert abs(shift - entropy_dilation_shift(q, lam)) <= 1e-7
            assert dilated.moment_alpha * lam**alpha == pytest.approx(base.moment_alpha, rel=1e-7)

    def test_identity_dilation(self, euclidean_line: QuasiNorm) -> None:
        u = build_function("bump", euclidean_line, 2.0)
        assert dilate_function(u, 1.0) is u
        with pytest.raises(DomainError):
            dilate_function(u, 0.0)

    def test_moment_domination(self, preset: Preset) -> None:
        for function_id in ("gaussian:c=3", "bump", "mixture", "stretched:c=1,beta=1"):
            values = evaluate_functionals(build_function(function_id, preset.norm, 2.0), 2.0)
            assert values.moment_alpha <= values.bracket_moment

    def test_degenerate_function(self, euclidean_line: QuasiNorm) -> None:
        zero = TestFunction("zero", euclidean_line, profile=lambda r: 0.0 * np.asarray(r))
        with pytest.raises(DegenerateFunctionError):
            evaluate_functionals(zero, 2.0)

    def test_shannon_rhs_equality_and_log_law(self, euclidean_line: QuasiNorm) -> None:
        consts = sharp_constants(euclidean_line, 2.0)
        values = evaluate_functionals(build_function("extremizer", euclidean_line, 2.0), 2.0)
        assert shannon_rhs(values, consts) == pytest.approx(0.5, abs=1e-8)
        doubled = values.model_copy(update={"moment_alpha": 2.0 * values.moment_alpha})
        gap = shannon_rhs(doubled, consts) - shannon_rhs(values, consts)
        assert gap == pytest.approx(0.5 * math.log(2.0), abs=1e-12)
        with pytest.raises(DomainError):
            shannon_rhs(values.model_copy(update={"moment_alpha": 0.0}), consts)

    def test_kos_rhs_anchors(self, euclidean_line: QuasiNorm) -> None:
        consts = kos_constant(euclidean_line, 2.0)
        cauchy = build_function("cauchy", euclidean_line, 2.0)
        assert kos_rhs(cauchy, 2.0, consts) == pytest.approx(math.log(4.0 * math.pi), abs=1e-8)
        bump = build_function("bump", euclidean_line, 2.0)
        assert kos_rhs(bump, 2.0, consts) <= math.log(2.0 * math.pi)

    def test_kos_rhs_equals_entropy_of_profile(self, preset: Preset) -> None:
        for alpha in DEFAULT_ALPHAS:
            phi = build_function("kos-profile", preset.norm, alpha)
            rhs = kos_rhs(phi, alpha, kos_constant(preset.norm, alpha))
            assert rhs == pytest.approx(evaluate_functionals(phi, alpha).entropy, abs=1e-6)

    @pytest.mark.slow
    def test_radial_and_general_routes_agree(self, euclidean_plane: QuasiNorm) -> None:
        u = build_function("gaussian:c=1", euclidean_plane, 2.0)
        radial = evaluate_functionals(u, 2.0)
        general = evaluate_functionals(u.as_general(), 2.0)
        for field in ("l1", "entropy", "moment_alpha", "bracket_moment"):
            combined = getattr(radial.error_estimates, field) + getattr(
                general.error_estimates, field
            )
            gap = abs(getattr(radial, field) - getattr(general, field))
            assert gap <= 3.0 * combined + 1e-12

    def test_negative_profile_evaluates_absolute_value(self, euclidean_line: QuasiNorm) -> None:
        positive = TestFunction("gauss", euclidean_line, profile=lambda r: np.exp(-np.square(r)))
        flipped = TestFunction("neg", euclidean_line, profile=lambda r: -np.exp(-np.square(r)))
        base = evaluate_functionals(positive, 2.0)
        mirrored = evaluate_functionals(flipped, 2.0)
        assert mirrored.l1 == pytest.approx(math.sqrt(math.pi), rel=1e-10)
        assert mirrored.entropy == pytest.approx(base.entropy, abs=1e-12)
        assert mirrored.moment_alpha == pytest.approx(base.moment_alpha, rel=1e-12)
        consts = kos_constant(euclidean_line, 2.0)
        assert kos_rhs(flipped, 2.0, consts) == pytest.approx(
            kos_rhs(positive, 2.0, consts), abs=1e-12
        )

    @pytest.mark.slow
    def test_negative_profile_routes_agree(self, euclidean_line: QuasiNorm) -> None:
        flipped = TestFunction("neg", euclidean_line, profile=lambda r: -np.exp(-np.square(r)))
        radial = evaluate_functionals(flipped, 2.0)
        general = evaluate_functionals(flipped.as_general(), 2.0)
        for field in ("l1", "entropy"):
            combined = getattr(radial.error_estimates, field) + getattr(
                general.error_estimates, field
            )
            gap = abs(getattr(radial, field) - getattr(general, field))
            assert gap <= 3.0 * combined + 1e-12


class TestDeficits:
    def test_shannon_equality_case(self, preset: Preset) -> None:
        for alpha in DEFAULT_ALPHAS:
            record = shannon_deficit(build_function("extremizer", preset.norm, alpha), alpha)
            assert abs(record.deficit) <= 1e-6
            assert record.passed

    def test_kos_equality_case(self, preset: Preset) -> None:
        for alpha in DEFAULT_ALPHAS:
            record = kos_deficit(build_function("kos-profile", preset.norm, alpha), alpha)
            assert abs(record.deficit) <= 1e-6
            assert record.passed

    def test_laplace_density_closed_form(self, euclidean_line: QuasiNorm) -> None:
        u = build_function("stretched:c=1,beta=1", euclidean_line, 2.0)
        record = shannon_deficit(u, 2.0)
        expected = 0.5 * math.log(4.0 * math.pi) + 0.5 - math.log(2.0) - 1.0
        assert record.deficit == pytest.approx(expected, abs=1e-8)
        assert record.deficit > 0

    def test_shannon_via_b_extremizer(self, euclidean_line: QuasiNorm) -> None:
        record = shannon_via_b_deficit(build_function("extremizer", euclidean_line, 2.0), 2.0)
        assert record.deficit == pytest.approx(0.5 * math.log(2.0 * math.pi) - 0.5, abs=1e-8)
        with pytest.raises(DomainError):
            shannon_via_b_deficit(build_function("gaussian:c=1", euclidean_line, 1.0), 1.0)

    def test_kos_deficit_of_extremizer(self, euclidean_line: QuasiNorm) -> None:
        def weighted_log(x: float) -> float:
            return math.exp(-math.pi * x * x) * math.log1p(x * x)

        mean_log, _ = quad(weighted_log, -np.inf, np.inf, epsabs=1e-13)
        expected = math.log(math.pi) + mean_log - 0.5
        record = kos_deficit(build_function("extremizer", euclidean_line, 2.0), 2.0)
        assert record.deficit == pytest.approx(expected, abs=1e-8)
        assert record.deficit > 0

    def test_kos_scalar_invariance(self, euclidean_line: QuasiNorm) -> None:
        phi = build_function("kos-profile", euclidean_line, 2.0)
        base = kos_deficit(phi, 2.0)
        assert kos_deficit(phi.scaled(5.0), 2.0).deficit == pytest.approx(base.deficit, abs=1e-9)

    @pytest.mark.parametrize("function_id", ["gaussian:c=3", "mixture", "extremizer"])
    def test_dilation_invariance(self, function_id: str) -> None:
        qn = resolve_preset("anisotropic:1,2@max").norm
        alpha = 2.0
        u = build_function(function_id, qn, alpha)
        for deficit in (shannon_deficit, shannon_via_b_deficit):
            base = deficit(u, alpha)
            for lam in DILATION_LAMBDAS:
                dilated = deficit(dilate_function(u, lam), alpha)
                assert abs(dilated.deficit - base.deficit) <= 1e-6
        for lam in DILATION_LAMBDAS:
            assert kos_deficit(dilate_function(u, lam), alpha).passed

    def test_kos_profile_dilates_are_not_extremal(self, euclidean_line: QuasiNorm) -> None:
        phi = build_function("kos-profile", euclidean_line, 2.0)
        for lam in DILATION_LAMBDAS:
            assert kos_deficit(dilate_function(phi, lam), 2.0).deficit > 1e-4

    def test_constant_gap_identity(self, preset: Preset) -> None:
        alpha = 2.0
        consts = sharp_constants(preset.norm, alpha)
        assert consts.log_ratio is not None
        expected = (consts.q / alpha) * consts.log_ratio
        for function_id in ("gaussian:c=1", "bump", "mixture"):
            u = build_function(function_id, preset.norm, alpha)
            gap = shannon_via_b_deficit(u, alpha).deficit - shannon_deficit(u, alpha).deficit
            assert gap == pytest.approx(expected, abs=1e-8)
            assert gap >= 0

    def test_near_extremal_perturbations(self, euclidean_plane: QuasiNorm) -> None:
        deficits = [
            shannon_deficit(build_function(f"perturbed:eps={eps}", euclidean_plane, 2.0), 2.0)
            for eps in (0.3, 0.1, 0.03)
        ]
        assert all(record.passed for record in deficits)
        assert deficits[0].deficit > deficits[1].deficit > deficits[2].deficit
        assert deficits[2].deficit >= -3.0 * deficits[2].error_estimate

    def test_lambda_optimization_on_extremizer(self, euclidean_line: QuasiNorm) -> None:
        u = build_function("extremizer", euclidean_line, 2.0)
        check = lambda_optimization_check(u, 2.0, np.geomspace(0.05, 5.0, 200))
        assert check.lambda_star == pytest.approx(math.sqrt(1.0 / (2.0 * math.pi)), rel=1e-7)
        assert check.consistent
        assert abs(check.optimal_bound - check.closed_form) <= 1e-10


class TestSuite:
    def test_empty_function_list(self, line_preset: Preset) -> None:
        report = run_suite(SuiteConfig(presets=[line_preset], functions=[]))
        assert report.records == []
        assert report.passed

    def test_nonnegativity_sweep(self) -> None:
        config = SuiteConfig(
            presets=[resolve_preset(name) for name in DEFAULT_PRESETS],
            functions=list(DEFAULT_FUNCTIONS),
        )
        report = run_suite(config)
        assert len(report.records) >= 150
        assert report.failed_records == []
        assert report.passed and not report.budget_exhausted
        keys = [record.sort_key for record in report.records]
        assert keys == sorted(keys)
        assert all(entry.inequality != "KOS" for entry in report.skipped)

    def test_alpha_below_one_skips_kos(self, line_preset: Preset) -> None:
        config = SuiteConfig(presets=[line_preset], functions=["gaussian:c=1"], alphas=[0.5])
        report = run_suite(config)
        assert {record.inequality for record in report.records} == {"Shannon"}
        assert {entry.inequality for entry in report.skipped} == {"ShannonViaB", "KOS"}
        assert report.passed

    def test_default_alphas_extend_without_kos(self, line_preset: Preset) -> None:
        config = SuiteConfig(presets=[line_preset], functions=["bump"], inequalities=["Shannon"])
        assert config.alpha_grid == [0.5, 1.0, 1.5, 2.0, 3.0]
        assert len(run_suite(config).records) == 5

    def test_configuration_errors_abort_before_computation(self, line_preset: Preset) -> None:
        with patch("app.verify.evaluate_functionals") as mock_evaluate:
            with pytest.raises(ConfigurationError):
                run_suite(SuiteConfig(presets=[line_preset], functions=["bump", "sinc"]))
            mock_evaluate.assert_not_called()

    def test_constant_override_fails_records(self, line_preset: Preset) -> None:
        config = SuiteConfig(
            presets=[line_preset],
            functions=["extremizer"],
            alphas=[2.0],
            constant_overrides={"A": 1.0},
        )
        report = run_suite(config)
        assert not report.passed
        assert [record.inequality for record in report.failed_records] == ["Shannon"]

    def test_budget_exhaustion_returns_partial_report(self, line_preset: Preset) -> None:
        partial = IntegrationResult(0.3, 0.1, 42)
        with patch(
            "app.verify.evaluate_functionals",
            side_effect=BudgetExceededError("out of budget", partial=partial),
        ):
            report = run_suite(SuiteConfig(presets=[line_preset], functions=["bump"]))
        assert report.budget_exhausted
        assert not report.passed

    def test_parallel_suite_matches_serial(self, line_preset: Preset) -> None:
        functions = ["gaussian:c=1", "bump", "mixture"]
        serial = run_suite(SuiteConfig(presets=[line_preset], functions=functions))
        parallel = run_suite(
            SuiteConfig(presets=[line_preset], functions=functions, budgets=Budgets(workers=4))
        )
        assert parallel.records == serial.records
        assert parallel.skipped == serial.skipped

    def test_scan_cardinality_and_equality_rows(self, line_preset: Preset) -> None:
        config = SuiteConfig(
            presets=[line_preset], functions=["extremizer", "gaussian:c=3"], alphas=[1.5, 2.0, 3.0]
        )
        rows = scan(config)
        assert len(rows) == 18
        assert all(row.status == "ok" for row in rows)
        for row in rows:
            if row.function_id == "extremizer" and row.inequality == "Shannon":
                assert row.deficit is not None and abs(row.deficit) <= 1e-6

    def test_scan_keeps_skipped_rows(self, line_preset: Preset) -> None:
        rows = scan(SuiteConfig(presets=[line_preset], functions=["kos-profile"], alphas=[2.0]))
        status = {row.inequality: row.status for row in rows}
        assert status == {"Shannon": "skipped", "ShannonViaB": "skipped", "KOS": "ok"}
        assert all(row.deficit is None for row in rows if row.status == "skipped")
