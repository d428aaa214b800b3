"""
Subcommand pipelines of the bandlimit lab.

Each pipeline reads the run configuration, computes its experiment through
the math modules and stages CSV tables, a JSON summary and plot data in
the run's output directory. Pipelines are registered on ``commands`` with
the ``@commands.command(name)`` decorator and looked up by the runner.

Available subcommands:
- spectrum: k_L, top frequency and Weyl/Hörmander ratios per bandwidth
- kernel: off-diagonal decay profiles and Bernstein ratios
- mz, interp: frame and Riesz bounds of a point family
- concentration: plateau scan of the concentration operator
- density: Beurling-Landau density estimates
- fekete, equidist: approximate Fekete families and their properties
- admissible: measured product-property constant
"""

import asyncio
import logging
import math
import time
from contextlib import asynccontextmanager
from dataclasses import dataclass
from typing import Any, AsyncIterator, Awaitable, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..concentration import concentration_spectrum, plateau_scan, trace_identities
from ..config import ExperimentConfig
from ..density import density_estimate
from ..event_handler import STAGE_FAILED, STAGE_FINISHED, STAGE_STARTED, EventEmitter
from ..families import (
    TriangularFamily,
    extract_separated_subfamily,
    format_family,
    make_grid_family,
    make_random_family,
    perturb_family,
    read_family,
)
from ..fekete import (
    CapPanel,
    FeketeResult,
    approximate_fekete,
    default_cap_panel,
    dilated_family_check,
    dilated_level,
    equidistribution_test,
    product_property_check,
    weighted_reconstruction,
)
from ..kernels import KernelSpec, bernstein_ratio, decay_fit, diagonal_ratio, evaluate_function, random_coefficients
from ..manifold import SpectralManifold, create_manifold, eigenbasis, weyl_ratio
from ..outputs import OutputDirectory
from ..sampling import (
    FrameBounds,
    RieszBounds,
    is_empirically_interpolating,
    is_empirically_mz,
    min_norm_interpolant,
    sampling_rows,
)
from ..utils import BandwidthTooSmallError, run_in_threads

logger = logging.getLogger(__name__)

SAMPLING_COLUMNS = ("L", "k_L", "m_L", "A", "B", "B_over_A", "a", "b", "s", "eta")
RECONSTRUCTION_PROBES = 64


@dataclass
class PipelineContext:
    """Everything a pipeline needs: the config, its manifold, the staged outputs and the event bus."""

    config: ExperimentConfig
    manifold: SpectralManifold
    output: OutputDirectory
    events: EventEmitter

    @property
    def levels(self) -> List[float]:
        return sorted(float(L) for L in self.config.L)

    @property
    def radii(self) -> List[float]:
        return sorted(float(R) for R in self.config.R)

    @asynccontextmanager
    async def stage(self, name: str) -> AsyncIterator[None]:
        """Time a pipeline stage and report it on the event bus."""
        await self.events.emit_stage(STAGE_STARTED, name)
        start = time.perf_counter()
        try:
            yield
        except Exception as e:
            await self.events.emit_stage(STAGE_FAILED, name, error=str(e))
            raise
        await self.events.emit_stage(STAGE_FINISHED, name, seconds=time.perf_counter() - start)


Pipeline = Callable[[PipelineContext], Awaitable[None]]


class CommandTable:
    """Registry of subcommand pipelines, filled by decorating coroutines."""

    def __init__(self):
        self._pipelines: Dict[str, Pipeline] = {}

    def command(self, name: str) -> Callable[[Pipeline], Pipeline]:
        def register(pipeline: Pipeline) -> Pipeline:
            if name in self._pipelines:
                raise ValueError(f"subcommand {name!r} registered twice")
            self._pipelines[name] = pipeline
            return pipeline

        return register

    def __getitem__(self, name: str) -> Pipeline:
        return self._pipelines[name]

    def __contains__(self, name: object) -> bool:
        return name in self._pipelines

    def __iter__(self) -> Iterator[str]:
        return iter(self._pipelines)

    def __len__(self) -> int:
        return len(self._pipelines)

    def items(self) -> List[Tuple[str, Pipeline]]:
        return list(self._pipelines.items())


commands = CommandTable()


def _label(L: float) -> str:
    return f"{L:g}"


def _fekete_options(config: ExperimentConfig) -> Dict[str, Any]:
    return {
        "candidate_factor": config.candidate_factor,
        "exchange_rounds": config.exchange_rounds,
        "seed": config.seed,
        "exhaustive_limit": config.exhaustive_limit,
    }


async def _fekete_results(ctx: PipelineContext, levels: Sequence[float]) -> Dict[float, FeketeResult]:
    options = _fekete_options(ctx.config)
    levels = sorted(set(float(L) for L in levels))
    results = await run_in_threads(lambda L: approximate_fekete(ctx.manifold, L, **options), levels)
    return dict(zip(levels, results))


async def build_family(ctx: PipelineContext, levels: Optional[Sequence[float]] = None) -> TriangularFamily:
    """
    The point family the config asks for, at the configured levels.

    ``family_in`` takes precedence over ``family``; ``target_s`` extracts a
    separated subfamily and ``family_out`` stages the result as a family file.
    """
    config, M = ctx.config, ctx.manifold
    levels = ctx.levels if levels is None else sorted(float(L) for L in levels)
    async with ctx.stage("family"):
        if config.family_in:
            family = read_family(config.family_in, M)
        elif config.family == "grid":
            family = make_grid_family(M, levels, config.nu)
        elif config.family == "random":
            family = make_random_family(M, levels, config.nu, config.seed)
        elif config.family == "perturbed":
            family = perturb_family(M, make_grid_family(M, levels, config.nu), config.perturbation, config.seed)
        else:
            results = await _fekete_results(ctx, levels)
            family = TriangularFamily(M, {L: r.nodes for L, r in results.items()}, "fekete")
        if config.target_s is not None:
            family = extract_separated_subfamily(M, family, config.target_s)
        logger.info(f"Family '{family.provenance}' with levels {family.bandwidths}")
    if config.family_out:
        ctx.output.add_text(config.family_out, format_family(family))
    return family


@commands.command("spectrum")
async def spectrum(ctx: PipelineContext) -> None:
    """Eigenspace dimension k_L, top frequency and diagonal asymptotics per bandwidth."""
    M = ctx.manifold
    z0 = M.base_point[None, :]

    def level_row(L: float) -> Dict[str, Any]:
        basis = eigenbasis(M, L)
        return {
            "L": L,
            "k_L": basis.k_L,
            "lambda_max": float(basis.frequencies.max()),
            "weyl_ratio": weyl_ratio(M, L),
            "diagonal_ratio": float(diagonal_ratio(M, L, z0)[0]),
        }

    async with ctx.stage("eigenbasis"):
        rows = await run_in_threads(level_row, ctx.levels)

    top = rows[-1]
    ctx.output.add_csv("spectrum.csv", rows)
    ctx.output.add_json(
        "spectrum.json",
        {
            "manifold": M.name,
            "dimension": M.dimension,
            "L": top["L"],
            "k_L": top["k_L"],
            "lambda_max": top["lambda_max"],
            "weyl_ratio": {r["L"]: r["weyl_ratio"] for r in rows},
        },
    )
    ctx.output.add_plot_data("spectrum_counts.dat", [r["L"] for r in rows], [r["k_L"] for r in rows])


def _kernel_spec(config: ExperimentConfig, L: float) -> KernelSpec:
    if config.kernel_filter == "sharp":
        return KernelSpec.sharp(L)
    if config.kernel_filter == "bochner_riesz":
        return KernelSpec.bochner_riesz(L, config.decay_order)
    if config.kernel_filter == "smooth":
        return KernelSpec.smooth(L, config.eps)
    return KernelSpec.smooth_squared(L, config.eps)


@commands.command("kernel")
async def kernel(ctx: PipelineContext) -> None:
    """Decay profiles |B(z0, w)| against the bound C_N L^m (1 + L d)^(-N), plus Bernstein ratios."""
    config, M = ctx.config, ctx.manifold
    levels = ctx.levels
    spec = _kernel_spec(config, levels[0])

    async with ctx.stage("decay"):
        fit = await asyncio.to_thread(decay_fit, M, spec, levels, config.decay_order)
    async with ctx.stage("bernstein"):
        ratios = await run_in_threads(lambda L: bernstein_ratio(M, L, config.trials, config.seed), levels)

    rows = []
    m, N = M.dimension, config.decay_order
    for L in levels:
        d, values = fit.profiles[L]
        bound = fit.constant * L ** m / (1.0 + L * d) ** N
        rows.extend(
            {"L": L, "d": float(di), "kernel_value": float(v), "bound_value": float(b)}
            for di, v, b in zip(d, values, bound)
        )
        ctx.output.add_plot_data(f"kernel_profile_L{_label(L)}.dat", d, np.abs(values))

    ctx.output.add_csv("kernel_decay.csv", rows, ["L", "d", "kernel_value", "bound_value"])
    ctx.output.add_json(
        "kernel.json",
        {
            "filter": fit.filter,
            "order": fit.order,
            "constant": fit.constant,
            "spread": fit.spread,
            "per_level": fit.per_level,
            "bernstein_ratio": dict(zip(levels, ratios)),
        },
    )


async def _sampling_table(ctx: PipelineContext, family: TriangularFamily) -> List[Dict[str, Any]]:
    M = ctx.manifold
    return await run_in_threads(lambda L: sampling_rows(M, family, [L])[0], ctx.levels)


def _sampling_verdicts(config: ExperimentConfig, rows: Sequence[Dict[str, Any]]) -> Dict[str, Any]:
    frames = [FrameBounds(r["L"], r["k_L"], r["m_L"], r["A"], r["B"]) for r in rows]
    riesz = [RieszBounds(r["L"], r["m_L"], r["a"], r["b"]) for r in rows if math.isfinite(r["a"])]
    return {
        "empirically_mz": is_empirically_mz(frames, config.mz_factor),
        "empirically_interpolating": len(riesz) == len(rows) and is_empirically_interpolating(riesz),
        "min_A": min(f.A for f in frames),
        "max_B": max(f.B for f in frames),
        "min_a": min((b.a for b in riesz), default=math.nan),
        "mz_factor": config.mz_factor,
    }


@commands.command("mz")
async def mz(ctx: PipelineContext) -> None:
    """Frame (M-Z) and Riesz bounds of the configured family across the L grid."""
    family = await build_family(ctx)
    async with ctx.stage("bounds"):
        rows = await _sampling_table(ctx, family)

    ctx.output.add_csv("mz.csv", rows, SAMPLING_COLUMNS)
    ctx.output.add_json("mz.json", {"provenance": family.provenance, **_sampling_verdicts(ctx.config, rows)})
    ctx.output.add_plot_data("mz_condition.dat", [r["L"] for r in rows], [r["B_over_A"] for r in rows])


@commands.command("interp")
async def interp(ctx: PipelineContext) -> None:
    """Sampling table plus minimal-norm interpolation of a random f ∈ E_L from its samples."""
    config, M = ctx.config, ctx.manifold
    family = await build_family(ctx)
    async with ctx.stage("bounds"):
        rows = await _sampling_table(ctx, family)

    def recover(row: Dict[str, Any]) -> Dict[str, Any]:
        L = row["L"]
        pts = family[L]
        coeffs = random_coefficients(M, L, 1, config.seed)[:, 0]
        interpolant = min_norm_interpolant(M, pts, L, evaluate_function(M, L, coeffs, pts))
        return {
            **row,
            "residual": interpolant.residual,
            "coefficient_error": float(np.max(np.abs(interpolant.basis_coefficients - coeffs))),
            "norm_sq": interpolant.norm_sq,
            "degenerate": interpolant.degenerate,
        }

    async with ctx.stage("interpolation"):
        rows = await run_in_threads(recover, rows)

    columns = SAMPLING_COLUMNS + ("residual", "coefficient_error", "norm_sq", "degenerate")
    ctx.output.add_csv("interp.csv", rows, columns)
    ctx.output.add_json(
        "interp.json",
        {
            "provenance": family.provenance,
            **_sampling_verdicts(config, rows),
            "max_residual": max(r["residual"] for r in rows),
            "max_coefficient_error": max(r["coefficient_error"] for r in rows),
            "degenerate_levels": [r["L"] for r in rows if r["degenerate"]],
        },
    )
    ctx.output.add_plot_data("interp_riesz.dat", [r["L"] for r in rows], [r["a"] for r in rows])


@commands.command("concentration")
async def concentration(ctx: PipelineContext) -> None:
    """Plateau scan of the modified concentration operator over B(ξ, R/L)."""
    config, M = ctx.config, ctx.manifold
    resolution = tuple(config.ball_resolution)
    family = await build_family(ctx)

    async with ctx.stage("plateau"):
        report = await asyncio.to_thread(
            plateau_scan,
            M,
            ctx.levels,
            ctx.radii,
            config.eps,
            gammas=config.gamma,
            deltas=config.delta,
            family=family,
            t=config.t,
            rho=config.rho,
            resolution=resolution,
        )

    L0, R0 = ctx.levels[0], ctx.radii[0]
    L1, R1 = ctx.levels[-1], ctx.radii[-1]
    async with ctx.stage("trace_identities"):
        identities, top = await asyncio.gather(
            asyncio.to_thread(trace_identities, M, L0, config.eps, report.center, R0 / L0, resolution),
            asyncio.to_thread(
                concentration_spectrum, M, L1, config.eps, report.center, R1 / L1, config.gamma, config.delta, resolution
            ),
        )

    rows = []
    for row in report.rows:
        record = {"L": row.L, "R": row.R, "eps": row.eps, "T1": row.T1, "T2": row.T2, "T1_minus_T2": row.T1_minus_T2}
        record["trace_ratio"] = row.trace_ratio
        record.update({f"count_gt_{g:g}": row.counts_above[g] for g in config.gamma})
        record.update({f"dilated_count_ge_{d:g}": row.dilated_counts[d] for d in config.delta})
        record.update({"N_L": row.N_L, "n_L": row.n_L})
        rows.append(record)

    ctx.output.add_csv("concentration.csv", rows)
    ctx.output.add_json(
        "concentration.json",
        {
            "dimension": report.dimension,
            "rho": report.rho,
            "t": report.rows[0].t,
            "exponents": report.exponents,
            "spreads": report.spreads,
            "trace_identities": {
                "L": L0,
                "R": R0,
                "T1_matrix": identities.T1_matrix,
                "T1_kernel": identities.T1_kernel,
                "T2_matrix": identities.T2_matrix,
                "T2_kernel": identities.T2_kernel,
            },
        },
    )
    ctx.output.add_plot_data(
        f"concentration_eigenvalues_L{_label(L1)}_R{_label(R1)}.dat",
        np.arange(1, top.size + 1),
        top.eigenvalues,
    )
    top_rows = [row for row in report.rows if row.L == L1]
    ctx.output.add_plot_data(
        f"concentration_growth_L{_label(L1)}.dat", [r.R for r in top_rows], [r.T1_minus_T2 for r in top_rows]
    )


@commands.command("density")
async def density(ctx: PipelineContext) -> None:
    """Local density ratios on the (L, R, ξ) grid and the D⁻/D⁺ surrogates."""
    M = ctx.manifold
    family = await build_family(ctx)
    async with ctx.stage("density"):
        report = await asyncio.to_thread(density_estimate, M, family, ctx.levels, ctx.radii)

    axes = [f"xi_{i + 1}" for i in range(M.chart_dim)]
    rows = []
    for cell in report.cells:
        centers = report.centers[cell.L]
        for index, (center, ratio) in enumerate(zip(centers, cell.ratios)):
            record = {"L": cell.L, "R": cell.R, "center": index}
            record.update(zip(axes, (float(x) for x in center)))
            record["ratio"] = float(ratio)
            rows.append(record)

    ctx.output.add_csv("density.csv", rows, ["L", "R", "center", *axes, "ratio"])
    ctx.output.add_json(
        "density.json",
        {
            "dminus": report.dminus,
            "dplus": report.dplus,
            "dminus_r_first": report.dminus_r_first,
            "dplus_r_first": report.dplus_r_first,
            "mass": report.mass,
            "grid_meta": report.grid_meta(),
        },
    )
    top = ctx.levels[-1]
    cells = [report.cell(top, R) for R in ctx.radii]
    ctx.output.add_plot_data(f"density_min_L{_label(top)}.dat", ctx.radii, [c.minimum for c in cells])
    ctx.output.add_plot_data(f"density_max_L{_label(top)}.dat", ctx.radii, [c.maximum for c in cells])


async def _product_constant(ctx: PipelineContext) -> Optional[float]:
    config = ctx.config
    if config.C_prod is not None:
        return config.C_prod
    report = await asyncio.to_thread(
        product_property_check, ctx.manifold, ctx.levels[0], config.eps, config.C_grid, seed=config.seed
    )
    return report.C


@commands.command("fekete")
async def fekete(ctx: PipelineContext) -> None:
    """
    Approximate Fekete families with structure checks.

    Besides the configured levels, the dilated levels ⌊(1±ε)L⌋ are computed
    so that Z_ε is checked for frame bounds and Z_{−ε} for Riesz bounds.
    The weighted reconstruction uses nodes at ⌊(1+ε)L⌋ and the product
    constant from ``C_prod`` or, when unset, the measured one.
    """
    config, M = ctx.config, ctx.manifold
    eps = config.eps
    levels = ctx.levels
    dilated = [L for L in levels if eps > 0 and dilated_level(L, -eps) >= 1]
    needed = set(levels)
    for L in dilated:
        needed.update((dilated_level(L, eps), dilated_level(L, -eps)))

    async with ctx.stage("fekete"):
        results = await _fekete_results(ctx, needed)
    family = TriangularFamily(M, {L: r.nodes for L, r in results.items()}, "fekete")

    checks = []
    if dilated:
        async with ctx.stage("dilated"):
            checks = dilated_family_check(M, family, dilated, eps)

    weighted: Dict[float, Optional[float]] = {}
    C_prod = None
    if eps > 0:
        async with ctx.stage("weighted"):
            C_prod = await _product_constant(ctx)
            if not C_prod:
                logger.warning(f"product constant {C_prod} is unusable; skipping weighted reconstruction")
            else:
                probes = M.low_discrepancy_points(RECONSTRUCTION_PROBES, config.seed)
                for L in levels:
                    nodes = results[float(dilated_level(L, eps))]
                    coeffs = random_coefficients(M, L, 1, config.seed)[:, 0]
                    try:
                        approx = weighted_reconstruction(M, nodes, L, eps, C_prod, coeffs, probes, config.cutoff)
                    except BandwidthTooSmallError as e:
                        logger.warning(f"weighted reconstruction skipped at L={L}: {e}")
                        weighted[L] = None
                        continue
                    exact = evaluate_function(M, L, coeffs, probes)
                    weighted[L] = float(np.max(np.abs(approx - exact)))

    rows = [
        {
            "L": L,
            "k_L": r.k_L,
            "log_abs_det": r.log_abs_det,
            "greedy_log_abs_det": r.greedy_log_abs_det,
            "separation": r.separation,
            "lagrange_sup": r.lagrange_sup,
            "lagrange_sup_candidates": r.lagrange_sup_candidates,
            "candidate_count": r.candidate_count,
            "exchange_passes": r.exchange_passes,
            "swaps": r.swaps,
            "certified_optimal": r.certified_optimal,
        }
        for L, r in sorted(results.items())
    ]
    ctx.output.add_csv("fekete.csv", rows)
    ctx.output.add_text("fekete_nodes.txt", format_family(family))
    if checks:
        ctx.output.add_csv(
            "fekete_dilated.csv",
            [
                {"L": c.L, "L_plus": c.L_plus, "L_minus": c.L_minus, "A": c.frame.A, "B": c.frame.B, "a": c.riesz.a, "b": c.riesz.b}
                for c in checks
            ],
        )
    ctx.output.add_json(
        "fekete.json",
        {
            "levels": [r["L"] for r in rows],
            "min_separation": min(r.separation for r in results.values()),
            "max_lagrange_sup": max(r.lagrange_sup for r in results.values()),
            "dilated_frame_positive": all(c.frame.A > 0 for c in checks) if checks else None,
            "dilated_riesz_positive": all(c.riesz.a > 0 for c in checks) if checks else None,
            "C_prod": C_prod,
            "weighted_error": weighted,
        },
    )
    top = results[levels[-1]]
    ctx.output.add_plot_data(f"fekete_history_L{_label(levels[-1])}.dat", np.arange(len(top.history)), top.history)


@commands.command("equidist")
async def equidist(ctx: PipelineContext) -> None:
    """
    Weak-* equidistribution of a node family against normalized volume.

    Tests ``family_in`` when given, otherwise freshly computed Fekete nodes.
    """
    config, M = ctx.config, ctx.manifold
    if config.family_in:
        family = await build_family(ctx)
    else:
        async with ctx.stage("fekete"):
            results = await _fekete_results(ctx, ctx.levels)
        family = TriangularFamily(M, {L: r.nodes for L, r in results.items()}, "fekete")

    panel = default_cap_panel(M)
    if config.cap_radii is not None:
        panel = CapPanel(panel.centers, tuple(config.cap_radii))
    async with ctx.stage("equidistribution"):
        report = equidistribution_test(M, family, ctx.levels, cap_panel=panel)

    n = len(report.function_names)
    rows = []
    for row in report.rows:
        record = {"L": row.L, "m_L": row.m_L, "discrepancy": row.discrepancy}
        record.update({f"moment_err_{i + 1}": e for i, e in enumerate(row.moment_errors)})
        record["mass_error"] = row.mass_error
        rows.append(record)

    ctx.output.add_csv("equidist.csv", rows, ["L", "m_L", "discrepancy", *(f"moment_err_{i + 1}" for i in range(n)), "mass_error"])
    first, last = report.rows[0], report.rows[-1]
    ctx.output.add_json(
        "equidist.json",
        {
            "provenance": family.provenance,
            "function_names": list(report.function_names),
            "cap_count": report.cap_count,
            "discrepancy_decreased": last.discrepancy < first.discrepancy,
            "moments_decreased": all(b < a for a, b in zip(first.moment_errors, last.moment_errors)),
            "max_mass_error": max(abs(r.mass_error) for r in report.rows),
        },
    )
    ctx.output.add_plot_data("equidist_discrepancy.dat", [r.L for r in report.rows], [r.discrepancy for r in report.rows])


@commands.command("admissible")
async def admissible(ctx: PipelineContext) -> None:
    """Smallest C on the grid with E_L · E_{εL} ⊂ E_{L(1+Cε)}, per bandwidth."""
    config, M = ctx.config, ctx.manifold
    async with ctx.stage("product_property"):
        reports = await run_in_threads(
            lambda L: product_property_check(M, L, config.eps, config.C_grid, config.trials, config.seed),
            ctx.levels,
        )

    rows = [
        {"L": report.L, "eps": report.eps, "C": C, "residual": residual}
        for report in reports
        for C, residual in sorted(report.residuals.items())
    ]
    measured = [r.C for r in reports]
    ctx.output.add_csv("admissible.csv", rows, ["L", "eps", "C", "residual"])
    ctx.output.add_json(
        "admissible.json",
        {
            "C": None if any(C is None for C in measured) else max(measured),
            "eps": config.eps,
            "per_level": {r.L: r.C for r in reports},
            "trials": config.trials,
        },
    )
    top = reports[-1]
    grid = sorted(top.residuals)
    ctx.output.add_plot_data(f"admissible_residual_L{_label(top.L)}.dat", grid, [top.residuals[C] for C in grid])


def create_context(config: ExperimentConfig, events: EventEmitter, output_dir: Optional[str] = None) -> PipelineContext:
    """Context for one run; the output directory defaults to ``config.output_dir``."""
    return PipelineContext(
        config=config,
        manifold=create_manifold(config.manifold),
        output=OutputDirectory(output_dir or config.output_dir),
        events=events,
    )


def setup_commands(registry: Dict[str, Pipeline]) -> Dict[str, Pipeline]:
    """
    Register every subcommand pipeline in a runner's registry.

    Args:
        registry: Mapping to fill, name to pipeline coroutine

    Returns:
        The same registry, for chaining
    """
    registry.update(commands.items())
    logger.debug(f"Registered subcommands: {sorted(registry)}")
    return registry
