"""FastMCP server exposing the l2man experiments as tools."""

import asyncio
import json
import logging
import os
import sys

from mcp.server.fastmcp import FastMCP

from . import affine_maps, experiments, gallery, isometry_group
from .errors import ConfigParse, L2ManError, NonRigid
from .manifolds import Manifold, as_rng, manifold_from_json
from .measure_space import FiniteMeasureSpace, prob_space_from_json

# stdout carries the stdio transport.
logging.basicConfig(
    level=os.getenv("L2MAN_LOG_LEVEL", "INFO").upper(),
    format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    stream=sys.stderr,
)
logger = logging.getLogger(__name__)

mcp = FastMCP(
    "l2man",
    host=os.getenv("MCP_HOST", "0.0.0.0"),
    port=int(os.getenv("MCP_PORT", "9092")),
)

EXPERIMENT_HELP = {
    "space": "normalization, automorphism closure, pushforward densities, partition refinement",
    "metric": "L2 metric axioms, geodesic speed law, d_eta identities, restriction splitting",
    "angle": "numeric vs analytic Alexandrov angles and their convergence trace",
    "group": "semidirect-product laws: composition, inverse, conjugation, factorizations",
    "decompose": "recover (phi, rho) from black-box isometries, or detect non-rigidity (params.case)",
    "eta-recover": "recover the density eta of an affine map and verify the identity (params.oracle)",
    "affine": "alias of eta-recover",
    "factors": "factor constants of an affine map on a product target",
    "interleave": "interleaving isomorphism: distances and round trips",
    "dilation": "Euclidean-only surjective dilations",
    "gallery": "explicit isometries and counterexamples (params.case)",
    "suite": "the full acceptance battery",
}


# ---------------------------------------------------------------------------
# Argument parsing
#
# Tool arguments arrive as JSON strings. The _resolve_ helpers turn them into
# library objects and raise BadArgument on bad input; tools answer with
# _failed() instead of raising through FastMCP.
# ---------------------------------------------------------------------------


class BadArgument(Exception):
    """A tool argument is not valid JSON or does not describe a space or manifold."""


def _failed(message: str) -> dict:
    """Tool response for a request that could not be served."""
    return {"success": False, "error": message}


def _parse_object(text: str, what: str) -> dict:
    try:
        obj = json.loads(text)
    except (json.JSONDecodeError, TypeError) as e:
        raise BadArgument(f"Invalid {what} JSON: {e}") from e
    if not isinstance(obj, dict):
        raise BadArgument(f"{what} must be a JSON object")
    return obj


def _resolve_space(space_json: str) -> FiniteMeasureSpace:
    obj = _parse_object(space_json, "space")
    try:
        return prob_space_from_json(obj)
    except (KeyError, TypeError, ValueError) as e:
        raise BadArgument(f"Invalid space: {e}") from e


def _resolve_manifold(manifold_json: str) -> Manifold:
    obj = _parse_object(manifold_json, "manifold")
    try:
        return manifold_from_json(obj)
    except ConfigParse as e:
        raise BadArgument(f"Invalid manifold: {e.diagnostic()}") from e


# ---------------------------------------------------------------------------
# Tools
# ---------------------------------------------------------------------------


@mcp.tool()
async def list_experiments() -> dict:
    """List the experiments, gallery cases and builtin affine oracles."""
    items = [{"name": name, "description": EXPERIMENT_HELP[name]} for name in experiments.EXPERIMENTS]
    return {
        "total": len(items),
        "experiments": items,
        "gallery_cases": list(experiments.GALLERY_CASES),
        "builtin_oracles": sorted(affine_maps.BUILTIN_ORACLES),
    }


@mcp.tool()
async def run_experiment(config_json: str) -> dict:
    """Run one experiment and return its report.

    Args:
        config_json: Experiment config, e.g.
            {"experiment": "angle", "space": {"uniform": 4},
             "manifold": {"sphere": {"dim": 2}}, "seed": 1}
    """
    try:
        cfg = experiments.parse_config(config_json)
    except ConfigParse as e:
        return _failed(f"Invalid config: {e.diagnostic()}")

    try:
        report = await asyncio.to_thread(experiments.run_experiment, cfg)
    except ConfigParse as e:
        return _failed(f"Invalid config: {e.diagnostic()}")
    return {"success": True, "passed": report.passed, "report": report.to_json()}


@mcp.tool()
async def decompose_isometry(space_json: str, manifold_json: str, seed: int = 0, case: str = "") -> dict:
    """Generate a random isometry of L2(space, manifold) and recover (phi, rho) from it.

    Args:
        space_json: {"uniform": m} or {"weights": [...]}.
        manifold_json: Manifold spec, e.g. {"hyperbolic": {"dim": 2}}.
        seed: RNG seed; the same seed gives the same answer.
        case: Optional counterexample ("r1" or "hilbert") to decompose instead;
            space_json is then ignored and the grid is {"uniform": 8}.
    """
    rng = as_rng(seed)
    try:
        manifold = _resolve_manifold(manifold_json)
        if case == "hilbert":
            oracle, planted = gallery.hilbert_nonrigid(8), None
        elif case == "r1":
            oracle, planted = gallery.r1_nonrigid(manifold, 8), None
        elif case:
            raise BadArgument(f"Unknown case '{case}' (expected 'r1' or 'hilbert')")
        else:
            planted = isometry_group.random_l2_isometry(_resolve_space(space_json), manifold, rng)
            oracle = isometry_group.oracle_from_isometry(planted)
    except BadArgument as e:
        return _failed(str(e))
    except L2ManError as e:
        return _failed(f"{type(e).__name__}: {e}")

    try:
        result = await asyncio.to_thread(isometry_group.decompose_with_report, oracle, rng=rng)
    except NonRigid as e:
        return {"success": True, "verdict": "NON_RIGID", "reason": e.reason, "atom": e.atom, "message": str(e)}
    except L2ManError as e:
        logger.error(f"decompose_isometry failed: {e}")
        return _failed(f"{type(e).__name__}: {e}")

    out = {"success": True, "verdict": "RIGID", "decomposition": result.to_json()}
    if planted is not None:
        out["planted_phi"] = list(planted.phi.perm)
        out["phi_recovered"] = result.isometry.phi == planted.phi
    return out


@mcp.tool()
async def recover_density(
    space_json: str, manifold_json: str, oracle: str = "builtin:eta_projection", seed: int = 0
) -> dict:
    """Recover the density eta of a builtin affine oracle and verify it.

    Args:
        space_json: {"uniform": m} or {"weights": [...]}.
        manifold_json: Manifold spec.
        oracle: builtin:<name>; see list_experiments for the names.
        seed: RNG seed.
    """
    try:
        space = _resolve_space(space_json)
        manifold = _resolve_manifold(manifold_json)
    except BadArgument as e:
        return _failed(str(e))

    cfg = experiments.ExperimentConfig(
        "eta-recover", space.to_json(), manifold.to_json(), seed=seed, params={"oracle": oracle}
    )
    try:
        report = await asyncio.to_thread(experiments.run_experiment, cfg)
    except ConfigParse as e:
        return _failed(f"Invalid request: {e.diagnostic()}")
    details = report.details
    if "error" in details:
        return _failed(details["error"])
    return {
        "success": True,
        "verdict": report.verdict,
        "eta": details.get("eta"),
        "deviation": details.get("deviation"),
        "passed": report.passed,
        "report": report.to_json(),
    }


@mcp.tool()
async def gallery_case(case: str, m: int = 8) -> dict:
    """Run one gallery case: interleave, hilbert, r1, product, automorphism or pointwise.

    Args:
        case: Gallery case name.
        m: Grid size (even for hilbert, a multiple of 4 for r1).
    """
    if case not in experiments.GALLERY_CASES:
        return _failed(f"Unknown case '{case}'; known: {', '.join(experiments.GALLERY_CASES)}")
    cfg = experiments.ExperimentConfig("gallery", params={"case": case, "m": m})
    report = await asyncio.to_thread(experiments.run_experiment, cfg)
    if "error" in report.details:
        return _failed(report.details["error"])
    return {"success": True, "verdict": report.verdict, "passed": report.passed, "report": report.to_json()}


def main():
    """Serve the experiment tools (console script `l2man-mcp`).

    MCP_TRANSPORT=streamable-http binds MCP_HOST:MCP_PORT (0.0.0.0:9092 unless
    set); any other value serves over stdio.
    """
    transport = os.getenv("MCP_TRANSPORT", "stdio")

    if transport == "streamable-http":
        logger.info(f"Starting l2man MCP server on {mcp.settings.host}:{mcp.settings.port} (streamable-http)")
        asyncio.run(mcp.run_streamable_http_async())
    else:
        mcp.run(transport="stdio")


if __name__ == "__main__":
    main()
