"""Tests for the l2man MCP server tools."""

import json
from unittest.mock import AsyncMock, MagicMock, patch

import pytest

from l2man import experiments, isometry_group, server
from l2man.errors import NotAnIsometry

SPHERE = json.dumps({"sphere": {"dim": 2}})
HYPERBOLIC = json.dumps({"hyperbolic": {"dim": 2}})


def _make_space(m: int = 4) -> str:
    return json.dumps({"uniform": m})


class TestListExperiments:
    async def test_lists_everything(self):
        result = await server.list_experiments()
        assert result["total"] == len(experiments.EXPERIMENTS)
        names = [item["name"] for item in result["experiments"]]
        assert names == list(experiments.EXPERIMENTS)
        assert all(item["description"] for item in result["experiments"])
        assert "hilbert" in result["gallery_cases"]
        assert "eta_projection" in result["builtin_oracles"]


class TestRunExperiment:
    async def test_success(self):
        config = json.dumps({"experiment": "space", "space": {"weights": [0.5, 0.5]}, "seed": 2})
        result = await server.run_experiment(config)
        assert result["success"] is True
        assert result["passed"] is True
        assert result["report"]["experiment"] == "space"
        assert result["report"]["seed"] == 2

    async def test_invalid_json(self):
        result = await server.run_experiment("{not json")
        assert result["success"] is False
        assert "Invalid config" in result["error"]
        assert "line 1" in result["error"]

    async def test_unknown_experiment(self):
        result = await server.run_experiment('{"experiment": "nope"}')
        assert result["success"] is False
        assert "field 'experiment'" in result["error"]

    async def test_bad_space(self):
        result = await server.run_experiment('{"experiment": "space", "space": {"uniform": 0}}')
        assert result["success"] is False
        assert "field 'space'" in result["error"]


class TestDecomposeIsometry:
    async def test_rigid(self):
        result = await server.decompose_isometry(_make_space(5), HYPERBOLIC, seed=3)
        assert result["success"] is True
        assert result["verdict"] == "RIGID"
        assert result["phi_recovered"] is True
        assert result["decomposition"]["phi"] == result["planted_phi"]

    async def test_same_seed_same_answer(self):
        first = await server.decompose_isometry(_make_space(4), SPHERE, seed=9)
        second = await server.decompose_isometry(_make_space(4), SPHERE, seed=9)
        assert first == second

    @pytest.mark.parametrize("case", ["r1", "hilbert"])
    async def test_counterexamples(self, case):
        result = await server.decompose_isometry("", SPHERE, case=case)
        assert result["success"] is True
        assert result["verdict"] == "NON_RIGID"
        assert result["reason"]

    async def test_unknown_case(self):
        result = await server.decompose_isometry(_make_space(), SPHERE, case="moebius")
        assert result["success"] is False
        assert "Unknown case" in result["error"]

    async def test_invalid_space_json(self):
        result = await server.decompose_isometry("not json", SPHERE)
        assert result["success"] is False
        assert "Invalid space JSON" in result["error"]

    async def test_invalid_manifold(self):
        result = await server.decompose_isometry(_make_space(), '{"torus": {}}')
        assert result["success"] is False
        assert "Invalid manifold" in result["error"]

    async def test_manifold_must_be_object(self):
        result = await server.decompose_isometry(_make_space(), "[1]")
        assert result["success"] is False
        assert "must be a JSON object" in result["error"]

    async def test_library_error(self):
        with patch.object(isometry_group, "decompose_with_report", MagicMock(side_effect=NotAnIsometry("boom"))):
            result = await server.decompose_isometry(_make_space(), SPHERE)
        assert result["success"] is False
        assert result["error"] == "NotAnIsometry: boom"


class TestRecoverDensity:
    async def test_default_oracle(self):
        result = await server.recover_density(_make_space(3), SPHERE, seed=1)
        assert result["success"] is True
        assert result["verdict"] == "AFFINE"
        assert result["passed"] is True
        assert len(result["eta"]) == 3

    async def test_clipped_control(self):
        result = await server.recover_density(_make_space(3), json.dumps({"euclidean": {"dim": 2}}), "builtin:clipped")
        assert result["success"] is True
        assert result["verdict"] == "NOT_AFFINE"

    async def test_unknown_oracle(self):
        result = await server.recover_density(_make_space(3), SPHERE, "builtin:nope")
        assert result["success"] is False
        assert "UnsupportedVariant" in result["error"]

    async def test_invalid_space(self):
        result = await server.recover_density('{"weights": "heavy"}', SPHERE)
        assert result["success"] is False
        assert "Invalid space" in result["error"]


class TestGalleryCase:
    @pytest.mark.parametrize("case, verdict", [("hilbert", "NON_RIGID"), ("r1", "NON_RIGID"), ("automorphism", "RIGID")])
    async def test_cases(self, case, verdict):
        result = await server.gallery_case(case)
        assert result["success"] is True
        assert result["verdict"] == verdict
        assert result["passed"] is True

    async def test_unknown_case(self):
        result = await server.gallery_case("klein-bottle")
        assert result["success"] is False
        assert "Unknown case" in result["error"]

    async def test_bad_grid(self):
        result = await server.gallery_case("hilbert", m=7)
        assert result["success"] is False
        assert "DivisibilityError" in result["error"]


class TestMain:
    def test_stdio_default(self, monkeypatch):
        monkeypatch.delenv("MCP_TRANSPORT", raising=False)
        with patch.object(server.mcp, "run") as run:
            server.main()
        run.assert_called_once_with(transport="stdio")

    def test_streamable_http(self, monkeypatch):
        monkeypatch.setenv("MCP_TRANSPORT", "streamable-http")
        with patch.object(server.mcp, "run_streamable_http_async", new_callable=AsyncMock) as run:
            server.main()
        run.assert_awaited_once()
