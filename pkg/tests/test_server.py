"""Tests for the MCP server module and the command line."""

import json

import pytest

from reflective_genera.__main__ import build_parser, main, read_gram
from reflective_genera.server import call_tool, list_tools


async def _call(name: str, arguments: dict) -> dict:
    result = await call_tool(name, arguments)
    assert len(result) == 1
    return json.loads(result[0].text)


# =============================================================================
# MCP tools
# =============================================================================


class TestServer:
    """Tests for tool registration and dispatch."""

    async def test_list_tools(self):
        """All tools are registered."""
        tools = await list_tools()
        assert {t.name for t in tools} == {
            "genus_symbol",
            "genus_mass",
            "genus_roots",
            "genus_classes",
            "genus_transform",
            "bounds_tables",
            "bounds_ratio",
            "classify",
            "cache_stats",
        }

    async def test_call_tool_unknown(self):
        """Calling an unknown tool returns an error."""
        data = await _call("unknown_tool", {})
        assert "error" in data

    async def test_genus_symbol(self):
        """The symbol tool reports the square free flags."""
        data = await _call("genus_symbol", {"gram": [[2, -1], [-1, 2]]})
        assert data["symbol"] == "II(3^{-1})"
        assert data["determinant"] == 3
        assert data["even"] is True
        assert data["strongly_square_free"] is True

    async def test_genus_mass(self):
        """Exact mass as a string plus a float approximation."""
        data = await _call("genus_mass", {"symbol": "I(1_4^{+4})", "rank": 4})
        assert data["mass"] == "1/384"
        assert data["approx"] == pytest.approx(1 / 384)
        assert data["standard_mass"] > 0

    async def test_genus_roots(self):
        """Root system summary of D4."""
        gram = [[2, 0, -1, 0], [0, 2, -1, 0], [-1, -1, 2, -1], [0, 0, -1, 2]]
        data = await _call("genus_roots", {"gram": gram})
        assert data["reflective"] is True
        assert data["total_roots"] == 48
        assert data["norm_two_roots"] == 24

    async def test_genus_classes(self):
        """A class number one genus is totally reflective."""
        data = await _call("genus_classes", {"symbol": "I(1_4^{+4})", "rank": 4})
        assert data["class_number"] == 1
        assert data["totally_reflective"] is True
        assert data["reflective_mass"] == "1/384"

    async def test_genus_classes_budget(self):
        """Budget failures come back as an error payload."""
        data = await _call(
            "genus_classes", {"symbol": "I(1_4^{+4})", "rank": 4, "class_budget": 0}
        )
        assert data["success"] is False
        assert "error" in data

    async def test_genus_transform(self):
        """A2 is its own partial dual at 3; unknown kinds are errors."""
        data = await _call("genus_transform", {"symbol": "II(3^{-1})", "rank": 2, "p": 3,
                                               "kind": "partial_dual"})
        assert data["symbol"] == "II(3^{-1})"
        bad = await _call("genus_transform", {"symbol": "II(3^{-1})", "rank": 2, "p": 3,
                                              "kind": "mirror"})
        assert "error" in bad

    async def test_invalid_symbol(self):
        """Parse errors are reported with the tool context."""
        data = await _call("genus_mass", {"symbol": "II(3^{+1})", "rank": 1})
        assert "error" in data
        assert data["context"]["tool"] == "genus_mass"

    async def test_bounds_ratio(self):
        """The ratio tool accepts a factorization string."""
        data = await _call("bounds_ratio", {"shape": "3*5*7", "dim": 3})
        assert data["determinant"] == 105
        assert data["M"]["exact"] == "1/8"

    async def test_cache_stats(self):
        """Cache statistics list every cache."""
        data = await _call("cache_stats", {})
        assert "mass_cache" in data["caches"]


# =============================================================================
# Command line
# =============================================================================


class TestCommandLine:
    """Tests for the reflective-genera command."""

    def test_parser(self):
        """Subcommands and their defaults."""
        args = build_parser().parse_args(["classify", "--dim", "3", "--stage", "ssf"])
        assert args.dim == 3
        assert args.stage == "ssf"
        assert args.jobs is None
        args = build_parser().parse_args(["bounds", "ratio", "3^2*5", "--dim", "4"])
        assert args.bounds_command == "ratio"
        assert args.ratio_dim == 4

    def test_read_gram(self, tmp_path, a2):
        """Gram files may be text rows or JSON records."""
        text = tmp_path / "a2.txt"
        text.write_text("2 -1\n-1 2\n")
        record = tmp_path / "a2.json"
        record.write_text(json.dumps({"rank": 2, "entries": [2, -1, -1, 2]}))
        assert read_gram(str(text)) == a2
        assert read_gram(str(record)) == a2

    def test_mass(self, capsys):
        """The mass command prints the exact mass."""
        main(["mass", "I(1_4^{+4})", "--rank", "4"])
        assert capsys.readouterr().out.strip() == "1/384"

    def test_symbol(self, tmp_path, capsys):
        """The symbol command prints symbol, determinant and flags."""
        path = tmp_path / "a2.txt"
        path.write_text("2 -1\n-1 2\n")
        main(["symbol", str(path)])
        assert capsys.readouterr().out.strip() == "II(3^{-1})  det=3  (strongly square free)"

    def test_roots(self, tmp_path, capsys):
        """The roots command prints the component summary."""
        path = tmp_path / "a2.txt"
        path.write_text("2 -1\n-1 2\n")
        main(["roots", str(path)])
        expected = "G2^(3), span 2/2, reflective=true, norm 2 roots 6"
        assert capsys.readouterr().out.strip() == expected

    def test_bounds_ratio(self, capsys):
        """The ratio subcommand prints JSON."""
        main(["bounds", "ratio", "3*5*7", "--dim", "3"])
        data = json.loads(capsys.readouterr().out)
        assert data["dim"] == 3

    def test_errors_exit_nonzero(self):
        """Domain errors exit with status 1."""
        with pytest.raises(SystemExit) as exc:
            main(["mass", "II(3^{+1})", "--rank", "1"])
        assert exc.value.code == 1
