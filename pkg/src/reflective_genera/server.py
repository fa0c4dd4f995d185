"""MCP Server setup and tool registration for Reflective Genera."""

import json
import logging
from typing import Any

import anyio.to_thread
from mcp.server import Server
from mcp.server.stdio import stdio_server
from mcp.types import TextContent, Tool

from reflective_genera.bounds import prime_count_bounds, prime_value_bounds, ratio_report
from reflective_genera.classes import genus_classes, reflective_mass
from reflective_genera.lattice import GramLattice
from reflective_genera.local import (
    DetShape,
    genus_symbol,
    is_square_free,
    is_strongly_square_free,
    parse_symbol,
    partial_dual_symbol,
    primitive_symbol,
    watson_symbol,
)
from reflective_genera.mass import mass, signed_determinant, standard_mass
from reflective_genera.pipeline import PipelineConfig, run_pipeline
from reflective_genera.roots import root_system
from reflective_genera.utils.cache import get_cache_stats
from reflective_genera.utils.errors import format_error_response, safe_tool_handler

logger = logging.getLogger(__name__)

# Create the MCP server instance
server = Server("reflective-genera")

_GRAM_PROPERTY = {
    "type": "array",
    "items": {"type": "array", "items": {"type": "integer"}},
    "description": "Symmetric positive definite integral Gram matrix, one list per row",
}
_SYMBOL_PROPERTIES = {
    "symbol": {
        "type": "string",
        "description": "Conway-Sloane genus symbol, e.g. II(2_II^{-2}5^{-3})",
    },
    "rank": {"type": "integer", "description": "Rank of the lattices in the genus"},
}
_DIM_PROPERTY = {"type": "integer", "enum": [3, 4], "description": "Lattice dimension"}


# =============================================================================
# Tool Handlers
# =============================================================================


def _lattice(arguments: dict[str, Any]) -> GramLattice:
    return GramLattice.from_rows(arguments["gram"])


def _symbol_summary(symbol: Any) -> dict[str, Any]:
    return {
        "symbol": str(symbol),
        "rank": symbol.rank,
        "determinant": symbol.determinant,
        "even": symbol.is_even,
        "square_free": is_square_free(symbol),
        "strongly_square_free": is_strongly_square_free(symbol),
    }


async def handle_genus_symbol(arguments: dict[str, Any]) -> dict[str, Any]:
    """Compute the genus symbol of a Gram matrix."""
    lattice = _lattice(arguments)
    symbol = await anyio.to_thread.run_sync(genus_symbol, lattice)
    return _symbol_summary(symbol)


async def handle_genus_mass(arguments: dict[str, Any]) -> dict[str, Any]:
    """Exact mass of a genus given by its symbol."""
    symbol = parse_symbol(arguments["symbol"], arguments["rank"])
    value = await anyio.to_thread.run_sync(mass, symbol)
    std = standard_mass(symbol.rank, signed_determinant(symbol.rank, symbol.determinant))
    return {
        "symbol": str(symbol),
        "mass": str(value),
        "approx": float(value),
        "standard_mass": float(std),
    }


async def handle_genus_roots(arguments: dict[str, Any]) -> dict[str, Any]:
    """Root system of a lattice and whether its roots span."""
    lattice = _lattice(arguments)
    report = await anyio.to_thread.run_sync(root_system, lattice)
    return report.to_dict()


@safe_tool_handler(
    lambda: format_error_response(
        "Class enumeration failed", "The genus could not be certified within its budget"
    )
)
async def handle_genus_classes(arguments: dict[str, Any]) -> dict[str, Any]:
    """Enumerate the classes of a genus with their automorphism orders."""
    symbol = parse_symbol(arguments["symbol"], arguments["rank"])
    stop = arguments.get("stop_when_nonreflective", False)
    budget = arguments.get("class_budget")

    def run() -> dict[str, Any]:
        class_set = genus_classes(symbol, stop_when_nonreflective=stop, class_budget=budget)
        result = class_set.to_dict()
        result["totally_reflective"] = class_set.certified and class_set.all_reflective
        if class_set.certified:
            result["reflective_mass"] = str(reflective_mass(class_set))
        return result

    return await anyio.to_thread.run_sync(run)


async def handle_genus_transform(arguments: dict[str, Any]) -> dict[str, Any]:
    """Apply the partial dual or the Watson transformation at a prime."""
    symbol = parse_symbol(arguments["symbol"], arguments["rank"])
    p = arguments["p"]
    kind = arguments.get("kind", "watson")
    match kind:
        case "partial_dual":
            image = primitive_symbol(partial_dual_symbol(symbol, p))
        case "watson":
            image = watson_symbol(symbol, p)
        case _:
            return format_error_response(f"Unknown transform: {kind}", "Use partial_dual or watson")
    result = _symbol_summary(image)
    result.update({"source": str(symbol), "p": p, "kind": kind})
    return result


async def handle_bounds_tables(arguments: dict[str, Any]) -> dict[str, Any]:
    """Prime count limits and per-position prime limits for one dimension."""
    dim = arguments["dim"]
    counts = await anyio.to_thread.run_sync(prime_count_bounds, dim)
    tables = await anyio.to_thread.run_sync(prime_value_bounds, dim)
    return {"counts": counts.to_dict(), "tables": tables.to_dict(), "rows": tables.comparison()}


async def handle_bounds_ratio(arguments: dict[str, Any]) -> dict[str, Any]:
    """Bound values for one determinant shape."""
    shape = DetShape.parse(str(arguments["shape"]))
    return await anyio.to_thread.run_sync(ratio_report, shape, arguments["dim"])


async def handle_classify(arguments: dict[str, Any]) -> dict[str, Any]:
    """Run the classification pipeline up to the requested stage."""
    config = PipelineConfig(
        dim=arguments["dim"],
        stage=arguments.get("stage", "ssf"),
        jobs=arguments.get("jobs", 1),
        class_budget=arguments.get("class_budget"),
        max_determinant=arguments.get("max_determinant"),
    )
    logger.info(f"Classification requested: dim={config.dim} stage={config.stage}")
    report = await run_pipeline(config)
    return report.to_dict()


async def handle_cache_stats() -> dict[str, Any]:
    """Hit and miss counters of the memo caches."""
    return {"caches": get_cache_stats()}


# =============================================================================
# Tool Registration
# =============================================================================


@server.list_tools()
async def list_tools() -> list[Tool]:
    """Return list of available tools."""
    return [
        Tool(
            name="genus_symbol",
            description="Compute the genus symbol of a positive definite integral lattice",
            inputSchema={
                "type": "object",
                "properties": {"gram": _GRAM_PROPERTY},
                "required": ["gram"],
            },
        ),
        Tool(
            name="genus_mass",
            description="Exact Minkowski-Siegel mass of a genus",
            inputSchema={
                "type": "object",
                "properties": _SYMBOL_PROPERTIES,
                "required": ["symbol", "rank"],
            },
        ),
        Tool(
            name="genus_roots",
            description="Root system of a lattice, its components and whether it is reflective",
            inputSchema={
                "type": "object",
                "properties": {"gram": _GRAM_PROPERTY},
                "required": ["gram"],
            },
        ),
        Tool(
            name="genus_classes",
            description="Enumerate the isometry classes of a genus, certified by the mass",
            inputSchema={
                "type": "object",
                "properties": {
                    **_SYMBOL_PROPERTIES,
                    "stop_when_nonreflective": {
                        "type": "boolean",
                        "description": "Stop at the first class whose roots do not span",
                        "default": False,
                    },
                    "class_budget": {
                        "type": "integer",
                        "description": "Maximum number of classes to explore",
                    },
                },
                "required": ["symbol", "rank"],
            },
        ),
        Tool(
            name="genus_transform",
            description="Apply the partial dual or the Watson transformation at a prime",
            inputSchema={
                "type": "object",
                "properties": {
                    **_SYMBOL_PROPERTIES,
                    "p": {"type": "integer", "description": "Prime"},
                    "kind": {
                        "type": "string",
                        "enum": ["partial_dual", "watson"],
                        "default": "watson",
                    },
                },
                "required": ["symbol", "rank", "p"],
            },
        ),
        Tool(
            name="bounds_tables",
            description="Prime count limits and prime value tables for reflective genera",
            inputSchema={
                "type": "object",
                "properties": {"dim": _DIM_PROPERTY},
                "required": ["dim"],
            },
        ),
        Tool(
            name="bounds_ratio",
            description="M, Nref, Mref and the Nref/M ratio for a determinant shape",
            inputSchema={
                "type": "object",
                "properties": {
                    "shape": {
                        "type": "string",
                        "description": "Determinant or factorization such as 3^2*5*7",
                    },
                    "dim": _DIM_PROPERTY,
                },
                "required": ["shape", "dim"],
            },
        ),
        Tool(
            name="classify",
            description="Classify totally-reflective genera of one dimension",
            inputSchema={
                "type": "object",
                "properties": {
                    "dim": _DIM_PROPERTY,
                    "stage": {
                        "type": "string",
                        "enum": ["ssf", "sf", "all"],
                        "default": "ssf",
                    },
                    "jobs": {"type": "integer", "default": 1},
                    "class_budget": {"type": "integer"},
                    "max_determinant": {
                        "type": "integer",
                        "description": "Only visit determinants up to this value",
                    },
                },
                "required": ["dim"],
            },
        ),
        Tool(
            name="cache_stats",
            description="Hit and miss counters of the computation caches",
            inputSchema={"type": "object", "properties": {}},
        ),
    ]


@server.call_tool()
async def call_tool(name: str, arguments: dict) -> list[TextContent]:
    """Handle tool invocations."""
    logger.debug(f"Tool called: {name} with args: {arguments}")

    try:
        match name:
            case "genus_symbol":
                result = await handle_genus_symbol(arguments)

            case "genus_mass":
                result = await handle_genus_mass(arguments)

            case "genus_roots":
                result = await handle_genus_roots(arguments)

            case "genus_classes":
                result = await handle_genus_classes(arguments)

            case "genus_transform":
                result = await handle_genus_transform(arguments)

            case "bounds_tables":
                result = await handle_bounds_tables(arguments)

            case "bounds_ratio":
                result = await handle_bounds_ratio(arguments)

            case "classify":
                result = await handle_classify(arguments)

            case "cache_stats":
                result = await handle_cache_stats()

            case _:
                result = {
                    "error": f"Unknown tool: {name}",
                    "available_tools": "Use list_tools to see available tools",
                }

    except Exception as e:
        logger.exception(f"Error executing tool {name}: {e}")
        result = {
            "error": str(e),
            "context": {"tool": name, "arguments": arguments},
        }

    return [TextContent(type="text", text=json.dumps(result, indent=2))]


async def run_server() -> None:
    """Run the MCP server using stdio transport."""
    logger.info("Reflective Genera server starting...")

    try:
        async with stdio_server() as (read_stream, write_stream):
            await server.run(
                read_stream,
                write_stream,
                server.create_initialization_options(),
            )
    finally:
        logger.info("Reflective Genera server stopped")
