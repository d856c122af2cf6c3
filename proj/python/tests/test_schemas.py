"""Every CSV and manifest the runs produce must match docs/schemas."""

import json
import os
import pathlib
import re

import jsonschema
import pytest

import hbdm

ROOT = pathlib.Path(__file__).resolve().parents[2]
SCENARIOS = pathlib.Path(os.environ.get("HBDM_SCENARIO_DIR", ROOT / "scenarios"))
SCHEMAS = ROOT / "docs" / "schemas"

# Scenario name -> overrides of the run block that keep the test fast.
SHRINK = {
    "foliation_wedge": {},
    "dn0_roof": {"checks": {"closed_form_tolerance": 1e-8, "distance_points": 5}},
    "divergence_entangled": {"points": 5},
    "current_condition_wedge": {"points": 5, "pushforward": {"points": 5}},
    "kink_structure_product": {"sampling": {"count": 20}, "write_trajectories": 2},
    "equivariance_flat": {"M": 300},
    "slater_demo": {"trials": 5, "divergence": {"points": 3}},
}


def merge(base, extra):
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            merge(base[k], v)
        else:
            base[k] = v


def expected_header(template, n):
    cols = []
    for item in template:
        if isinstance(item, list):
            for i in range(1, n + 1):
                cols.extend(c.replace("{i}", str(i)) for c in item)
        else:
            cols.append(item)
    return cols


def schema_key(filename, files):
    if filename in files:
        return filename
    generic = re.sub(r"_\d{4}\.csv$", "_NNNN.csv", filename)
    assert generic in files, f"{filename} has no documented schema"
    return generic


@pytest.fixture(scope="module")
def schemas():
    columns = json.loads((SCHEMAS / "csv_columns.json").read_text())["files"]
    manifest = json.loads((SCHEMAS / "manifest.schema.json").read_text())
    return columns, manifest


@pytest.mark.parametrize("name", sorted(SHRINK))
def test_outputs_match_documented_schema(name, schemas):
    columns, manifest_schema = schemas
    cfg = json.loads((SCENARIOS / f"{name}.json").read_text())
    merge(cfg["run"], SHRINK[name])
    result = hbdm.run_scenario(hbdm.parse_scenario(json.dumps(cfg)))
    n = cfg["particles"]
    csvs = [f for f in result.outputs if f.endswith(".csv")]
    assert csvs
    for f in csvs:
        header = result.outputs[f].decode().splitlines()[0].split(",")
        assert header == expected_header(columns[schema_key(f, columns)], n), f
    manifest = json.loads(result.outputs["manifest.json"])
    jsonschema.validate(manifest, manifest_schema)
    listed = [o["file"] for o in manifest["outputs"]]
    assert sorted(listed) == sorted(f for f in result.outputs if f != "manifest.json")


def test_schema_files_cover_every_bundled_run_type(schemas):
    runs = {json.loads(p.read_text())["run"]["type"] for p in SCENARIOS.glob("*.json")}
    covered = {json.loads((SCENARIOS / f"{s}.json").read_text())["run"]["type"] for s in SHRINK}
    assert runs == covered
