# Copyright Contributors to the covren project
# SPDX-License-Identifier: Apache-2.0
"""Validate every manifest.jsonl line of a dataset against the JSON schema.

Usage: check_manifest_schema.py SCHEMA DATASET_ROOT
"""
import json
import pathlib
import sys

import jsonschema


def main() -> int:
    schema_path, root = map(pathlib.Path, sys.argv[1:3])
    schema = json.loads(schema_path.read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    validator = jsonschema.Draft202012Validator(schema)
    lines = (root / "manifest.jsonl").read_text().splitlines()
    failures = 0
    entries = 0
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        entries += 1
        for error in validator.iter_errors(json.loads(line)):
            failures += 1
            print(f"line {number}: {'/'.join(map(str, error.path))}: {error.message}")
    if entries == 0:
        print("manifest has no entries")
        return 1
    print(f"{entries} entries, {failures} schema errors")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
