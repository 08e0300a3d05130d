"""Loading and storing planning problems.

Covers the native JSON business-object format, the task-level JSON format,
plan trees, and a STRIPS-with-oneof PDDL subset.
"""

from statusplan.task_io.native import (
    BoAction,
    BoVariable,
    BusinessObject,
    Override,
    ProblemBundle,
    SchemaError,
    UNSET_VALUE,
    canonicalize_task,
    compile_bo,
    compile_bundle,
    load_objects,
    load_objects_file,
    load_problem_file,
    plan_from_json,
    plan_to_json,
    read_task,
    rename_object,
    task_from_json,
    task_to_json,
    write_task,
)
from statusplan.task_io.pddl import (
    PddlError,
    PddlSyntaxError,
    UnsupportedPddlError,
    parse_pddl,
    parse_pddl_files,
    print_pddl,
)

__all__ = [
    "BoAction",
    "BoVariable",
    "BusinessObject",
    "Override",
    "ProblemBundle",
    "SchemaError",
    "UNSET_VALUE",
    "canonicalize_task",
    "compile_bo",
    "compile_bundle",
    "load_objects",
    "load_objects_file",
    "load_problem_file",
    "plan_from_json",
    "plan_to_json",
    "read_task",
    "rename_object",
    "task_from_json",
    "task_to_json",
    "write_task",
    "PddlError",
    "PddlSyntaxError",
    "UnsupportedPddlError",
    "parse_pddl",
    "parse_pddl_files",
    "print_pddl",
]
