"""Desk-scale DNS query-log analytics: parse, sanitize, enrich, store, aggregate, plan."""

from .aggregates import category_traffic, emit_plot_data, region_density, unique_users_hourly
from .colstore import partition_path, read_segment, write_segment
from .datagen import GeneratorSpec, default_spec, generate
from .engine import PipelineConfig, RunReport, plan_chunks, run_pipeline
from .enrich import build_assignment_index, categorize, enrich
from .errors import DnsflowError, PipelineError, ValidationError
from .logmodel import DnsQueryRecord, QueryType, RejectReason, ServerId, format_line, parse_file, parse_line
from .planner import estimate_cost, parallel_tasks, plan_executors
from .sanitizer import SanitizeReport, sanitize

__version__ = "0.1.0"
