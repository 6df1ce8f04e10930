"""
Simplified SQL templates: keyword parsing of original templates, parent-template generation, and query instantiation
"""

from .abstract import ColumnAbstract, DataAbstract, load_abstract, save_abstract
from .generate import (
    GeneratedQuery,
    SimplifiedTemplate,
    gen_simplified_templates,
    instantiate,
    instantiate_queries,
    parent_templates,
)
from .parser import OperatorTableColumnInfo, parse_statement, parse_templates, split_statements
