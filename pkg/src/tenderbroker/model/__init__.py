"""Service description model, catalogs, encodings and coprocessor constraints."""
from tenderbroker.model.catalog import (
    NodeTypeImplementation,
    ProviderCatalog,
    catalog_from_dict,
    parse_catalog,
    serialize_catalog,
)
from tenderbroker.model.constraints import (
    CoprocessorConstraint,
    CoprocessorMatch,
    ConstraintError,
    ConstraintSyntaxError,
    eval_coprocessor_constraint,
    evaluate_constraint,
    parse_constraint,
)
from tenderbroker.model.description import (
    DocumentSyntaxError,
    ModelError,
    NodeTemplate,
    NodeType,
    Relationship,
    SemanticError,
    ServiceDescription,
    description_from_dict,
    open_requirements,
    parse_description,
    serialize_description,
    validate_description,
)
from tenderbroker.model.encoding import (
    EncodingError,
    build_attribute_space,
    encode_catalog,
    encode_tender,
)

__all__ = [
    "ConstraintError",
    "ConstraintSyntaxError",
    "CoprocessorConstraint",
    "CoprocessorMatch",
    "DocumentSyntaxError",
    "EncodingError",
    "ModelError",
    "NodeTemplate",
    "NodeType",
    "NodeTypeImplementation",
    "ProviderCatalog",
    "Relationship",
    "SemanticError",
    "ServiceDescription",
    "build_attribute_space",
    "catalog_from_dict",
    "description_from_dict",
    "encode_catalog",
    "encode_tender",
    "eval_coprocessor_constraint",
    "evaluate_constraint",
    "open_requirements",
    "parse_catalog",
    "parse_constraint",
    "parse_description",
    "serialize_catalog",
    "serialize_description",
    "validate_description",
]
