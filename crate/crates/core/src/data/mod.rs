//! Raw tables, column typing and train/test splitting.

mod schema;
mod split;
mod table;

pub use schema::{
    apply_overrides, infer_schema, infer_schema_with, ColumnKind, ColumnOverride, ColumnSpec,
    InferOptions, OverrideDocument, ProblemKind, Schema, TargetSpec,
};
pub use split::stratified_split;
pub use table::{format_number, load_csv, read_csv, Column, CsvOptions, Table};
