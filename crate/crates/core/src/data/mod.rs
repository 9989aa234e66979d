//! Tabular input, subgroup partitioning, and systematic missingness.

mod dataset;
mod subgroup;

pub use dataset::{Column, ColumnData, ColumnSchema, Dataset, Schema, NULL};
pub use subgroup::{
    inject_systematic_missingness, partition_subgroups, Predicate, SubgroupData, SubgroupSpec,
};
