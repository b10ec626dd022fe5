//! Oracles and fixture generators shared by integration tests.

#![allow(dead_code)]

pub mod coco;
pub mod knn;
pub mod query;
