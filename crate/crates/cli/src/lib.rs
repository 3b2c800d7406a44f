//! Batch front end: saliency maps, evaluation, sanity checks and attacks
//! over image folders, plus a generator for the toy quadrant fixture.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod render;
