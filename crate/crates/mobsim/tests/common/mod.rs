#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use decarb_mobsim::SimWorld;

pub fn demo_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/worlds/demo")
}

pub fn demo_world() -> Arc<SimWorld> {
    static WORLD: OnceLock<Arc<SimWorld>> = OnceLock::new();
    WORLD
        .get_or_init(|| Arc::new(SimWorld::load(demo_dir()).expect("demo world loads")))
        .clone()
}

/// The demo world with a smaller population.
pub fn demo_with_agents(n: usize) -> Arc<SimWorld> {
    let mut w = (*demo_world()).clone();
    w.config.n_agents = n;
    Arc::new(w)
}
