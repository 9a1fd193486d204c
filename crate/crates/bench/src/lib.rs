//! Inputs shared by the benchmarks.

use hintrank::corpus::SuperlativeQuery;
use hintrank::hints::{serialize_hintset, HintSet};
use hintrank::index::{FieldPolicy, InvertedIndex};
use hintrank::retrieval::{build_variants, QEConfig};
use hintrank::synth::{synth_world, SynthConfig, SynthWorld};

pub struct Fixture {
    pub world: SynthWorld,
    pub index: InvertedIndex,
}

/// The default synthetic world, widened to `docs_per_query` products per query.
pub fn fixture(docs_per_query: usize) -> Fixture {
    let world = synth_world(&SynthConfig {
        docs_per_query,
        ..SynthConfig::default()
    });
    let index = InvertedIndex::build(&world.products, FieldPolicy::TitleDescription).expect("synthetic corpus indexes");
    Fixture { world, index }
}

impl Fixture {
    pub fn query(&self) -> &SuperlativeQuery {
        &self.world.queries[0]
    }

    pub fn hints(&self) -> &HintSet {
        &self.world.hints[0].1
    }

    pub fn variants(&self, qe: &QEConfig) -> Vec<String> {
        build_variants(self.query(), self.hints(), qe).expect("synthetic hints are complete")
    }

    /// Model-style text for the first query's hints.
    pub fn hint_text(&self) -> String {
        serialize_hintset(self.hints())
    }
}
