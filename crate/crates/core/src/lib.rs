//! Deployment toolchain for feed-forward spiking neural networks on a
//! many-core neuromorphic chip with 8-bit synapses.
//!
//! Pipeline stages, each a pure pass over immutable values:
//!
//! 1. [`events`]: DVS event streams to denoised, downsampled, time-binned
//!    frames and input spike trains.
//! 2. [`graph`]: the layer-graph IR, its JSON/sidecar serialization and
//!    shape inference.
//! 3. [`quantizer`]: percentile post-training quantization and finalization
//!    of quantization-aware graphs, both with LIF threshold co-scaling.
//! 4. [`lowering`]: graph to populations and explicit synapse-list
//!    projections.
//! 5. [`partitioner`]: population slices onto processing elements under
//!    neuron caps and a per-PE SRAM budget.
//! 6. [`simulator`]: timestep execution with a placed int8 engine and a
//!    dense float reference engine.

pub mod events;
pub mod fixtures;
pub mod fsutil;
pub mod graph;
pub mod lowering;
pub mod partitioner;
pub mod quantizer;
pub mod simulator;
pub mod sparse;
pub mod tensor;

/// Crate version recorded in artifact manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use events::{Event, FrameTensor, SpikeTrain};
pub use graph::{load_graph, save_graph, Graph, GraphBuilder, GraphError, Node, Shape};
pub use lowering::{lower, Network, Population, PopulationKind, Projection, Synapse};
pub use partitioner::{partition, PartitionOverrides, PeModel, Placement};
pub use quantizer::{ptq_quantize_graph, qat_finalize_graph, PtqConfig};
pub use simulator::{estimate_energy, run, Engine, RunOptions, RunResult};
