//! Synthetic translation tasks, unpaired samplers, and file ingestion.

mod io;
mod sampler;
mod task;

pub use io::{load_manifest, load_pgm, load_points_csv, save_pgm, save_points_csv};
pub use sampler::UnpairedSampler;
pub use task::{
    make_affine_task, make_files_task, make_image_inversion_task, make_reflection_task,
    DomainTask, TruthOracle, SUPPORT_MARGIN,
};
